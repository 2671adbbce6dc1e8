"""Core geometric and state types shared by every part of the solver.

Node positions and field values are stored in contiguous float arrays
indexed 0..N.  All types are immutable value objects; solver stages build
new instances rather than mutating in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidMeshError, MeshTangledError

__all__ = ["Mesh", "FieldPair", "State", "cell_widths", "check_monotone"]


def check_monotone(nodes: np.ndarray) -> bool:
    """True if the node array is strictly increasing."""
    return bool(np.all(np.diff(nodes) > 0.0))


@dataclass(frozen=True)
class Mesh:
    """Ordered nodes x_0..x_N on [x_left, x_right] with fixed endpoints."""

    nodes: np.ndarray
    x_left: float
    x_right: float

    def __post_init__(self):
        nodes = np.ascontiguousarray(np.asarray(self.nodes, dtype=np.float64))
        object.__setattr__(self, "nodes", nodes)
        nodes.setflags(write=False)
        if nodes.ndim != 1 or nodes.size < 3:
            raise InvalidMeshError("mesh needs at least 3 nodes (N >= 2)")
        if nodes[0] != self.x_left or nodes[-1] != self.x_right:
            raise InvalidMeshError(
                f"endpoints {nodes[0]}, {nodes[-1]} do not match domain "
                f"[{self.x_left}, {self.x_right}]"
            )
        if not check_monotone(nodes):
            raise MeshTangledError("node positions are not strictly increasing")

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def width(self) -> float:
        return self.x_right - self.x_left

    @classmethod
    def uniform(cls, x_left: float, x_right: float, n_cells: int) -> "Mesh":
        nodes = np.linspace(x_left, x_right, n_cells + 1)
        nodes[0], nodes[-1] = x_left, x_right
        return cls(nodes, x_left, x_right)

    def replace_nodes(self, nodes: np.ndarray) -> "Mesh":
        """New mesh on the same domain; revalidates ordering and endpoints."""
        return Mesh(nodes, self.x_left, self.x_right)


def cell_widths(mesh: Mesh) -> np.ndarray:
    """Cell widths h_i = x_i - x_{i-1}, i = 1..N (all strictly positive)."""
    return np.diff(mesh.nodes)


@dataclass(frozen=True)
class FieldPair:
    """Nodal values of the real and imaginary solution components."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(np.asarray(self.u, dtype=np.float64))
        v = np.ascontiguousarray(np.asarray(self.v, dtype=np.float64))
        if u.shape != v.shape or u.ndim != 1:
            raise ValueError("u and v must be 1-d arrays of equal length")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        u.setflags(write=False)
        v.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.u.size

    def modulus(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    @classmethod
    def zeros(cls, n_nodes: int) -> "FieldPair":
        return cls(np.zeros(n_nodes), np.zeros(n_nodes))


@dataclass(frozen=True)
class State:
    """Solver state at one instant: time, current step size, mesh, fields."""

    t: float
    dt: float
    mesh: Mesh
    fields: FieldPair
    stage_cache: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.fields.n_nodes != self.mesh.nodes.size:
            raise ValueError("field length does not match mesh node count")
