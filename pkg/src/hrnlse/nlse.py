"""Problem definitions for the focusing cubic Schrodinger equation.

The complex field is split into real and imaginary nodal components
(u, v); the semi-discrete right-hand side lives in the compiled kernels
and is re-exported here behind array types.  Closed-form solutions exist
for the travelling single soliton; multi-soliton benchmarks are compared
against self-generated fine-grid reference runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from . import _kernels
from .mesh import FieldPair, Mesh

__all__ = [
    "SolitonParams",
    "ProblemConfig",
    "nlse_rhs",
    "initial_condition",
    "exact_single_soliton",
    "exact_modulus_at",
    "conserved_quantities",
    "l2_error",
]


@dataclass(frozen=True)
class SolitonParams:
    """Amplitude parameter, speed and initial centre of one soliton."""

    a: float
    c: float
    x0: float

    def __post_init__(self):
        if self.a <= 0.0:
            raise ValueError("amplitude parameter a must be positive")


@dataclass(frozen=True)
class ProblemConfig:
    """Equation coefficient, domain, horizon, and initial data.

    kind selects the initial condition: "single_soliton" and
    "two_soliton" take their parameters from ``solitons``; "sech" uses
    the bare sech hump (bound states for q = 2 n^2).
    """

    kind: str
    q: float
    x_left: float
    x_right: float
    t_final: float
    solitons: Tuple[SolitonParams, ...] = ()

    def __post_init__(self):
        if self.kind not in ("single_soliton", "two_soliton", "sech"):
            raise ValueError(f"unknown initial condition kind {self.kind!r}")
        if self.q <= 0.0:
            raise ValueError("only the focusing case q > 0 is supported")
        if not self.x_left < self.x_right:
            raise ValueError("domain must satisfy x_left < x_right")
        if self.t_final < 0.0:
            raise ValueError("final time must be non-negative")
        expected = {"single_soliton": 1, "two_soliton": 2, "sech": 0}[self.kind]
        if len(self.solitons) != expected:
            raise ValueError(
                f"{self.kind} needs {expected} soliton parameter set(s), "
                f"got {len(self.solitons)}"
            )

    @property
    def width(self) -> float:
        return self.x_right - self.x_left

    def has_exact_solution(self) -> bool:
        return self.kind == "single_soliton"


def _soliton_uv(p: SolitonParams, q: float, x: np.ndarray, t: float):
    """Real/imaginary parts of the travelling soliton at time t."""
    amp = np.sqrt(2.0 * p.a / q) / np.cosh(np.sqrt(p.a) * (x - p.x0 - p.c * t))
    phase = 0.5 * p.c * (x - p.x0) - 0.25 * (p.c * p.c - 4.0 * p.a) * t
    return amp * np.cos(phase), amp * np.sin(phase)


def initial_condition(config: ProblemConfig, x: np.ndarray):
    """Evaluate the configured initial data at positions ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if config.kind == "sech":
        return 1.0 / np.cosh(x), np.zeros_like(x)
    u = np.zeros_like(x)
    v = np.zeros_like(x)
    for p in config.solitons:
        du, dv = _soliton_uv(p, config.q, x, 0.0)
        u += du
        v += dv
    return u, v


def sample_initial_fields(config: ProblemConfig, mesh: Mesh) -> FieldPair:
    """Initial data on the mesh nodes with boundary values pinned to zero."""
    u, v = initial_condition(config, mesh.nodes)
    u[0] = u[-1] = 0.0
    v[0] = v[-1] = 0.0
    return FieldPair(u, v)


def exact_single_soliton(params: SolitonParams, q: float, x, t: float):
    """Closed-form travelling soliton, split into (u, v)."""
    return _soliton_uv(params, q, np.asarray(x, dtype=np.float64), float(t))


def exact_modulus_at(config: ProblemConfig, t: float) -> Callable[[np.ndarray], np.ndarray]:
    """Modulus of the exact solution at time t, as a function of x."""
    if not config.has_exact_solution():
        raise ValueError(f"no closed-form solution for {config.kind!r}")
    p = config.solitons[0]

    def modulus(x):
        x = np.asarray(x, dtype=np.float64)
        return np.sqrt(2.0 * p.a / config.q) / np.cosh(
            np.sqrt(p.a) * (x - p.x0 - p.c * t)
        )

    return modulus


def nlse_rhs(
    fields: FieldPair,
    mesh: Mesh,
    mesh_velocity: Optional[np.ndarray],
    q: float,
):
    """Time derivatives (du/dt, dv/dt) on the moving mesh.

    Interior nodes combine the advective term from the node motion with
    central differencing of the dispersion and the cubic coupling;
    boundary derivatives are zero.  ``mesh_velocity`` may be None for a
    static mesh.
    """
    n = fields.n_nodes
    if mesh_velocity is None:
        xdot = np.zeros(n)
    else:
        xdot = np.ascontiguousarray(mesh_velocity, dtype=np.float64)
        if xdot.size != n:
            raise ValueError("mesh velocity length must match node count")
        if xdot[0] != 0.0 or xdot[-1] != 0.0:
            raise ValueError("boundary nodes must be stationary")
    du = np.empty(n)
    dv = np.empty(n)
    _kernels.nlse_rhs(fields.u, fields.v, mesh.nodes, xdot, float(q), du, dv)
    return du, dv


def conserved_quantities(fields: FieldPair, mesh: Mesh, q: float):
    """Discrete charge and energy (Q_h, E_h) of the state."""
    qh, eh = _kernels.conserved_quantities(
        fields.u, fields.v, mesh.nodes, float(q)
    )
    return float(qh), float(eh)


def l2_error(
    fields: FieldPair,
    mesh: Mesh,
    exact_modulus: Callable[[np.ndarray], np.ndarray],
) -> float:
    """Domain-normalised trapezoidal L2 error of the solution modulus."""
    e = fields.modulus() - exact_modulus(mesh.nodes)
    h = np.diff(mesh.nodes)
    acc = np.sum(0.5 * h * (e[1:] ** 2 + e[:-1] ** 2))
    return float(np.sqrt(acc / mesh.width))
