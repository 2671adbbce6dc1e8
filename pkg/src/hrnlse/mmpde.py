"""Mesh movement: relaxed node equation and de Boor equidistribution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import EquidistributionError, MeshTangledError
from .mesh import Mesh
from .monitor import MonitorProfile

__all__ = [
    "MeshSolveParams",
    "mesh_rhs_coefficients",
    "solve_mesh_step",
    "equidistribute",
]

DEBOOR_CAP = 50


@dataclass(frozen=True)
class MeshSolveParams:
    """Parameters of the relaxed backward-Euler mesh update.

    tau is the mesh relaxation time scale, omega the under-relaxation
    weight blending each solve with the previous iterate, and sweeps the
    fixed number of coupled mesh/solution passes per time step.
    """

    tau: float
    omega: float = 0.8
    sweeps: int = 4

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if not 0.0 <= self.omega < 1.0:
            raise ValueError("omega must lie in [0, 1)")
        if self.sweeps < 1:
            raise ValueError("need at least one sweep")


def mesh_rhs_coefficients(mesh: Mesh, smoothed: np.ndarray, tau: float):
    """Per-node coefficients of the semi-discrete node equation.

    For each interior node i returns the scalar b_i multiplying the
    monitor bracket, together with the neighbouring midpoint weights
    (m_left, m_right), so the node velocity is
    b_i * (m_right*h_right - m_left*h_left).
    """
    x = mesh.nodes
    n = mesh.n_cells
    if n < 2:
        raise ValueError("need at least two cells")
    msm = np.asarray(smoothed, dtype=np.float64)
    if msm.size != n:
        raise ValueError("smoothed profile must have one value per cell")
    if np.any(msm <= 0.0):
        raise ValueError("smoothed monitor must be strictly positive")
    hl = x[1:-1] - x[:-2]
    hr = x[2:] - x[1:-1]
    m_left = msm[:-1]
    m_right = msm[1:]
    # node-centred monitor interpolated from the midpoint values; each
    # midpoint is weighted by the opposite half-cell width
    m_node = (m_left * hr + m_right * hl) / (hl + hr)
    b = (4.0 / tau) / (m_node * (hl + hr)) ** 2
    return b, m_left, m_right


def solve_mesh_step(
    mesh_prev: Mesh,
    smoothed: np.ndarray,
    dt: float,
    params: MeshSolveParams,
) -> Mesh:
    """One under-relaxed implicit update of the node positions.

    Coefficients are frozen at the supplied iterate; the tridiagonal
    system is solved directly and blended with the previous positions by
    the relaxation weight.  Raises MeshTangledError when the blended mesh
    loses monotonicity, which the driver treats as a step rejection.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    msm = np.ascontiguousarray(smoothed, dtype=np.float64)
    if msm.size != mesh_prev.n_cells:
        raise ValueError("smoothed profile must have one value per cell")
    out = np.empty_like(mesh_prev.nodes)
    ok = _kernels.mesh_backward_euler(
        mesh_prev.nodes, msm, float(dt), params.tau, params.omega, out
    )
    if not ok:
        raise MeshTangledError(
            f"mesh update tangled at dt={dt:.3e}; reject the step"
        )
    return mesh_prev.replace_nodes(out)


def _invert_cumulative(x: np.ndarray, midpoints: np.ndarray, n_new: int):
    """Place n_new+1 nodes at equal increments of the monitor integral."""
    masses = midpoints * np.diff(x)
    cum = np.concatenate((np.zeros(1), np.cumsum(masses)))
    targets = np.linspace(0.0, cum[-1], n_new + 1)
    new_nodes = np.interp(targets, cum, x)
    new_nodes[0] = x[0]
    new_nodes[-1] = x[-1]
    return new_nodes


def equidistribute(
    profile: MonitorProfile,
    mesh: Mesh,
    n_new: int,
    gtol: float,
    monitor_source: Optional[Callable[[Mesh], MonitorProfile]] = None,
    cap: int = DEBOOR_CAP,
) -> Mesh:
    """Mesh with n_new cells equidistributing the (smoothed) monitor.

    The cumulative integral of the piecewise-constant midpoint monitor is
    inverted at equal mass increments.  Without ``monitor_source`` the
    profile is held fixed and a single inversion is exact.  With a source
    the monitor is re-evaluated on each new mesh and the placement is
    iterated until the largest node displacement drops below ``gtol``.

    Raises EquidistributionError when the iteration cap is reached; the
    error carries the last iterate so callers may keep it with a warning.
    """
    if n_new < 2:
        raise ValueError("need at least two cells")
    smoothed = profile.smoothed_values
    if not np.any(smoothed > 0.0):
        # flat data gives no preferred placement: fall back to uniform
        smoothed = np.ones_like(smoothed)
    nodes = _invert_cumulative(mesh.nodes, smoothed, n_new)
    new_mesh = mesh.replace_nodes(nodes)
    if monitor_source is None:
        return new_mesh
    for _ in range(cap):
        prof = monitor_source(new_mesh)
        smoothed = prof.smoothed_values
        if not np.any(smoothed > 0.0):
            smoothed = np.ones_like(smoothed)
        nodes = _invert_cumulative(new_mesh.nodes, smoothed, n_new)
        displacement = float(np.max(np.abs(nodes - new_mesh.nodes)))
        new_mesh = new_mesh.replace_nodes(nodes)
        if displacement < gtol:
            return new_mesh
    err = EquidistributionError(
        f"equidistribution did not reach gtol={gtol:.3e} in {cap} passes"
    )
    err.last_mesh = new_mesh
    raise err
