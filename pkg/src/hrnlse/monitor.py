"""Curvature-based monitor function, smoothing, and the refinement indicator.

The monitor lives at cell midpoints.  Each solution component contributes
the square root of its discrete curvature plus a floor; the floor is the
domain mean of the curvature root (so flat regions still attract nodes) or
a fixed override.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .mesh import FieldPair, Mesh

__all__ = [
    "MonitorProfile",
    "curvature_root",
    "monitor_floor",
    "assemble_monitor",
    "smooth_monitor",
    "refinement_indicator",
]

SMOOTH_GAMMA_DEFAULT = 2.0
SMOOTH_P_DEFAULT = 3


@dataclass(frozen=True)
class MonitorProfile:
    """Midpoint monitor values with their smoothing and component floors."""

    midpoint_values: np.ndarray
    smoothed_values: np.ndarray
    floor_u: float
    floor_v: float
    floor_override: Optional[float] = None

    def __post_init__(self):
        if self.midpoint_values.shape != self.smoothed_values.shape:
            raise ValueError("smoothed values must match midpoint values")


def curvature_root(values: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Nodal approximation to sqrt(|second derivative|) of ``values``."""
    return _kernels.curvature_sqrt(
        np.ascontiguousarray(values, dtype=np.float64), mesh.nodes
    )


def monitor_floor(w: np.ndarray, mesh: Mesh) -> float:
    """Trapezoidal mean of the curvature root over the domain."""
    return float(_kernels.trapezoid_mean(
        np.ascontiguousarray(w, dtype=np.float64), mesh.nodes
    ))


def smooth_monitor(
    midpoint_values: np.ndarray,
    gamma: float = SMOOTH_GAMMA_DEFAULT,
    p: int = SMOOTH_P_DEFAULT,
) -> np.ndarray:
    """Range-preserving weighted-average smoothing of midpoint values."""
    m = np.ascontiguousarray(midpoint_values, dtype=np.float64)
    if m.size == 0:
        raise ValueError("monitor profile needs at least one midpoint")
    return _kernels.smooth_midpoints(m, float(gamma), int(p))


def assemble_monitor(
    fields: FieldPair,
    mesh: Mesh,
    floor_override: Optional[float] = None,
    gamma: float = SMOOTH_GAMMA_DEFAULT,
    p: int = SMOOTH_P_DEFAULT,
) -> MonitorProfile:
    """Build and smooth the midpoint monitor for the given fields.

    With ``floor_override`` both component floors are pinned to the given
    value instead of the computed curvature means.
    """
    if fields.n_nodes != mesh.nodes.size:
        raise ValueError("fields and mesh disagree on node count")
    ovr = -1.0 if floor_override is None else float(floor_override)
    m = _kernels.monitor_midpoints(fields.u, fields.v, mesh.nodes, ovr)
    if floor_override is None:
        wu = _kernels.curvature_sqrt(fields.u, mesh.nodes)
        wv = _kernels.curvature_sqrt(fields.v, mesh.nodes)
        floor_u = float(_kernels.trapezoid_mean(wu, mesh.nodes))
        floor_v = float(_kernels.trapezoid_mean(wv, mesh.nodes))
    else:
        floor_u = floor_v = float(floor_override)
    smoothed = _kernels.smooth_midpoints(m, float(gamma), int(p))
    return MonitorProfile(m, smoothed, floor_u, floor_v, floor_override)


def refinement_indicator(profile: MonitorProfile, mesh: Mesh) -> float:
    """Squared mean monitor mass per cell, from the unsmoothed profile."""
    return float(_kernels.eta_indicator(profile.midpoint_values, mesh.nodes))
