"""Implicit two-stage time integration with embedded error estimate.

The scheme is the stiffly accurate two-stage SDIRK member of order two;
its first stage slope doubles as a first-order embedded solution, whose
distance from the main update drives the step-size controller.  The
production path for the coupled system lives in the compiled kernels;
this module also carries a small dense implementation of the same scheme
used to cross-check the kernels and to run scalar test equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import NewtonDivergedError
from .mesh import FieldPair, Mesh, State

__all__ = [
    "GAMMA",
    "SdirkTableau",
    "StepControlParams",
    "newton_solve_stage",
    "sdirk2_step",
    "sdirk2_step_dense",
    "stability_function",
    "solution_error",
    "propose_dt_solution",
    "propose_dt_mesh",
]

GAMMA = _kernels.GAMMA_RK


@dataclass(frozen=True)
class SdirkTableau:
    """Butcher data of the two-stage scheme."""

    gamma: float = GAMMA

    @property
    def a(self) -> np.ndarray:
        g = self.gamma
        return np.array([[g, 0.0], [1.0 - g, g]])

    @property
    def b(self) -> np.ndarray:
        g = self.gamma
        return np.array([1.0 - g, g])

    @property
    def c(self) -> np.ndarray:
        return np.array([self.gamma, 1.0])


@dataclass(frozen=True)
class StepControlParams:
    """Tolerances and factors for the time step, Newton and mesh tests.

    The solution controller rejects a step when the embedded error
    estimate exceeds etol; the mesh controller rejects when the last two
    mesh iterates differ by more than meshtol in max-norm.  meshbal is
    the level the mesh iteration is steered towards and must sit below
    meshtol.  meshtol/meshbal default to None and are resolved by the
    driver once the initial node count is known.
    """

    etol: float
    ktol: float = 1e-10
    meshtol: Optional[float] = None
    meshbal: Optional[float] = None
    safety: float = 0.6
    maxfac: float = 2.0
    minfac: float = 0.1
    newton_max_iters: int = 10
    dt_init: float = 1e-4
    reuse_factorisation: bool = False

    def __post_init__(self):
        if self.etol <= 0.0 or self.ktol <= 0.0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.minfac < 1.0 < self.maxfac:
            raise ValueError("need 0 < minfac < 1 < maxfac")
        if self.meshtol is not None and self.meshbal is not None:
            if not 0.0 < self.meshbal < self.meshtol:
                raise ValueError("need 0 < meshbal < meshtol")
            if self.meshbal >= 1.0:
                raise ValueError("meshbal must be below one")

    def resolved(self, domain_width: float, n_cells: int) -> "StepControlParams":
        """Fill unset mesh tolerances from the initial mesh scale."""
        meshtol = self.meshtol
        meshbal = self.meshbal
        if meshtol is None:
            meshtol = 1e-2 * domain_width / n_cells
        if meshbal is None:
            meshbal = meshtol / 10.0
        return replace(self, meshtol=meshtol, meshbal=meshbal)


def newton_solve_stage(
    residual: Callable[[np.ndarray], np.ndarray],
    guess: np.ndarray,
    ktol: float,
    counters=None,
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_iters: int = 10,
) -> np.ndarray:
    """Dense Newton iteration on a stage residual, max-norm termination.

    The Jacobian is rebuilt every iteration (finite differences when no
    callable is given) and the update solved densely; intended for small
    verification systems, not the production path.  ``counters`` may be a
    RunCounters instance whose Jacobian/back-solve tallies are advanced.
    """
    k = np.atleast_1d(np.asarray(guess, dtype=np.float64)).copy()
    for _ in range(max_iters + 1):
        r = np.atleast_1d(residual(k))
        if np.max(np.abs(r)) < ktol:
            return k
        if jacobian is not None:
            jac = np.atleast_2d(jacobian(k))
        else:
            eps = 1e-8
            jac = np.empty((k.size, k.size))
            for j in range(k.size):
                kp = k.copy()
                step = eps * max(1.0, abs(k[j]))
                kp[j] += step
                jac[:, j] = (np.atleast_1d(residual(kp)) - r) / step
        if counters is not None:
            counters.n_jacobians += 1
        try:
            delta = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergedError(f"singular stage Jacobian: {exc}") from exc
        if counters is not None:
            counters.n_back_solves += 1
        k += delta
    raise NewtonDivergedError(
        f"stage iteration exceeded {max_iters} updates (residual "
        f"{np.max(np.abs(r)):.3e} > {ktol:.3e})"
    )


def sdirk2_step(
    state: State,
    mesh_new: Mesh,
    dt: float,
    q: float,
    ctrl: StepControlParams,
    counters=None,
):
    """One implicit step of the coupled system onto the new mesh.

    The mesh is interpolated linearly in time over the step and the node
    velocity held constant.  Returns the second-order fields together
    with the embedded first-order pair, both living on ``mesh_new``.
    Raises NewtonDivergedError when either stage fails to converge.
    """
    n = state.fields.n_nodes
    ku1 = np.zeros(n)
    kv1 = np.zeros(n)
    ku2 = np.zeros(n)
    kv2 = np.zeros(n)
    u_new, v_new, u_emb, v_emb, ok, jacs, bs = _kernels.sdirk2_nlse(
        state.fields.u, state.fields.v, state.mesh.nodes, mesh_new.nodes,
        float(dt), float(q), ctrl.ktol, ctrl.newton_max_iters,
        ctrl.reuse_factorisation, ku1, kv1, ku2, kv2,
    )
    if counters is not None:
        counters.n_jacobians += jacs
        counters.n_back_solves += bs
    if not ok:
        raise NewtonDivergedError(
            f"stage slopes failed to converge at dt={dt:.3e}"
        )
    return FieldPair(u_new, v_new), FieldPair(u_emb, v_emb)


def sdirk2_step_dense(
    f: Callable[[float, np.ndarray], np.ndarray],
    t: float,
    y: np.ndarray,
    dt: float,
    ktol: float = 1e-12,
    max_iters: int = 25,
    jacobian=None,
):
    """Generic dense step of the same scheme for arbitrary ODE systems.

    Used by the tests as an independent route through the tableau;
    returns (y_new, y_embedded).
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    g = GAMMA

    def stage1(k):
        return k - f(t + g * dt, y + g * dt * k)

    k1 = newton_solve_stage(stage1, np.zeros_like(y), ktol,
                            jacobian=None if jacobian is None else
                            (lambda k: np.eye(y.size) - g * dt * jacobian(t + g * dt, y + g * dt * k)),
                            max_iters=max_iters)

    base = y + (1.0 - g) * dt * k1

    def stage2(k):
        return k - f(t + dt, base + g * dt * k)

    k2 = newton_solve_stage(stage2, k1.copy(), ktol,
                            jacobian=None if jacobian is None else
                            (lambda k: np.eye(y.size) - g * dt * jacobian(t + dt, base + g * dt * k)),
                            max_iters=max_iters)
    y_new = y + dt * ((1.0 - g) * k1 + g * k2)
    y_emb = y + dt * k1
    return y_new, y_emb


def stability_function(z: complex) -> complex:
    """Amplification factor of the scheme on y' = lambda*y (z = lambda*dt)."""
    g = GAMMA
    return (1.0 + (1.0 - 2.0 * g) * z) / (1.0 - g * z) ** 2


def solution_error(
    fields_new: FieldPair,
    fields_embedded: FieldPair,
    mesh_new: Mesh,
) -> float:
    """Mesh-weighted L2 distance between the main and embedded updates."""
    return float(_kernels.error_norm(
        fields_new.u, fields_new.v,
        fields_embedded.u, fields_embedded.v,
        mesh_new.nodes,
    ))


def propose_dt_solution(dt: float, err: float, ctrl: StepControlParams) -> float:
    """Next step size from the embedded error estimate."""
    if err <= 0.0:
        factor = ctrl.maxfac
    else:
        factor = min(ctrl.maxfac,
                     max(ctrl.minfac, ctrl.safety * math.sqrt(ctrl.etol / err)))
    return dt * factor


def propose_dt_mesh(dt: float, mesherr: float, ctrl: StepControlParams) -> float:
    """Next step size from the mesh iteration displacement."""
    if ctrl.meshbal is None:
        raise ValueError("mesh balance level not resolved")
    if mesherr <= 0.0:
        factor = ctrl.maxfac
    else:
        factor = min(ctrl.maxfac,
                     max(ctrl.minfac,
                         math.log(mesherr) / math.log(ctrl.meshbal)))
    return dt * factor
