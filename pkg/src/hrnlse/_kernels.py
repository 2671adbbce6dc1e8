"""Compiled inner-loop kernels.

Everything here operates on plain float64 arrays (node positions ``x`` of
length N+1, nodal fields ``u``/``v`` of length N+1, midpoint monitor arrays
of length N) so the whole coupled mesh/solution sweep runs without Python
overhead.  The public modules wrap these kernels behind typed interfaces;
tests exercise both layers against each other.

Unknown ordering in the implicit stage systems interleaves the two field
components, z[2i] = U_i, z[2i+1] = V_i, giving a banded Jacobian with three
sub- and three super-diagonals.  Boundary rows are identity (homogeneous
Dirichlet data).
"""

import math

import numpy as np
from numba import njit

# SDIRK2 diagonal coefficient; the two-stage tableau is
#   c = (g, 1), A = [[g, 0], [1-g, g]], b = (1-g, g), stiffly accurate.
GAMMA_RK = (2.0 - math.sqrt(2.0)) / 2.0

# Jacobian band extents for the interleaved stage systems.
KL = 3
KU = 3

# Status codes returned by the coupled step kernel.
STEP_OK = 0
STEP_TANGLED = 1
STEP_NEWTON_FAIL = 2

_PIVOT_RTOL = 1e-12


# ---------------------------------------------------------------------------
# monitor function

@njit(cache=True)
def curvature_sqrt(f, x):
    """w_i ~ sqrt(|f_xx|) from divided second differences.

    Interior nodes use w_i = sqrt(2|(g_{i+1/2}-g_{i-1/2})/(h_{i+1}+h_i)|)
    with g the per-cell difference quotient; boundary values copy the
    nearest interior neighbour.
    """
    n = x.size
    w = np.zeros(n)
    for i in range(1, n - 1):
        hl = x[i] - x[i - 1]
        hr = x[i + 1] - x[i]
        gl = (f[i] - f[i - 1]) / hl
        gr = (f[i + 1] - f[i]) / hr
        w[i] = math.sqrt(2.0 * abs((gr - gl) / (hr + hl)))
    w[0] = w[1]
    w[n - 1] = w[n - 2]
    return w


@njit(cache=True)
def trapezoid_mean(w, x):
    """Trapezoidal mean of nodal values over the mesh domain."""
    acc = 0.0
    for i in range(x.size - 1):
        acc += 0.5 * (x[i + 1] - x[i]) * (w[i + 1] + w[i])
    return acc / (x[-1] - x[0])


@njit(cache=True)
def monitor_midpoints(u, v, x, floor_override):
    """Raw midpoint monitor M_{i+1/2}, i = 0..N-1.

    Each component contributes its curvature-root average plus a floor;
    the floor is the trapezoidal mean of the curvature root unless a fixed
    override (>= 0) is supplied.
    """
    n_cells = x.size - 1
    wu = curvature_sqrt(u, x)
    wv = curvature_sqrt(v, x)
    if floor_override >= 0.0:
        phi_u = floor_override
        phi_v = floor_override
    else:
        phi_u = trapezoid_mean(wu, x)
        phi_v = trapezoid_mean(wv, x)
    m = np.empty(n_cells)
    for i in range(n_cells):
        mu = phi_u + 0.5 * (wu[i + 1] + wu[i])
        mv = phi_v + 0.5 * (wv[i + 1] + wv[i])
        m[i] = 0.5 * (mu + mv)
    return m


@njit(cache=True)
def smooth_midpoints(m, gamma, p):
    """Weighted-average smoothing with kernel (gamma/(gamma+1))^|k-i|.

    Stencil indices outside [0, N-1] are skipped in both numerator and
    denominator, so constants are preserved exactly.
    """
    lam = gamma / (gamma + 1.0)
    n = m.size
    out = np.empty(n)
    for i in range(n):
        lo = i - p
        if lo < 0:
            lo = 0
        hi = i + p
        if hi > n - 1:
            hi = n - 1
        num = 0.0
        den = 0.0
        for k in range(lo, hi + 1):
            wk = lam ** abs(k - i)
            num += m[k] * wk
            den += wk
        out[i] = num / den
    return out


@njit(cache=True)
def monitor_mass(m, x):
    """Midpoint-quadrature integral of the monitor over the domain."""
    acc = 0.0
    for i in range(m.size):
        acc += m[i] * (x[i + 1] - x[i])
    return acc


@njit(cache=True)
def eta_indicator(m, x):
    """Squared mean monitor mass per cell count (refinement indicator)."""
    n_cells = m.size
    return (monitor_mass(m, x) / n_cells) ** 2


# ---------------------------------------------------------------------------
# mesh movement

@njit(cache=True)
def mesh_backward_euler(x, msm, dt, tau, omega, out):
    """One under-relaxed backward-Euler update of the node positions.

    Solves the tridiagonal system for the relaxed node equation with
    coefficients frozen at the supplied iterate, then blends:
    out = (1-omega)*solve + omega*x.  Returns False if the blended mesh
    is non-monotone (tangled); ``out`` then holds garbage.
    """
    n = x.size - 1  # cells
    if n < 2:
        for i in range(x.size):
            out[i] = x[i]
        return True
    # substitute a unit monitor when the profile is identically zero
    msum = 0.0
    for i in range(n):
        msum += msm[i]
    flat = msum == 0.0

    sub = np.empty(n - 1)
    diag = np.empty(n - 1)
    sup = np.empty(n - 1)
    rhs = np.empty(n - 1)
    for i in range(1, n):
        hl = x[i] - x[i - 1]
        hr = x[i + 1] - x[i]
        ml = 1.0 if flat else msm[i - 1]
        mr = 1.0 if flat else msm[i]
        # midpoint-interpolated monitor at node i (cross-weighted halves)
        mi = (ml * hr + mr * hl) / (hl + hr)
        b = (4.0 / tau) / (mi * (hl + hr)) ** 2
        j = i - 1
        sub[j] = -dt * b * ml
        sup[j] = -dt * b * mr
        diag[j] = 1.0 + dt * b * (ml + mr)
        rhs[j] = x[i]
    rhs[0] -= sub[0] * x[0]
    rhs[n - 2] -= sup[n - 2] * x[n]

    # Thomas elimination; diagonal dominance (slack exactly 1) holds by
    # construction so no pivoting is required.
    for j in range(1, n - 1):
        w = sub[j] / diag[j - 1]
        diag[j] -= w * sup[j - 1]
        rhs[j] -= w * rhs[j - 1]
    sol = np.empty(n - 1)
    sol[n - 2] = rhs[n - 2] / diag[n - 2]
    for j in range(n - 3, -1, -1):
        sol[j] = (rhs[j] - sup[j] * sol[j + 1]) / diag[j]

    out[0] = x[0]
    out[n] = x[n]
    for i in range(1, n):
        out[i] = (1.0 - omega) * sol[i - 1] + omega * x[i]
    for i in range(n):
        if out[i + 1] <= out[i]:
            return False
    return True


# ---------------------------------------------------------------------------
# semi-discrete equation right-hand side and stage Jacobian

@njit(cache=True)
def nlse_rhs(u, v, x, xdot, q, du, dv):
    """Moving-frame central-difference right-hand side, boundaries zero."""
    n = x.size - 1
    du[0] = 0.0
    dv[0] = 0.0
    du[n] = 0.0
    dv[n] = 0.0
    for i in range(1, n):
        hl = x[i] - x[i - 1]
        hr = x[i + 1] - x[i]
        s = hl + hr
        adv_u = xdot[i] * (u[i + 1] - u[i - 1]) / s
        adv_v = xdot[i] * (v[i + 1] - v[i - 1]) / s
        lap_u = (2.0 / s) * ((u[i + 1] - u[i]) / hr - (u[i] - u[i - 1]) / hl)
        lap_v = (2.0 / s) * ((v[i + 1] - v[i]) / hr - (v[i] - v[i - 1]) / hl)
        sq = u[i] * u[i] + v[i] * v[i]
        du[i] = adv_u - lap_v - q * sq * v[i]
        dv[i] = adv_v + lap_u + q * sq * u[i]


@njit(cache=True)
def _fill_stage_band(u, v, x, xdot, q, coef, ab, rowmax):
    """Band storage of A = I - coef * J_f at state (u, v).

    Layout: ab[KL + KU + i - j, j] = A[i, j]; the top KL rows are fill
    space for the pivoting factorisation.  rowmax[i] holds the max |A[i,:]|
    used for the small-pivot test.
    """
    n_nodes = x.size
    n = 2 * n_nodes
    kv = KL + KU
    ab[:, :] = 0.0
    for i in range(n):
        rowmax[i] = 0.0

    # identity boundary rows
    for r in (0, 1, n - 2, n - 1):
        ab[kv, r] = 1.0
        rowmax[r] = 1.0

    for i in range(1, n_nodes - 1):
        hl = x[i] - x[i - 1]
        hr = x[i + 1] - x[i]
        s = hl + hr
        a = xdot[i] / s
        cl = 2.0 / (s * hl)
        cr = 2.0 / (s * hr)
        sq = u[i] * u[i] + v[i] * v[i]
        ru = 2 * i      # row of the u-component equation
        rv = 2 * i + 1  # row of the v-component equation
        # d(du_i)/d(...)
        j_uu_m = -a
        j_uu_0 = -q * 2.0 * u[i] * v[i]
        j_uu_p = a
        j_uv_m = cl
        j_uv_0 = -(cl + cr) - q * (sq + 2.0 * v[i] * v[i])
        j_uv_p = cr
        # d(dv_i)/d(...)
        j_vv_m = -a
        j_vv_0 = q * 2.0 * u[i] * v[i]
        j_vv_p = a
        j_vu_m = -cl
        j_vu_0 = (cl + cr) + q * (sq + 2.0 * u[i] * u[i])
        j_vu_p = -cr

        # row ru: columns 2i-2 (u_{i-1}), 2i-1 (v_{i-1}), 2i, 2i+1, 2i+2, 2i+3
        ab[kv + ru - (ru - 2), ru - 2] = -coef * j_uu_m
        ab[kv + ru - (ru - 1), ru - 1] = -coef * j_uv_m
        ab[kv, ru] = 1.0 - coef * j_uu_0
        ab[kv + ru - (ru + 1), ru + 1] = -coef * j_uv_0
        ab[kv + ru - (ru + 2), ru + 2] = -coef * j_uu_p
        ab[kv + ru - (ru + 3), ru + 3] = -coef * j_uv_p
        # row rv: columns 2i-2 .. 2i+3 likewise
        ab[kv + rv - (rv - 3), rv - 3] = -coef * j_vu_m
        ab[kv + rv - (rv - 2), rv - 2] = -coef * j_vv_m
        ab[kv + rv - (rv - 1), rv - 1] = -coef * j_vu_0
        ab[kv, rv] = 1.0 - coef * j_vv_0
        ab[kv + rv - (rv + 1), rv + 1] = -coef * j_vu_p
        ab[kv + rv - (rv + 2), rv + 2] = -coef * j_vv_p

        mu = abs(1.0 - coef * j_uu_0)
        for val in (j_uu_m, j_uv_m, j_uv_0, j_uu_p, j_uv_p):
            av = abs(coef * val)
            if av > mu:
                mu = av
        rowmax[ru] = mu
        mv = abs(1.0 - coef * j_vv_0)
        for val in (j_vu_m, j_vv_m, j_vu_0, j_vu_p, j_vv_p):
            av = abs(coef * val)
            if av > mv:
                mv = av
        rowmax[rv] = mv


# ---------------------------------------------------------------------------
# banded LU

@njit(cache=True)
def banded_lu(ab, ipiv, rowmax, use_pivoting):
    """In-place banded LU with optional partial pivoting.

    Storage as filled by ``_fill_stage_band``.  Without pivoting the
    factorisation aborts (returns the failing column + 1) when a pivot
    falls below 1e-12 of its row max; the caller then rebuilds the band
    and retries with pivoting enabled.  Returns 0 on success, -(j+1) for
    an exactly singular pivot with pivoting on.
    """
    n = ab.shape[1]
    kv = KL + KU
    for j in range(n):
        km = KL if KL < n - 1 - j else n - 1 - j
        ip = 0
        if use_pivoting:
            amax = abs(ab[kv, j])
            for k in range(1, km + 1):
                a = abs(ab[kv + k, j])
                if a > amax:
                    amax = a
                    ip = k
        piv = ab[kv + ip, j]
        if use_pivoting:
            if piv == 0.0:
                return -(j + 1)
        else:
            scale = rowmax[j]
            if scale <= 0.0:
                scale = 1.0
            if abs(piv) < _PIVOT_RTOL * scale:
                return j + 1
        ipiv[j] = j + ip
        if ip != 0:
            cmax = j + kv if j + kv < n - 1 else n - 1
            for c in range(j, cmax + 1):
                r1 = kv + j - c
                r2 = kv + j + ip - c
                tmp = ab[r1, c]
                ab[r1, c] = ab[r2, c]
                ab[r2, c] = tmp
        pivval = ab[kv, j]
        for k in range(1, km + 1):
            ab[kv + k, j] /= pivval
        cmax = j + kv if j + kv < n - 1 else n - 1
        for c in range(j + 1, cmax + 1):
            ujc = ab[kv + j - c, c]
            if ujc != 0.0:
                for k in range(1, km + 1):
                    ab[kv + j + k - c, c] -= ab[kv + k, j] * ujc
    return 0


@njit(cache=True)
def banded_solve(ab, ipiv, b):
    """Back solve with the factors produced by ``banded_lu`` (in place)."""
    n = b.size
    kv = KL + KU
    for j in range(n - 1):
        ip = ipiv[j]
        if ip != j:
            tmp = b[j]
            b[j] = b[ip]
            b[ip] = tmp
        km = KL if KL < n - 1 - j else n - 1 - j
        for k in range(1, km + 1):
            b[j + k] -= ab[kv + k, j] * b[j]
    for j in range(n - 1, -1, -1):
        cmax = j + kv if j + kv < n - 1 else n - 1
        s = b[j]
        for c in range(j + 1, cmax + 1):
            s -= ab[kv + j - c, c] * b[c]
        b[j] = s / ab[kv, j]


# ---------------------------------------------------------------------------
# Newton solution of the implicit stages

@njit(cache=True)
def newton_stage(ub, vb, coef, xs, xdot, q, ku, kv, ktol, max_iters,
                 reuse_factorisation):
    """Solve k = f(w_b + coef*k) for the stage slope k (in place).

    Full Newton: each iteration builds the banded matrix I - coef*J_f,
    factorises it and performs one back solve.  Convergence is tested on
    the max-norm of the stage residual before any solve, so a warm start
    that already satisfies the equations costs no factorisation.  With
    ``reuse_factorisation`` the first factorisation is kept for all
    iterations of this stage (quasi-Newton).

    Returns (converged, n_jacobians, n_back_solves).
    """
    n_nodes = ub.size
    n = 2 * n_nodes
    us = np.empty(n_nodes)
    vs = np.empty(n_nodes)
    fu = np.empty(n_nodes)
    fv = np.empty(n_nodes)
    r = np.empty(n)
    ab = np.empty((2 * KL + KU + 1, n))
    rowmax = np.empty(n)
    ipiv = np.empty(n, dtype=np.int64)
    jacs = 0
    bs = 0
    have_lu = False
    for _ in range(max_iters + 1):
        for i in range(n_nodes):
            us[i] = ub[i] + coef * ku[i]
            vs[i] = vb[i] + coef * kv[i]
        nlse_rhs(us, vs, xs, xdot, q, fu, fv)
        rmax = 0.0
        for i in range(n_nodes):
            r[2 * i] = ku[i] - fu[i]
            r[2 * i + 1] = kv[i] - fv[i]
            a = abs(r[2 * i])
            if a > rmax:
                rmax = a
            a = abs(r[2 * i + 1])
            if a > rmax:
                rmax = a
        if rmax < ktol:
            return True, jacs, bs
        if jacs + bs >= 2 * max_iters + 2:
            break
        if not (reuse_factorisation and have_lu):
            _fill_stage_band(us, vs, xs, xdot, q, coef, ab, rowmax)
            status = banded_lu(ab, ipiv, rowmax, False)
            if status != 0:
                _fill_stage_band(us, vs, xs, xdot, q, coef, ab, rowmax)
                status = banded_lu(ab, ipiv, rowmax, True)
                if status != 0:
                    return False, jacs, bs
            jacs += 1
            have_lu = True
        for i in range(n):
            r[i] = -r[i]
        banded_solve(ab, ipiv, r)
        bs += 1
        for i in range(n_nodes):
            ku[i] += r[2 * i]
            kv[i] += r[2 * i + 1]
    return False, jacs, bs


@njit(cache=True)
def sdirk2_nlse(u, v, x_old, x_new, dt, q, ktol, max_iters, reuse_fact,
                ku1, kv1, ku2, kv2):
    """One SDIRK2 step of the moving-mesh system from (x_old, u, v).

    The mesh is interpolated linearly in time between x_old and x_new and
    the node velocity held constant.  ku1/kv1 enter as the warm start for
    the first stage and exit holding its slope; the second stage starts
    from the first-stage slope.

    Returns (u_new, v_new, u_emb, v_emb, ok, jacs, bs); the embedded pair
    is the first-order update used for the step-size error estimate.
    """
    g = GAMMA_RK
    n_nodes = u.size
    xdot = np.empty(n_nodes)
    xs1 = np.empty(n_nodes)
    for i in range(n_nodes):
        xdot[i] = (x_new[i] - x_old[i]) / dt
        xs1[i] = x_old[i] + g * (x_new[i] - x_old[i])
    ok1, j1, b1 = newton_stage(u, v, g * dt, xs1, xdot, q, ku1, kv1, ktol,
                               max_iters, reuse_fact)
    jacs = j1
    bs = b1
    u_new = np.empty(n_nodes)
    v_new = np.empty(n_nodes)
    u_emb = np.empty(n_nodes)
    v_emb = np.empty(n_nodes)
    if not ok1:
        return u_new, v_new, u_emb, v_emb, False, jacs, bs
    ub2 = np.empty(n_nodes)
    vb2 = np.empty(n_nodes)
    for i in range(n_nodes):
        ub2[i] = u[i] + (1.0 - g) * dt * ku1[i]
        vb2[i] = v[i] + (1.0 - g) * dt * kv1[i]
        ku2[i] = ku1[i]
        kv2[i] = kv1[i]
    ok2, j2, b2 = newton_stage(ub2, vb2, g * dt, x_new, xdot, q, ku2, kv2,
                               ktol, max_iters, reuse_fact)
    jacs += j2
    bs += b2
    if not ok2:
        return u_new, v_new, u_emb, v_emb, False, jacs, bs
    for i in range(n_nodes):
        u_new[i] = u[i] + dt * ((1.0 - g) * ku1[i] + g * ku2[i])
        v_new[i] = v[i] + dt * ((1.0 - g) * kv1[i] + g * kv2[i])
        u_emb[i] = u[i] + dt * ku1[i]
        v_emb[i] = v[i] + dt * kv1[i]
    u_new[0] = 0.0
    v_new[0] = 0.0
    u_new[n_nodes - 1] = 0.0
    v_new[n_nodes - 1] = 0.0
    u_emb[0] = 0.0
    v_emb[0] = 0.0
    u_emb[n_nodes - 1] = 0.0
    v_emb[n_nodes - 1] = 0.0
    return u_new, v_new, u_emb, v_emb, True, jacs, bs


# ---------------------------------------------------------------------------
# coupled mesh/solution sweeps for one trial step

@njit(cache=True)
def coupled_step(x_n, u_n, v_n, dt, q, tau, omega, n_sweeps, sm_gamma, sm_p,
                 floor_override, ktol, max_iters, reuse_fact, move_mesh,
                 ku1, kv1, ku2, kv2):
    """Fixed number of alternating mesh/solution sweeps over one step.

    Every sweep solves the mesh equation at the current iterate (monitor
    recomputed and smoothed from the latest solution iterate), then
    re-integrates the fields from t^n on the updated mesh trajectory.
    With ``move_mesh`` false a single sweep on the frozen mesh is taken
    (further sweeps would be no-ops).

    Returns (status, x_out, u_out, v_out, u_emb, v_emb, mesherr, jacs, bs).
    """
    n_nodes = x_n.size
    x_nu = x_n.copy()
    x_next = np.empty(n_nodes)
    u_nu = u_n
    v_nu = v_n
    u_emb = u_n
    v_emb = v_n
    mesherr = 0.0
    jacs = 0
    bs = 0
    sweeps = n_sweeps if move_mesh else 1
    for _ in range(sweeps):
        if move_mesh:
            m = monitor_midpoints(u_nu, v_nu, x_nu, floor_override)
            msm = smooth_midpoints(m, sm_gamma, sm_p)
            ok = mesh_backward_euler(x_nu, msm, dt, tau, omega, x_next)
            if not ok:
                return (STEP_TANGLED, x_nu, u_nu, v_nu, u_emb, v_emb,
                        mesherr, jacs, bs)
        else:
            x_next[:] = x_n
        res = sdirk2_nlse(u_n, v_n, x_n, x_next, dt, q, ktol, max_iters,
                          reuse_fact, ku1, kv1, ku2, kv2)
        u_new, v_new, ue, ve, ok_s, j_s, b_s = res
        jacs += j_s
        bs += b_s
        if not ok_s:
            return (STEP_NEWTON_FAIL, x_nu, u_nu, v_nu, u_emb, v_emb,
                    mesherr, jacs, bs)
        mesherr = 0.0
        for i in range(n_nodes):
            d = abs(x_next[i] - x_nu[i])
            if d > mesherr:
                mesherr = d
        x_nu = x_next.copy()
        u_nu = u_new
        v_nu = v_new
        u_emb = ue
        v_emb = ve
    return STEP_OK, x_nu, u_nu, v_nu, u_emb, v_emb, mesherr, jacs, bs


# ---------------------------------------------------------------------------
# per-step diagnostics

@njit(cache=True)
def error_norm(u, v, u_emb, v_emb, x):
    """Mesh-weighted L2 measure of the embedded-solution difference."""
    n = x.size - 1
    e_prev = math.hypot(u[0] - u_emb[0], v[0] - v_emb[0])
    acc = 0.0
    for i in range(n):
        e_next = math.hypot(u[i + 1] - u_emb[i + 1], v[i + 1] - v_emb[i + 1])
        mid = 0.5 * (e_prev + e_next)
        acc += (x[i + 1] - x[i]) * mid * mid
        e_prev = e_next
    return math.sqrt(acc)


@njit(cache=True)
def conserved_quantities(u, v, x, q):
    """Discrete charge and energy sums over interior nodes."""
    n = x.size - 1
    qh = 0.0
    eh = 0.0
    for i in range(1, n):
        hl = x[i] - x[i - 1]
        hr = x[i + 1] - x[i]
        sq = u[i] * u[i] + v[i] * v[i]
        qh += 0.5 * (hl + hr) * sq
        gu = (u[i + 1] - u[i]) / hl
        gv = (v[i + 1] - v[i]) / hl
        eh += hl * (gu * gu + gv * gv - 0.5 * q * sq * sq)
    return qh, eh
