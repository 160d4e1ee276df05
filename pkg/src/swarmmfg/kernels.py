"""Numba time-stepping kernels for the backward value sweep, the forward
density sweep, and the myopic-feedback density loop.

The kernels work on raw float64 arrays and report problems through status
codes instead of exceptions (numba limitation); the wrapping modules turn
codes into Diverged / NegativeDensity. Status codes:

    0  ok
    1  advective CFL bound broken (backward sweep only)
    2  magnitude cap exceeded / nonpositive mass
    3  pre-floor negativity above tolerance

All loops are strictly sequential and single-threaded so results are
bit-reproducible.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OK = 0
CFL_BROKEN = 1
CAP_EXCEEDED = 2
NEGATIVE_DENSITY = 3

# ---------------------------------------------------------------------------
# cyclic tridiagonal solve (precomputed Thomas factors + Sherman-Morrison)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _cyclic_solve(b, o, cp, inv_den, q, v_last, denom_corr, out, w):
    M = b.shape[0]
    w[0] = b[0] * inv_den[0]
    for i in range(1, M):
        w[i] = (b[i] - o * w[i - 1]) * inv_den[i]
    out[M - 1] = w[M - 1]
    for i in range(M - 2, -1, -1):
        out[i] = w[i] - cp[i] * out[i + 1]
    s = (out[0] + v_last * out[M - 1]) / denom_corr
    for i in range(M):
        out[i] = out[i] - s * q[i]


@njit(cache=True)
def hjb_sweep(V, hbar, fvals, has_drift, dt, dx, cap, u_bound, saturate,
              identity, o, cp, inv_den, q, v_last, denom_corr):
    """Backward sweep for the value function, in place into V.

    V[-1] must be the (zero) terminal row on entry. Each step treats the
    diffusion implicitly and the coupling / drift / quadratic-gradient
    terms explicitly from the later-time row. Returns (code, step).
    """
    S = V.shape[0] - 1
    M = V.shape[1]
    g = np.empty(M)
    rhs = np.empty(M)
    w = np.empty(M)
    inv2dx = 1.0 / (2.0 * dx)
    for k in range(S - 1, -1, -1):
        vk1 = V[k + 1]
        gmax = 0.0
        for i in range(M):
            ip = i + 1 if i + 1 < M else 0
            im = i - 1 if i > 0 else M - 1
            gi = (vk1[ip] - vk1[im]) * inv2dx
            g[i] = gi
            if abs(gi) > gmax:
                gmax = abs(gi)
        if gmax * dt / dx > 1.0:
            return CFL_BROKEN, k
        for i in range(M):
            gi = g[i]
            if saturate:
                us = -gi
                if us > u_bound:
                    us = u_bound
                elif us < -u_bound:
                    us = -u_bound
                ham = us * gi + 0.5 * us * us
            else:
                ham = -0.5 * gi * gi
            src = hbar[k, i] + ham
            if has_drift:
                src += gi * fvals[i]
            rhs[i] = vk1[i] + dt * src
        if identity:
            for i in range(M):
                V[k, i] = rhs[i]
        else:
            _cyclic_solve(rhs, o, cp, inv_den, q, v_last, denom_corr, V[k], w)
        vmax = 0.0
        for i in range(M):
            if abs(V[k, i]) > vmax:
                vmax = abs(V[k, i])
        if vmax > cap:
            return CAP_EXCEEDED, k
    return OK, -1


@njit(cache=True)
def _density_step(rk, flux, dt, dx, out, scratch, neg_tol, cap,
                  identity, o, cp, inv_den, q, v_last, denom_corr):
    """Conservative advective update + implicit diffusion + floor/renormalize.

    flux[i] is the advective flux through the face between cells i and i+1.
    The new row is written to out. Returns (code, negativity, mass_drift).
    """
    M = rk.shape[0]
    star = np.empty(M)
    for i in range(M):
        im = i - 1 if i > 0 else M - 1
        star[i] = rk[i] - dt * (flux[i] - flux[im]) / dx
    if identity:
        for i in range(M):
            out[i] = star[i]
    else:
        _cyclic_solve(star, o, cp, inv_den, q, v_last, denom_corr, out, scratch)
    neg = 0.0
    for i in range(M):
        if -out[i] > neg:
            neg = -out[i]
    if neg > neg_tol:
        return NEGATIVE_DENSITY, neg, 0.0
    mass = 0.0
    for i in range(M):
        if out[i] < 0.0:
            out[i] = 0.0
        mass += out[i]
    mass *= dx
    drift = abs(mass - 1.0)
    if mass <= 0.0:
        return CAP_EXCEEDED, neg, drift
    inv_mass = 1.0 / mass
    rmax = 0.0
    for i in range(M):
        out[i] *= inv_mass
        if out[i] > rmax:
            rmax = out[i]
    if rmax > cap:
        return CAP_EXCEEDED, neg, drift
    return OK, neg, drift


@njit(cache=True)
def fp_sweep(R, u_traj, fvals, has_drift, dt, dx, cap, neg_tol, upwind,
             identity, o, cp, inv_den, q, v_last, denom_corr):
    """Forward density sweep under a fixed input trajectory, in place into R.

    R[0] must hold the initial density on entry. Advective fluxes use
    face-averaged velocity with upwind (or centered) face density; the
    diffusion solve is implicit. Returns (code, step, max_neg, max_drift).
    """
    S = R.shape[0] - 1
    M = R.shape[1]
    wvel = np.empty(M)
    flux = np.empty(M)
    scratch = np.empty(M)
    max_neg = 0.0
    max_drift = 0.0
    for k in range(S):
        rk = R[k]
        for i in range(M):
            wi = u_traj[k, i]
            if has_drift:
                wi += fvals[i]
            wvel[i] = wi
        for i in range(M):
            ip = i + 1 if i + 1 < M else 0
            wf = 0.5 * (wvel[i] + wvel[ip])
            if upwind:
                rf = rk[i] if wf >= 0.0 else rk[ip]
            else:
                rf = 0.5 * (rk[i] + rk[ip])
            flux[i] = wf * rf
        code, neg, drift = _density_step(rk, flux, dt, dx, R[k + 1], scratch,
                                         neg_tol, cap, identity, o, cp,
                                         inv_den, q, v_last, denom_corr)
        if neg > max_neg:
            max_neg = neg
        if drift > max_drift:
            max_drift = drift
        if code != OK:
            return code, k, max_neg, max_drift
    return OK, -1, max_neg, max_drift


BRS_UNCLAMPED = 0
BRS_CLAMPED = 1
BRS_LINEAR = 2


@njit(cache=True)
def brs_sweep(R_rec, rho0, n_steps, rec_every, dt, dx, floor, u_max, mode,
              cap, neg_tol,
              identity, o, cp, inv_den, q, v_last, denom_corr):
    """Myopic-feedback density loop; records every rec_every-th row into R_rec.

    mode 0: drift is the face-differenced negative log-density gradient,
            centered face density (2nd order, unclamped).
    mode 1: cell-centered input -grad(rho)/rho clamped to [-u_max, u_max],
            face-averaged, upwind face density (matches the controller FP).
    mode 2: no advection; the factor passed must already hold the combined
            diffusion coefficient of the closed-form reduction.
    Returns (code, step, max_neg, max_drift).
    """
    M = rho0.shape[0]
    cur = np.empty(M)
    nxt = np.empty(M)
    flux = np.empty(M)
    ucell = np.empty(M)
    scratch = np.empty(M)
    for i in range(M):
        cur[i] = rho0[i]
        R_rec[0, i] = rho0[i]
    inv2dx = 1.0 / (2.0 * dx)
    max_neg = 0.0
    max_drift = 0.0
    for n in range(n_steps):
        if mode == 2:
            for i in range(M):
                flux[i] = 0.0
        elif mode == 0:
            for i in range(M):
                ip = i + 1 if i + 1 < M else 0
                ri = cur[i] if cur[i] > floor else floor
                rip = cur[ip] if cur[ip] > floor else floor
                wf = -(np.log(rip) - np.log(ri)) / dx
                flux[i] = wf * 0.5 * (cur[i] + cur[ip])
        else:
            for i in range(M):
                ip = i + 1 if i + 1 < M else 0
                im = i - 1 if i > 0 else M - 1
                ri = cur[i] if cur[i] > floor else floor
                ui = -(cur[ip] - cur[im]) * inv2dx / ri
                if ui > u_max:
                    ui = u_max
                elif ui < -u_max:
                    ui = -u_max
                ucell[i] = ui
            for i in range(M):
                ip = i + 1 if i + 1 < M else 0
                wf = 0.5 * (ucell[i] + ucell[ip])
                rf = cur[i] if wf >= 0.0 else cur[ip]
                flux[i] = wf * rf
        code, neg, drift = _density_step(cur, flux, dt, dx, nxt, scratch,
                                         neg_tol, cap, identity, o, cp,
                                         inv_den, q, v_last, denom_corr)
        if neg > max_neg:
            max_neg = neg
        if drift > max_drift:
            max_drift = drift
        if code != OK:
            return code, n, max_neg, max_drift
        for i in range(M):
            cur[i] = nxt[i]
        if (n + 1) % rec_every == 0:
            r = (n + 1) // rec_every
            for i in range(M):
                R_rec[r, i] = cur[i]
    return OK, -1, max_neg, max_drift
