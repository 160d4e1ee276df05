"""Shared time-stepping support: step-count defaults and the implicit
diffusion solve.

Both PDE steppers treat their diffusion term implicitly, which requires
solving (I - coeff*dt*D2) x = b once per step, where D2 is the periodic
three-point Laplacian. That matrix is cyclic tridiagonal with constant
coefficients, so we factor it once per solver setup: a Thomas elimination
of the core tridiagonal plus a Sherman-Morrison rank-one correction for
the periodic wrap. The factor arrays are plain ndarrays so the hot loops
(numba kernels) can run the O(M) solve in place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid

#: default target for the inner time step of the PDE sweeps
DEFAULT_INNER_DT = 5e-4


def default_num_steps(horizon: float) -> int:
    """Default step count for a horizon: max(20, ceil(horizon / 5e-4))."""
    return max(20, math.ceil(horizon / DEFAULT_INNER_DT))


@dataclass(frozen=True)
class CyclicDiffusionFactor:
    """Factorization of A = I - coeff*dt*D2 on a periodic grid.

    ``solve`` computes A^{-1} b. When coeff*dt == 0 the matrix is the
    identity and the solve is a copy (flagged so callers can skip it).
    """

    grid: Grid
    coeff: float
    dt: float
    # derived, filled in __post_init__
    identity: bool = field(init=False)
    off: float = field(init=False)
    cp: np.ndarray = field(init=False, repr=False)
    inv_den: np.ndarray = field(init=False, repr=False)
    q: np.ndarray = field(init=False, repr=False)
    v_last: float = field(init=False)
    denom_corr: float = field(init=False)

    def __post_init__(self) -> None:
        if self.coeff < 0:
            raise ValueError("diffusion coefficient must be nonnegative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        M = self.grid.num_cells
        lam = self.coeff * self.dt / self.grid.dx ** 2
        ident = lam == 0.0
        object.__setattr__(self, "identity", ident)
        if ident:
            object.__setattr__(self, "off", 0.0)
            object.__setattr__(self, "cp", np.zeros(M))
            object.__setattr__(self, "inv_den", np.ones(M))
            object.__setattr__(self, "q", np.zeros(M))
            object.__setattr__(self, "v_last", 0.0)
            object.__setattr__(self, "denom_corr", 1.0)
            return
        d0 = 1.0 + 2.0 * lam
        o = -lam
        # Sherman-Morrison split: A = B + u v^T with u = gamma*e0 + o*e_{M-1},
        # v = e0 + (o/gamma)*e_{M-1}, gamma = -d0. B is strictly tridiagonal.
        gamma = -d0
        bb = np.full(M, d0)
        bb[0] = d0 - gamma
        bb[M - 1] = d0 - o * o / gamma
        den = np.empty(M)
        cp = np.empty(M)
        den[0] = bb[0]
        cp[0] = o / den[0]
        for i in range(1, M):
            den[i] = bb[i] - o * cp[i - 1]
            cp[i] = o / den[i]
        inv_den = 1.0 / den
        u_vec = np.zeros(M)
        u_vec[0] = gamma
        u_vec[M - 1] = o
        q = _thomas_solve(u_vec, o, cp, inv_den)
        v_last = o / gamma
        denom_corr = 1.0 + q[0] + v_last * q[M - 1]
        object.__setattr__(self, "off", o)
        object.__setattr__(self, "cp", cp)
        object.__setattr__(self, "inv_den", inv_den)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v_last", v_last)
        object.__setattr__(self, "denom_corr", denom_corr)

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.identity:
            return np.array(b, dtype=float, copy=True)
        y = _thomas_solve(np.asarray(b, dtype=float), self.off, self.cp, self.inv_den)
        s = (y[0] + self.v_last * y[-1]) / self.denom_corr
        return y - s * self.q

    def dense_matrix(self) -> np.ndarray:
        """A = I - coeff*dt*D2 assembled densely (for tests)."""
        M = self.grid.num_cells
        lam = self.coeff * self.dt / self.grid.dx ** 2
        A = np.eye(M) * (1.0 + 2.0 * lam)
        for i in range(M):
            A[i, (i + 1) % M] -= lam
            A[i, (i - 1) % M] -= lam
        return A

    def kernel_args(self) -> tuple:
        """Arguments consumed by the numba sweeps, in positional order."""
        return (self.identity, self.off, self.cp, self.inv_den, self.q,
                self.v_last, self.denom_corr)


def _thomas_solve(b: np.ndarray, o: float, cp: np.ndarray, inv_den: np.ndarray) -> np.ndarray:
    M = b.shape[0]
    w = np.empty(M)
    w[0] = b[0] * inv_den[0]
    for i in range(1, M):
        w[i] = (b[i] - o * w[i - 1]) * inv_den[i]
    y = np.empty(M)
    y[M - 1] = w[M - 1]
    for i in range(M - 2, -1, -1):
        y[i] = w[i] - cp[i] * y[i + 1]
    return y
