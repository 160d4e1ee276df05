"""Myopic best-reply control: the input reacts to the instantaneous
density only, u = -d/dx ln(rho), with no prediction window.

For the log-density coverage cost the unclamped closed loop reduces
analytically to linear diffusion with coefficient (sigma2 + 2) / 2, which
makes an exact cross-check possible. Three run modes:

    unclamped  nonlinear density loop with the raw log-gradient drift
               (default; inputs may exceed u_max, matching the analytic
               reduction)
    clamped    inputs clipped to [-u_max, u_max]; same flux scheme as the
               receding-horizon controller, for like-for-like comparisons
    linear     integrates the diffusion reduction directly with the same
               implicit stepper (no advection path at all)

Note the feedback makes the advection term act like a unit-coefficient
diffusion, so the explicit part of the step needs dt <= dx^2/2 even
though it looks like transport; the density guards catch violations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .cost import CostModel
from .densities import normalize_density
from .errors import Diverged, NegativeDensity
from .fp import DEFAULT_MAGNITUDE_CAP, DEFAULT_NEGATIVITY_TOL
from .grid import Field, Grid, SpaceTimeField, gradient_values
from .mpmfg import MpMfgTrajectory, _is_multiple
from .stepping import CyclicDiffusionFactor

MODES = ("unclamped", "clamped", "linear")
_MODE_CODES = {"unclamped": kernels.BRS_UNCLAMPED,
               "clamped": kernels.BRS_CLAMPED,
               "linear": kernels.BRS_LINEAR}


@dataclass(frozen=True)
class BrsConfig:
    """Time layout and physics for a myopic-feedback run.

    The cost model only contributes its density floor here; the horizon
    scaling cancels out of the myopic input.
    """

    grid: Grid
    total_time: float
    dt: float
    sigma2: float
    cost: CostModel
    u_max: float = 1.0
    record_dt: float | None = None
    magnitude_cap: float = DEFAULT_MAGNITUDE_CAP
    negativity_tol: float = DEFAULT_NEGATIVITY_TOL

    def __post_init__(self) -> None:
        if not self.total_time > 0:
            raise ValueError("total_time must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")
        if not _is_multiple(self.total_time, self.dt):
            raise ValueError("total_time must be a multiple of dt")
        if self.record_dt is not None:
            if not _is_multiple(self.record_dt, self.dt):
                raise ValueError("record_dt must be a multiple of dt")
            if not _is_multiple(self.total_time, self.record_dt):
                raise ValueError("total_time must be a multiple of record_dt")

    @property
    def num_steps(self) -> int:
        return round(self.total_time / self.dt)

    @property
    def record_every(self) -> int:
        if self.record_dt is None:
            return 1
        return round(self.record_dt / self.dt)


def brs_input_values(rho_values: np.ndarray, dx: float,
                     density_floor: float) -> np.ndarray:
    """Raw myopic input -grad(rho) / max(rho, floor), rows or stacks."""
    return -gradient_values(rho_values, dx) / np.maximum(rho_values, density_floor)


def brs_input(rho: Field, u_max: float = 1.0,
              density_floor: float = 1e-8) -> Field:
    """Myopic feedback input clamp(-grad(rho)/max(rho, floor), +-u_max)."""
    if not u_max > 0:
        raise ValueError("u_max must be positive")
    raw = brs_input_values(rho.values, rho.grid.dx, density_floor)
    return Field(rho.grid, np.clip(raw, -u_max, u_max))


def run_brs(cfg: BrsConfig, rho0: Field, mode: str = "unclamped") -> MpMfgTrajectory:
    """Advance the myopic closed loop and record on the coarse time grid.

    Returns the same trajectory type as the receding-horizon controller so
    the two can be compared directly. Recorded input rows are the myopic
    inputs of the recorded densities (clipped only in clamped mode).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if rho0.grid != cfg.grid:
        raise ValueError("rho0 grid does not match config grid")
    rho0 = normalize_density(rho0)

    n_steps = cfg.num_steps
    rec_every = cfg.record_every
    K = n_steps // rec_every
    M = cfg.grid.num_cells
    coeff = 0.5 * (cfg.sigma2 + 2.0) if mode == "linear" else 0.5 * cfg.sigma2
    factor = CyclicDiffusionFactor(cfg.grid, coeff, cfg.dt)

    R_rec = np.empty((K + 1, M))
    code, step, max_neg, _ = kernels.brs_sweep(
        R_rec, rho0.values, n_steps, rec_every, cfg.dt, cfg.grid.dx,
        cfg.cost.density_floor, cfg.u_max, _MODE_CODES[mode],
        cfg.magnitude_cap, cfg.negativity_tol, *factor.kernel_args())
    if code == kernels.NEGATIVE_DENSITY:
        raise NegativeDensity(
            f"myopic loop: density negativity {max_neg:.3e} at step {step} "
            f"(dt too large for the feedback diffusion)", step=step,
            magnitude=max_neg)
    if code == kernels.CAP_EXCEEDED:
        raise Diverged(f"myopic loop exceeded the magnitude cap at step {step}",
                       step=step)

    u_rec = brs_input_values(R_rec, cfg.grid.dx, cfg.cost.density_floor)
    if mode == "clamped":
        np.clip(u_rec, -cfg.u_max, cfg.u_max, out=u_rec)
    record_dt = cfg.dt * rec_every
    return MpMfgTrajectory(
        rho=SpaceTimeField(cfg.grid, record_dt, R_rec),
        applied_u=SpaceTimeField(cfg.grid, record_dt, u_rec),
        per_step_diagnostics=(),
        input_bound=cfg.u_max if mode == "clamped" else None,
    )
