"""Receding-horizon feedback controller built on the fixed-point solver.

At each outer time t the controller solves the coupled system on the
window [t, t + prediction_time] from the currently observed density,
advances the true density one outer step, and repeats. The advance uses
the window's own predicted input slice u(x, tau) for tau in [t, t + dt]
("window" mode, the default): holding the single tau = t row for the
whole step ("hold" mode) makes the outer loop an explicit step of the
feedback's effective diffusion, which is unstable at short prediction
times unless the outer step shrinks to the parabolic limit. Both advances
agree as outer_dt -> 0.

Later windows are warm-started from the previous window's converged
iterates shifted by one outer step (the fixed point is unchanged;
cold-start equivalence is covered by tests), and the adapted damping
factor is carried along.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cost import CostModel
from .densities import normalize_density
from .errors import Diverged, NegativeDensity, NotConverged
from .fp import FpProblem, solve_fp
from .grid import Field, Grid, SpaceTimeField
from .hjb import HjbProblem
from .mfg import MfgConfig, solve_mfg
from .stepping import default_num_steps


def _is_multiple(a: float, b: float, rel: float = 1e-9) -> bool:
    """True when a is an integer multiple of b up to relative round-off."""
    n = round(a / b)
    return n >= 1 and abs(a - n * b) <= rel * max(abs(a), 1.0)


@dataclass(frozen=True)
class MpMfgConfig:
    """Horizon layout, physics, and inner-solver settings for one run."""

    grid: Grid
    prediction_time: float
    outer_dt: float
    total_time: float
    sigma2: float
    cost: CostModel
    u_max: float = 1.0
    drift: Field | None = None
    mfg: MfgConfig = MfgConfig()
    inner_dt: float | None = None
    warm_start: bool = True
    saturate_hamiltonian: bool = False
    advance_mode: str = "window"
    record_dt: float | None = None

    def __post_init__(self) -> None:
        if self.advance_mode not in ("window", "hold"):
            raise ValueError("advance_mode must be 'window' or 'hold'")
        if self.record_dt is not None:
            if not _is_multiple(self.record_dt, self.outer_dt):
                raise ValueError("record_dt must be a multiple of outer_dt")
            if not _is_multiple(self.total_time, self.record_dt):
                raise ValueError("total_time must be a multiple of record_dt")
        if not self.prediction_time > 0:
            raise ValueError("prediction_time must be positive")
        if not self.outer_dt > 0:
            raise ValueError("outer_dt must be positive")
        if self.outer_dt > self.prediction_time * (1 + 1e-12):
            raise ValueError(
                f"outer_dt ({self.outer_dt}) must not exceed the prediction time "
                f"({self.prediction_time})")
        if not _is_multiple(self.total_time, self.outer_dt):
            raise ValueError(
                f"total_time ({self.total_time}) must be a positive multiple of "
                f"outer_dt ({self.outer_dt})")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")
        if not math.isclose(self.cost.horizon_scale, self.prediction_time,
                            rel_tol=1e-12):
            raise ValueError(
                "cost.horizon_scale must equal prediction_time "
                f"({self.cost.horizon_scale} != {self.prediction_time})")
        if self.inner_dt is not None:
            if not self.inner_dt > 0:
                raise ValueError("inner_dt must be positive")
            if not _is_multiple(self.prediction_time, self.inner_dt):
                raise ValueError("prediction_time must be a multiple of inner_dt")
            if not _is_multiple(self.outer_dt, self.inner_dt):
                raise ValueError("outer_dt must be a multiple of inner_dt")

    @property
    def num_outer_steps(self) -> int:
        return round(self.total_time / self.outer_dt)

    @property
    def inner_num_steps(self) -> int:
        if self.inner_dt is None:
            return default_num_steps(self.prediction_time)
        return round(self.prediction_time / self.inner_dt)

    @property
    def inner_dt_actual(self) -> float:
        return self.prediction_time / self.inner_num_steps

    @property
    def shift_rows(self) -> int:
        """How many inner rows one outer step spans (must be whole)."""
        s = self.outer_dt / self.inner_dt_actual
        n = round(s)
        if n < 1 or abs(s - n) > 1e-9:
            raise ValueError(
                f"outer_dt must be a whole number of inner steps (got {s:.6g}); "
                "choose inner_dt so it divides outer_dt")
        return n

    @property
    def record_every(self) -> int:
        if self.record_dt is None:
            return 1
        return round(self.record_dt / self.outer_dt)


@dataclass(frozen=True)
class MpMfgTrajectory:
    """Closed-loop density and applied input on the outer time grid.

    ``input_bound`` is None for runs whose inputs are intentionally
    unbounded (the unclamped myopic baseline); otherwise every input row
    is checked against it.
    """

    rho: SpaceTimeField
    applied_u: SpaceTimeField
    per_step_diagnostics: tuple[tuple[int, float], ...]
    input_bound: float | None = None

    def __post_init__(self) -> None:
        if self.rho.grid != self.applied_u.grid:
            raise ValueError("rho and applied_u must share a grid")
        if self.rho.values.shape != self.applied_u.values.shape:
            raise ValueError("rho and applied_u must share the time grid")
        masses = self.rho.values.sum(axis=1) * self.rho.grid.dx
        if np.abs(masses - 1.0).max() > 1e-8:
            raise ValueError("every density row must have unit mass")
        if self.rho.values.min() < 0.0:
            raise ValueError("density rows must be nonnegative")
        if self.input_bound is not None:
            if np.abs(self.applied_u.values).max() > self.input_bound * (1 + 1e-12):
                raise ValueError("applied input exceeds its bound")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.rho.values.shape[0]) * self.rho.dt


def run_mp_mfg(cfg: MpMfgConfig, rho0: Field) -> MpMfgTrajectory:
    """Run the receding-horizon loop over [0, total_time].

    Solver failures are re-raised with the outer step index and time
    attached. The window at the final time is solved too, so the applied
    input is defined on every row of the output grid; when record_dt
    thins the output, only every record_every-th control step is kept.
    """
    if rho0.grid != cfg.grid:
        raise ValueError("rho0 grid does not match config grid")
    rho0 = normalize_density(rho0)

    grid = cfg.grid
    M = grid.num_cells
    K = cfg.num_outer_steps
    S = cfg.inner_num_steps
    dti = cfg.inner_dt_actual
    shift = cfg.shift_rows
    rec = cfg.record_every

    rho_rows = np.empty((K + 1, M))
    u_rows = np.empty((K + 1, M))
    rho_rows[0] = rho0.values
    diagnostics: list[tuple[int, float]] = []

    warm_v: np.ndarray | None = None
    warm_r: np.ndarray | None = None
    mfg_cfg = cfg.mfg

    for j in range(K + 1):
        t_j = j * cfg.outer_dt
        rho_j = Field(grid, rho_rows[j])
        window_rho = SpaceTimeField.constant_in_time(rho_j, dti, S)
        zero_u = SpaceTimeField(grid, dti, np.zeros((S + 1, M)))
        hjb_t = HjbProblem(grid, cfg.prediction_time, S, cfg.sigma2, cfg.cost,
                           window_rho, drift=cfg.drift, input_bound=cfg.u_max,
                           saturate_hamiltonian=cfg.saturate_hamiltonian)
        fp_t = FpProblem(grid, cfg.prediction_time, S, cfg.sigma2, zero_u,
                         rho_j, drift=cfg.drift)
        try:
            sol = solve_mfg(hjb_t, fp_t, mfg_cfg, v0=warm_v, rho_traj0=warm_r)
        except NotConverged as e:
            raise NotConverged(
                f"outer step {j} (t={t_j:.4f}): {e}",
                residual_history=e.residual_history) from e
        except (Diverged, NegativeDensity) as e:
            e.args = (f"outer step {j} (t={t_j:.4f}): {e}",) + e.args[1:]
            raise

        u_rows[j] = sol.u.values[0]
        diagnostics.append((sol.iters, sol.final_residual))
        if cfg.mfg.adapt_damping:
            # carry the adapted damping to the next window; let it creep
            # back up after easy windows so one hard transient does not
            # pin the whole run at the floor
            theta_next = sol.final_damping
            if sol.iters <= 8:
                theta_next = min(2.0 * theta_next, cfg.mfg.damping)
            mfg_cfg = replace(mfg_cfg, damping=theta_next)

        if j < K:
            # advance the true density one outer step
            if cfg.advance_mode == "window":
                u_slice = sol.u.values[:shift + 1]
            else:
                u_slice = np.tile(u_rows[j], (shift + 1, 1))
            adv = FpProblem(grid, cfg.outer_dt, shift, cfg.sigma2,
                            SpaceTimeField(grid, dti, u_slice),
                            rho_j, drift=cfg.drift)
            try:
                rho_rows[j + 1] = solve_fp(adv).values[-1]
            except (Diverged, NegativeDensity) as e:
                e.args = (f"outer step {j} (t={t_j:.4f}): {e}",) + e.args[1:]
                raise
            if cfg.warm_start:
                warm_v = np.zeros((S + 1, M))
                warm_v[:S + 1 - shift] = sol.V.values[shift:]
                warm_r = np.empty((S + 1, M))
                warm_r[:S + 1 - shift] = sol.rho.values[shift:]
                warm_r[S + 1 - shift:] = sol.rho.values[-1]

    return MpMfgTrajectory(
        rho=SpaceTimeField(grid, cfg.outer_dt * rec, rho_rows[::rec]),
        applied_u=SpaceTimeField(grid, cfg.outer_dt * rec, u_rows[::rec]),
        per_step_diagnostics=tuple(diagnostics),
        input_bound=cfg.u_max,
    )
