"""Damped Picard iteration coupling the backward value solve and the
forward density solve on one horizon.

Each sweep (1) solves the value function backward with the density frozen,
(2) extracts the feedback input from every value row, (3) solves the
density forward under that input, then blends both iterates with the
damping factor theta. The loop stops when

    ||V - V_old|| + ||rho - rho_old|| <= tol

in the configured norm (sup norm over all rows by default). Plain Picard
(theta = 1) can oscillate or limit-cycle under strong congestion coupling,
so by default the damping adapts: theta is halved (down to a floor)
whenever the residual grows markedly or stalls without improvement for
several sweeps. The converged limit does not depend on theta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .cost import coupling_cost_values
from .errors import Diverged, NegativeDensity, NotConverged
from .fp import FpProblem
from .grid import SpaceTimeField
from .hjb import HjbProblem, input_values_from_value
from .stepping import CyclicDiffusionFactor

NORM_KINDS = ("linf", "l2")


@dataclass(frozen=True)
class MfgConfig:
    """Stopping tolerance and damping for the fixed-point loop."""

    tol: float = 1e-6
    max_iters: int = 500
    damping: float = 0.5
    norm_kind: str = "linf"
    clamp_fp_drift: bool = True
    adapt_damping: bool = True
    damping_floor: float = 0.02
    stall_patience: int = 10

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError(f"damping must be in (0, 1], got {self.damping}")
        if self.norm_kind not in NORM_KINDS:
            raise ValueError(f"norm_kind must be one of {NORM_KINDS}")
        if not (0.0 < self.damping_floor <= self.damping):
            raise ValueError("damping_floor must be in (0, damping]")
        if self.stall_patience < 2:
            raise ValueError("stall_patience must be >= 2")


@dataclass(frozen=True)
class MfgSolution:
    """Converged (V, rho) pair, the clamped input rows, and diagnostics."""

    V: SpaceTimeField
    rho: SpaceTimeField
    u: SpaceTimeField
    iters: int
    final_residual: float
    residual_history: tuple[float, ...]
    final_damping: float

    def __post_init__(self) -> None:
        if np.abs(self.V.values[-1]).max() != 0.0:
            raise ValueError("terminal value row must be exactly zero")
        masses = self.rho.values.sum(axis=1) * self.rho.grid.dx
        if np.abs(masses - 1.0).max() > 1e-8:
            raise ValueError("every density row must have unit mass")


def _norm(arr: np.ndarray, kind: str, dx: float, dt: float) -> float:
    if kind == "linf":
        return float(np.abs(arr).max())
    return float(np.sqrt((arr ** 2).sum() * dx * dt))


def solve_mfg(hjb_template: HjbProblem, fp_template: FpProblem, cfg: MfgConfig,
              v0: np.ndarray | None = None,
              rho_traj0: np.ndarray | None = None) -> MfgSolution:
    """Run the fixed-point loop built from the two problem templates.

    The templates must agree on grid, horizon, step count, noise, and
    drift; the template's rho_traj / input_traj contents only seed shapes.
    ``v0`` and ``rho_traj0`` optionally warm-start the iteration (defaults:
    V identically zero, density held constant at rho0). Raises NotConverged
    after max_iters, carrying the residual history.
    """
    if hjb_template.grid != fp_template.grid:
        raise ValueError("templates must share a grid")
    if hjb_template.num_steps != fp_template.num_steps:
        raise ValueError("templates must share num_steps")
    if abs(hjb_template.horizon - fp_template.horizon) > 1e-12 * max(1.0, hjb_template.horizon):
        raise ValueError("templates must share the horizon")
    if hjb_template.sigma2 != fp_template.sigma2:
        raise ValueError("templates must share sigma2")
    hd = hjb_template.drift.values if hjb_template.drift is not None else None
    fd = fp_template.drift.values if fp_template.drift is not None else None
    if (hd is None) != (fd is None) or (hd is not None and not np.array_equal(hd, fd)):
        raise ValueError("templates must share the drift field")

    grid = hjb_template.grid
    S, M = hjb_template.num_steps, grid.num_cells
    dt, dx = hjb_template.dt, grid.dx
    rho0_vals = fp_template.rho0.values
    bound = hjb_template.input_bound
    fp_bound = bound if cfg.clamp_fp_drift else None

    cur_V = np.zeros((S + 1, M)) if v0 is None else np.array(v0, dtype=float)
    if cur_V.shape != (S + 1, M):
        raise ValueError(f"v0 must have shape {(S + 1, M)}")
    cur_V[-1] = 0.0
    if rho_traj0 is None:
        cur_R = np.tile(rho0_vals, (S + 1, 1))
    else:
        cur_R = np.array(rho_traj0, dtype=float)
        if cur_R.shape != (S + 1, M):
            raise ValueError(f"rho_traj0 must have shape {(S + 1, M)}")
        cur_R[0] = rho0_vals

    factor = CyclicDiffusionFactor(grid, 0.5 * hjb_template.sigma2, dt)
    has_drift = hjb_template.drift is not None
    fvals = hjb_template.drift.values if has_drift else np.zeros(M)

    theta = cfg.damping
    history: list[float] = []
    best_res = np.inf
    stalled = 0
    V_new = np.empty((S + 1, M))
    R_new = np.empty((S + 1, M))
    it = 0
    while it < cfg.max_iters:
        it += 1
        # backward value sweep with the current density frozen
        V_new[:] = 0.0
        hbar = coupling_cost_values(hjb_template.cost, cur_R)
        code, step = kernels.hjb_sweep(
            V_new, hbar, fvals, has_drift, dt, dx, hjb_template.magnitude_cap,
            bound, hjb_template.saturate_hamiltonian, *factor.kernel_args())
        if code == kernels.CFL_BROKEN:
            raise Diverged(f"iteration {it}: backward sweep broke the CFL bound "
                           f"at step {step}", step=step)
        if code == kernels.CAP_EXCEEDED:
            raise Diverged(f"iteration {it}: backward sweep exceeded the magnitude "
                           f"cap at step {step}", step=step)
        # forward density sweep under the extracted input
        u_rows = input_values_from_value(V_new, dx, fp_bound)
        R_new[0] = rho0_vals
        code, step, max_neg, _ = kernels.fp_sweep(
            R_new, u_rows, fvals, has_drift, dt, dx, fp_template.magnitude_cap,
            fp_template.negativity_tol, fp_template.flux_scheme == "upwind",
            *factor.kernel_args())
        if code == kernels.NEGATIVE_DENSITY:
            raise NegativeDensity(f"iteration {it}: density negativity {max_neg:.3e} "
                                  f"at step {step}", step=step, magnitude=max_neg)
        if code == kernels.CAP_EXCEEDED:
            raise Diverged(f"iteration {it}: density sweep exceeded the magnitude "
                           f"cap at step {step}", step=step)
        # damped update and joint residual
        res = theta * (_norm(V_new - cur_V, cfg.norm_kind, dx, dt)
                       + _norm(R_new - cur_R, cfg.norm_kind, dx, dt))
        cur_V += theta * (V_new - cur_V)
        cur_V[-1] = 0.0
        cur_R += theta * (R_new - cur_R)
        history.append(res)
        if res <= cfg.tol:
            break
        if cfg.adapt_damping:
            # halve theta when the residual inflates or merely circles a
            # limit cycle without improving (flat-residual 2-cycles are the
            # common failure of plain Picard on this coupling)
            if res < 0.98 * best_res:
                best_res = res
                stalled = 0
            else:
                stalled += 1
            if (stalled >= cfg.stall_patience or res > 3.0 * best_res) \
                    and theta > cfg.damping_floor:
                theta = max(0.5 * theta, cfg.damping_floor)
                stalled = 0
                best_res = res
    else:
        raise NotConverged(
            f"no convergence after {cfg.max_iters} iterations "
            f"(last residual {history[-1]:.3e}, tol {cfg.tol:g})",
            residual_history=tuple(history))

    u_final = input_values_from_value(cur_V, dx, bound)
    return MfgSolution(
        V=SpaceTimeField(grid, dt, cur_V),
        rho=SpaceTimeField(grid, dt, cur_R),
        u=SpaceTimeField(grid, dt, u_final),
        iters=it,
        final_residual=history[-1],
        residual_history=tuple(history),
        final_damping=theta,
    )
