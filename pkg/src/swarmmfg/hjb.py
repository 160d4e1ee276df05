"""Backward-in-time solver for the value function over one horizon.

Given a frozen density trajectory, integrates

    -dV/dtau = h(rho) + Vx*f - 0.5*Vx^2 + 0.5*sigma2*Vxx

from the zero terminal row back to the start of the window. The diffusion
term is implicit (cyclic tridiagonal solve); the coupling, drift, and
quadratic gradient terms are explicit from the later-time row, with the
coupling sourced at the target row of the frozen density. The quadratic
term is a source, not an advection, so central differences are stable
here; an advective CFL bound on Vx is still asserted every step and a
violation raises Diverged.

The feedback input is u = -Vx clamped to the input bound. By default the
clamp is applied at extraction only; set ``saturate_hamiltonian`` to fold
the bound into the Hamiltonian minimization instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .cost import CostModel, coupling_cost_values
from .errors import Diverged
from .grid import Field, Grid, SpaceTimeField, gradient_values
from .stepping import CyclicDiffusionFactor

DEFAULT_MAGNITUDE_CAP = 1e6


@dataclass(frozen=True)
class HjbProblem:
    """One backward solve: horizon, physics, cost, and the frozen density."""

    grid: Grid
    horizon: float
    num_steps: int
    sigma2: float
    cost: CostModel
    rho_traj: SpaceTimeField
    drift: Field | None = None
    input_bound: float = 1.0
    saturate_hamiltonian: bool = False
    magnitude_cap: float = DEFAULT_MAGNITUDE_CAP

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.num_steps < 1:
            raise ValueError(f"num_steps must be >= 1, got {self.num_steps}")
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")
        if not self.input_bound > 0:
            raise ValueError(f"input_bound must be positive, got {self.input_bound}")
        if not self.magnitude_cap > 0:
            raise ValueError("magnitude_cap must be positive")
        if self.rho_traj.grid != self.grid:
            raise ValueError("rho_traj grid does not match problem grid")
        if self.rho_traj.values.shape[0] != self.num_steps + 1:
            raise ValueError(
                f"rho_traj must have num_steps+1 = {self.num_steps + 1} rows, "
                f"got {self.rho_traj.values.shape[0]}"
            )
        if self.drift is not None and self.drift.grid != self.grid:
            raise ValueError("drift grid does not match problem grid")

    @property
    def dt(self) -> float:
        return self.horizon / self.num_steps


def solve_hjb_values(p: HjbProblem, rho_values: np.ndarray) -> np.ndarray:
    """Array-level backward sweep; rho_values is the frozen (S+1, M) density."""
    S, M = p.num_steps, p.grid.num_cells
    V = np.zeros((S + 1, M))
    hbar = coupling_cost_values(p.cost, rho_values)
    factor = CyclicDiffusionFactor(p.grid, 0.5 * p.sigma2, p.dt)
    has_drift = p.drift is not None
    fvals = p.drift.values if has_drift else np.zeros(M)
    code, step = kernels.hjb_sweep(
        V, hbar, fvals, has_drift, p.dt, p.grid.dx, p.magnitude_cap,
        p.input_bound, p.saturate_hamiltonian, *factor.kernel_args()
    )
    if code == kernels.CFL_BROKEN:
        raise Diverged(
            f"backward value sweep broke the advective CFL bound |Vx|*dt/dx <= 1 "
            f"at step {step}; reduce the inner time step", step=step)
    if code == kernels.CAP_EXCEEDED:
        raise Diverged(
            f"backward value sweep exceeded magnitude cap {p.magnitude_cap:g} "
            f"at step {step}", step=step)
    return V


def solve_hjb(p: HjbProblem) -> SpaceTimeField:
    """Value function over the horizon; the last row is the zero terminal row."""
    return SpaceTimeField(p.grid, p.dt, solve_hjb_values(p, p.rho_traj.values))


def input_values_from_value(V_values: np.ndarray, dx: float,
                            bound: float | None) -> np.ndarray:
    """u = -Vx rows (central differences), optionally clamped to [-bound, bound]."""
    u = -gradient_values(V_values, dx)
    if bound is not None:
        np.clip(u, -bound, bound, out=u)
    return u


def extract_input(V_row: Field, input_bound: float) -> Field:
    """Feedback input of one value row: clamp(-Vx, -input_bound, +input_bound)."""
    if not input_bound > 0:
        raise ValueError("input_bound must be positive")
    return Field(V_row.grid,
                 input_values_from_value(V_row.values, V_row.grid.dx, input_bound))
