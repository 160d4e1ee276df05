"""Forward-in-time solver for the swarm density under a given input field.

Integrates the conservative form

    d rho/dtau = -d/dx ((f + u) rho) + 0.5*sigma2*rho_xx

with first-order upwind advective fluxes on face-averaged velocities
(a centered variant exists for smooth diffusion-dominated runs) and an
implicit diffusion solve. The flux form conserves mass discretely; each
step additionally floors tiny negatives to zero and rescales to unit
mass, and both magnitudes are tracked so tests can assert they stay at
round-off levels. Pre-floor negativity beyond tolerance means the step
size broke the advective CFL bound and raises NegativeDensity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import Diverged, NegativeDensity
from .grid import Field, Grid, SpaceTimeField, integrate
from .stepping import CyclicDiffusionFactor

DEFAULT_MAGNITUDE_CAP = 1e6
DEFAULT_NEGATIVITY_TOL = 1e-6

FLUX_SCHEMES = ("upwind", "centered")


@dataclass(frozen=True)
class FpStats:
    """Per-solve maxima of the floored negativity and mass rescale."""

    max_negativity: float
    max_mass_drift: float


@dataclass(frozen=True)
class FpProblem:
    """One forward solve: horizon, physics, input trajectory, initial density.

    The initial density is renormalized to unit mass at construction;
    negative entries are rejected.
    """

    grid: Grid
    horizon: float
    num_steps: int
    sigma2: float
    input_traj: SpaceTimeField
    rho0: Field
    drift: Field | None = None
    flux_scheme: str = "upwind"
    magnitude_cap: float = DEFAULT_MAGNITUDE_CAP
    negativity_tol: float = DEFAULT_NEGATIVITY_TOL

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.num_steps < 1:
            raise ValueError(f"num_steps must be >= 1, got {self.num_steps}")
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")
        if self.flux_scheme not in FLUX_SCHEMES:
            raise ValueError(f"flux_scheme must be one of {FLUX_SCHEMES}")
        if self.input_traj.grid != self.grid:
            raise ValueError("input_traj grid does not match problem grid")
        if self.input_traj.values.shape[0] != self.num_steps + 1:
            raise ValueError(
                f"input_traj must have num_steps+1 = {self.num_steps + 1} rows, "
                f"got {self.input_traj.values.shape[0]}"
            )
        if self.rho0.grid != self.grid:
            raise ValueError("rho0 grid does not match problem grid")
        if self.drift is not None and self.drift.grid != self.grid:
            raise ValueError("drift grid does not match problem grid")
        vals = self.rho0.values
        if vals.min() < 0.0:
            raise ValueError("rho0 must be nonnegative")
        total = vals.sum() * self.grid.dx
        if not total > 0.0:
            raise ValueError("rho0 must have positive mass")
        if abs(total - 1.0) > 1e-10:
            object.__setattr__(self, "rho0", Field(self.grid, vals / total))

    @property
    def dt(self) -> float:
        return self.horizon / self.num_steps


def solve_fp_values(p: FpProblem, u_values: np.ndarray) -> tuple[np.ndarray, FpStats]:
    """Array-level forward sweep under the (S+1, M) input rows u_values."""
    S, M = p.num_steps, p.grid.num_cells
    R = np.empty((S + 1, M))
    R[0] = p.rho0.values
    factor = CyclicDiffusionFactor(p.grid, 0.5 * p.sigma2, p.dt)
    has_drift = p.drift is not None
    fvals = p.drift.values if has_drift else np.zeros(M)
    code, step, max_neg, max_drift = kernels.fp_sweep(
        R, u_values, fvals, has_drift, p.dt, p.grid.dx, p.magnitude_cap,
        p.negativity_tol, p.flux_scheme == "upwind", *factor.kernel_args()
    )
    if code == kernels.NEGATIVE_DENSITY:
        raise NegativeDensity(
            f"density went below -{p.negativity_tol:g} before flooring at step "
            f"{step} (advective CFL violation)", step=step, magnitude=max_neg)
    if code == kernels.CAP_EXCEEDED:
        raise Diverged(
            f"density sweep exceeded magnitude cap {p.magnitude_cap:g} at step {step}",
            step=step)
    return R, FpStats(max_neg, max_drift)


def solve_fp(p: FpProblem, return_stats: bool = False):
    """Density over the horizon; row 0 equals rho0, every row unit mass."""
    R, stats = solve_fp_values(p, p.input_traj.values)
    out = SpaceTimeField(p.grid, p.dt, R)
    if return_stats:
        return out, stats
    return out


def mass(rho: Field) -> float:
    """Total mass of a density field (midpoint quadrature)."""
    return integrate(rho)
