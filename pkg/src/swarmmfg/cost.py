"""Coverage cost model: control energy plus a log-density congestion coupling.

The congestion term is (1/horizon_scale) * ln(rho), so shrinking the
prediction horizon amplifies the coupling; that scaling is what ties the
receding-horizon controller to its myopic limit. The log is floored at a
tiny density so it stays total; the floor sits far below any density the
dynamics can reach and only guards against -inf.

The coupling enum is the extension point for other congestion laws; only
the log-density form ships for now.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .grid import Field


class Coupling(enum.Enum):
    LOG_DENSITY = "log_density"


DEFAULT_DENSITY_FLOOR = 1e-8


@dataclass(frozen=True)
class CostModel:
    """Parameters of the running cost 0.5 u^2 + (1/horizon_scale) ln(rho)."""

    horizon_scale: float
    coupling: Coupling = Coupling.LOG_DENSITY
    density_floor: float = DEFAULT_DENSITY_FLOOR

    def __post_init__(self) -> None:
        if not self.horizon_scale > 0:
            raise ValueError(f"horizon_scale must be positive, got {self.horizon_scale}")
        if not (0 < self.density_floor <= 1e-4):
            raise ValueError(
                f"density_floor must be in (0, 1e-4], got {self.density_floor}"
            )
        if not isinstance(self.coupling, Coupling):
            raise ValueError(f"unknown coupling {self.coupling!r}")


def coupling_cost_values(model: CostModel, rho_values: np.ndarray) -> np.ndarray:
    """(1/horizon_scale) * ln(max(rho, floor)), elementwise on rows or stacks."""
    return (1.0 / model.horizon_scale) * np.log(
        np.maximum(rho_values, model.density_floor)
    )


def coupling_cost(model: CostModel, rho: Field) -> Field:
    return Field(rho.grid, coupling_cost_values(model, rho.values))


def running_cost(model: CostModel, u: Field, rho: Field) -> Field:
    """Pointwise 0.5 u^2 + coupling_cost."""
    if u.grid != rho.grid:
        raise ValueError("u and rho must share a grid")
    return Field(u.grid, 0.5 * u.values ** 2 + coupling_cost_values(model, rho.values))
