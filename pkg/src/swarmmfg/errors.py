"""Exception types shared across the solver suite."""

from __future__ import annotations


class SwarmMfgError(Exception):
    """Base class for all solver-suite errors."""


class Diverged(SwarmMfgError):
    """A time stepper produced values beyond its magnitude cap or broke its CFL bound.

    Carries the index of the offending step so sweeps can report where a
    run went unstable.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class NegativeDensity(SwarmMfgError):
    """Pre-floor density negativity exceeded tolerance (signals a CFL violation)."""

    def __init__(self, message: str, step: int | None = None, magnitude: float = 0.0):
        super().__init__(message)
        self.step = step
        self.magnitude = magnitude


class NotConverged(SwarmMfgError):
    """Fixed-point iteration hit max_iters before reaching tolerance."""

    def __init__(self, message: str, residual_history: tuple[float, ...] = ()):
        super().__init__(message)
        self.residual_history = tuple(residual_history)


class GridMismatch(SwarmMfgError):
    """Two objects that must share a grid / time grid do not."""


class ConfigInvalid(SwarmMfgError):
    """Experiment configuration failed validation.

    ``violations`` lists every problem found, not just the first.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations))
