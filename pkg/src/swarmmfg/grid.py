"""Periodic 1D grid, sampled fields, and the discrete operators on them.

The domain is the unit interval with periodic boundaries. Fields are
cell-centered samples; gradients and Laplacians are the standard 2nd-order
central stencils with modular (wrap-around) indexing, and integration is
midpoint quadrature. Everything downstream (PDE steppers, metrics,
controllers) is built on these types.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered mesh on the periodic unit interval.

    ``dx`` is always derived from ``num_cells`` (never stored separately),
    so dx * num_cells reproduces the unit domain length by construction.
    """

    num_cells: int

    def __post_init__(self) -> None:
        if not isinstance(self.num_cells, (int, np.integer)):
            raise ValueError("num_cells must be an integer")
        if self.num_cells < 8:
            raise ValueError(f"num_cells must be >= 8, got {self.num_cells}")

    @property
    def dx(self) -> float:
        return 1.0 / self.num_cells

    @property
    def domain_length(self) -> float:
        return 1.0

    @property
    def periodic(self) -> bool:
        return True

    @property
    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.num_cells) + 0.5) * self.dx


def _freeze(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Field:
    """Real-valued function sampled at the cell centers of a grid.

    Values are validated (finite, correct length) and stored read-only;
    all operators return new Fields.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError(f"Field values must be 1D, got shape {vals.shape}")
        if vals.shape[0] != self.grid.num_cells:
            raise ValueError(
                f"Field length {vals.shape[0]} does not match grid with {self.grid.num_cells} cells"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("Field values must be finite (no NaN/Inf)")
        object.__setattr__(self, "values", _freeze(vals))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.num_cells, float(value)))

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "Field":
        return cls(grid, np.asarray(fn(grid.cell_centers), dtype=float))


@dataclass(frozen=True)
class SpaceTimeField:
    """A field trajectory: row k holds the samples at the k-th time of its window.

    Row 0 is the earliest time, the last row the latest; the uniform step
    between rows is ``dt``.
    """

    grid: Grid
    dt: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError(f"SpaceTimeField values must be 2D, got shape {vals.shape}")
        if vals.shape[1] != self.grid.num_cells:
            raise ValueError(
                f"row length {vals.shape[1]} does not match grid with {self.grid.num_cells} cells"
            )
        if vals.shape[0] < 1:
            raise ValueError("SpaceTimeField needs at least one row")
        if not np.all(np.isfinite(vals)):
            raise ValueError("SpaceTimeField values must be finite")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def num_steps(self) -> int:
        return self.values.shape[0] - 1

    def row(self, k: int) -> Field:
        return Field(self.grid, self.values[k])

    @classmethod
    def constant_in_time(cls, f: Field, dt: float, num_steps: int) -> "SpaceTimeField":
        return cls(f.grid, dt, np.tile(f.values, (num_steps + 1, 1)))


# ---------------------------------------------------------------------------
# discrete operators (array-level cores + Field wrappers)
# ---------------------------------------------------------------------------

def gradient_values(values: np.ndarray, dx: float) -> np.ndarray:
    """Central-difference periodic gradient; works on 1D rows or 2D stacks."""
    return (np.roll(values, -1, axis=-1) - np.roll(values, 1, axis=-1)) / (2.0 * dx)


def laplacian_values(values: np.ndarray, dx: float) -> np.ndarray:
    return (
        np.roll(values, -1, axis=-1) - 2.0 * values + np.roll(values, 1, axis=-1)
    ) / (dx * dx)


def gradient(f: Field) -> Field:
    """out[i] = (f[i+1] - f[i-1]) / (2 dx) with periodic indexing."""
    return Field(f.grid, gradient_values(f.values, f.grid.dx))


def laplacian(f: Field) -> Field:
    """out[i] = (f[i+1] - 2 f[i] + f[i-1]) / dx^2 with periodic indexing."""
    return Field(f.grid, laplacian_values(f.values, f.grid.dx))


def integrate(f: Field) -> float:
    """Midpoint quadrature over the unit domain."""
    return float(f.values.sum() * f.grid.dx)


def norms(f: Field) -> tuple[float, float]:
    """Return (L2, Linf) of the sampled field, L2 with dx weighting."""
    l2 = float(np.sqrt((f.values ** 2).sum() * f.grid.dx))
    linf = float(np.abs(f.values).max())
    return l2, linf


# ---------------------------------------------------------------------------
# CSV serialization: header row of x-coordinates, one row per time sample
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def _header(grid: Grid) -> str:
    return ",".join(_FMT % x for x in grid.cell_centers)


def field_to_csv(f: Field, path) -> None:
    np.savetxt(path, f.values[None, :], fmt=_FMT, delimiter=",",
               header=_header(f.grid), comments="")


def spacetime_to_csv(stf: SpaceTimeField, path) -> None:
    np.savetxt(path, stf.values, fmt=_FMT, delimiter=",",
               header=_header(stf.grid), comments="")


def spacetime_from_csv(path, dt: float) -> SpaceTimeField:
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = Grid(raw.shape[1])
    return SpaceTimeField(grid, dt, raw)


def field_from_csv(path) -> Field:
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = Grid(raw.shape[1])
    return Field(grid, raw[0])
