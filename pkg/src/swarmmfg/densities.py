"""Initial density profiles and normalization helpers."""

from __future__ import annotations

import numpy as np

from .grid import Field, Grid


def normalize_density(f: Field) -> Field:
    """Rescale a nonnegative field to unit mass (midpoint quadrature)."""
    vals = f.values
    if vals.min() < 0.0:
        raise ValueError("density must be nonnegative")
    total = vals.sum() * f.grid.dx
    if not total > 0.0:
        raise ValueError("density must have positive mass")
    return Field(f.grid, vals / total)


def gaussian_density(grid: Grid, center: float = 0.5, variance: float = 0.01) -> Field:
    """Gaussian bump sampled at cell centers, renormalized to unit mass.

    The tail mass lost to truncation on the unit interval is folded back in
    by the renormalization (negligible for the default width).
    """
    if not variance > 0:
        raise ValueError("variance must be positive")
    x = grid.cell_centers
    vals = np.exp(-((x - center) ** 2) / (2.0 * variance)) / np.sqrt(2.0 * np.pi * variance)
    return normalize_density(Field(grid, vals))


def uniform_density(grid: Grid) -> Field:
    return Field.constant(grid, 1.0)
