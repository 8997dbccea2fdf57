"""Rectangular evaluation grids and per-cell density fields.

A grid places ``points_per_dim[d]`` evenly spaced locations between
``lo[d]`` and ``hi[d]`` (endpoints included). Each location is the
midpoint of a cell whose volume is the product of the spacings, so a
field paired with its grid integrates by a plain weighted sum.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .ioutil import atomic_write_text

__all__ = [
    "Grid",
    "DensityField",
    "default_grid",
    "field_csv_text",
    "write_field_csv",
    "field_pgm_text",
    "write_field_pgm",
]

DEFAULT_RANGE = (-6.0, 6.0)
DEFAULT_POINTS = 161  # spacing 0.075 over [-6, 6]


@dataclass(frozen=True)
class Grid:
    """Evaluation lattice over latent space.

    Attributes:
        lo: Per-dimension lower endpoint of the located points.
        hi: Per-dimension upper endpoint.
        points_per_dim: Number of locations per dimension (>= 2).
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    points_per_dim: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        pts = tuple(int(v) for v in np.atleast_1d(self.points_per_dim))
        if not (len(lo) == len(hi) == len(pts)) or len(lo) == 0:
            raise ValueError("lo, hi and points_per_dim must have equal nonzero length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"need lo < hi per dimension, got lo={lo}, hi={hi}")
        if any(n < 2 for n in pts):
            raise ValueError(f"need at least 2 points per dimension, got {pts}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "points_per_dim", pts)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def spacings(self) -> np.ndarray:
        return np.array(
            [(b - a) / (n - 1) for a, b, n in zip(self.lo, self.hi, self.points_per_dim)]
        )

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.points_per_dim))

    def axes(self) -> list[np.ndarray]:
        return [
            np.linspace(a, b, n)
            for a, b, n in zip(self.lo, self.hi, self.points_per_dim)
        ]

    def cells(self) -> np.ndarray:
        """All cell centers, shape ``(n_cells, dim)``.

        Row order is C order over the per-dimension indices (the last
        dimension varies fastest); every consumer relies on this order.
        """
        return _cells_cached(self)

    def cell_edges(self) -> list[np.ndarray]:
        """Per-dimension bin edges of the cells (length ``n + 1`` each)."""
        edges = []
        for axis, h in zip(self.axes(), self.spacings):
            edges.append(np.concatenate([[axis[0] - h / 2.0], axis + h / 2.0]))
        return edges


@functools.lru_cache(maxsize=16)
def _cells_cached(grid: Grid) -> np.ndarray:
    mesh = np.meshgrid(*grid.axes(), indexing="ij")
    cells = np.stack([m.ravel() for m in mesh], axis=-1)
    cells.setflags(write=False)
    return cells


def default_grid(dim: int, lo: float = None, hi: float = None, points: int = None) -> Grid:
    """The standard grid: [-6, 6] with 161 points in every dimension."""
    lo = DEFAULT_RANGE[0] if lo is None else float(lo)
    hi = DEFAULT_RANGE[1] if hi is None else float(hi)
    points = DEFAULT_POINTS if points is None else int(points)
    return Grid(lo=(lo,) * dim, hi=(hi,) * dim, points_per_dim=(points,) * dim)


@dataclass(frozen=True, eq=False)
class DensityField:
    """Nonnegative values over a grid, one per cell.

    Attributes:
        grid: The lattice the values live on.
        values: Flat array of length ``grid.n_cells`` in cell order.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel().copy()
        if values.shape[0] != self.grid.n_cells:
            raise ValueError(
                f"field has {values.shape[0]} values for {self.grid.n_cells} cells"
            )
        if np.isnan(values).any():
            raise ValueError("field values contain NaN")
        if not np.isfinite(values).all():
            raise ValueError("field values must be finite")
        if (values < 0).any():
            raise ValueError("field values must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def reshaped(self) -> np.ndarray:
        """Values as an array of shape ``points_per_dim``."""
        return self.values.reshape(self.grid.points_per_dim)


_AXIS_NAMES = ("x", "y", "z")


def field_csv_text(field: DensityField) -> str:
    """CSV with one row per cell: coordinates then value."""
    grid = field.grid
    if grid.dim > len(_AXIS_NAMES):
        raise ValueError(f"CSV output supports up to {len(_AXIS_NAMES)} dimensions")
    header = ",".join(_AXIS_NAMES[: grid.dim]) + ",value"
    lines = [header]
    for point, value in zip(grid.cells(), field.values):
        coords = ",".join(repr(float(c)) for c in point)
        lines.append(f"{coords},{value!r}")
    return "\n".join(lines) + "\n"


def write_field_csv(field: DensityField, path) -> None:
    atomic_write_text(path, field_csv_text(field))


def field_pgm_text(field: DensityField) -> str:
    """ASCII PGM (P2, maxval 255) with values scaled by the field maximum.

    Only 1-D and 2-D fields render; rows run from high to low second
    coordinate so the image reads like a conventional plot.
    """
    grid = field.grid
    if grid.dim > 2:
        raise ValueError("PGM output requires a 1-D or 2-D field")
    peak = field.values.max()
    scaled = np.zeros_like(field.values, dtype=int)
    if peak > 0:
        scaled = np.rint(field.values / peak * 255).astype(int)
    if grid.dim == 1:
        image = scaled[None, :]
    else:
        # values[ix, iy] -> image row per descending y, columns ascending x
        image = scaled.reshape(grid.points_per_dim).T[::-1, :]
    height, width = image.shape
    lines = ["P2", f"{width} {height}", "255"]
    for row in image:
        tokens = [str(v) for v in row]
        # keep PGM lines under the format's 70-character limit
        current = ""
        for token in tokens:
            if current and len(current) + 1 + len(token) > 70:
                lines.append(current)
                current = token
            else:
                current = f"{current} {token}" if current else token
        if current:
            lines.append(current)
    return "\n".join(lines) + "\n"


def write_field_pgm(field: DensityField, path) -> None:
    atomic_write_text(path, field_pgm_text(field))
