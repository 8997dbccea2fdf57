"""Deterministic ground truth: grid quadrature, posteriors, divergences.

Everything here is a pure function of its inputs with fixed-order cell
sums, giving the reference values that Monte Carlo output is judged
against.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .errors import DiagnosticError
from .fields import DensityField, Grid
from .model import TargetModel, target_log_density

__all__ = [
    "quadrature",
    "log_marginal",
    "true_posterior_field",
    "kl_field",
    "max_abs_error",
    "field_mass",
    "sample_mass",
    "tv_distance",
]

# below this a cell is treated as carrying no mass (0 * log 0 == 0)
MASS_FLOOR = 1e-300


def quadrature(field: DensityField) -> float:
    """Midpoint-rule integral: sum of values times the cell volume."""
    return float(field.values.sum() * field.grid.cell_volume)


def log_marginal(t: TargetModel, grid: Grid) -> float:
    """Log of the target's total mass on the grid (nats).

    Cross-checked against the target's analytic normalizer when one is
    recorded.

    Raises:
        DiagnosticError: Quadrature and the analytic normalizer differ
            by more than 0.1% in mass (grid too small or too coarse).
    """
    log_p = np.atleast_1d(target_log_density(t, grid.cells()))
    value = float(logsumexp(log_p) + math.log(grid.cell_volume))
    if t.known_log_z is not None:
        rel = abs(math.expm1(value - t.known_log_z))
        if rel > 1e-3:
            raise DiagnosticError(
                f"quadrature normalizer {value:.6f} disagrees with the analytic "
                f"value {t.known_log_z:.6f} for '{t.name}' (relative mass error "
                f"{rel:.2e}); widen or refine the grid"
            )
    return value


def true_posterior_field(t: TargetModel, grid: Grid) -> DensityField:
    """Normalized target density on the grid."""
    log_p = np.atleast_1d(target_log_density(t, grid.cells()))
    return DensityField(grid=grid, values=np.exp(log_p - log_marginal(t, grid)))


def kl_field(p_field: DensityField, q_field: DensityField) -> float:
    """KL divergence of the second field from the first (nats).

    The first argument is the reference distribution, the second the
    approximating one: ``KL(q, p) = sum q * log(q / p) * volume`` over
    cells where ``q`` carries mass. Returns ``inf`` (rather than
    raising) when the approximation puts mass where the reference has
    none.

    Raises:
        ValueError: Mismatched grids, or a reference field whose total
            mass is not within 0.02 of 1.
    """
    if p_field.grid != q_field.grid:
        raise ValueError("fields live on different grids")
    mass = quadrature(p_field)
    if abs(mass - 1.0) > 0.02:
        raise ValueError(
            f"reference field integrates to {mass:.4f}, expected 1 within 0.02"
        )
    q = q_field.values
    p = p_field.values
    support = q > MASS_FLOOR
    if (p[support] <= 0.0).any():
        return math.inf
    terms = q[support] * (np.log(q[support]) - np.log(p[support]))
    return float(terms.sum() * p_field.grid.cell_volume)


def max_abs_error(a: DensityField, b: DensityField) -> float:
    """Largest per-cell absolute difference between two fields."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return float(np.abs(a.values - b.values).max())


def field_mass(field: DensityField) -> np.ndarray:
    """Per-cell probability mass (value times cell volume)."""
    return field.values * field.grid.cell_volume


def sample_mass(grid: Grid, points) -> np.ndarray:
    """Fraction of ``points`` landing in each grid cell.

    Points outside the grid count toward the total but toward no cell,
    so the result sums to at most 1.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != grid.dim:
        raise ValueError(
            f"expected points of shape (n, {grid.dim}), got {points.shape}"
        )
    counts, _ = np.histogramdd(points, bins=grid.cell_edges())
    return counts.ravel() / len(points)


def tv_distance(mass_a, mass_b) -> float:
    """Total-variation distance: half the L1 distance between masses."""
    mass_a = np.asarray(mass_a, dtype=float)
    mass_b = np.asarray(mass_b, dtype=float)
    if mass_a.shape != mass_b.shape:
        raise ValueError("mass vectors have different shapes")
    return float(0.5 * np.abs(mass_a - mass_b).sum())
