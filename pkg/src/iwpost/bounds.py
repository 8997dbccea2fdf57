"""Monte Carlo and quadrature estimators of the variational bounds.

Four lower bounds on the log normalizer are covered: the single-sample
bound under the base proposal, the k-sample importance-weighted bound,
the single-sample bound under a fixed reweighted proposal (integrated
by quadrature, batch by batch), and the single-sample bound under the
expected-weight density (also by quadrature, since a plug-in Monte
Carlo estimate of its log density would be biased).

Replicates are generated per fixed-size chunk from spawned substreams
and reduced in chunk order, so estimates are reproducible for a given
seed and replicate count no matter how many workers run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DiagnosticError, NumericError
from .fields import DensityField, Grid
from .implicit import plot_qew_grid, qiw_log_density_given_batch_sum
from .model import (
    GaussianProposal,
    TargetModel,
    proposal_log_density,
    proposal_sample,
    target_log_density,
)
from .oracle import quadrature
from .parallel import chunk_sizes, parallel_map
from .rng import RngStream, substreams
from .weights import log_weight

__all__ = [
    "BoundEstimate",
    "BOUND_KINDS",
    "vae_elbo_mc",
    "iwae_elbo_mc",
    "vae_bound_of_qiw_quadrature",
    "expected_qiw_vae_bound",
    "vae_elbo_qew_quadrature",
]

BOUND_KINDS = ("vae", "iwae", "vae_qiw_expected", "vae_qew")

_CHUNK = 4096  # replicates per substream; fixed for reproducibility


@dataclass(frozen=True)
class BoundEstimate:
    """A bound value with its Monte Carlo uncertainty.

    Attributes:
        value: Estimate in nats.
        std_error: Standard error over replicates (0 for constant
            replicates).
        n_samples: Number of replicates the estimate averaged.
        kind: Which bound this is; one of ``BOUND_KINDS``.
    """

    value: float
    std_error: float
    n_samples: int
    kind: str

    def __post_init__(self):
        if self.kind not in BOUND_KINDS:
            raise ValueError(f"unknown bound kind '{self.kind}'")
        if not self.std_error >= 0.0:
            raise ValueError(f"std_error must be >= 0, got {self.std_error}")


def _mean_and_se(values: np.ndarray) -> tuple[float, float]:
    se = float(values.std(ddof=1) / math.sqrt(values.size))
    return float(values.mean()), se


def _iwae_replicates(
    t: TargetModel, q: GaussianProposal, k: int, n_batches: int, rng: RngStream
) -> np.ndarray:
    """Per-batch k-sample bound values, shape ``(n_batches,)``."""
    sizes = chunk_sizes(n_batches, _CHUNK)
    streams = substreams(rng, len(sizes))

    def replicate(args) -> np.ndarray:
        size, stream = args
        points = proposal_sample(q, stream, (size, k))  # (size, k, dim)
        lw = np.atleast_2d(log_weight(t, q, points))
        values = logsumexp(lw, axis=1) - math.log(k)
        if np.isneginf(values).any():
            raise NumericError(
                "a replicate batch had zero weight everywhere; the proposal "
                "misses the target's support"
            )
        return values

    parts = parallel_map(replicate, zip(sizes, streams))
    return np.concatenate(parts)


def vae_elbo_mc(
    t: TargetModel, q: GaussianProposal, n: int, rng: RngStream
) -> BoundEstimate:
    """Single-sample bound: mean log importance weight over ``n`` draws.

    Exact with zero standard error when the weight is constant (the
    proposal already matches the normalized target).
    """
    if n < 2:
        raise ValueError(f"need n >= 2 draws, got {n}")
    values = _iwae_replicates(t, q, 1, n, rng)
    mean, se = _mean_and_se(values)
    return BoundEstimate(value=mean, std_error=se, n_samples=n, kind="vae")


def iwae_elbo_mc(
    t: TargetModel, q: GaussianProposal, k: int, n_batches: int, rng: RngStream
) -> BoundEstimate:
    """k-sample bound: mean over batches of the log average weight.

    At ``k == 1`` this consumes the stream exactly as ``vae_elbo_mc``
    and produces the identical estimate.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n_batches < 2:
        raise ValueError(f"need n_batches >= 2, got {n_batches}")
    values = _iwae_replicates(t, q, k, n_batches, rng)
    mean, se = _mean_and_se(values)
    return BoundEstimate(value=mean, std_error=se, n_samples=n_batches, kind="iwae")


def _qiw_bound_values(
    log_p_cells: np.ndarray,
    log_q_cells: np.ndarray,
    log_batch_sums: np.ndarray,
    k: int,
    cell_volume: float,
) -> np.ndarray:
    """Quadrature bound under the reweighted proposal, one value per batch.

    The integrand is ``qiw * log(p / qiw)`` with the ``0 * log 0 == 0``
    convention; note the reweighted proposal is unnormalized, so this is
    an integral against an unnormalized measure by design.
    """
    log_qiw = qiw_log_density_given_batch_sum(
        log_p_cells[None, :], log_q_cells[None, :], log_batch_sums[:, None], k
    )
    qiw = np.exp(log_qiw)
    with np.errstate(invalid="ignore"):
        integrand = np.where(qiw > 0.0, qiw * (log_p_cells[None, :] - log_qiw), 0.0)
    return integrand.sum(axis=1) * cell_volume


def vae_bound_of_qiw_quadrature(
    t: TargetModel, q: GaussianProposal, z_rest, grid: Grid
) -> float:
    """Quadrature of the single-sample bound under one reweighted proposal.

    Args:
        t: Target.
        q: Base proposal.
        z_rest: The ``k - 1`` conditioning points (possibly empty, in
            which case this is the plain quadrature bound under ``q``).
        grid: Quadrature grid covering both densities' support.

    Returns:
        The bound in nats (``-inf`` if the conditioning leaves mass
        where the target has none, which happens only for ``k == 1``
        with a partial-support target).
    """
    z_rest = np.asarray(z_rest, dtype=float).reshape(-1, t.dim)
    if grid.dim != t.dim or grid.dim != q.dim:
        raise ValueError(f"grid dim {grid.dim} does not match model dims")
    k = len(z_rest) + 1
    cells = grid.cells()
    log_p_cells = np.atleast_1d(target_log_density(t, cells))
    log_q_cells = np.atleast_1d(proposal_log_density(q, cells))
    if k == 1:
        log_batch_sums = np.array([-np.inf])
    else:
        log_batch_sums = np.array([logsumexp(np.atleast_1d(log_weight(t, q, z_rest)))])
    values = _qiw_bound_values(
        log_p_cells, log_q_cells, log_batch_sums, k, grid.cell_volume
    )
    return float(values[0])


def expected_qiw_vae_bound(
    t: TargetModel,
    q: GaussianProposal,
    k: int,
    n_batches: int,
    grid: Grid,
    rng: RngStream,
) -> BoundEstimate:
    """Average the reweighted-proposal quadrature bound over fresh batches.

    The mean converges to the k-sample Monte Carlo bound; the standard
    error is over batches.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n_batches < 2:
        raise ValueError(f"need n_batches >= 2, got {n_batches}")
    cells = grid.cells()
    log_p_cells = np.atleast_1d(target_log_density(t, cells))
    log_q_cells = np.atleast_1d(proposal_log_density(q, cells))
    if k == 1:
        values = np.zeros(n_batches)
        values[:] = _qiw_bound_values(
            log_p_cells, log_q_cells, np.array([-np.inf]), 1, grid.cell_volume
        )[0]
    else:
        # one quadrature pass per batch is the expensive part; keep the
        # per-chunk cell matrices small enough to stay in cache
        sizes = chunk_sizes(n_batches, 64)
        streams = substreams(rng, len(sizes))

        def batch_values(args) -> np.ndarray:
            size, stream = args
            points = proposal_sample(q, stream, (size, k - 1))
            lw = np.atleast_2d(log_weight(t, q, points))
            return _qiw_bound_values(
                log_p_cells, log_q_cells, logsumexp(lw, axis=1), k, grid.cell_volume
            )

        values = np.concatenate(parallel_map(batch_values, zip(sizes, streams)))
    mean, se = _mean_and_se(values)
    return BoundEstimate(
        value=mean, std_error=se, n_samples=n_batches, kind="vae_qiw_expected"
    )


def vae_elbo_qew_quadrature(
    t: TargetModel,
    q: GaussianProposal,
    k: int,
    S: int,
    grid: Grid,
    rng: RngStream,
) -> float:
    """Quadrature of the single-sample bound under the expected-weight density.

    Renders the density on the grid with ``S`` outer iterations, then
    integrates ``field * (log p - log field)`` over cells carrying mass.

    Raises:
        DiagnosticError: The rendered field's mass is off 1 by more than
            0.05 (grid too small or ``S`` too low to integrate against).
    """
    if S < 50:
        raise ValueError(f"need S >= 50 for a usable field, got {S}")
    field = plot_qew_grid(t, q, k, S, grid, rng)
    mass = quadrature(field)
    if abs(mass - 1.0) > 0.05:
        raise DiagnosticError(
            f"expected-weight field integrates to {mass:.4f}; grid or S too small"
        )
    cells = grid.cells()
    log_p_cells = np.atleast_1d(target_log_density(t, cells))
    values = field.values
    support = values > 1e-300
    with np.errstate(divide="ignore"):
        terms = values[support] * (log_p_cells[support] - np.log(values[support]))
    return float(terms.sum() * grid.cell_volume)
