"""The implicit distributions induced by importance reweighting.

Reweighting a Gaussian proposal ``q`` toward an unnormalized target
``p`` with a batch of ``k - 1`` auxiliary proposal draws defines an
unnormalized density

    qiw(z) = p(z) / ((1/k) * (p(z)/q(z) + sum of the batch's weights))

that interpolates between ``q`` (k = 1, where it is exactly ``q``) and
the normalized target (k large). Averaging qiw over auxiliary batches
gives the expected-weight density ``qew``, which is properly normalized
and is exactly the distribution produced by sampling-importance-
resampling with ``k`` proposals.

Everything here evaluates in log space with max-shifted reductions and
exponentiates once at the end, so sharply peaked targets do not
overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import NumericError
from .fields import DensityField, Grid
from .model import (
    GaussianProposal,
    TargetModel,
    proposal_log_density,
    proposal_sample,
    target_log_density,
)
from .parallel import chunk_sizes, parallel_map
from .rng import RngStream
from .weights import log_weight, normalize_weights

__all__ = [
    "QiwContext",
    "qiw_log_density_given_batch_sum",
    "qiw_unnorm_density",
    "qew_density_mc",
    "sir_sample",
    "plot_qew_grid",
]

# Outer iterations are accumulated in runs of this many at a time; the
# constant is fixed so grid renders are reproducible across any worker
# count (partial sums combine in run order).
_RENDER_CHUNK = 32


@dataclass(frozen=True, eq=False)
class QiwContext:
    """A reweighted-proposal density conditioned on one auxiliary batch.

    Attributes:
        target: Unnormalized target density.
        proposal: The base Gaussian.
        k: Total number of importance samples (the evaluation point
            itself counts as one, the batch supplies the other k - 1).
        rest_log_w: Log weights of the k - 1 conditioning draws; entries
            may be ``-inf`` but not NaN.
    """

    target: TargetModel
    proposal: GaussianProposal
    k: int
    rest_log_w: np.ndarray

    def __post_init__(self):
        rest = np.atleast_1d(np.asarray(self.rest_log_w, dtype=float)).copy()
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if rest.shape != (self.k - 1,):
            raise ValueError(
                f"need exactly k-1={self.k - 1} conditioning weights, got {rest.shape}"
            )
        if np.isnan(rest).any():
            raise ValueError("conditioning log weights contain NaN")
        if self.target.dim != self.proposal.dim:
            raise ValueError("target and proposal dimensions differ")
        rest.setflags(write=False)
        object.__setattr__(self, "rest_log_w", rest)

    @classmethod
    def from_batch(
        cls, target: TargetModel, proposal: GaussianProposal, points
    ) -> "QiwContext":
        """Build a context from the conditioning points themselves."""
        points = np.asarray(points, dtype=float).reshape(-1, target.dim)
        rest = np.atleast_1d(log_weight(target, proposal, points)) if len(points) else np.empty(0)
        return cls(target=target, proposal=proposal, k=len(points) + 1, rest_log_w=rest)


def qiw_log_density_given_batch_sum(log_p, log_q, log_batch_sum, k: int):
    """Log reweighted-proposal density from precomputed ingredients.

    Args:
        log_p: Target log density at the evaluation points.
        log_q: Proposal log density at the same points.
        log_batch_sum: Log of the summed weights of the conditioning
            batch (``-inf`` for an empty or zero-weight batch). Arrays
            broadcast against ``log_p``.
        k: Total number of importance samples.

    Returns:
        Log densities; ``-inf`` wherever the target vanishes. For
        ``k == 1`` this is exactly ``log_q``.
    """
    log_p = np.asarray(log_p, dtype=float)
    log_q = np.asarray(log_q, dtype=float)
    if k == 1:
        return np.broadcast_to(log_q, np.broadcast_shapes(log_p.shape, log_q.shape)).copy()
    with np.errstate(invalid="ignore"):
        log_den = np.logaddexp(log_p - log_q, log_batch_sum) - math.log(k)
        out = log_p - log_den
    # target == 0 with a zero-weight batch leaves -inf - -inf; the
    # density there is zero, not indeterminate
    return np.where(np.isnan(out), -np.inf, out)


def qiw_unnorm_density(ctx: QiwContext, z) -> float | np.ndarray:
    """Unnormalized reweighted-proposal density at ``z``.

    Accepts a single point ``(dim,)`` or a batch ``(..., dim)``; returns
    0 wherever the target density is 0.
    """
    log_p = np.asarray(target_log_density(ctx.target, z), dtype=float)
    log_q = np.asarray(proposal_log_density(ctx.proposal, z), dtype=float)
    log_batch_sum = logsumexp(ctx.rest_log_w) if ctx.k > 1 else -np.inf
    out = np.exp(qiw_log_density_given_batch_sum(log_p, log_q, log_batch_sum, ctx.k))
    return float(out) if out.ndim == 0 else out


def qew_density_mc(
    t: TargetModel,
    q: GaussianProposal,
    z,
    k: int,
    S: int,
    rng: RngStream,
) -> float:
    """Monte Carlo estimate of the expected-weight density at one point.

    Averages the reweighted-proposal density at ``z`` over ``S``
    independently drawn conditioning batches. For ``k == 1`` the value
    is exactly the proposal density and no batches are drawn.
    """
    if k < 1 or S < 1:
        raise ValueError(f"need k >= 1 and S >= 1, got k={k}, S={S}")
    log_q = proposal_log_density(q, z)
    if k == 1:
        return float(np.exp(log_q))
    log_p = target_log_density(t, z)
    batches = proposal_sample(q, rng, (S, k - 1))  # (S, k-1, dim)
    rest_log_w = np.atleast_2d(log_weight(t, q, batches))
    log_batch_sum = logsumexp(rest_log_w, axis=1)  # (S,)
    values = np.exp(
        qiw_log_density_given_batch_sum(np.full(S, log_p), log_q, log_batch_sum, k)
    )
    return float(values.mean())


def sir_sample(t: TargetModel, q: GaussianProposal, k: int, rng: RngStream) -> np.ndarray:
    """One sampling-importance-resampling draw.

    Draws ``k`` proposals, self-normalizes their importance weights and
    resamples a single point from the resulting categorical via inverse
    CDF over the draw order with one uniform (the first index whose
    cumulative weight reaches the uniform wins).

    Raises:
        NumericError: Every proposal draw has zero weight.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    points = proposal_sample(q, rng, k)  # (k, dim)
    log_w = np.atleast_1d(log_weight(t, q, points))
    probs = normalize_weights(log_w)
    u = rng.uniform()
    j = int(np.searchsorted(np.cumsum(probs), u, side="left"))
    return points[min(j, k - 1)]


def plot_qew_grid(
    t: TargetModel,
    q: GaussianProposal,
    k: int,
    S: int,
    grid: Grid,
    rng: RngStream,
) -> DensityField:
    """Render the expected-weight density on a grid.

    For each of ``S`` outer iterations one conditioning batch is drawn
    and its summed weight is shared by every grid location; per-location
    reweighted densities accumulate over iterations and the accumulator
    is divided by ``S``. For ``k == 1`` the result is the proposal
    density field and no batches are drawn.

    Args:
        t: Target (dimension must match the grid).
        q: Base proposal.
        k: Importance samples per evaluation.
        S: Outer iterations averaged into the field.
        grid: Locations to evaluate.
        rng: Stream for the ``S * (k - 1)`` conditioning draws.

    Returns:
        DensityField over ``grid``.
    """
    if k < 1 or S < 1:
        raise ValueError(f"need k >= 1 and S >= 1, got k={k}, S={S}")
    if grid.dim != t.dim or grid.dim != q.dim:
        raise ValueError(
            f"grid dim {grid.dim} does not match model dims {t.dim}/{q.dim}"
        )
    cells = grid.cells()
    log_q_cells = np.atleast_1d(proposal_log_density(q, cells))
    if k == 1:
        return DensityField(grid=grid, values=np.exp(log_q_cells))

    log_p_cells = np.atleast_1d(target_log_density(t, cells))
    batches = proposal_sample(q, rng, (S, k - 1))  # (S, k-1, dim)
    rest_log_w = np.atleast_2d(log_weight(t, q, batches))
    log_batch_sums = logsumexp(rest_log_w, axis=1)  # (S,)

    bounds = np.cumsum([0] + chunk_sizes(S, _RENDER_CHUNK))

    def accumulate(run) -> np.ndarray:
        start, stop = run
        log_vals = qiw_log_density_given_batch_sum(
            log_p_cells[None, :],
            log_q_cells[None, :],
            log_batch_sums[start:stop, None],
            k,
        )
        return np.exp(log_vals).sum(axis=0)

    partials = parallel_map(accumulate, zip(bounds[:-1], bounds[1:]))
    acc = np.zeros(grid.n_cells)
    for partial in partials:
        acc += partial
    return DensityField(grid=grid, values=acc / S)
