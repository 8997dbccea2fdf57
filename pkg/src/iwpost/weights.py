"""Numerically stable log-importance-weight arithmetic.

All reductions shift by the maximum before exponentiating, so any
constant offset in the inputs passes through without overflow. ``-inf``
entries are legal (zero weight); an all ``-inf`` input has no mass left
and is an error where noted.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .errors import NumericError
from .model import GaussianProposal, TargetModel, proposal_log_density, target_log_density

__all__ = ["log_weight", "log_mean_exp", "normalize_weights"]


def log_weight(t: TargetModel, q: GaussianProposal, z) -> float | np.ndarray:
    """Log importance weight ``log p(z) - log q(z)`` at ``z`` (nats).

    Accepts a single point ``(dim,)`` or a batch ``(..., dim)``. A
    ``-inf`` result (point outside the target's support) is legal.

    Raises:
        NumericError: Indeterminate ``-inf - (-inf)`` ratio.
    """
    lp = np.asarray(target_log_density(t, z), dtype=float)
    lq = np.asarray(proposal_log_density(q, z), dtype=float)
    with np.errstate(invalid="ignore"):
        lw = lp - lq
    if np.isnan(lw).any():
        raise NumericError("importance weight 0/0: target and proposal both vanish")
    return float(lw) if lw.ndim == 0 else lw


def log_mean_exp(values) -> float:
    """``log(mean(exp(values)))`` via the max-shift trick.

    Returns ``-inf`` iff every input is ``-inf``.

    Raises:
        ValueError: Empty input.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValueError(f"expected a 1-D list of log values, got shape {values.shape}")
    if values.size == 0:
        raise ValueError("log_mean_exp of an empty list")
    return float(logsumexp(values) - math.log(values.size))


def normalize_weights(log_w) -> np.ndarray:
    """Self-normalized weights ``exp(log_w) / sum(exp(log_w))``.

    Computed as a max-shifted softmax; the output is nonnegative and
    sums to 1 within 1e-12, and is invariant to adding a constant to
    all inputs.

    Raises:
        NumericError: All entries are ``-inf`` (no mass to normalize).
    """
    log_w = np.asarray(log_w, dtype=float)
    if log_w.ndim != 1 or log_w.size == 0:
        raise ValueError(f"expected a non-empty 1-D list, got shape {log_w.shape}")
    shift = log_w.max()
    if shift == -np.inf:
        raise NumericError("cannot normalize weights: all are zero")
    w = np.exp(log_w - shift)
    return w / w.sum()
