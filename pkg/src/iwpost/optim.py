"""Stochastic gradient ascent of the k-sample bound over the proposal.

Gradients are pathwise: each draw is expressed as
``z = mean + exp(log_std) * eps`` with fixed standard-normal noise, and
the chain rule is applied by hand for the diagonal-Gaussian family. Per
noise realization the derivative of the per-batch bound is the
softmax-weighted sum over the batch of

    d/d mean_d    = g_d
    d/d log_std_d = g_d * (z_d - mean_d) + 1

where ``g`` is the target's log-density gradient at ``z``; the
proposal's own location/scale terms cancel exactly against the score of
the reparameterized draw. No autodiff framework is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import CapabilityError, DivergenceError, NumericError
from .model import GaussianProposal, TargetModel, proposal_log_density
from .parallel import chunk_sizes, parallel_map
from .rng import RngStream, substreams

__all__ = [
    "IwaeGradient",
    "FitStep",
    "FitTrace",
    "reparam_sample",
    "iwae_bound_from_noise",
    "iwae_gradient_from_noise",
    "iwae_gradient",
    "fit_proposal",
]

_CHUNK = 1024  # batches per substream; fixed for reproducibility


@dataclass(frozen=True, eq=False)
class IwaeGradient:
    """Monte Carlo pathwise gradient of the k-sample bound.

    Attributes:
        value: The bound estimate at the evaluation point.
        mean: Gradient with respect to the proposal mean, ``(dim,)``.
        log_std: Gradient with respect to the log standard deviations.
        se_mean: Per-component standard error of ``mean``.
        se_log_std: Per-component standard error of ``log_std``.
        n_batches: Batches averaged.
    """

    value: float
    mean: np.ndarray
    log_std: np.ndarray
    se_mean: np.ndarray
    se_log_std: np.ndarray
    n_batches: int

    @property
    def norm(self) -> float:
        return float(math.sqrt((self.mean**2).sum() + (self.log_std**2).sum()))


@dataclass(frozen=True, eq=False)
class FitStep:
    step: int
    bound: float
    mean: np.ndarray
    log_std: np.ndarray
    grad_norm: float


@dataclass
class FitTrace:
    """Per-step optimization records."""

    steps: list = field(default_factory=list)

    def append(self, record: FitStep) -> None:
        self.steps.append(record)

    def __len__(self) -> int:
        return len(self.steps)

    def bounds(self) -> np.ndarray:
        return np.array([s.bound for s in self.steps])

    def csv_text(self) -> str:
        if not self.steps:
            return "step,bound,grad_norm\n"
        dim = self.steps[0].mean.shape[0]
        header = (
            ["step", "bound"]
            + [f"mean_{d}" for d in range(dim)]
            + [f"log_std_{d}" for d in range(dim)]
            + ["grad_norm"]
        )
        lines = [",".join(header)]
        for s in self.steps:
            row = (
                [str(s.step), repr(s.bound)]
                + [repr(float(v)) for v in s.mean]
                + [repr(float(v)) for v in s.log_std]
                + [repr(s.grad_norm)]
            )
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def reparam_sample(q: GaussianProposal, eps) -> np.ndarray:
    """Deterministic reparameterized draw ``mean + exp(log_std) * eps``.

    ``eps`` has shape ``(..., dim)``; the output is differentiable in
    the proposal parameters by construction.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.shape[-1] != q.dim:
        raise ValueError(
            f"noise must have trailing dimension {q.dim}, got shape {eps.shape}"
        )
    return q.mean + np.exp(q.log_std) * eps


def _batch_values_and_grads(t: TargetModel, q: GaussianProposal, eps: np.ndarray):
    """Per-batch bound values and parameter gradients for fixed noise.

    Args:
        eps: Noise of shape ``(n_batches, k, dim)``.

    Returns:
        values ``(n_batches,)``, mean grads ``(n_batches, dim)``,
        log_std grads ``(n_batches, dim)``.
    """
    if t.log_grad is None:
        raise CapabilityError(f"target '{t.name}' does not supply gradients")
    z = reparam_sample(q, eps)  # (n, k, dim)
    log_p = np.asarray(t.log_unnorm_density(z), dtype=float)
    if np.isnan(log_p).any():
        raise NumericError(f"target '{t.name}' produced NaN log-density")
    log_w = log_p - np.asarray(proposal_log_density(q, z), dtype=float)  # (n, k)
    k = eps.shape[1]
    values = logsumexp(log_w, axis=1) - math.log(k)
    if np.isneginf(values).any():
        raise NumericError("a batch had zero weight everywhere")
    weights = softmax(log_w, axis=1)  # (n, k)
    g = np.asarray(t.log_grad(z), dtype=float)  # (n, k, dim)
    grad_mean = (weights[..., None] * g).sum(axis=1)
    grad_log_std = (weights[..., None] * (g * (z - q.mean) + 1.0)).sum(axis=1)
    return values, grad_mean, grad_log_std


def iwae_bound_from_noise(t: TargetModel, q: GaussianProposal, eps) -> float:
    """The k-sample bound evaluated on fixed noise ``(n_batches, k, dim)``.

    Reusing one noise array across nearby parameter values gives the
    common-random-number surface whose finite differences validate the
    analytic gradient.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.ndim != 3:
        raise ValueError(f"expected noise of shape (n, k, dim), got {eps.shape}")
    z = reparam_sample(q, eps)
    log_p = np.asarray(t.log_unnorm_density(z), dtype=float)
    log_w = log_p - np.asarray(proposal_log_density(q, z), dtype=float)
    values = logsumexp(log_w, axis=1) - math.log(eps.shape[1])
    return float(values.mean())


def iwae_gradient_from_noise(
    t: TargetModel, q: GaussianProposal, eps
) -> IwaeGradient:
    """Pathwise gradient on fixed noise; exact derivative of
    ``iwae_bound_from_noise`` at ``q``."""
    eps = np.asarray(eps, dtype=float)
    if eps.ndim != 3:
        raise ValueError(f"expected noise of shape (n, k, dim), got {eps.shape}")
    values, grad_mean, grad_log_std = _batch_values_and_grads(t, q, eps)
    n = eps.shape[0]
    return IwaeGradient(
        value=float(values.mean()),
        mean=grad_mean.mean(axis=0),
        log_std=grad_log_std.mean(axis=0),
        se_mean=grad_mean.std(axis=0, ddof=1) / math.sqrt(n),
        se_log_std=grad_log_std.std(axis=0, ddof=1) / math.sqrt(n),
        n_batches=n,
    )


def iwae_gradient(
    t: TargetModel, q: GaussianProposal, k: int, n_batches: int, rng: RngStream
) -> IwaeGradient:
    """Draw noise and estimate the pathwise gradient of the k-sample bound.

    Raises:
        CapabilityError: The target has no analytic gradient.
    """
    if k < 1 or n_batches < 2:
        raise ValueError(f"need k >= 1 and n_batches >= 2, got k={k}, n={n_batches}")
    if t.log_grad is None:
        raise CapabilityError(f"target '{t.name}' does not supply gradients")
    sizes = chunk_sizes(n_batches, _CHUNK)
    streams = substreams(rng, len(sizes))

    def work(args):
        size, stream = args
        eps = stream.standard_normal((size, k, q.dim))
        return _batch_values_and_grads(t, q, eps)

    parts = parallel_map(work, zip(sizes, streams))
    values = np.concatenate([p[0] for p in parts])
    grad_mean = np.concatenate([p[1] for p in parts])
    grad_log_std = np.concatenate([p[2] for p in parts])
    return IwaeGradient(
        value=float(values.mean()),
        mean=grad_mean.mean(axis=0),
        log_std=grad_log_std.mean(axis=0),
        se_mean=grad_mean.std(axis=0, ddof=1) / math.sqrt(n_batches),
        se_log_std=grad_log_std.std(axis=0, ddof=1) / math.sqrt(n_batches),
        n_batches=n_batches,
    )


def fit_proposal(
    t: TargetModel,
    q0: GaussianProposal,
    k: int,
    steps: int,
    learning_rate: float,
    n_batches: int,
    rng: RngStream,
) -> tuple[GaussianProposal, FitTrace]:
    """Plain gradient ascent with a fixed step size.

    Each step records the bound estimate and parameters before the
    update, so the trace has exactly ``steps`` rows. Deterministic for
    a given stream.

    Raises:
        DivergenceError: A bound estimate or parameter went non-finite;
            the partial trace and last finite proposal ride along.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if learning_rate <= 0:
        raise ValueError(f"learning rate must be positive, got {learning_rate}")
    q = q0
    trace = FitTrace()
    for step in range(steps):
        grad = iwae_gradient(t, q, k, n_batches, rng)
        if not math.isfinite(grad.value):
            raise DivergenceError(
                f"bound estimate became non-finite at step {step}",
                trace=trace,
                proposal=q,
            )
        trace.append(
            FitStep(
                step=step,
                bound=grad.value,
                mean=q.mean.copy(),
                log_std=q.log_std.copy(),
                grad_norm=grad.norm,
            )
        )
        new_mean = q.mean + learning_rate * grad.mean
        new_log_std = q.log_std + learning_rate * grad.log_std
        if not (np.isfinite(new_mean).all() and np.isfinite(new_log_std).all()):
            raise DivergenceError(
                f"parameters became non-finite at step {step}",
                trace=trace,
                proposal=q,
            )
        q = GaussianProposal(mean=new_mean, log_std=new_log_std)
    return q, trace
