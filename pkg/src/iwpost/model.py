"""Target distributions and the diagonal-Gaussian proposal family.

A target is an unnormalized log-density over a latent space; a proposal
is the distribution importance weights are measured against. All log
values are in nats. Zero density is represented as ``-inf``, never NaN.

Density callables are vectorized: they accept points of shape
``(..., dim)`` and return log densities of shape ``(...)`` (gradients
return ``(..., dim)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import NumericError
from .rng import RngStream

__all__ = [
    "LatentPoint",
    "TargetModel",
    "GaussianProposal",
    "target_log_density",
    "proposal_log_density",
    "proposal_sample",
    "builtin_target",
    "BUILTIN_TARGETS",
    "make_gauss1d",
    "make_gauss2d",
    "make_mix2",
    "make_ring",
    "parse_kv",
    "format_kv",
    "proposal_to_kv",
    "proposal_from_kv",
    "target_to_kv",
    "target_from_kv",
]

# A latent point is a plain 1-D float array of length ``dim``; batched
# inputs stack points along leading axes.
LatentPoint = np.ndarray

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class TargetModel:
    """Unnormalized density over a ``dim``-dimensional latent space.

    Attributes:
        name: Identifier used in configs and reports.
        dim: Latent dimensionality.
        log_unnorm_density: Vectorized log-density; ``-inf`` marks zero
            density and is a legal value, NaN is not.
        log_grad: Optional vectorized gradient of the log-density.
        known_log_z: Analytic log-normalizer when one exists.
        params: Constructor parameters, kept for serialization.
    """

    name: str
    dim: int
    log_unnorm_density: Callable[[np.ndarray], np.ndarray]
    log_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    known_log_z: Optional[float] = None
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"target dim must be >= 1, got {self.dim}")


@dataclass(frozen=True, eq=False)
class GaussianProposal:
    """Diagonal Gaussian with per-dimension mean and log standard deviation.

    Attributes:
        mean: Mean vector, shape ``(dim,)``.
        log_std: Log standard deviations, shape ``(dim,)``; must be
            finite (a degenerate zero-width proposal is not allowed).
    """

    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        log_std = np.atleast_1d(np.asarray(self.log_std, dtype=float)).copy()
        if mean.ndim != 1 or log_std.ndim != 1 or mean.shape != log_std.shape:
            raise ValueError(
                f"mean and log_std must be 1-D and equal length, got shapes "
                f"{mean.shape} and {log_std.shape}"
            )
        if not (np.isfinite(mean).all() and np.isfinite(log_std).all()):
            raise ValueError("proposal parameters must be finite")
        mean.setflags(write=False)
        log_std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_std", log_std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


def _check_points(z, dim: int) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 or z.shape[-1] != dim:
        raise ValueError(
            f"latent points must have trailing dimension {dim}, got shape {z.shape}"
        )
    return z


def target_log_density(t: TargetModel, z) -> float | np.ndarray:
    """Log of the unnormalized target density at ``z`` (nats).

    Args:
        t: Target model.
        z: Point of shape ``(dim,)`` or batch ``(..., dim)``.

    Returns:
        Scalar for a single point, array of shape ``(...)`` for a batch.
        ``-inf`` is a legal value (zero density).

    Raises:
        ValueError: Dimension mismatch.
        NumericError: The density callable produced NaN.
    """
    z = _check_points(z, t.dim)
    out = np.asarray(t.log_unnorm_density(z), dtype=float)
    if np.isnan(out).any():
        raise NumericError(f"target '{t.name}' produced NaN log-density")
    return float(out) if out.ndim == 0 else out


def proposal_log_density(q: GaussianProposal, z) -> float | np.ndarray:
    """Exact diagonal-Gaussian log-density at ``z`` (nats).

    Per dimension the contribution is
    ``-log(2*pi)/2 - log_std - (z - mean)**2 / (2 * exp(2 * log_std))``.
    """
    z = _check_points(z, q.dim)
    per_dim = (
        -HALF_LOG_2PI
        - q.log_std
        - (z - q.mean) ** 2 / (2.0 * np.exp(2.0 * q.log_std))
    )
    out = per_dim.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def proposal_sample(q: GaussianProposal, rng: RngStream, size=None) -> np.ndarray:
    """Draw from the proposal via ``mean + exp(log_std) * eps``.

    Args:
        q: Proposal to sample.
        rng: Stream consumed by the draw (one normal per coordinate).
        size: None for a single point ``(dim,)``, an int ``n`` for
            ``(n, dim)``, or a tuple for ``(*size, dim)``.
    """
    if size is None:
        shape = (q.dim,)
    elif isinstance(size, int):
        shape = (size, q.dim)
    else:
        shape = tuple(size) + (q.dim,)
    eps = rng.standard_normal(shape)
    return q.mean + np.exp(q.log_std) * eps


# ---------------------------------------------------------------------
# Builtin targets
# ---------------------------------------------------------------------


def _make_isotropic_gaussian(name: str, dim: int) -> TargetModel:
    def log_density(z):
        return -0.5 * (z * z).sum(axis=-1)

    def log_grad(z):
        return -z

    return TargetModel(
        name=name,
        dim=dim,
        log_unnorm_density=log_density,
        log_grad=log_grad,
        known_log_z=dim * HALF_LOG_2PI,
    )


def make_gauss1d() -> TargetModel:
    """1-D ``exp(-z**2/2)``; integrates to ``sqrt(2*pi)``."""
    return _make_isotropic_gaussian("gauss1d", 1)


def make_gauss2d() -> TargetModel:
    """2-D ``exp(-|z|**2/2)``; integrates to ``2*pi``."""
    return _make_isotropic_gaussian("gauss2d", 2)


def make_mix2(
    mean1=(-1.5, -1.5),
    mean2=(1.5, 1.5),
    std: float = 0.7,
    weight1: float = 0.5,
    weight2: float = 0.5,
) -> TargetModel:
    """Two-component 2-D Gaussian mixture.

    Each component is a normalized isotropic Gaussian scaled by its
    weight, so the total mass is ``weight1 + weight2`` (1 with the
    defaults) and the log-normalizer is known analytically.
    """
    m1 = np.asarray(mean1, dtype=float)
    m2 = np.asarray(mean2, dtype=float)
    if m1.shape != (2,) or m2.shape != (2,):
        raise ValueError("mix2 component means must be 2-D points")
    if std <= 0 or weight1 <= 0 or weight2 <= 0:
        raise ValueError("mix2 std and weights must be positive")
    var = std * std
    log_norm = -np.log(2.0 * np.pi * var)  # normalizer of one 2-D component

    def component_logs(z):
        a = np.log(weight1) + log_norm - ((z - m1) ** 2).sum(axis=-1) / (2.0 * var)
        b = np.log(weight2) + log_norm - ((z - m2) ** 2).sum(axis=-1) / (2.0 * var)
        return a, b

    def log_density(z):
        a, b = component_logs(z)
        return np.logaddexp(a, b)

    def log_grad(z):
        a, b = component_logs(z)
        shift = np.maximum(a, b)
        ra = np.exp(a - shift)
        rb = np.exp(b - shift)
        total = ra + rb
        ra = (ra / total)[..., None]
        rb = (rb / total)[..., None]
        return ra * (-(z - m1) / var) + rb * (-(z - m2) / var)

    return TargetModel(
        name="mix2",
        dim=2,
        log_unnorm_density=log_density,
        log_grad=log_grad,
        known_log_z=float(np.log(weight1 + weight2)),
        params={
            "mean1": tuple(m1),
            "mean2": tuple(m2),
            "std": float(std),
            "weight1": float(weight1),
            "weight2": float(weight2),
        },
    )


def make_ring(radius: float = 2.0, width: float = 0.3) -> TargetModel:
    """2-D ring ``exp(-(|z| - radius)**2 / (2 * width**2))``.

    No analytic normalizer; quadrature supplies one.
    """
    if radius <= 0 or width <= 0:
        raise ValueError("ring radius and width must be positive")
    var = width * width

    def log_density(z):
        r = np.sqrt((z * z).sum(axis=-1))
        return -((r - radius) ** 2) / (2.0 * var)

    def log_grad(z):
        r = np.sqrt((z * z).sum(axis=-1))
        # radial derivative -(r - radius)/var along the unit vector z/r;
        # the center r == 0 is a smooth symmetric point with zero slope
        safe_r = np.where(r > 0.0, r, 1.0)
        scale = np.where(r > 0.0, -(r - radius) / (var * safe_r), 0.0)
        return scale[..., None] * z

    return TargetModel(
        name="ring",
        dim=2,
        log_unnorm_density=log_density,
        log_grad=log_grad,
        known_log_z=None,
        params={"radius": float(radius), "width": float(width)},
    )


BUILTIN_TARGETS = {
    "gauss1d": make_gauss1d,
    "gauss2d": make_gauss2d,
    "mix2": make_mix2,
    "ring": make_ring,
}


def builtin_target(name: str, **params) -> TargetModel:
    """Construct a builtin target by name.

    Args:
        name: One of ``gauss1d``, ``gauss2d``, ``mix2``, ``ring``.
        **params: Optional overrides for the factory's parameters
            (``mix2`` and ``ring`` only).

    Raises:
        ValueError: Unknown name or parameters the target doesn't take.
    """
    try:
        factory = BUILTIN_TARGETS[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_TARGETS))
        raise ValueError(f"unknown target '{name}' (known: {known})") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for target '{name}': {exc}") from None


# ---------------------------------------------------------------------
# Plain-text key=value configs
# ---------------------------------------------------------------------


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; '#' starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def format_kv(kv: Mapping[str, str]) -> str:
    return "".join(f"{key}={value}\n" for key, value in kv.items())


def _format_floats(values) -> str:
    return ",".join(repr(float(v)) for v in np.atleast_1d(values))


def _parse_floats(text: str) -> np.ndarray:
    return np.asarray([float(part) for part in text.split(",")], dtype=float)


def proposal_to_kv(q: GaussianProposal) -> dict[str, str]:
    return {
        "dim": str(q.dim),
        "mean": _format_floats(q.mean),
        "log_std": _format_floats(q.log_std),
    }


def proposal_from_kv(kv: Mapping[str, str]) -> GaussianProposal:
    mean = _parse_floats(kv["mean"])
    log_std = _parse_floats(kv["log_std"])
    if "dim" in kv and int(kv["dim"]) != mean.shape[0]:
        raise ValueError(
            f"config dim={kv['dim']} does not match mean of length {mean.shape[0]}"
        )
    return GaussianProposal(mean=mean, log_std=log_std)


def target_to_kv(t: TargetModel) -> dict[str, str]:
    kv = {"target": t.name, "dim": str(t.dim)}
    for key, value in t.params.items():
        if isinstance(value, tuple):
            kv[key] = _format_floats(value)
        else:
            kv[key] = repr(float(value))
    return kv


_TARGET_PARAM_KEYS = {
    "gauss1d": (),
    "gauss2d": (),
    "mix2": ("mean1", "mean2", "std", "weight1", "weight2"),
    "ring": ("radius", "width"),
}

_TUPLE_PARAMS = {"mean1", "mean2"}


def target_param_names(name: str) -> tuple[str, ...]:
    """Config keys the named builtin accepts as parameter overrides."""
    if name not in _TARGET_PARAM_KEYS:
        known = ", ".join(sorted(BUILTIN_TARGETS))
        raise ValueError(f"unknown target '{name}' (known: {known})")
    return _TARGET_PARAM_KEYS[name]


def target_from_kv(kv: Mapping[str, str]) -> TargetModel:
    name = kv["target"]
    if name not in BUILTIN_TARGETS:
        known = ", ".join(sorted(BUILTIN_TARGETS))
        raise ValueError(f"unknown target '{name}' (known: {known})")
    params = {}
    for key in _TARGET_PARAM_KEYS[name]:
        if key in kv:
            if key in _TUPLE_PARAMS:
                params[key] = tuple(_parse_floats(kv[key]))
            else:
                params[key] = float(kv[key])
    t = builtin_target(name, **params)
    if "dim" in kv and int(kv["dim"]) != t.dim:
        raise ValueError(f"config dim={kv['dim']} does not match target dim {t.dim}")
    return t
