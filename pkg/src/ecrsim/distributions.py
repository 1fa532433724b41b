"""Distribution samplers for the fitted session-level traffic models.

The parameter blocks mirror the published best-fit models for web and bulk
transfer workloads: truncated lognormal sizes and parsing times, a gamma
object count, exponential reading times, and uniform request sizes.

Truncation is conditional (resample until accepted), never clipping: clipping
would put a probability atom at the upper bound and distort the mean. A retry
cap surfaces pathological parameter choices instead of hanging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .kernel import RngStream

_TRUNC_RETRY_CAP = 1_000_000


@dataclass(frozen=True)
class TruncLognormalParams:
    mu: float
    sigma: float
    max: float

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ConfigurationError(f"sigma must be > 0, got {self.sigma}")
        if not (self.max > 0):
            raise ConfigurationError(f"max must be > 0, got {self.max}")


@dataclass(frozen=True)
class LognormalParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ConfigurationError(f"sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class GammaParams:
    kappa: float  # shape
    theta: float  # scale

    def __post_init__(self):
        if not (self.kappa > 0 and self.theta > 0):
            raise ConfigurationError(
                f"gamma shape/scale must be > 0, got kappa={self.kappa}, theta={self.theta}"
            )


@dataclass(frozen=True)
class ExponentialParams:
    lam: float  # rate, 1/s

    def __post_init__(self):
        if not (self.lam > 0):
            raise ConfigurationError(f"rate must be > 0, got {self.lam}")


@dataclass(frozen=True)
class UniformParams:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a < self.b):
            raise ConfigurationError(f"need a < b, got a={self.a}, b={self.b}")


def sample_trunc_lognormal(p: TruncLognormalParams, rng: RngStream, n: int | None = None):
    """Draw from Lognormal(mu, sigma) conditioned on the value being <= max.

    Scalar by default; pass ``n`` for a vectorized batch (used by tests and
    trace synthesis).
    """
    gen = rng.gen
    if n is None:
        for _ in range(_TRUNC_RETRY_CAP):
            x = gen.lognormal(p.mu, p.sigma)
            if x <= p.max:
                return float(x)
        raise ConfigurationError(
            f"truncated lognormal rejected {_TRUNC_RETRY_CAP} draws; "
            f"params place almost no mass below max={p.max}"
        )
    out = np.empty(n)
    filled = 0
    for _ in range(1000):
        need = n - filled
        if need == 0:
            return out
        draws = gen.lognormal(p.mu, p.sigma, size=need)
        accepted = draws[draws <= p.max]
        out[filled : filled + accepted.size] = accepted
        filled += accepted.size
    raise ConfigurationError(
        f"truncated lognormal acceptance rate too low for max={p.max}"
    )


def sample_lognormal(p: LognormalParams, rng: RngStream, n: int | None = None):
    x = rng.gen.lognormal(p.mu, p.sigma, size=n)
    return float(x) if n is None else x


def sample_gamma(p: GammaParams, rng: RngStream, n: int | None = None):
    x = rng.gen.gamma(p.kappa, p.theta, size=n)
    return float(x) if n is None else x


def sample_exponential(p: ExponentialParams, rng: RngStream, n: int | None = None):
    x = rng.gen.exponential(1.0 / p.lam, size=n)
    return float(x) if n is None else x


def sample_uniform(p: UniformParams, rng: RngStream, n: int | None = None):
    x = rng.gen.uniform(p.a, p.b, size=n)
    return float(x) if n is None else x


# Analytic first moments of the fitted models, used for load estimates and
# reported alongside campaign output. E[X | X <= M] for the lognormal uses
# the standard normal-cdf ratio form.


def _phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def trunc_lognormal_mean(p: TruncLognormalParams) -> float:
    ln_max = math.log(p.max)
    z_mass = (ln_max - p.mu) / p.sigma
    z_mean = (ln_max - p.mu - p.sigma * p.sigma) / p.sigma
    full_mean = math.exp(p.mu + 0.5 * p.sigma * p.sigma)
    return full_mean * _phi(z_mean) / _phi(z_mass)


def lognormal_mean(p: LognormalParams) -> float:
    return math.exp(p.mu + 0.5 * p.sigma * p.sigma)


def gamma_mean(p: GammaParams) -> float:
    return p.kappa * p.theta


def exponential_mean(p: ExponentialParams) -> float:
    return 1.0 / p.lam


def uniform_mean(p: UniformParams) -> float:
    return 0.5 * (p.a + p.b)


def round_half_up(x: float) -> int:
    """Round to nearest integer, halves away from zero (used for byte counts)."""
    return math.floor(x + 0.5)
