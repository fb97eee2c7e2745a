"""Rician fading magnitudes: sampling and fractional moments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .specfun import DomainError, hyp1f1

__all__ = ["RicianSpec", "rician_moment", "sample_rician", "link_specs"]


@dataclass(frozen=True)
class RicianSpec:
    """K-factor (linear) and mean-square value E|delta|^2 of one link type."""

    k: float = 1.0
    sigma2: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k >= 0):
            raise DomainError(f"Rician K must be >= 0, got {self.k!r}")
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise DomainError(f"sigma2 must be > 0, got {self.sigma2!r}")


def rician_moment(spec, t):
    """E|delta|^t for a Rician magnitude with mean-square ``spec.sigma2``.

    Valid for K up to about 700 (the Kummer function overflows beyond).
    """
    t = float(t)
    if not t >= 0:
        raise DomainError(f"moment order must be >= 0, got {t!r}")
    k = spec.k
    half = 0.5 * t
    log_pref = half * math.log(spec.sigma2) + math.lgamma(1.0 + half) - k \
        - half * math.log1p(k)
    return math.exp(log_pref) * hyp1f1(1.0 + half, 1.0, k)


def sample_rician(spec, rng, size=None):
    """|X| with X complex Gaussian: LoS amplitude sqrt(s2 K/(K+1)), scatter s2/(K+1)."""
    los = math.sqrt(spec.sigma2 * spec.k / (spec.k + 1.0))
    sd = math.sqrt(spec.sigma2 / (2.0 * (spec.k + 1.0)))
    re = los + sd * rng.standard_normal(size)
    im = sd * rng.standard_normal(size)
    return np.hypot(re, im)


def link_specs(params):
    """(q, g, h) fading specs for the HAP-RIS, RIS-user and interferer links."""
    return (RicianSpec(params.k_q, params.sigma2_q),
            RicianSpec(params.k_g, params.sigma2_g),
            RicianSpec(params.k_h, params.sigma2_h))
