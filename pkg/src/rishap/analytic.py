"""Closed-form SIR chain: distance moments, gamma moment matching, the
generalized Beta prime SIR law, coverage probability and ergodic capacity.

All quantities are linear scale. Signal powers are A_N (RIS-assisted path)
and A_D (sum over visible interfering HAPs), so SIR = P_o A_N / (P_i A_D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .channel import link_specs, rician_moment
from .specfun import (AccuracyError, NeedsFallback, QuadratureSpec, adaptive_quad,
                      beta_inc_regularized,
                      exp_scaled_upper_gamma, hyp2f1, hyp2f1_regularized,
                      hyp3f2_regularized)

__all__ = [
    "DegenerateFitError",
    "GammaFit",
    "BetaPrimeSIR",
    "CapacityResult",
    "AnalyticPoint",
    "moment_rh",
    "moment_rg",
    "moment_rq",
    "mean_an",
    "mean_ad",
    "second_moment_an",
    "second_moment_ad",
    "fit_gamma",
    "sir_distribution",
    "sir_cdf",
    "sir_pdf",
    "coverage_probability",
    "capacity_closed_form",
    "capacity_quadrature",
    "ergodic_capacity",
    "capacity_report",
    "evaluate",
]

MOMENT_QUAD = QuadratureSpec(rel_tol=1e-10)
CAPACITY_QUAD = QuadratureSpec(rel_tol=1e-10, max_subdivisions=6000)
CLOSED_FORM_AGREEMENT = 1e-4
# closed-form capacity is rejected when the two bracketed terms cancel by more
# than this factor (each term carries ~1e-14 relative error)
MAX_CANCELLATION = 1e6
NEAR_INTEGER_ALPHA_D = 1e-6
# above this shape the hypergeometric CDF series cancels badly; use the
# incomplete beta continued fraction instead
HYP2F1_SHAPE_LIMIT = 10.0


class DegenerateFitError(ArithmeticError):
    """Moment matching produced a non-positive variance or mean."""


# --------------------------------------------------------------------------
# Distance moments
# --------------------------------------------------------------------------

def moment_rh(t, params, spec=MOMENT_QUAD):
    """E[R_h^(-t eps_h)] for a visible interfering HAP within the window."""
    db = params.blockage
    om = params.omega_h
    h = params.h_hap
    p = 0.5 * t * params.eps_h
    norm = db.zeta ** 2 / (1.0 - (db.zeta * om + 1.0) * math.exp(-db.zeta * om))

    def integrand(w):
        return w * np.exp(-db.zeta * w - p * np.log1p((w / h) ** 2))

    scale = min(om, 1.0 / db.zeta)
    pts = [x for x in (scale, 5 * scale) if x < om]
    return norm * h ** (-2.0 * p) * adaptive_quad(integrand, 0.0, om, spec, points=pts)


def moment_rg(t, params, spec=MOMENT_QUAD):
    """E[R_g^(-t eps_g / 2)] over the (defective) nearest-visible-RIS law.

    At t = 0 this is the probability that a visible RIS exists.
    """
    h = params.h_ris
    p = 0.25 * t * params.eps_g
    lam = params.lambda_ris * math.exp(-params.blockage.rho)
    scale = 1.0 / math.sqrt(math.pi * lam)

    def integrand(w):
        return geometry.pdf_wg(w, params) * np.exp(-p * np.log1p((w / h) ** 2))

    val = adaptive_quad(integrand, 0.0, math.inf, spec, scale=scale,
                        points=(scale, 4 * scale))
    return h ** (-2.0 * p) * val


def moment_rq(t, params):
    """E[R_q^(-t eps_q / 2)] for the nearest HAP, via the scaled incomplete gamma."""
    lam = params.lambda_hap
    s = 0.25 * params.eps_q * t
    x = math.pi * params.h_hap ** 2 * lam
    return (math.pi * lam) ** s * exp_scaled_upper_gamma(1.0 - s, x)


def _mean_visible(params):
    return geometry.mean_visible_haps(params)


# --------------------------------------------------------------------------
# Signal and interference moments
# --------------------------------------------------------------------------

def _fading_products(params):
    """m[t] = E|q|^t E|g|^t for t = 0..4."""
    q, g, _ = link_specs(params)
    return [rician_moment(q, t) * rician_moment(g, t) for t in range(5)]


def mean_an(params):
    L = params.num_re
    m = _fading_products(params)
    fading = L * m[2] + (L * L - L) * m[1] ** 2
    return fading * moment_rq(2, params) * moment_rg(2, params)


def second_moment_an(params):
    """Fourth moment of the coherent sum, split by index multiplicity."""
    L = params.num_re
    m = _fading_products(params)
    fading = (L * m[4]
              + 6 * math.comb(L, 2) * m[2] ** 2
              + 12 * math.comb(L, 1) * math.comb(L - 1, 2) * m[2] * m[1] ** 2
              + 4 * math.comb(L, 1) * math.comb(L - 1, 1) * m[3] * m[1]
              + 24 * math.comb(L, 4) * m[1] ** 4)
    return fading * moment_rq(4, params) * moment_rg(4, params)


def mean_ad(params):
    _, _, h = link_specs(params)
    return _mean_visible(params) * rician_moment(h, 2) * moment_rh(1, params)


def second_moment_ad(params):
    # fixed count M_vis, so the cross term is M (M - 1) rather than M^2
    _, _, h = link_specs(params)
    mv = _mean_visible(params)
    return (mv * rician_moment(h, 4) * moment_rh(2, params)
            + mv * (mv - 1.0) * rician_moment(h, 2) ** 2 * moment_rh(1, params) ** 2)


@dataclass(frozen=True)
class GammaFit:
    alpha_n: float
    beta_n: float
    alpha_d: float
    beta_d: float
    mean_n: float = field(default=math.nan, compare=False)
    var_n: float = field(default=math.nan, compare=False)
    mean_d: float = field(default=math.nan, compare=False)
    var_d: float = field(default=math.nan, compare=False)


def _match(mean, second):
    var = second - mean * mean
    if not (mean > 0 and var > 0 and math.isfinite(var)):
        raise DegenerateFitError(f"cannot moment-match mean={mean!r}, var={var!r}")
    return mean * mean / var, var / mean, var


def fit_gamma(params):
    """Moment-matched gamma shapes and scales of A_N and A_D."""
    en, en2 = mean_an(params), second_moment_an(params)
    ed, ed2 = mean_ad(params), second_moment_ad(params)
    a_n, b_n, v_n = _match(en, en2)
    a_d, b_d, v_d = _match(ed, ed2)
    return GammaFit(a_n, b_n, a_d, b_d, en, v_n, ed, v_d)


# --------------------------------------------------------------------------
# SIR distribution
# --------------------------------------------------------------------------

def _log_beta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@dataclass(frozen=True)
class BetaPrimeSIR:
    """Ratio of independent gammas: Gamma(alpha_n, .) / Gamma(alpha_d, .) * scale."""

    alpha_n: float
    alpha_d: float
    scale: float

    def __post_init__(self):
        if not (self.alpha_n > 0 and self.alpha_d > 0 and self.scale > 0):
            raise DegenerateFitError("Beta prime parameters must be positive")

    def _tail(self, x, upper):
        a, b = self.alpha_n, self.alpha_d
        z = x / (self.scale + x)
        w = self.scale / (self.scale + x)
        if max(a, b) > HYP2F1_SHAPE_LIMIT:
            return beta_inc_regularized(a, b, z, w, upper)
        lb = _log_beta(a, b)

        def head():
            return math.exp(a * math.log(z) - math.log(a) - lb) * hyp2f1(a, 1.0 - b, a + 1.0, z)

        def tail():
            return math.exp(b * math.log(w) - math.log(b) - lb) * hyp2f1(b, 1.0 - a, b + 1.0, w)

        try:
            # only the series in the argument <= 1/2 is well conditioned; a
            # complement near 1 - v with v > 1/2 goes to the continued fraction
            first_is_head = z <= 0.5
            v = head() if first_is_head else tail()
            if first_is_head != upper:
                return v
            if v <= 0.5:
                return 1.0 - v
        except AccuracyError:
            pass
        return beta_inc_regularized(a, b, z, w, upper)

    def _cdf1(self, x, upper=False):
        if not x > 0:
            return 1.0 if upper else 0.0
        if math.isinf(x):
            return 0.0 if upper else 1.0
        return self._tail(x, upper)

    def cdf(self, x):
        if np.ndim(x) == 0:
            return self._cdf1(float(x))
        return np.array([self._cdf1(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))

    def sf(self, x):
        if np.ndim(x) == 0:
            return self._cdf1(float(x), upper=True)
        return np.array([self._cdf1(float(v), True) for v in np.ravel(x)]).reshape(np.shape(x))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.alpha_n, self.alpha_d
        with np.errstate(divide="ignore", invalid="ignore"):
            u = x / self.scale
            out = (-math.log(self.scale) - _log_beta(a, b) + (a - 1.0) * np.log(u)
                   - (a + b) * np.log1p(u))
        out = np.where(x > 0, out, -np.inf)
        return float(out) if out.ndim == 0 else out

    def pdf(self, x):
        out = np.exp(self.logpdf(x))
        return float(out) if np.ndim(out) == 0 else out

    def mean(self):
        if self.alpha_d <= 1:
            return math.inf
        return self.scale * self.alpha_n / (self.alpha_d - 1.0)


def sir_distribution(fit, p_o=1.0, p_i=1.0):
    return BetaPrimeSIR(fit.alpha_n, fit.alpha_d, p_o * fit.beta_n / (p_i * fit.beta_d))


def sir_cdf(x, fit, p_o=1.0, p_i=1.0):
    return sir_distribution(fit, p_o, p_i).cdf(x)


def sir_pdf(x, fit, p_o=1.0, p_i=1.0):
    return sir_distribution(fit, p_o, p_i).pdf(x)


def coverage_probability(s_th, params, condition_ris_exists=True, fit=None):
    """P(SIR > s_th) for a linear threshold.

    With ``condition_ris_exists=False`` the result is multiplied by the
    probability that any RIS is visible (otherwise the user is in outage).
    """
    if not s_th > 0:
        raise ValueError(f"threshold must be > 0 (linear), got {s_th!r}")
    fit = fit or fit_gamma(params)
    pc = sir_distribution(fit, params.p_o, params.p_i).sf(s_th)
    if not condition_ris_exists:
        pc *= geometry.ris_exists_mass(params)
    return pc


# --------------------------------------------------------------------------
# Ergodic capacity
# --------------------------------------------------------------------------

def capacity_quadrature(dist, spec=CAPACITY_QUAD):
    """E[log2(1 + SIR)] by direct integration against the SIR density."""
    def integrand(x):
        with np.errstate(invalid="ignore", over="ignore"):
            v = np.log1p(x) * np.exp(dist.logpdf(x))
        # x = inf at the mapped end point, where the density has vanished
        return np.where(np.isfinite(x), v, 0.0)

    s = dist.scale
    mode = s * max(dist.alpha_n - 1.0, 0.0) / (dist.alpha_d + 1.0)
    pts = tuple(p for p in (mode, s) if p > 0)
    return adaptive_quad(integrand, 0.0, math.inf, spec, scale=s, points=pts) / math.log(2.0)


def capacity_closed_form(dist):
    """Hypergeometric closed form of E[log2(1 + SIR)].

    Raises NeedsFallback at the csc poles (integer alpha_d), outside the
    series range (scale >= 1) or when the two terms cancel catastrophically.
    """
    a, b, th = dist.alpha_n, dist.alpha_d, dist.scale
    if abs(b - round(b)) < NEAR_INTEGER_ALPHA_D:
        raise NeedsFallback(f"alpha_d={b} is within {NEAR_INTEGER_ALPHA_D} of an integer")
    f21 = hyp2f1_regularized(b, a + b, b + 1.0, th)
    f32 = hyp3f2_regularized(1.0, 1.0, a + 1.0, 2.0, 2.0 - b, th)
    t1 = math.exp(math.lgamma(b) + b * math.log(th)) * f21
    t2 = th * math.exp(math.lgamma(a + 1.0) - math.lgamma(a + b)) * f32
    diff = t1 - t2
    big = max(abs(t1), abs(t2))
    if diff == 0.0 or big / abs(diff) > MAX_CANCELLATION:
        raise NeedsFallback("closed-form capacity loses all precision to cancellation")
    # the bracket integrates the unnormalized density; divide by B(a, b)
    return math.pi / (math.sin(math.pi * b) * math.log(2.0)) * diff * math.exp(-_log_beta(a, b))


@dataclass(frozen=True)
class CapacityResult:
    value: float
    quadrature: float
    closed_form: float | None
    closed_form_note: str = ""

    @property
    def agrees(self):
        if self.closed_form is None:
            return None
        return abs(self.closed_form - self.quadrature) <= CLOSED_FORM_AGREEMENT * abs(self.quadrature)


def capacity_report(fit, p_o=1.0, p_i=1.0):
    dist = sir_distribution(fit, p_o, p_i)
    quad_err = None
    try:
        quad = capacity_quadrature(dist)
    except AccuracyError as exc:
        quad, quad_err = None, exc
    try:
        closed, note = capacity_closed_form(dist), ""
    except NeedsFallback as exc:
        closed, note = None, str(exc)
    if quad is None:
        if closed is None:
            raise AccuracyError("capacity: quadrature and closed form both failed",
                                estimate=quad_err.estimate, error=quad_err.error)
        return CapacityResult(closed, math.nan, closed, "quadrature failed")
    return CapacityResult(quad, quad, closed, note)


def ergodic_capacity(params, fit=None):
    """Ergodic capacity in bit/s/Hz (quadrature value)."""
    fit = fit or fit_gamma(params)
    return capacity_report(fit, params.p_o, params.p_i).value


# --------------------------------------------------------------------------
# One-stop evaluation
# --------------------------------------------------------------------------

@dataclass
class AnalyticPoint:
    params: geometry.SystemParams
    fit: GammaFit
    coverage: dict
    capacity: CapacityResult
    flags: list

    @property
    def dist(self):
        return sir_distribution(self.fit, self.params.p_o, self.params.p_i)


def evaluate(params, thresholds_db, condition_ris_exists=True):
    """Fit, coverage at each dB threshold and capacity for one parameter set."""
    fit = fit_gamma(params)
    cov = {}
    for t in thresholds_db:
        cov[t] = coverage_probability(10.0 ** (t / 10.0), params, condition_ris_exists, fit)
    cap = capacity_report(fit, params.p_o, params.p_i)
    flags = []
    if cap.closed_form is None:
        flags.append("closed_form_fallback")
    elif not cap.agrees:
        flags.append("closed_form_mismatch")
    return AnalyticPoint(params, fit, cov, cap, flags)
