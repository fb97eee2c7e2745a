"""Trial-by-trial simulation of the RIS-assisted HAP downlink.

Each trial draws fresh HAP and RIS Poisson fields (and buildings in explicit
mode) on the disc of radius ``params.omega_h`` around the user at the origin,
then forms A_N, A_D and the SIR with ideal RIS phase alignment.

Trial ``i`` of a batch seeded with ``seed`` always uses the generator
``default_rng([seed, i])``, so results do not depend on how trials are split
across worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .channel import link_specs, sample_rician

__all__ = [
    "MODES",
    "TrialOutcome",
    "SimStats",
    "run_trial",
    "link_outcome",
    "sample_scene",
    "simulate_trials",
    "run_batch",
    "ks_statistic",
    "INTERFERENCE_FLOOR",
    "summarize",
]

MODES = ("thinning", "explicit")
INTERFERENCE_FLOOR = 1e-30
DEFAULT_THRESHOLDS_DB = (-20.0, -10.0, 0.0, 10.0, 20.0)


@dataclass(frozen=True)
class TrialOutcome:
    """One simulated user.

    ``isolated`` marks trials without any visible RIS; their ``sir`` is NaN.
    ``sir`` is +inf when no interfering HAP is visible.
    """

    sir: float
    a_n: float
    a_d: float
    n_visible_haps: int
    r_q: float
    r_g: float
    isolated: bool = False


def _blockage_margin(params):
    # rectangles centred outside the window can still cut links inside it
    return 0.5 * math.hypot(2 * params.mean_len, 2 * params.mean_wid)


def sample_scene(params, mode, rng):
    """Draw HAPs, RISs, buildings and visibility flags for one trial."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    radius = params.omega_h
    haps = geometry.sample_ppp(params.lambda_hap, radius, rng)
    riss = geometry.sample_ppp(params.lambda_ris, radius, rng)
    if mode == "thinning":
        db = params.blockage
        rects = geometry.RectArray.empty()
        hap_vis = geometry.los_thinning(haps, db, rng)
        ris_vis = geometry.los_thinning(riss, db, rng)
    else:
        rects = geometry.sample_blockages(params, radius + _blockage_margin(params), rng)
        hap_vis = geometry.los_explicit(haps, rects)
        ris_vis = geometry.los_explicit(riss, rects)
    return geometry.NetworkRealization(haps, riss, rects, hap_vis, ris_vis)


def _nearest_thinned_distance(density, radius, db, rng, chunk=32):
    """Distance to the closest retained point of a p_los-thinned PPP, or None.

    Distances are drawn in increasing order (pi * density * r^2 are the
    arrival times of a unit-rate Poisson process), so only the points up to
    the first retained one are generated.
    """
    t = 0.0
    scale = 1.0 / (math.pi * density)
    while True:
        arrivals = t + np.cumsum(rng.exponential(size=chunk))
        r = np.sqrt(arrivals * scale)
        keep = (rng.random(chunk) < geometry.p_los(r, db)) & (r <= radius)
        if keep.any():
            return float(r[np.argmax(keep)])
        if r[-1] > radius:
            return None
        t = arrivals[-1]


def run_trial(params, mode, rng, nearest_hap_interferes=False):
    """Simulate one user.

    The serving HAP is the nearest one whatever its visibility; the serving
    RIS is the nearest visible one. Visible HAPs interfere; a visible serving
    HAP is left out of the interference unless ``nearest_hap_interferes``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    radius = params.omega_h
    db = params.blockage
    haps = geometry.sample_ppp(params.lambda_hap, radius, rng)
    d_hap = np.hypot(haps[:, 0], haps[:, 1])

    if mode == "thinning":
        hap_vis = rng.random(d_hap.size) < geometry.p_los(d_hap, db)
        w_g = _nearest_thinned_distance(params.lambda_ris, radius, db, rng)
    else:
        riss = geometry.sample_ppp(params.lambda_ris, radius, rng)
        d_ris = np.hypot(riss[:, 0], riss[:, 1])
        rects = geometry.sample_blockages(params, radius + _blockage_margin(params), rng)
        hap_vis = geometry.los_explicit(haps, rects)
        j = geometry.nearest_visible_explicit(riss, rects)
        w_g = None if j is None else d_ris[j]

    return link_outcome(params, d_hap, hap_vis, w_g, rng, nearest_hap_interferes)


def link_outcome(params, d_hap, hap_visible, w_g, rng, nearest_hap_interferes=False):
    """Fading draws and SIR for a fixed geometry.

    ``d_hap`` are horizontal HAP distances, ``hap_visible`` their LoS flags and
    ``w_g`` the horizontal distance of the serving RIS (None when no RIS is
    visible).
    """
    d_hap = np.asarray(d_hap, dtype=float)
    hap_vis = np.asarray(hap_visible, dtype=bool)
    n_vis = int(hap_vis.sum())
    if d_hap.size == 0 or w_g is None:
        return TrialOutcome(math.nan, math.nan, math.nan, n_vis, math.nan, math.nan, True)

    q_spec, g_spec, h_spec = link_specs(params)
    L = params.num_re
    i0 = int(np.argmin(d_hap))
    r_q = math.sqrt(d_hap[i0] ** 2 + params.h_hap ** 2)
    r_g = math.sqrt(w_g ** 2 + params.h_ris ** 2)
    q = sample_rician(q_spec, rng, L)
    g = sample_rician(g_spec, rng, L)
    a_n = float(np.sum(q * g)) ** 2 * r_q ** (-params.eps_q) * r_g ** (-params.eps_g)

    interferers = hap_vis.copy()
    if not nearest_hap_interferes:
        interferers[i0] = False
    d_int = d_hap[interferers]
    h = sample_rician(h_spec, rng, d_int.size)
    r_h2 = d_int ** 2 + params.h_hap ** 2
    a_d = float(np.sum(h * h * r_h2 ** (-0.5 * params.eps_h)))
    sir = params.p_o * a_n / (params.p_i * a_d) if a_d > 0 else math.inf
    return TrialOutcome(sir, a_n, a_d, n_vis, r_q, r_g, False)


def _trial_block(args):
    params, mode, seed, start, stop, nearest = args
    cols = np.empty((stop - start, 7))
    for k, i in enumerate(range(start, stop)):
        rng = np.random.default_rng([seed, i])
        o = run_trial(params, mode, rng, nearest)
        cols[k] = (o.sir, o.a_n, o.a_d, o.n_visible_haps, o.r_q, o.r_g, o.isolated)
    return cols


def simulate_trials(params, mode, n_trials, seed, nearest_hap_interferes=False,
                    threads=1, block=2000):
    """Raw per-trial columns (sir, a_n, a_d, n_visible, r_q, r_g, isolated)."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    jobs = [(params, mode, int(seed), s, min(s + block, n_trials), nearest_hap_interferes)
            for s in range(0, n_trials, block)]
    if threads <= 1 or len(jobs) == 1:
        parts = [_trial_block(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_trial_block, jobs))
    return np.concatenate(parts, axis=0)


def ks_statistic(samples, cdf):
    """Two-sided Kolmogorov-Smirnov distance; +inf samples have CDF 1."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        return math.nan
    f = np.asarray(cdf(x), dtype=float)
    f = np.where(np.isposinf(x), 1.0, f)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def _mean_var_se(x):
    """Sample mean and variance with their standard errors."""
    n = x.size
    if n < 2:
        m = float(x.mean()) if n else math.nan
        return m, math.nan, math.nan, math.nan
    m = float(np.mean(x))
    c = x - m
    var = float(np.mean(c * c)) * n / (n - 1)
    m4 = float(np.mean(c ** 4))
    se_m = math.sqrt(var / n)
    se_v = math.sqrt(max(m4 - var * var, 0.0) / n)
    return m, se_m, var, se_v


@dataclass
class SimStats:
    """Aggregated Monte Carlo results for one parameter set.

    Coverage counts isolated trials as failures and infinite-SIR trials as
    successes. The histogram covers finite SIRs of non-isolated trials, so
    its integral is at most one.
    """

    trials: int
    coverage_at: dict
    mean_capacity: float
    capacity_se: float
    isolation_fraction: float
    infinite_sir_fraction: float
    mean_visible_haps: float
    mean_visible_haps_se: float
    moments: dict
    sir_histogram: tuple
    sir_samples: np.ndarray | None = field(default=None, repr=False)


def _histogram(sir, n_total, bins=60):
    finite = sir[np.isfinite(sir)]
    if finite.size == 0:
        return np.zeros(bins + 1), np.zeros(bins)
    hi = float(np.quantile(finite, 0.99))
    edges = np.linspace(0.0, hi if hi > 0 else 1.0, bins + 1)
    counts, _ = np.histogram(finite, edges)
    dens = counts / (n_total * np.diff(edges))
    return edges, dens


def summarize(cols, thresholds_db=DEFAULT_THRESHOLDS_DB, keep_samples=True,
              power_ratio=1.0):
    """Aggregate raw trial columns; ``power_ratio`` is P_o / P_i."""
    sir, a_n, a_d, n_vis, _, _, isolated = cols.T
    isolated = isolated.astype(bool)
    n = sir.size
    ok = ~isolated
    sir_ok = sir[ok]

    coverage = {}
    for t in thresholds_db:
        s = 10.0 ** (t / 10.0)
        covered = np.zeros(n, dtype=bool)
        covered[ok] = sir_ok > s
        p = float(covered.mean())
        coverage[t] = (p, math.sqrt(p * (1 - p) / n))

    cap = np.zeros(n)
    an_ok, ad_ok = a_n[ok], a_d[ok]
    eff = sir_ok.copy()
    inf = np.isposinf(eff)
    # no visible interferer: evaluate against the interference floor instead
    eff[inf] = power_ratio * an_ok[inf] / INTERFERENCE_FLOOR
    cap[ok] = np.log2(1.0 + eff)
    cap_mean = float(np.mean(cap))
    cap_se = float(np.std(cap, ddof=1) / math.sqrt(n)) if n > 1 else math.nan

    m_an, se_m_an, v_an, se_v_an = _mean_var_se(an_ok)
    m_ad, se_m_ad, v_ad, se_v_ad = _mean_var_se(ad_ok)
    moments = {
        "mean_an": (m_an, se_m_an), "var_an": (v_an, se_v_an),
        "mean_ad": (m_ad, se_m_ad), "var_ad": (v_ad, se_v_ad),
    }
    nv_mean, nv_se, _, _ = _mean_var_se(n_vis)
    return SimStats(
        trials=n,
        coverage_at=coverage,
        mean_capacity=cap_mean,
        capacity_se=cap_se,
        isolation_fraction=float(isolated.mean()),
        infinite_sir_fraction=float(np.isposinf(sir_ok).sum() / n),
        mean_visible_haps=nv_mean,
        mean_visible_haps_se=nv_se,
        moments=moments,
        sir_histogram=_histogram(sir_ok, n),
        sir_samples=sir_ok if keep_samples else None,
    )


def run_batch(params, mode="thinning", n_trials=10_000, seed=0,
              thresholds=DEFAULT_THRESHOLDS_DB, nearest_hap_interferes=False,
              threads=1, keep_samples=True):
    """Run ``n_trials`` independent trials and aggregate them."""
    cols = simulate_trials(params, mode, n_trials, seed, nearest_hap_interferes, threads)
    return summarize(cols, thresholds, keep_samples, params.p_o / params.p_i)
