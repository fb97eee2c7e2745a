"""Spatial model: Poisson fields of HAPs and RISs, Boolean rectangle
buildings, line-of-sight tests and the link-distance distributions.

Coordinates are horizontal positions in metres with the user at the origin.
Point sets are ``(n, 2)`` float arrays.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

__all__ = [
    "ParamError",
    "SystemParams",
    "DerivedBlockage",
    "Rect",
    "RectArray",
    "NetworkRealization",
    "derive_blockage",
    "sample_ppp",
    "sample_blockages",
    "p_los",
    "mean_visible_haps",
    "los_thinning",
    "los_explicit",
    "visible",
    "nearest_visible_explicit",
    "pdf_whlos",
    "pdf_wg",
    "cdf_wg",
    "ris_exists_mass",
    "sample_wg",
    "pdf_wq",
    "cdf_wq",
]


class ParamError(ValueError):
    """Invalid scenario parameter."""


@dataclass(frozen=True)
class DerivedBlockage:
    zeta: float
    rho: float


@dataclass(frozen=True)
class SystemParams:
    """Scenario constants. Defaults are the urban reference scenario.

    ``window_radius=None`` means ten blockage lengths, ``10 / zeta``.
    Densities are per square metre, heights and lengths in metres.
    """

    lambda_hap: float = 5e-6
    lambda_ris: float = 50e-6
    lambda_b: float = 100e-6
    h_hap: float = 50e3
    h_ris: float = 50.0
    mean_len: float = 25.0
    mean_wid: float = 25.0
    num_re: int = 128
    k_q: float = 1.0
    k_g: float = 1.0
    k_h: float = 1.0
    sigma2_q: float = 1.0
    sigma2_g: float = 1.0
    sigma2_h: float = 1.0
    eps_q: float = 2.0
    eps_g: float = 2.0
    eps_h: float = 2.0
    p_o: float = 1.0
    p_i: float = 1.0
    window_radius: float | None = None

    def __post_init__(self):
        positive = ("lambda_hap", "lambda_ris", "h_hap", "h_ris", "mean_len",
                    "mean_wid", "sigma2_q", "sigma2_g", "sigma2_h", "p_o", "p_i")
        for name in positive:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ParamError(f"{name} must be finite and > 0, got {v!r}")
        if not (math.isfinite(self.lambda_b) and self.lambda_b >= 0):
            raise ParamError(f"lambda_b must be >= 0, got {self.lambda_b!r}")
        if int(self.num_re) != self.num_re or self.num_re < 1:
            raise ParamError(f"num_re must be a positive integer, got {self.num_re!r}")
        object.__setattr__(self, "num_re", int(self.num_re))
        for name in ("k_q", "k_g", "k_h"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ParamError(f"{name} must be >= 0, got {v!r}")
        for name in ("eps_q", "eps_g", "eps_h"):
            if not getattr(self, name) >= 2:
                raise ParamError(f"{name} must be >= 2")
        db = self.blockage
        if self.window_radius is None:
            if db.zeta == 0:
                raise ParamError("window_radius must be given when lambda_b = 0")
        else:
            if not (math.isfinite(self.window_radius) and self.window_radius > 0):
                raise ParamError("window_radius must be finite and > 0")
            if db.zeta > 0:
                floor = math.sqrt(2 * math.exp(-db.rho)) / db.zeta
                if self.window_radius <= floor:
                    raise ParamError(
                        f"window_radius must exceed sqrt(2 e^-rho)/zeta = {floor:.4g} m")

    @property
    def blockage(self):
        return derive_blockage(self)

    @property
    def omega_h(self):
        """Effective analysis / simulation window radius in metres."""
        if self.window_radius is not None:
            return float(self.window_radius)
        return 10.0 / self.blockage.zeta

    def replace(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def derive_blockage(params):
    zeta = 2.0 * params.lambda_b * (params.mean_len + params.mean_wid) / math.pi
    rho = params.lambda_b * params.mean_len * params.mean_wid
    return DerivedBlockage(zeta, rho)


# --------------------------------------------------------------------------
# Buildings
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Rect:
    center: tuple
    len: float
    wid: float
    theta: float


class RectArray:
    """Column store of rectangles (centres, lengths, widths, orientations)."""

    def __init__(self, cx, cy, length, width, theta):
        self.cx = np.asarray(cx, dtype=float)
        self.cy = np.asarray(cy, dtype=float)
        self.length = np.asarray(length, dtype=float)
        self.width = np.asarray(width, dtype=float)
        self.theta = np.asarray(theta, dtype=float)

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(z, z, z, z, z)

    @classmethod
    def from_rects(cls, rects):
        rects = list(rects)
        if not rects:
            return cls.empty()
        return cls([r.center[0] for r in rects], [r.center[1] for r in rects],
                   [r.len for r in rects], [r.wid for r in rects],
                   [r.theta for r in rects])

    def __len__(self):
        return self.cx.size

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return Rect((float(self.cx[i]), float(self.cy[i])), float(self.length[i]),
                        float(self.width[i]), float(self.theta[i]))
        return RectArray(self.cx[i], self.cy[i], self.length[i], self.width[i],
                         self.theta[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def without(self, i):
        keep = np.ones(len(self), dtype=bool)
        keep[i] = False
        return self[keep]

    def to_json(self):
        return [{"center": [float(x), float(y)], "len": float(l), "wid": float(w),
                 "theta": float(t)}
                for x, y, l, w, t in zip(self.cx, self.cy, self.length, self.width,
                                         self.theta)]


def sample_ppp(density, radius, rng):
    """Homogeneous PPP on the disc of ``radius`` centred at the origin."""
    if radius <= 0 or density <= 0:
        return np.zeros((0, 2))
    n = rng.poisson(density * math.pi * radius * radius)
    r = radius * np.sqrt(rng.random(n))
    phi = 2.0 * math.pi * rng.random(n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def sample_blockages(params, radius, rng):
    """Boolean field of rectangles with centres in the disc of ``radius``.

    Length and width are Uniform(0, 2 * mean); orientation Uniform(0, 2 pi].
    """
    centers = sample_ppp(params.lambda_b, radius, rng)
    n = centers.shape[0]
    length = 2.0 * params.mean_len * rng.random(n)
    width = 2.0 * params.mean_wid * rng.random(n)
    theta = 2.0 * math.pi * (1.0 - rng.random(n))
    return RectArray(centers[:, 0], centers[:, 1], length, width, theta)


# --------------------------------------------------------------------------
# Line of sight
# --------------------------------------------------------------------------

def p_los(w_h, db):
    """Probability that a link of horizontal length ``w_h`` is unblocked."""
    w = np.asarray(w_h, dtype=float)
    if np.any(w < 0):
        raise ParamError("horizontal distance must be >= 0")
    out = np.exp(-(db.zeta * w + db.rho))
    return float(out) if out.ndim == 0 else out


def mean_visible_haps(params):
    """Mean number of HAPs with line of sight to the user (whole plane)."""
    db = params.blockage
    if db.zeta == 0:
        raise ParamError("mean visible HAP count diverges without blockages")
    return 2.0 * math.pi * params.lambda_hap * math.exp(-db.rho) / db.zeta ** 2


def los_thinning(points, db, rng, observer=(0.0, 0.0)):
    """Independent Bernoulli visibility with success probability p_los."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    d = np.hypot(pts[:, 0] - observer[0], pts[:, 1] - observer[1])
    return rng.random(d.size) < p_los(d, db)


def _segment_hits(p0, p1, rects):
    """Boolean (n_seg, n_rect) matrix: segment p0[i] -> p1[i] meets rectangle j."""
    n_seg, n_rect = p0.shape[0], len(rects)
    hits = np.zeros((n_seg, n_rect), dtype=bool)
    if n_seg == 0 or n_rect == 0:
        return hits
    # cheap reject: rectangle's circumscribed circle must touch the segment
    d = p1 - p0
    dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)[:, None]
    rx = rects.cx[None, :] - p0[:, 0:1]
    ry = rects.cy[None, :] - p0[:, 1:2]
    t = np.clip((rx * d[:, 0:1] + ry * d[:, 1:2]) / dd, 0.0, 1.0)
    ex = rx - t * d[:, 0:1]
    ey = ry - t * d[:, 1:2]
    r2 = 0.25 * (rects.length ** 2 + rects.width ** 2)
    si, ri = np.nonzero(ex * ex + ey * ey <= r2[None, :])
    if si.size == 0:
        return hits

    c = np.cos(rects.theta[ri])
    s = np.sin(rects.theta[ri])

    def local(p):
        dx = p[si, 0] - rects.cx[ri]
        dy = p[si, 1] - rects.cy[ri]
        return dx * c + dy * s, -dx * s + dy * c

    x0, y0 = local(p0)
    x1, y1 = local(p1)
    hx = 0.5 * rects.length[ri]
    hy = 0.5 * rects.width[ri]
    t_lo = np.zeros_like(x0)
    t_hi = np.ones_like(x0)
    ok = np.ones(x0.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for a0, a1, h in ((x0, x1, hx), (y0, y1, hy)):
            step = a1 - a0
            flat = np.abs(step) < 1e-12
            ok &= ~(flat & (np.abs(a0) > h))
            ta = (-h - a0) / step
            tb = (h - a0) / step
            t_lo = np.maximum(t_lo, np.where(flat, -np.inf, np.minimum(ta, tb)))
            t_hi = np.minimum(t_hi, np.where(flat, np.inf, np.maximum(ta, tb)))
    hits[si, ri] = ok & (t_lo <= t_hi)
    return hits


def los_explicit(points, rects, observer=(0.0, 0.0), chunk=256):
    """True where the projected segment observer -> point crosses no rectangle."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.ones(pts.shape[0], dtype=bool)
    if len(rects) == 0 or pts.shape[0] == 0:
        return out
    obs = np.broadcast_to(np.asarray(observer, dtype=float), (1, 2))
    for i in range(0, pts.shape[0], chunk):
        p1 = pts[i:i + chunk]
        p0 = np.repeat(obs, p1.shape[0], axis=0)
        out[i:i + chunk] = ~_segment_hits(p0, p1, rects).any(axis=1)
    return out


def nearest_visible_explicit(points, rects, observer=(0.0, 0.0), chunk=32):
    """Index of the closest point with explicit line of sight, or None."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    d = np.hypot(pts[:, 0] - observer[0], pts[:, 1] - observer[1])
    order = np.argsort(d, kind="stable")
    for i in range(0, order.size, chunk):
        idx = order[i:i + chunk]
        vis = los_explicit(pts[idx], rects, observer)
        if vis.any():
            return int(idx[np.argmax(vis)])
    return None


def visible(point, link_top_height=None, observer=(0.0, 0.0), rects=None,
            mode="explicit", rng=None, db=None):
    """Visibility of a single link.

    ``mode="thinning"`` draws a Bernoulli with probability p_los of the
    horizontal distance (needs ``rng`` and ``db``); ``mode="explicit"`` tests
    the ground projection against ``rects``. The top height does not enter
    either test: buildings block any link crossing them in projection.
    """
    pt = np.asarray(point, dtype=float).reshape(1, 2)
    if mode == "thinning":
        if rng is None or db is None:
            raise ParamError("thinning mode needs rng and db")
        return bool(los_thinning(pt, db, rng, observer)[0])
    if mode == "explicit":
        if rects is None:
            return True
        if not isinstance(rects, RectArray):
            rects = RectArray.from_rects(rects)
        return bool(los_explicit(pt, rects, observer)[0])
    raise ParamError(f"unknown visibility mode {mode!r}")


@dataclass
class NetworkRealization:
    haps: np.ndarray
    riss: np.ndarray
    rects: RectArray
    hap_visible: np.ndarray
    ris_visible: np.ndarray

    def to_json(self):
        return {
            "haps": self.haps.tolist(),
            "riss": self.riss.tolist(),
            "rects": self.rects.to_json(),
            "hap_visible": [bool(v) for v in self.hap_visible],
            "ris_visible": [bool(v) for v in self.ris_visible],
        }


# --------------------------------------------------------------------------
# Distance distributions
# --------------------------------------------------------------------------

def _blocked_profile(y):
    """(1 - (1 + y) e^-y) / y^2, stable down to y = 0 (limit 1/2)."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = y < 0.05
    ys = y[small]
    # alternating series sum_{k>=2} (-1)^k (k-1) y^(k-2) / k!
    acc = np.zeros_like(ys)
    for k in range(13, 1, -1):
        acc = acc * ys + (-1) ** k * (k - 1) / math.factorial(k)
    out[small] = acc
    yl = y[~small]
    out[~small] = (-np.expm1(-yl) - yl * np.exp(-yl)) / (yl * yl)
    return out


def _visible_area(w, params):
    """U(w) = integral_0^w u e^-(zeta u + rho) du, the LoS-weighted area / 2 pi."""
    db = params.blockage
    w = np.asarray(w, dtype=float)
    return math.exp(-db.rho) * w * w * _blocked_profile(db.zeta * w)


def pdf_whlos(w_h, params):
    """Density of the horizontal distance of a visible HAP inside the window."""
    db = params.blockage
    om = params.omega_h
    w = np.asarray(w_h, dtype=float)
    norm = db.zeta ** 2 / (1.0 - (db.zeta * om + 1.0) * math.exp(-db.zeta * om))
    out = np.where((w >= 0) & (w <= om), norm * w * np.exp(-db.zeta * np.clip(w, 0, None)),
                   0.0)
    return float(out) if out.ndim == 0 else out


def pdf_wg(w_g, params):
    """Density of the horizontal distance to the nearest visible RIS.

    Defective: it integrates to ``ris_exists_mass(params)``.
    """
    db = params.blockage
    w = np.asarray(w_g, dtype=float)
    wc = np.clip(w, 0, None)
    lam = params.lambda_ris
    out = 2.0 * math.pi * lam * wc * np.exp(
        -(db.zeta * wc + db.rho + 2.0 * math.pi * lam * _visible_area(wc, params)))
    out = np.where(w >= 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def cdf_wg(w_g, params):
    w = np.clip(np.asarray(w_g, dtype=float), 0, None)
    out = -np.expm1(-2.0 * math.pi * params.lambda_ris * _visible_area(w, params))
    return float(out) if out.ndim == 0 else out


def ris_exists_mass(params):
    """Probability that at least one RIS is visible from the user."""
    db = params.blockage
    if db.zeta == 0:
        return 1.0
    return -math.expm1(-2.0 * math.pi * params.lambda_ris * math.exp(-db.rho) / db.zeta ** 2)


def sample_wg(params, rng, size=None, n_grid=8192):
    """Inverse-CDF draws of the nearest-visible-RIS distance.

    Draws that land in the missing mass (no visible RIS) come back as NaN.
    """
    mass = ris_exists_mass(params)
    # grid out to where the CDF is within 1e-12 of its limit
    hi = 1.0 / math.sqrt(math.pi * params.lambda_ris * math.exp(-params.blockage.rho))
    while cdf_wg(hi, params) < mass * (1 - 1e-12) and hi < 1e9:
        hi *= 2.0
    grid = np.linspace(0.0, hi, n_grid)
    table = cdf_wg(grid, params)
    u = rng.random(size)
    out = np.interp(u, table, grid)
    out = np.where(u < table[-1], out, np.nan)
    return float(out) if np.ndim(out) == 0 else out


def pdf_wq(w_q, params):
    """Rayleigh density of the horizontal distance to the nearest HAP."""
    lam = params.lambda_hap
    w = np.asarray(w_q, dtype=float)
    out = np.where(w >= 0, 2.0 * math.pi * lam * w * np.exp(-math.pi * lam * w * w), 0.0)
    return float(out) if out.ndim == 0 else out


def cdf_wq(w_q, params):
    w = np.clip(np.asarray(w_q, dtype=float), 0, None)
    out = -np.expm1(-math.pi * params.lambda_hap * w * w)
    return float(out) if out.ndim == 0 else out
