"""Command-line front end.

``rishap analytic|simulate|compare|scene-dump [options]``

Configuration is a flat ``key = value`` text file (``#`` starts a comment).
Later sources override earlier ones: bundled preset, ``--config`` file,
``--set`` overrides, then the dedicated flags (``--trials`` and friends).

Keys
  every :class:`~rishap.geometry.SystemParams` field (``window_radius = none``
  selects the automatic window), plus

  sweep                   one of SWEEP_VARS, or ``none``
  values                  ``a, b, c`` or inclusive ``start:stop:step``
  series.<var>            extra curves; several series keys form a grid
  thresholds_db           SIR thresholds in dB (ignored when sweeping s_th_db)
  trials, seed, mode      Monte Carlo controls
  condition_ris_exists    analytic coverage conditioned on a visible RIS
  nearest_hap_interferes  let a visible serving HAP interfere
  tol_coverage, tol_ks, tol_capacity_se   ``compare`` pass limits

CSV output is long format, one row per (series, sweep value, threshold), with
the columns listed in ``COLUMNS``. Cells that do not apply are empty. Every
file starts with ``#`` comment lines carrying the version and the effective
configuration, so a run can be repeated from its own output.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import __version__, analytic, geometry, montecarlo
from .specfun import DomainError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_COMPARE = 4

SWEEP_VARS = ("s_th_db", "lambda_hap", "lambda_ris", "lambda_b", "h_ris",
              "num_re", "k_factor", "mean_len_wid")
ALIASES = {"k_factor": ("k_q", "k_g", "k_h"), "mean_len_wid": ("mean_len", "mean_wid")}
PRESETS = ("fig2", "fig3", "fig4", "fig5", "fig6")

COLUMNS = (
    "series", "sweep_var", "sweep_value", "s_th_db",
    "an_coverage", "an_capacity", "an_capacity_closed", "alpha_n", "alpha_d", "beta_ratio",
    "mc_trials", "mc_coverage", "mc_coverage_se", "mc_capacity", "mc_capacity_se",
    "mc_isolated_frac", "mc_infinite_frac", "mc_mean_visible_haps",
    "abs_dev", "ks", "status", "flags",
)

_PARAM_FIELDS = tuple(geometry.SystemParams.field_names())
_RUN_KEYS = ("sweep", "values", "thresholds_db", "trials", "seed", "mode",
             "condition_ris_exists", "nearest_hap_interferes",
             "tol_coverage", "tol_ks", "tol_capacity_se")
_NUMERIC_ERRORS = (ArithmeticError, DomainError)


class ConfigError(Exception):
    """Bad configuration; carries where it came from."""

    def __init__(self, message, source=None, line=None, key=None):
        super().__init__(message)
        self.source, self.line, self.key = source, line, key

    def __str__(self):
        where = self.source or "config"
        if self.line is not None:
            where += f":{self.line}"
        if self.key:
            where += f": {self.key}"
        return f"{where}: {self.args[0]}"


@dataclass(frozen=True)
class Entry:
    value: str
    source: str
    line: int | None


@dataclass(frozen=True)
class RunConfig:
    params: geometry.SystemParams = field(default_factory=geometry.SystemParams)
    sweep: str | None = None
    values: tuple = ()
    series: tuple = ()          # ((var, (v1, v2, ...)), ...)
    thresholds_db: tuple = (-20.0, -10.0, 0.0, 10.0, 20.0)
    trials: int = 10_000
    seed: int = 0
    mode: str = "thinning"
    condition_ris_exists: bool = True
    nearest_hap_interferes: bool = False
    tol_coverage: float = 0.03
    tol_ks: float = 0.05
    tol_capacity_se: float = 3.0


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

def read_entries(text, source, entries=None):
    """Collect ``key = value`` lines into ``entries`` (later keys win)."""
    entries = {} if entries is None else entries
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", source, n)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", source, n)
        entries.pop(key, None)
        entries[key] = Entry(value, source, n)
    return entries


def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"not a finite number: {text!r}")
    return v


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def parse_list(text):
    """``a, b, c`` or inclusive ``start:stop:step``."""
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("range must be start:stop:step")
        start, stop, step = (_float(p) for p in parts)
        if step == 0 or (stop - start) / step < 0:
            raise ValueError("range step has the wrong sign or is zero")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(f"{start + k * step:.12g}") for k in range(n))
    return tuple(_float(p) for p in text.split(",") if p.strip())


def apply_var(params, var, value):
    """Set one sweep/series variable on ``params``."""
    if var in ALIASES:
        return params.replace(**{name: value for name in ALIASES[var]})
    if var == "num_re":
        if value != int(value):
            raise geometry.ParamError(f"num_re must be an integer, got {value!r}")
        value = int(value)
    return params.replace(**{var: value})


def build_config(entries):
    """Typed :class:`RunConfig` from raw entries, validating every point."""
    known = set(_PARAM_FIELDS) | set(_RUN_KEYS)
    param_kw, run_kw, series = {}, {}, []

    def fail(key, msg):
        e = entries[key]
        raise ConfigError(msg, e.source, e.line, key)

    for key, e in entries.items():
        if key.startswith("series."):
            var = key[len("series."):]
            if var not in _PARAM_FIELDS and var not in ALIASES:
                fail(key, f"unknown series variable {var!r}")
            try:
                vals = parse_list(e.value)
            except ValueError as exc:
                fail(key, str(exc))
            if not vals:
                fail(key, "series needs at least one value")
            series.append((var, vals))
            continue
        if key not in known:
            fail(key, "unknown key")
        try:
            if key in _PARAM_FIELDS:
                if key == "window_radius":
                    param_kw[key] = None if e.value.lower() == "none" else _float(e.value)
                elif key == "num_re":
                    param_kw[key] = _int(e.value)
                else:
                    param_kw[key] = _float(e.value)
            elif key == "sweep":
                v = e.value.strip()
                if v.lower() == "none":
                    run_kw[key] = None
                elif v not in SWEEP_VARS:
                    raise ValueError(f"sweep must be one of {', '.join(SWEEP_VARS)}")
                else:
                    run_kw[key] = v
            elif key in ("values", "thresholds_db"):
                run_kw[key] = parse_list(e.value)
            elif key in ("trials", "seed"):
                run_kw[key] = _int(e.value)
            elif key == "mode":
                if e.value not in montecarlo.MODES:
                    raise ValueError(f"mode must be one of {montecarlo.MODES}")
                run_kw[key] = e.value
            elif key in ("condition_ris_exists", "nearest_hap_interferes"):
                run_kw[key] = _bool(e.value)
            else:
                run_kw[key] = _float(e.value)
        except (ValueError, geometry.ParamError) as exc:
            fail(key, str(exc))

    try:
        params = geometry.SystemParams(**param_kw)
    except (geometry.ParamError, TypeError) as exc:
        msg = str(exc)
        culprit = next((k for k in reversed(list(param_kw)) if msg.startswith(k)), None)
        if culprit is None and "window_radius" in param_kw:
            culprit = "window_radius"
        if culprit is not None:
            fail(culprit, msg)
        raise ConfigError(msg, key="parameters") from None
    cfg = RunConfig(params=params, series=tuple(series), **run_kw)

    if cfg.trials < 1 and "trials" in entries:
        fail("trials", "must be >= 1")
    if cfg.seed < 0 and "seed" in entries:
        fail("seed", "must be >= 0")
    if cfg.sweep is None and cfg.values:
        fail("values", "values given without a sweep variable")
    if cfg.sweep is not None and not cfg.values:
        if "values" in entries:
            fail("values", "sweep values are empty")
        fail("sweep", "sweep needs a non-empty 'values' list")
    if cfg.sweep != "s_th_db" and not cfg.thresholds_db:
        raise ConfigError("at least one threshold is required", key="thresholds_db")
    for name in ("tol_coverage", "tol_ks", "tol_capacity_se"):
        if not getattr(cfg, name) > 0:
            fail(name, "must be > 0")
    for var, vals in cfg.series:
        if var == cfg.sweep or (cfg.sweep in ALIASES and var in ALIASES[cfg.sweep]):
            fail("series." + var, "series variable clashes with the sweep variable")
    # every grid point must be a valid parameter set
    try:
        for _ in iter_points(cfg):
            pass
    except geometry.ParamError as exc:
        key = "values" if "values" in entries else next(
            (k for k in entries if k.startswith("series.")), "parameters")
        e = entries.get(key)
        raise ConfigError(str(exc), e and e.source, e and e.line, key) from None
    return cfg


def load_preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}",
                          "--preset")
    return resources.files("rishap").joinpath("presets", f"{name}.cfg").read_text()


def _fmt_num(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def dump_config(cfg):
    """Config text that :func:`build_config` parses back to ``cfg``."""
    lines = []
    for name in _PARAM_FIELDS:
        v = getattr(cfg.params, name)
        lines.append(f"{name} = {'none' if v is None else _fmt_num(v)}")
    lines.append(f"sweep = {cfg.sweep or 'none'}")
    if cfg.sweep:
        lines.append("values = " + ", ".join(_fmt_num(v) for v in cfg.values))
    for var, vals in cfg.series:
        lines.append(f"series.{var} = " + ", ".join(_fmt_num(v) for v in vals))
    lines.append("thresholds_db = " + ", ".join(_fmt_num(v) for v in cfg.thresholds_db))
    for name in _RUN_KEYS[3:]:
        v = getattr(cfg, name)
        lines.append(f"{name} = {v if isinstance(v, str) else _fmt_num(v)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

@dataclass
class Point:
    series: str
    sweep_value: float | None
    params: geometry.SystemParams
    thresholds: tuple


def iter_points(cfg):
    """Grid points in output order: series grid outer, sweep values inner."""
    names = [var for var, _ in cfg.series]
    combos = itertools.product(*(vals for _, vals in cfg.series)) if names else [()]
    for combo in combos:
        base = cfg.params
        for var, v in zip(names, combo):
            base = apply_var(base, var, v)
        label = ";".join(f"{var}={v:.12g}" for var, v in zip(names, combo))
        if cfg.sweep is None:
            yield Point(label, None, base, cfg.thresholds_db)
        elif cfg.sweep == "s_th_db":
            yield Point(label, None, base, cfg.values)
        else:
            for v in cfg.values:
                yield Point(label, v, apply_var(base, cfg.sweep, v), cfg.thresholds_db)


@dataclass
class PointResult:
    point: Point
    analytic: analytic.AnalyticPoint | None = None
    sim: montecarlo.SimStats | None = None
    ks: float | None = None
    error: str | None = None


def evaluate_point(point, cfg, run_analytic, run_mc, threads):
    res = PointResult(point)
    if run_analytic:
        try:
            res.analytic = analytic.evaluate(point.params, point.thresholds,
                                             cfg.condition_ris_exists)
        except _NUMERIC_ERRORS as exc:
            res.error = f"analytic: {exc}"
    if run_mc:
        cols = montecarlo.simulate_trials(point.params, cfg.mode, cfg.trials, cfg.seed,
                                          cfg.nearest_hap_interferes, threads)
        res.sim = montecarlo.summarize(cols, point.thresholds, keep_samples=True,
                                       power_ratio=point.params.p_o / point.params.p_i)
        if res.analytic is not None:
            res.ks = montecarlo.ks_statistic(res.sim.sir_samples, res.analytic.dist.cdf)
    return res


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def result_rows(res, cfg, compare):
    """Output rows (dicts over COLUMNS) for one evaluated point."""
    p, a, s = res.point, res.analytic, res.sim
    sweep_var = cfg.sweep or ""
    rows = []
    for t in p.thresholds:
        flags = []
        row = dict.fromkeys(COLUMNS)
        row.update(series=p.series, sweep_var=sweep_var,
                   sweep_value=t if cfg.sweep == "s_th_db" else p.sweep_value,
                   s_th_db=t)
        if a is not None:
            row.update(an_coverage=a.coverage[t], an_capacity=a.capacity.value,
                       an_capacity_closed=a.capacity.closed_form,
                       alpha_n=a.fit.alpha_n, alpha_d=a.fit.alpha_d,
                       beta_ratio=a.fit.beta_n / a.fit.beta_d)
            flags += a.flags
        if s is not None:
            cov, cov_se = s.coverage_at[t]
            row.update(mc_trials=s.trials, mc_coverage=cov, mc_coverage_se=cov_se,
                       mc_capacity=s.mean_capacity, mc_capacity_se=s.capacity_se,
                       mc_isolated_frac=s.isolation_fraction,
                       mc_infinite_frac=s.infinite_sir_fraction,
                       mc_mean_visible_haps=s.mean_visible_haps)
            if s.isolation_fraction > 0:
                flags.append("isolated_trials")
            if s.infinite_sir_fraction > 0:
                flags.append("infinite_sir_floor")
        if res.error:
            flags.append("error=" + res.error.replace(",", " ").replace(";", " "))
            row["status"] = "error"
        elif compare and a is not None and s is not None:
            dev = abs(a.coverage[t] - cov)
            row.update(abs_dev=dev, ks=res.ks)
            ok = True
            if not dev < cfg.tol_coverage:
                flags.append("coverage_fail")
                ok = False
            if not res.ks < cfg.tol_ks:
                flags.append("ks_fail")
                ok = False
            if not abs(a.capacity.value - s.mean_capacity) <= cfg.tol_capacity_se * s.capacity_se:
                flags.append("capacity_fail")
                ok = False
            row["status"] = "pass" if ok else "fail"
        else:
            row["status"] = "ok"
        row["flags"] = ";".join(flags)
        rows.append(row)
    return rows


def _histogram_record(res):
    s, a = res.sim, res.analytic
    edges, dens = s.sir_histogram
    rec = {"series": res.point.series, "sweep_value": res.point.sweep_value,
           "edges": [float(x) for x in edges], "density": [float(x) for x in dens]}
    if a is not None and len(edges) > 1:
        centers = 0.5 * (np.asarray(edges[1:]) + np.asarray(edges[:-1]))
        rec["analytic_pdf"] = [float(x) for x in a.dist.pdf(centers)]
    return rec


def render(results, cfg, command, paths, fmt, compare):
    rows = [r for res in results for r in result_rows(res, cfg, compare)]
    if fmt == "json":
        doc = {
            "tool": "rishap",
            "version": __version__,
            "command": command,
            "paths": paths,
            "config": dump_config(cfg).splitlines(),
            "columns": list(COLUMNS),
            "rows": [{k: (v if not isinstance(v, float) or math.isfinite(v) else _cell(v))
                      for k, v in r.items()} for r in rows],
            "histograms": [_histogram_record(res) for res in results if res.sim is not None],
        }
        return json.dumps(doc, indent=1, default=_cell) + "\n", rows
    buf = io.StringIO()
    buf.write(f"# rishap {__version__}\n# command = {command}\n# paths = {paths}\n")
    for line in dump_config(cfg).splitlines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_cell(r[c]) for c in COLUMNS])
    return buf.getvalue(), rows


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file")
    common.add_argument("--preset", metavar="NAME", help=f"bundled config: {', '.join(PRESETS)}")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="K=V", help="override one config key (repeatable)")
    common.add_argument("--trials", metavar="N")
    common.add_argument("--seed", metavar="N")
    common.add_argument("--mode", choices=montecarlo.MODES)
    common.add_argument("--condition-ris-exists", metavar="BOOL")
    common.add_argument("--nearest-hap-interferes", metavar="BOOL")
    common.add_argument("--out", metavar="PATH", help="write here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker processes for Monte Carlo trials")
    common.add_argument("--print-config", action="store_true",
                        help="print the effective config and exit")

    p = argparse.ArgumentParser(prog="rishap", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"rishap {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analytic", parents=[common], help="closed-form coverage and capacity")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo statistics")
    cmp_ = sub.add_parser("compare", parents=[common], help="analytic vs Monte Carlo")
    cmp_.add_argument("--strict", action="store_true",
                      help="exit 4 if any row fails the tolerances")
    dump = sub.add_parser("scene-dump", parents=[common], help="one sampled scene as JSON")
    dump.add_argument("--trial", type=int, default=0, metavar="I",
                      help="trial index whose scene is dumped")
    return p


def _gather(args):
    entries = {}
    if args.preset:
        read_entries(load_preset(args.preset), f"preset:{args.preset}", entries)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(str(exc), args.config) from None
        read_entries(text, args.config, entries)
    for i, item in enumerate(args.overrides, start=1):
        if "=" not in item:
            raise ConfigError("expected K=V", "--set", i, item)
        k, v = (s.strip() for s in item.split("=", 1))
        entries.pop(k, None)
        entries[k] = Entry(v, "--set", i)
    for flag, key in (("trials", "trials"), ("seed", "seed"), ("mode", "mode"),
                      ("condition_ris_exists", "condition_ris_exists"),
                      ("nearest_hap_interferes", "nearest_hap_interferes")):
        v = getattr(args, flag)
        if v is not None:
            entries.pop(key, None)
            entries[key] = Entry(str(v), "--" + flag.replace("_", "-"), None)
    return build_config(entries)


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def scene_dump(cfg, trial):
    rng = np.random.default_rng([cfg.seed, trial])
    scene = montecarlo.sample_scene(cfg.params, cfg.mode, rng)
    doc = {"tool": "rishap", "version": __version__, "seed": cfg.seed, "trial": trial,
           "mode": cfg.mode, "window_radius": cfg.params.omega_h,
           "params": cfg.params.as_dict()}
    doc.update(scene.to_json())
    return json.dumps(doc) + "\n"


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = _gather(args)
    except ConfigError as exc:
        print(f"rishap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("rishap: config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    if args.command == "scene-dump":
        if args.trial < 0:
            print("rishap: config error: --trial must be >= 0", file=sys.stderr)
            return EXIT_CONFIG
        _emit(scene_dump(cfg, args.trial), args.out)
        return EXIT_OK

    run_analytic = args.command in ("analytic", "compare")
    run_mc = args.command in ("simulate", "compare")
    paths = {"analytic": "analytic", "simulate": "montecarlo", "compare": "both"}[args.command]
    results = [evaluate_point(pt, cfg, run_analytic, run_mc, args.threads)
               for pt in iter_points(cfg)]
    compare = args.command == "compare"
    text, rows = render(results, cfg, args.command, paths, args.format, compare)
    _emit(text, args.out)

    if any(r.error for r in results):
        for r in results:
            if r.error:
                print(f"rishap: numerical failure at series={r.point.series!r} "
                      f"value={r.point.sweep_value}: {r.error}", file=sys.stderr)
        return EXIT_NUMERIC
    if compare and getattr(args, "strict", False) and any(r["status"] == "fail" for r in rows):
        return EXIT_COMPARE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
