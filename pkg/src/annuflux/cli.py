"""Batch command-line front end.

Subcommands: ``eigen`` (eigenvalue tables), ``impulse`` (series response on a
time grid), ``simulate`` (Brownian Monte-Carlo), ``compare`` (series vs
Monte-Carlo agreement report), ``characteristics`` (peak/average/half-time
sweeps).  Runs are driven by a flat key-value config file with dotted section
prefixes, SI units only::

    geometry.d0 = 10e-6
    geometry.D0 = 100e-6
    geometry.r0 = 20e-6
    geometry.D  = 80e-12
    truncation.t_min = 0.1
    truncation.tol   = 1e-8
    mc.n_particles = 100000
    mc.dt    = 1e-4
    mc.t_max = 40
    mc.seed  = 1

Unknown keys are errors (no silent typo tolerance).  Exit codes: 0 success,
2 config parse, 3 physics validation, 4 numerical failure, 5 comparison fail.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, analytic, characteristics, mcsim
from .eigen import ModeSet, _atomic_write, build_modeset, write_table
from .errors import ComparisonFailure, ConfigError, DomainError, NumericalError
from .geometry import ChannelGeometry, Geometry3D

_EXIT_CONFIG = 2
_EXIT_PHYSICS = 3
_EXIT_NUMERICAL = 4
_EXIT_COMPARE = 5

_SCHEMA = {
    "geometry": {"d0", "D0", "r0", "D", "h", "h0"},
    "truncation": {"t_min", "tol", "M"},
    "mc": {"n_particles", "dt", "t_max", "seed", "theta_f", "bin_width"},
    "output": {"format", "dir"},
}


@dataclass
class RunConfig:
    geometry: dict
    truncation: dict
    mc: dict
    output: dict

    @property
    def geom(self) -> ChannelGeometry:
        g = self.geometry
        for key in ("d0", "D0", "r0", "D"):
            if key not in g:
                raise ConfigError(f"config is missing geometry.{key}")
        if "h" in g or "h0" in g:
            if not ("h" in g and "h0" in g):
                raise ConfigError("3-D geometry needs both geometry.h and geometry.h0")
            return Geometry3D(g["d0"], g["D0"], g["r0"], g["D"], h=g["h"], h0=g["h0"])
        return ChannelGeometry(g["d0"], g["D0"], g["r0"], g["D"])

    def mc_config(self, seed_override=None) -> mcsim.McConfig:
        m = self.mc
        for key in ("n_particles", "dt", "t_max", "seed"):
            if key not in m:
                raise ConfigError(f"config is missing mc.{key}")
        return mcsim.McConfig(
            n_particles=int(m["n_particles"]),
            dt=m["dt"],
            t_max=m["t_max"],
            seed=int(seed_override if seed_override is not None else m["seed"]),
            theta_f=m.get("theta_f"),
        )


def _parse_number(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"value for {key} is not a plain number: {text!r} "
                          "(SI units only, no unit suffixes)") from None


def parse_config(path: str) -> RunConfig:
    sections: dict[str, dict] = {name: {} for name in _SCHEMA}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'section.key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if "." not in key:
                raise ConfigError(f"{path}:{lineno}: key {key!r} has no section prefix")
            section, field = key.split(".", 1)
            if section not in _SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown section {section!r}")
            if field not in _SCHEMA[section]:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if field in sections[section]:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            if section == "output":
                sections[section][field] = value
            else:
                sections[section][field] = _parse_number(key, value)
    return RunConfig(geometry=sections["geometry"], truncation=sections["truncation"],
                     mc=sections["mc"], output=sections["output"])


def _out_path(args, cfg: RunConfig | None, name: str) -> str:
    out = args.out or (cfg.output.get("dir") if cfg else None) or "."
    os.makedirs(out, exist_ok=True)
    return os.path.join(out, name)


def _format(args, cfg: RunConfig | None) -> str:
    fmt = args.format or (cfg.output.get("format") if cfg else None) or "csv"
    if fmt not in ("csv", "json"):
        raise ConfigError(f"output format must be csv or json, got {fmt!r}")
    return fmt


def _need_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("this subcommand needs --config <path>")
    return parse_config(args.config)


def _meta_common(cfg: RunConfig | None) -> dict:
    meta = {"version": __version__}
    if cfg is not None:
        meta["config"] = {
            "geometry": cfg.geometry, "truncation": cfg.truncation,
            "mc": cfg.mc, "output": cfg.output,
        }
    return meta


def _certified(cfg: RunConfig, geom: ChannelGeometry, theta_f, cache_dir=None) -> ModeSet:
    tr = cfg.truncation
    for key in ("t_min", "tol"):
        if key not in tr:
            raise ConfigError(f"config is missing truncation.{key}")
    if "M" in tr and tr["M"] > 0:
        trunc = analytic.truncation_for_orders(geom, tr["t_min"], tr["tol"], int(tr["M"]))
        return build_modeset(geom.alpha, trunc.max_order, trunc.n_per_order,
                             cache_dir=cache_dir, certificate=trunc)
    angular = theta_f is not None and theta_f != math.pi
    return analytic.certified_modeset(geom, tr["t_min"], tr["tol"], angular=angular,
                                      cache_dir=cache_dir)


# ---------------------------------------------------------------------------
# subcommands

def cmd_eigen(args) -> int:
    alpha = args.alpha
    if alpha is None:
        raise ConfigError("eigen needs --alpha")
    ms = build_modeset(alpha, args.orders - 1, args.roots)
    path = _out_path(args, None, "eigentable.csv")
    ms.save_csv(path)
    print(f"wrote {path} ({len(ms)} modes, alpha={alpha})")
    if args.table_grid:
        grid_path = _out_path(args, None, "eigentable_grid.txt")
        lines = ["  ".join(["m\\n"] + [f"n={n}" for n in range(1, args.roots + 1)])]
        for m in range(args.orders):
            lines.append("  ".join([f"m={m}"] + [f"{b:.3f}" for b in ms.betas(m)]))
        _atomic_write(grid_path, "\n".join(lines) + "\n")
        print(f"wrote {grid_path}")
    return 0


def _time_grid(args) -> np.ndarray:
    if args.t_stop <= args.t_start or args.t_count < 2:
        raise ConfigError("need t_stop > t_start and t_count >= 2")
    if args.t_log:
        return np.geomspace(args.t_start, args.t_stop, args.t_count)
    return np.linspace(args.t_start, args.t_stop, args.t_count)


def cmd_impulse(args) -> int:
    cfg = _need_config(args)
    geom = cfg.geom
    theta_f = args.theta_f if args.theta_f is not None else cfg.mc.get("theta_f")
    ms = _certified(cfg, geom, theta_f)
    times = _time_grid(args)
    resp = analytic.impulse_response(geom, ms, times, theta_f=theta_f,
                                     meta=_meta_common(cfg))
    fmt = _format(args, cfg)
    if fmt == "csv":
        path = _out_path(args, cfg, "impulse.csv")
        resp.save_csv(path)
        meta_path = _out_path(args, cfg, "impulse.meta.json")
        _atomic_write(meta_path, json.dumps(resp.meta, indent=2) + "\n")
        print(f"wrote {path} and {meta_path}")
    else:
        path = _out_path(args, cfg, "impulse.json")
        resp.save_json(path)
        print(f"wrote {path}")
    return 0


def _run_simulation(cfg: RunConfig, seed_override=None) -> mcsim.McResult:
    geom = cfg.geom
    mc = cfg.mc_config(seed_override)
    if isinstance(geom, Geometry3D):
        return mcsim.simulate_3d(geom, mc)
    return mcsim.simulate_2d(geom, mc)


def cmd_simulate(args) -> int:
    cfg = _need_config(args)
    result = _run_simulation(cfg, args.seed)
    hits_path = _out_path(args, cfg, "hits.csv")
    result.save_hits_csv(hits_path)
    meta = _meta_common(cfg)
    meta.update(result.metadata())
    meta_path = _out_path(args, cfg, "run_meta.json")
    _atomic_write(meta_path, json.dumps(meta, indent=2) + "\n")
    bin_width = cfg.mc.get("bin_width") or result.config.t_max / 200.0
    emp = mcsim.estimate_rate(result, bin_width)
    emp_path = _out_path(args, cfg, "empirical.csv")
    emp.save_csv(emp_path)
    print(f"wrote {hits_path}, {meta_path}, {emp_path} "
          f"({result.n_hits} hits, {result.survivors} survivors)")
    return 0


def compare_runs(geom: ChannelGeometry, modeset: ModeSet, result: mcsim.McResult,
                 bin_width: float, theta_f=None) -> dict:
    """Align the series on the Monte-Carlo bin grid and score the deviation.

    Rates are compared bin-averaged (analytic = cumulative difference over the
    bin), only on bins certified by the mode set; the cumulative is compared
    at the horizon.
    """
    emp = mcsim.estimate_rate(result, bin_width, theta_f=theta_f)
    edges = np.concatenate([emp.times - bin_width / 2.0, [emp.times[-1] + bin_width / 2.0]])
    edges = np.maximum(edges, 0.0)
    cum_edges = analytic.cumulative_hits(geom, modeset, edges, theta_f=theta_f)
    ana_rate = np.diff(cum_edges) / bin_width
    t_min = modeset.certificate.t_min if modeset.certificate else 0.0
    compared = edges[:-1] >= t_min
    peak = float(np.max(ana_rate[compared]))
    dev = np.abs(emp.rate - ana_rate)
    max_dev = float(np.max(dev[compared]))
    t_end = float(edges[-1])
    cum_ana_end = float(analytic.cumulative_hits(geom, modeset, t_end, theta_f=theta_f))
    cum_emp_end = float(emp.cumulative[-1])
    return {
        "bin_width": bin_width,
        "theta_f": theta_f,
        "bins": int(emp.times.size),
        "bins_compared": int(np.sum(compared)),
        "analytic_peak": peak,
        "max_rate_deviation": max_dev,
        "max_rate_deviation_over_peak": max_dev / peak,
        "cumulative_analytic_end": cum_ana_end,
        "cumulative_empirical_end": cum_emp_end,
        "cumulative_deviation": abs(cum_ana_end - cum_emp_end),
        "bin_centers": emp.times.tolist(),
        "empirical_rate": emp.rate.tolist(),
        "analytic_rate": ana_rate.tolist(),
        "bin_compared": compared.tolist(),
    }


def cmd_compare(args) -> int:
    cfg = _need_config(args)
    geom = cfg.geom
    theta_f = args.theta_f if args.theta_f is not None else cfg.mc.get("theta_f")
    ms = _certified(cfg, geom, theta_f)
    result = _run_simulation(cfg, args.seed)
    bin_width = args.bin_width or cfg.mc.get("bin_width") or result.config.t_max / 200.0
    report = compare_runs(geom.plane if isinstance(geom, Geometry3D) else geom,
                          ms, result, bin_width, theta_f=theta_f)
    threshold = args.threshold
    passed = (report["max_rate_deviation_over_peak"] <= threshold
              and report["cumulative_deviation"] <= threshold)
    report["threshold"] = threshold
    report["passed"] = passed
    report.update(_meta_common(cfg))
    report["modeset_hash"] = ms.content_hash()
    path = _out_path(args, cfg, "compare.json")
    table = ["t,empirical_rate,analytic_rate,compared"]
    for t, er, ar, cmp_ in zip(report["bin_centers"], report["empirical_rate"],
                               report["analytic_rate"], report["bin_compared"]):
        table.append(f"{t:.17g},{er:.17g},{ar:.17g},{int(cmp_)}")
    _atomic_write(_out_path(args, cfg, "compare.csv"), "\n".join(table) + "\n")
    _atomic_write(path, json.dumps(report, indent=2) + "\n")
    print(f"max rate deviation {report['max_rate_deviation_over_peak']:.3%} of peak; "
          f"cumulative deviation {report['cumulative_deviation']:.4f}; "
          f"{'PASS' if passed else 'FAIL'} at threshold {threshold:.3%}")
    if not passed:
        raise ComparisonFailure(f"deviation exceeded threshold {threshold}")
    return 0


def _parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise ConfigError("grid must be start:stop:count or start:stop:count:log")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if len(parts) == 4:
        if parts[3] != "log":
            raise ConfigError(f"unknown grid spacing {parts[3]!r}")
        return np.geomspace(lo, hi, count)
    return np.linspace(lo, hi, count)


def cmd_characteristics(args) -> int:
    cfg = _need_config(args)
    geom = cfg.geom
    r0_values = _parse_grid(args.r0_grid) if args.r0_grid else np.array([geom.r0])
    alphas = [float(a) for a in args.alphas.split(",")] if args.alphas else [geom.alpha]
    tol = cfg.truncation.get("tol", 1e-8)
    points = characteristics.sweep(geom, r0_values, alphas, tol=tol)
    path = _out_path(args, cfg, "sweep.csv")
    characteristics.save_sweep_csv(path, points)
    meta = _meta_common(cfg)
    meta["points"] = [dataclasses.asdict(p) for p in points]
    meta["slopes"] = {}
    for alpha in alphas:
        rows = [p for p in points if p.alpha == alpha and p.error is None]
        d0 = alpha * geom.D0
        lc = geom.D0 - d0
        dist = [p.r0 - d0 for p in rows]
        taus = [p.tau_peak for p in rows]
        entry: dict = {"points_ok": len(rows)}
        try:
            entry["near_slope"] = characteristics.fit_near_slope(dist, taus, lc)
            entry["transition_over_lc"] = characteristics.detect_transition(dist, taus, lc)
        except (NumericalError, DomainError) as exc:
            entry["note"] = str(exc)
        meta["slopes"][f"{alpha:g}"] = entry
    meta_path = _out_path(args, cfg, "sweep_meta.json")
    _atomic_write(meta_path, json.dumps(meta, indent=2) + "\n")
    bad = [p for p in points if p.error]
    print(f"wrote {path} ({len(points)} points, {len(bad)} failed) and {meta_path}")
    for p in bad:
        print(f"  failed point alpha={p.alpha} r0={p.r0}: {p.error}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="annuflux",
                                     description="Annular diffusion channel toolkit")
    parser.add_argument("--config", help="flat key-value run configuration file")
    parser.add_argument("--out", help="output directory (default '.')")
    parser.add_argument("--seed", type=int, help="override mc.seed")
    parser.add_argument("--threads", type=int, help="worker thread count for simulations")
    parser.add_argument("--format", choices=["csv", "json"], help="numeric table format")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", help="write an eigenvalue table")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--orders", type=int, default=1, help="number of angular orders (m = 0..orders-1)")
    p.add_argument("--roots", type=int, default=1, help="radial roots per order")
    p.add_argument("--table-grid", action="store_true",
                   help="also write a 3-decimal m-by-n grid for diffing")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("impulse", help="series response on a time grid")
    p.add_argument("--theta-f", type=float, help="counting half-angle (rad)")
    p.add_argument("--t-start", type=float, required=True)
    p.add_argument("--t-stop", type=float, required=True)
    p.add_argument("--t-count", type=int, default=200)
    p.add_argument("--t-log", action="store_true")
    p.set_defaults(func=cmd_impulse)

    p = sub.add_parser("simulate", help="Brownian Monte-Carlo run")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="series vs Monte-Carlo agreement report")
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--bin-width", type=float)
    p.add_argument("--theta-f", type=float)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("characteristics", help="characteristic-time sweep")
    p.add_argument("--r0-grid", help="start:stop:count[:log] in metres")
    p.add_argument("--alphas", help="comma-separated aspect ratios")
    p.set_defaults(func=cmd_characteristics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        import numba

        numba.set_num_threads(max(1, args.threads))
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except DomainError as exc:
        print(f"physics validation error: {exc}", file=sys.stderr)
        return _EXIT_PHYSICS
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL
    except ComparisonFailure as exc:
        print(f"comparison failed: {exc}", file=sys.stderr)
        return _EXIT_COMPARE


if __name__ == "__main__":
    sys.exit(main())
