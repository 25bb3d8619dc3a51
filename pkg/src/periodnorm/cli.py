"""Command-line front end: ``analyze``, ``sweep``, ``verify`` and ``list``.

Settings come from a JSON config file (``--config`` or the file named by
``$PERIODNORM_CONFIG``); command-line flags override config keys.  Config
keys::

    system        builtin name, or {"H": ...} / {"P": ..., "Q": ...} with
                  optional "kappa", "center": [x, y], "name"
    routes        "a,b,c" or a list of route names
    h_range       [lo, hi]            levels      int >= 2
    spacing       "linear" | "geometric"
    rtol, atol, ret_radius, consistency_abs, consistency_rel   positive floats
    normalizer    "auto" | "gradient" | "kappa" | "separable" | "zeta:<expr in h>"
    transversal   "perp" | "normalizer"
    out, format ("csv" | "json" | "both"), workers, seed, samples
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional

from .errors import (ConfigError, EmptySampleError, IntegrationError, LevelError, ParseError,
                     PeriodNormError)
from .fields import (BUILTIN_DESCRIPTIONS, ExprScalarField, ExprVectorField, HamiltonianField, Point,
                     ReparametrizedField, SystemDef, builtin_names, builtin_system)
from .period import (AnnulusScan, PeriodOptions, analyze_cycle, analyze_levels, classify, critical_cycles,
                     level_grid, parse_routes)
from .verify import DEFAULT_BUILTINS, run_checks

SCHEMA_VERSION = 1
CONFIG_ENV = "PERIODNORM_CONFIG"
CSV_COLUMNS = ("level", "T", "tprime_mu", "tprime_etabeta", "tprime_fd", "max_deviation", "flags")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NOT_PERIODIC = 3
EXIT_INCONSISTENT = 4
EXIT_PARTIAL = 5

log = logging.getLogger("periodnorm")


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    system: Any = None
    routes: tuple = ("mu", "etabeta", "fd")
    h_range: Optional[tuple] = None
    levels: int = 16
    spacing: str = "linear"
    rtol: float = 1e-10
    atol: float = 1e-12
    ret_radius: Optional[float] = None
    consistency_abs: float = 1e-5
    consistency_rel: float = 1e-3
    normalizer: str = "auto"
    transversal: str = "perp"
    out: Optional[str] = None
    format: str = "csv"
    workers: int = 1
    seed: int = 0
    samples: int = 200

    def period_options(self) -> PeriodOptions:
        return PeriodOptions(rtol=self.rtol, atol=self.atol, ret_radius=self.ret_radius,
                             consistency_abs=self.consistency_abs, consistency_rel=self.consistency_rel,
                             normalizer=self.normalizer, transversal=self.transversal)


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def load_config(path: Optional[str]) -> dict:
    """Config dict from ``path`` or ``$PERIODNORM_CONFIG``; empty when neither is set."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def _parse_range(text) -> tuple[float, float]:
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(":")
    if len(parts) != 2:
        raise ConfigError(f"H range must be lo:hi, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ConfigError(f"bad H range {text!r}") from exc
    if not hi > lo:
        raise ConfigError(f"H range {text!r} must be increasing")
    return lo, hi


def _parse_point(text) -> Point:
    parts = list(text) if isinstance(text, (list, tuple)) else str(text).split(",")
    if len(parts) != 2:
        raise ConfigError(f"point must be x,y, got {text!r}")
    try:
        return Point(float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise ConfigError(f"bad point {text!r}") from exc


def split_pair(text: str) -> tuple[str, str]:
    """``"(P, Q)"`` -> ``("P", "Q")``, splitting at the top-level comma."""
    s = text.strip()
    if s.startswith("(") and s.endswith(")"):
        s = s[1:-1]
    depth = 0
    for i, c in enumerate(s):
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        elif c == "," and depth == 0:
            return s[:i].strip(), s[i + 1:].strip()
    raise ConfigError(f"expected a pair (P, Q), got {text!r}")


def build_config(args: argparse.Namespace) -> RunConfig:
    data = load_config(getattr(args, "config", None))
    inline = {k: getattr(args, k, None) for k in ("H", "P", "Q", "kappa", "center")}
    if any(v is not None for v in inline.values()):
        data["system"] = {k: v for k, v in inline.items() if v is not None}
    for key in ("system", "routes", "h_range", "levels", "spacing", "rtol", "atol", "ret_radius",
                "normalizer", "transversal", "out", "format", "workers", "seed", "samples"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    cfg = RunConfig(**{k: v for k, v in data.items() if k in _CONFIG_KEYS})
    try:
        for name in ("rtol", "atol", "consistency_abs", "consistency_rel"):
            setattr(cfg, name, float(getattr(cfg, name)))
        for name in ("levels", "workers", "seed", "samples"):
            setattr(cfg, name, int(getattr(cfg, name)))
        if cfg.ret_radius is not None:
            cfg.ret_radius = float(cfg.ret_radius)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric setting: {exc}") from exc
    try:
        cfg.routes = parse_routes(cfg.routes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.h_range is not None:
        cfg.h_range = _parse_range(cfg.h_range)
    for name in ("rtol", "atol", "consistency_abs", "consistency_rel"):
        if not float(getattr(cfg, name)) > 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.ret_radius is not None and not cfg.ret_radius > 0:
        raise ConfigError("ret_radius must be positive")
    if int(cfg.levels) < 2:
        raise ConfigError("levels must be at least 2")
    if cfg.format not in ("csv", "json", "both"):
        raise ConfigError(f"format must be csv, json or both, not {cfg.format!r}")
    if cfg.spacing not in ("linear", "geometric"):
        raise ConfigError(f"spacing must be linear or geometric, not {cfg.spacing!r}")
    if int(cfg.workers) < 1:
        raise ConfigError("workers must be at least 1")
    return cfg


def resolve_system(entry) -> SystemDef:
    """A SystemDef from a builtin name or an inline definition dict."""
    if entry is None:
        raise ConfigError("no system given (use --system, --H or --P/--Q)")
    try:
        if isinstance(entry, str):
            return builtin_system(entry)
        if not isinstance(entry, dict):
            raise ConfigError("system must be a builtin name or an object")
        has_h = entry.get("H") is not None
        has_pq = entry.get("P") is not None or entry.get("Q") is not None
        if has_h == has_pq:
            raise ConfigError("inline system needs exactly one of H or the pair P, Q")
        center = _parse_point(entry["center"]) if entry.get("center") is not None else Point(0.0, 0.0)
        kappa = ExprScalarField(entry["kappa"]) if entry.get("kappa") else None
        name = entry.get("name", "inline")
        if has_h:
            H = ExprScalarField(entry["H"])
            if kappa is None:
                return SystemDef(name=name, V=HamiltonianField(H), H=H, center_hint=center,
                                 hamiltonian=True)
            return SystemDef(name=name, V=ReparametrizedField(H, kappa), H=H, kappa=kappa,
                             center_hint=center)
        if entry.get("P") is None or entry.get("Q") is None:
            raise ConfigError("inline system needs both P and Q")
        return SystemDef(name=name, V=ExprVectorField(entry["P"], entry["Q"]), kappa=kappa,
                         center_hint=center)
    except ParseError as exc:
        raise ConfigError(f"bad expression: {exc}") from exc
    except PeriodNormError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# serialization

def format_float(v: float) -> str:
    return format(v, ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits; non-finite floats become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "__float__"):
        return to_json(float(obj), indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format_float(v) if math.isfinite(v) else "nan"
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return str(v)


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([_cell(r.level), _cell(r.T), _cell(r.tprime_mu), _cell(r.tprime_etabeta),
                    _cell(r.tprime_fd), _cell(r.max_deviation), _cell(r.flags)])
    return buf.getvalue()


def _options_dict(cfg: RunConfig) -> dict:
    return asdict(cfg.period_options())


def scan_to_dict(scan: AnnulusScan, cfg: RunConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "sweep",
        "system": scan.system,
        "routes": list(scan.routes),
        "h_range": list(cfg.h_range),
        "options": _options_dict(cfg),
        "classification": scan.classification,
        "critical_levels": [{"level": h, "half_width": w} for h, w in scan.critical_levels],
        "levels": [r.to_dict() for r in scan.reports],
    }


def _output_paths(out: Optional[str], fmt: str) -> dict:
    if out is None:
        return {}
    p = Path(out)
    if fmt == "both":
        return {"csv": p.with_suffix(".csv"), "json": p.with_suffix(".json")}
    return {fmt: p}


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _emit(cfg: RunConfig, csv_text: Optional[str], json_text: str) -> None:
    paths = _output_paths(cfg.out, cfg.format)
    if not paths:
        if cfg.format in ("csv", "both") and csv_text is not None:
            sys.stdout.write(csv_text)
        if cfg.format in ("json", "both"):
            sys.stdout.write(json_text + "\n")
        return
    if "csv" in paths and csv_text is not None:
        _write(paths["csv"], csv_text)
    if "json" in paths:
        _write(paths["json"], json_text + "\n")
    for p in paths.values():
        print(f"wrote {p}", file=sys.stderr)


# ---------------------------------------------------------------------------
# commands

def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def report_table(rep) -> str:
    rows = [("level H", rep.level), ("anchor", rep.anchor and ", ".join(f"{c:.12g}" for c in rep.anchor)),
            ("T", rep.T), ("T' (mu)", rep.tprime_mu), ("T' (etabeta)", rep.tprime_etabeta),
            ("T' (fd)", rep.tprime_fd), ("max deviation", rep.max_deviation),
            ("consistent", rep.consistent), ("flags", ", ".join(rep.flags) or "-")]
    for k in sorted(rep.diagnostics):
        rows.append((k, rep.diagnostics[k]))
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {_fmt(v)}" for k, v in rows)


def cmd_analyze(cfg: RunConfig, point) -> int:
    system = resolve_system(cfg.system)
    if point is None:
        raise ConfigError("analyze needs --point x,y")
    point = _parse_point(point)
    try:
        rep = analyze_cycle(system, point, cfg.routes, cfg.period_options())
    except (IntegrationError, LevelError) as exc:
        print(f"error: no periodic orbit through {tuple(point)}: {exc}", file=sys.stderr)
        return EXIT_NOT_PERIODIC
    print(report_table(rep))
    if cfg.out is not None:
        doc = {"schema_version": SCHEMA_VERSION, "command": "analyze", "system": system.name,
               "routes": list(cfg.routes), "options": _options_dict(cfg), "report": rep.to_dict()}
        _emit(cfg, reports_to_csv([rep]), to_json(doc))
    if not rep.consistent:
        print("error: routes disagree beyond tolerance", file=sys.stderr)
        return EXIT_INCONSISTENT
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    system = resolve_system(cfg.system)
    h_range = cfg.h_range or system.annulus_hint
    if h_range is None:
        raise ConfigError("sweep needs --h-range for this system")
    cfg = replace(cfg, h_range=tuple(h_range))
    opts = cfg.period_options()
    levels = level_grid(cfg.h_range[0], cfg.h_range[1], int(cfg.levels), cfg.spacing)
    reports = analyze_levels(system, levels, cfg.routes, opts, workers=int(cfg.workers))
    scan = AnnulusScan(system.name, reports, "undetermined", routes=cfg.routes, options=opts,
                       system_def=system)
    try:
        scan.classification = classify(reports, opts.iso_tol)
        scan.critical_levels = critical_cycles(scan)
    except PeriodNormError as exc:
        print(f"error: {exc}", file=sys.stderr)
    _emit(cfg, reports_to_csv(scan.reports), to_json(scan_to_dict(scan, cfg)))
    print(f"classification: {scan.classification}", file=sys.stderr)
    for h, w in scan.critical_levels:
        print(f"critical level: {h:.10g} +/- {w:.1e}", file=sys.stderr)
    if scan.failed:
        print(f"error: {len(scan.failed)} of {len(scan.reports)} levels failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _verify_system(job):
    name_or_entry, samples, seed, normalizer = job
    system = resolve_system(name_or_entry)
    W = None
    if normalizer:
        try:
            W = ExprVectorField(*split_pair(normalizer))
        except ParseError as exc:
            raise ConfigError(f"bad normalizer: {exc}") from exc
    try:
        return run_checks(system, n=int(samples), seed=int(seed), normalizer=W)
    except EmptySampleError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_verify(cfg: RunConfig, all_builtins: bool = False, normalizer: Optional[str] = None) -> int:
    targets = list(DEFAULT_BUILTINS) if all_builtins else [cfg.system]
    if not all_builtins:
        resolve_system(cfg.system)  # fail early with a config error
    jobs = [(t, cfg.samples, cfg.seed, normalizer) for t in targets]
    if int(cfg.workers) > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=int(cfg.workers)) as pool:
            batches = list(pool.map(_verify_system, jobs))
    else:
        batches = [_verify_system(j) for j in jobs]
    reports = [r for batch in batches for r in batch]
    for r in reports:
        print(r.summary())
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)} passed, {len(failed)} failed")
    if cfg.out is not None:
        doc = {"schema_version": SCHEMA_VERSION, "command": "verify", "seed": int(cfg.seed),
               "passed": not failed, "reports": [r.to_dict() for r in reports]}
        json_cfg = replace(cfg, format="json") if cfg.format == "csv" else cfg
        _emit(json_cfg, None, to_json(doc))
    return EXIT_VERIFY_FAILED if failed else EXIT_OK


def cmd_list() -> int:
    names = builtin_names()
    width = max(len(n) for n in names)
    for n in names:
        print(f"{n:<{width}}  {BUILTIN_DESCRIPTIONS[n]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("system")
    g.add_argument("--system", help="builtin name, e.g. harmonic or 'rotational:2+(x^2+y^2)'")
    g.add_argument("--H", help="inline first integral H(x,y); V is its Hamiltonian field")
    g.add_argument("--P", help="inline x-component of V")
    g.add_argument("--Q", help="inline y-component of V")
    g.add_argument("--kappa", help="reciprocal integrating factor (with --H: V = kappa * V_H)")
    g.add_argument("--center", help="center location x,y for inline systems")
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    p.add_argument("--routes", help="comma-separated routes: a|mu, b|etabeta, c|fd")
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)
    p.add_argument("--ret-radius", dest="ret_radius", type=float)
    p.add_argument("--normalizer", help="auto, gradient, kappa, separable or zeta:<expr in h>")
    p.add_argument("--transversal", choices=("perp", "normalizer"))
    p.add_argument("--out", help="output path (suffix replaced per format when --format both)")
    p.add_argument("--format", choices=("csv", "json", "both"))
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="periodnorm",
                                     description="Period function derivatives of planar centers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="period and T' of the cycle through a point")
    _add_common(p)
    p.add_argument("--point", help="x,y on the cycle")

    p = sub.add_parser("sweep", help="scan levels across a period annulus")
    _add_common(p)
    p.add_argument("--h-range", dest="h_range", help="lo:hi")
    p.add_argument("--levels", type=int)
    p.add_argument("--spacing", choices=("linear", "geometric"))

    p = sub.add_parser("verify", help="numerical identity checks")
    _add_common(p)
    p.add_argument("--all-builtins", action="store_true")
    p.add_argument("--samples", type=int, help="sample points per check")

    sub.add_parser("list", help="list builtin systems")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command == "list":
        return cmd_list()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            normalizer = args.normalizer if args.normalizer and args.normalizer.lstrip().startswith("(") else None
            if normalizer is not None:
                args.normalizer = None
            cfg = build_config(args)
            return cmd_verify(cfg, args.all_builtins, normalizer)
        cfg = build_config(args)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.point)
        return cmd_sweep(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
