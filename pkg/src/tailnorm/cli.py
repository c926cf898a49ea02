"""Command-line entry point: ``tailnorm <command> [--config FILE] [overrides]``.

Every command reads an optional JSON config; flags override its keys.
Results go to ``--out`` (default stdout) as JSON or CSV.  Exit status is 2
for invalid input, 1 when a requested assertion fails or is inconclusive,
and 0 otherwise.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Mapping

import numpy as np

from .bphi import PhiFunction, bphi_norm, bphi_tail_bound, lambda_grid
from .conjugate import fenchel_moreau_check, sample_function
from .counterexamples import DEFAULT_SUITE, SCENARIOS, dumps, fmt, run_scenario
from .errors import DivergenceError, InputError, TailNormError
from .gls import PsiFunction, gls_norm_of_tail, gls_tail_bound, p_grid
from .moments import NEAR_CRITICAL, natural_psi
from .tails import TailFunction, lorentz_quasinorm

COMMANDS = ("conjugate", "moments", "gls-norm", "bphi-norm", "norm", "tail-bound", "lorentz",
            "counterexample", "report")
THREADS_ENV = "TAILNORM_THREADS"


class UsageError(Exception):
    """Bad configuration; reported with exit status 2."""


# ---------------------------------------------------------------------------
# config plumbing


def _load_json(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what}: malformed JSON ({exc.msg} at line {exc.lineno} column {exc.colno})") from None


def load_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = _load_json(fh.read(), f"invalid config {args.config}")
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
        if not isinstance(cfg, dict):
            raise UsageError("invalid config: top level must be a JSON object")
    for key in ("tail", "psi", "phi", "reference"):
        raw = getattr(args, key, None)
        if raw is not None:
            cfg[key] = _load_json(raw, f"invalid family descriptor ({key})")
    if args.scenario is not None:
        cfg["scenario"] = args.scenario
    for item in args.param or []:
        if "=" not in item:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            value = json.loads(v)
        except json.JSONDecodeError:
            value = v
        cfg.setdefault("params", {})[k] = value
    for key in ("grid_points", "levels", "tolerance"):
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    if int(cfg.get("grid_points", 40)) < 2:
        raise UsageError("grid_points must be at least 2")
    if int(cfg.get("levels", 3)) < 1:
        raise UsageError("levels must be positive")
    if float(cfg.get("tolerance", 0.05)) <= 0:
        raise UsageError("tolerance must be positive")
    return cfg


def _descriptor(cfg: Mapping, key: str, builder):
    if key not in cfg:
        raise UsageError(f"invalid family descriptor: config is missing '{key}'")
    d = cfg[key]
    try:
        if not isinstance(d, Mapping) or "family" not in d:
            raise InputError("expected an object with a 'family' field")
        return builder(d)
    except (InputError, KeyError, TypeError, ValueError) as exc:
        msg = str(exc).removeprefix("invalid family descriptor: ")
        raise UsageError(f"invalid family descriptor ({key}): {msg}") from None


def _tail(cfg, key="tail") -> TailFunction:
    return _descriptor(cfg, key, TailFunction.from_dict)


def _psi(cfg) -> PsiFunction:
    return _descriptor(cfg, "psi", lambda d: PsiFunction(d["family"], dict(d.get("params") or {})))


def _phi(cfg) -> PhiFunction:
    return _descriptor(cfg, "phi", lambda d: PhiFunction(d["family"], dict(d.get("params") or {})))


def _grid(cfg, key, default) -> np.ndarray:
    """A grid given as a list or as ``{"start", "stop", "num", "spacing"}``."""
    g = cfg.get(key)
    if g is None:
        return np.asarray(default, dtype=float)
    try:
        if isinstance(g, Mapping):
            start, stop, num = float(g["start"]), float(g["stop"]), int(g.get("num", 51))
            if g.get("spacing", "linear") == "log":
                return np.geomspace(start, stop, num)
            return np.linspace(start, stop, num)
        xs = np.asarray(g, dtype=float)
    except (KeyError, TypeError, ValueError):
        raise UsageError(f"invalid grid '{key}': give a list or start/stop/num") from None
    if xs.ndim != 1 or len(xs) == 0:
        raise UsageError(f"invalid grid '{key}': must be a nonempty list")
    return xs


def _points(cfg):
    return int(cfg.get("grid_points", 40))


def _levels(cfg):
    return int(cfg.get("levels", 3))


# ---------------------------------------------------------------------------
# output


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating)) else str(v) for v in r])
    return buf.getvalue()


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_conjugate(cfg, args) -> int:
    xs = _grid(cfg, "x", np.linspace(0.0, 5.0, 51))
    if "phi" in cfg:
        phi = _phi(cfg)
        f, dom = phi, (-phi.lambda0, phi.lambda0)
        values = [phi.conjugate(float(x)) for x in xs]
        top = min(5.0, 0.9 * phi.lambda0)
        probe = np.linspace(-top, top, 21)
    elif "psi" in cfg:
        psi = _psi(cfg)
        f, dom = psi.h, (1.0, psi.b)
        values = [psi.h_star(float(x)) for x in xs]
        top = min(50.0, 1.0 + 0.9 * (psi.b - 1.0))
        probe = np.linspace(1.0, top, 21)
    else:
        raise UsageError("invalid family descriptor: conjugate needs 'phi' or 'psi'")
    dev = fenchel_moreau_check(sample_function(f, dom, probe))
    if args.format == "csv":
        _emit(args, _csv(["x", "f_star"], zip(xs, values)))
        sys.stderr.write(f"fenchel_moreau_deviation,{fmt(dev)}\n")
    else:
        _emit(args, dumps({"x": xs, "f_star": values, "fenchel_moreau_deviation": dev}))
    return 0


def cmd_moments(cfg, args) -> int:
    tail = _tail(cfg)
    crit = tail.critical_p
    n = _points(cfg) * _levels(cfg)
    if math.isfinite(crit):
        default = p_grid(crit, levels=_levels(cfg), points=_points(cfg))
        default = default[default <= crit - NEAR_CRITICAL]
    else:
        default = np.geomspace(1.0, 100.0, n)
    ps = _grid(cfg, "p", default)
    curve = natural_psi(tail, ps)
    if args.format == "csv":
        _emit(args, curve.to_csv())
    else:
        _emit(args, dumps({"tail": tail.to_dict(), "p": curve.p, "moment": curve.values,
                           "err": curve.errors}))
    return 0


def _norm_json(args, tail, space_key, space, est) -> int:
    out = {"tail": tail.to_dict(), space_key: space.to_dict(), **est.to_dict()}
    if args.format == "csv":
        rows = [(k, est.trace[k]) for k in range(len(est.trace))]
        _emit(args, _csv(["level", "value"], rows))
    else:
        _emit(args, dumps(out))
    return 0


def cmd_gls_norm(cfg, args) -> int:
    tail, psi = _tail(cfg), _psi(cfg)
    est = gls_norm_of_tail(tail, psi, levels=_levels(cfg), points=_points(cfg))
    return _norm_json(args, tail, "psi", psi, est)


def cmd_bphi_norm(cfg, args) -> int:
    tail, phi = _tail(cfg), _phi(cfg)
    lam = _grid(cfg, "lambda", lambda_grid(phi, levels=_levels(cfg), points=_points(cfg)))
    kw = {"rel_tol": float(cfg["tolerance"])} if "tolerance" in cfg else {}
    est = bphi_norm(tail, phi, lam, levels=_levels(cfg), **kw)
    return _norm_json(args, tail, "phi", phi, est)


def cmd_norm(cfg, args) -> int:
    if ("psi" in cfg) == ("phi" in cfg):
        raise UsageError("invalid family descriptor: norm needs exactly one of 'psi' or 'phi'")
    return cmd_gls_norm(cfg, args) if "psi" in cfg else cmd_bphi_norm(cfg, args)


def cmd_tail_bound(cfg, args) -> int:
    xs = _grid(cfg, "x", np.geomspace(1e-2, 1e2, 81))
    if "psi" in cfg:
        S = gls_tail_bound(_psi(cfg), float(cfg.get("V", 1.0)))
    elif "phi" in cfg:
        S = bphi_tail_bound(_phi(cfg), float(cfg.get("K", 1.0)))
    else:
        raise UsageError("invalid family descriptor: tail-bound needs 'psi' or 'phi'")
    logs = [S.log_tail(float(x)) for x in xs]
    vals = [math.exp(v) for v in logs]
    if args.format == "csv":
        _emit(args, _csv(["x", "S", "log_S"], zip(xs, vals, logs)))
    else:
        _emit(args, dumps({"bound": S.to_dict(), "x": xs, "S": vals, "log_S": logs}))
    return 0


def cmd_lorentz(cfg, args) -> int:
    tail, ref = _tail(cfg), _tail(cfg, "reference")
    x = cfg.get("x")
    est = lorentz_quasinorm(tail, ref, None if x is None else _grid(cfg, "x", []),
                            levels=_levels(cfg), bilateral=bool(cfg.get("bilateral", False)))
    out = {"tail": tail.to_dict(), "reference": ref.to_dict(), **est.to_dict()}
    _emit(args, dumps(out) if args.format == "json" else
          _csv(["level", "value"], enumerate(est.trace)))
    return 0


def _scenario_kw(cfg):
    kw = {"points": _points(cfg), "levels": _levels(cfg)}
    if "tolerance" in cfg:
        kw["tolerance"] = float(cfg["tolerance"])
    return kw


def cmd_counterexample(cfg, args) -> int:
    scenario = cfg.get("scenario")
    if scenario not in SCENARIOS:
        raise UsageError(f"scenario must be one of {', '.join(SCENARIOS)}, got {scenario!r}")
    rep = run_scenario(scenario, cfg.get("params", {}), **_scenario_kw(cfg))
    _emit(args, rep.to_json() if args.format == "json" else rep.curves_csv())
    return 0 if rep.passed else 1


def _run_one(item):
    scenario, params, kw = item
    return run_scenario(scenario, params, **kw).to_dict()


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def cmd_report(cfg, args) -> int:
    suite = cfg.get("suite")
    if suite is None:
        items = [(s, p) for s, p in DEFAULT_SUITE]
    else:
        try:
            items = [(e["scenario"], e.get("params", {})) for e in suite]
        except (TypeError, KeyError):
            raise UsageError("invalid config: 'suite' must list objects with 'scenario'") from None
    for s, _ in items:
        if s not in SCENARIOS:
            raise UsageError(f"scenario must be one of {', '.join(SCENARIOS)}, got {s!r}")
    kw = _scenario_kw(cfg)
    work = [(s, dict(p), kw) for s, p in items]
    n = _threads()
    if n > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            reports = list(pool.map(_run_one, work))
    else:
        reports = [_run_one(w) for w in work]
    passed = all(r["status"] == "pass" for r in reports)
    if args.format == "csv":
        rows = [(r["scenario"], json.dumps(r["parameters"], sort_keys=True), r["status"]) for r in reports]
        _emit(args, _csv(["scenario", "parameters", "status"], rows))
    else:
        _emit(args, dumps({"status": "pass" if passed else "fail", "reports": reports}))
    return 0 if passed else 1


HANDLERS = {
    "conjugate": cmd_conjugate,
    "moments": cmd_moments,
    "gls-norm": cmd_gls_norm,
    "bphi-norm": cmd_bphi_norm,
    "norm": cmd_norm,
    "tail-bound": cmd_tail_bound,
    "lorentz": cmd_lorentz,
    "counterexample": cmd_counterexample,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tailnorm", description="Tail and norm calculus for random variables.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="output path (default stdout)")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--grid-points", dest="grid_points", type=int, help="grid points per refinement level")
    parser.add_argument("--levels", type=int, help="refinement levels")
    parser.add_argument("--tolerance", type=float, help="assertion or bisection tolerance")
    parser.add_argument("--tail", help="tail descriptor as inline JSON")
    parser.add_argument("--psi", help="psi descriptor as inline JSON")
    parser.add_argument("--phi", help="phi descriptor as inline JSON")
    parser.add_argument("--reference", help="reference tail descriptor for lorentz")
    parser.add_argument("--scenario", help="counterexample scenario")
    parser.add_argument("--param", action="append", metavar="KEY=VALUE", help="scenario parameter")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return HANDLERS[args.command](cfg, args)
    except UsageError as exc:
        sys.stderr.write(f"tailnorm: {exc}\n")
        return 2
    except DivergenceError as exc:
        sys.stderr.write(f"tailnorm: diverges: {exc}\n")
        return 1
    except (InputError, TailNormError) as exc:
        sys.stderr.write(f"tailnorm: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
