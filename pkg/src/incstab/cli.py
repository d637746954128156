"""Command-line front end: ``incstab <subcommand> ...``.

Exit codes: 0 success or pass, 1 certification or envelope fail, 2 usage or
config error, 3 numerical abort (blow-up, chattering, domain fault).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, cases
from .certify import SamplingPlan, Tolerances, certify
from .errors import ConfigError, EvalDomainError, IncstabError, PreconditionError, SimulationAbort
from .model import freeze, load_config_file
from .rates import envelope_check, fit_exponential
from .sim import SimConfig, Trace, eps_error_study, integrate_variational, pair_trace, simulate

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3
ENVELOPE_SLACK = 0.05
RATE_MARGIN = 0.05
DEFAULT_LEVELS = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
REPRODUCE_TF = 3.0
REPRODUCE_IC = {"x1": 1.0, "x2": 1.0}


class UsageError(Exception):
    def __init__(self, flag, message):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(self.prog, message)


# ---------------------------------------------------------------------------
# flag types


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return v


def _seed(text):
    v = _positive_int(text)
    if v >= 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _real(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text!r}")
    return v


def _positive_real(text):
    v = _real(text)
    if not v > 0.0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _assignments(text):
    out = {}
    for part in text.split(","):
        name, sep, value = part.partition("=")
        name = name.strip()
        if not sep or not name:
            raise argparse.ArgumentTypeError(f"expected name=value pairs, got {part!r}")
        if name in out:
            raise argparse.ArgumentTypeError(f"{name!r} given twice")
        out[name] = _real(value)
    return out


def _real_list(text):
    vals = [_positive_real(p) for p in text.split(",") if p.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    return vals


def _window(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected a,b, got {text!r}")
    a, b = _real(parts[0]), _real(parts[1])
    if not a < b:
        raise argparse.ArgumentTypeError("window needs a < b")
    return (a, b)


# ---------------------------------------------------------------------------
# parser


def _add_plan(p):
    p.add_argument("--norm", choices=["1", "2", "inf"], default="2")
    p.add_argument("--grid", type=_positive_int, default=64, help="grid intervals per dimension (default 64)")
    p.add_argument("--samples", type=_positive_int, default=1000)
    p.add_argument("--seed", type=_seed, default=42)
    p.add_argument("--strict", action="store_true", help="check both modes on the whole box")


def _add_sim(p, method=True):
    if method:
        p.add_argument("--method", choices=["event", "regularized"], default="event")
    p.add_argument("--eps", type=_positive_real, default=1e-3)
    p.add_argument("--zeta", choices=["sine", "linear"], default="sine")
    p.add_argument("--dt", type=_positive_real, default=1e-3)
    p.add_argument("--t0", type=_real, default=0.0)
    p.add_argument("--tf", type=_real, default=5.0)


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="incstab", description="Incremental stability of switched interconnections.")
    top.add_argument("--version", action="version", version=f"incstab {__version__}")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="certify a config and print the JSON report")
    p.add_argument("config")
    _add_plan(p)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="simulate and write a trace CSV")
    p.add_argument("config")
    _add_sim(p)
    p.add_argument("--ic", type=_assignments, required=True)
    p.add_argument("--out")

    p = sub.add_parser("variational", help="regularised run with the variational equation")
    p.add_argument("config")
    _add_sim(p, method=False)
    p.add_argument("--ic", type=_assignments, required=True)
    p.add_argument("--dic", type=_assignments, required=True)
    p.add_argument("--out")

    p = sub.add_parser("pair", help="distance between two trajectories")
    p.add_argument("config")
    _add_sim(p)
    p.add_argument("--ic", type=_assignments, action="append", required=True,
                   help="give twice, once per trajectory")
    p.add_argument("--norm", choices=["1", "2", "inf"], default="2")
    p.add_argument("--out")

    p = sub.add_parser("epsstudy", help="max event/regularised discrepancy per eps level")
    p.add_argument("config")
    _add_sim(p, method=False)
    p.add_argument("--ic", type=_assignments, required=True)
    p.add_argument("--levels", type=_real_list, default=list(DEFAULT_LEVELS))
    p.add_argument("--freeze", type=_assignments,
                   help="study system 1 alone with these partner states held fixed")
    p.add_argument("--norm", choices=["1", "2", "inf"], default="2")
    p.add_argument("--out")

    p = sub.add_parser("rate", help="fit an exponential to a trace CSV")
    p.add_argument("trace")
    p.add_argument("--window", type=_window)
    p.add_argument("--norm", choices=["1", "2", "inf"], default="2")
    p.add_argument("--report", help="certification report whose rate the envelope uses")
    p.add_argument("--out")

    p = sub.add_parser("reproduce", help="run the full pipeline on an embedded example")
    p.add_argument("case", choices=sorted(cases.CASES))
    _add_plan(p)
    p.add_argument("--eps", type=_positive_real, default=1e-3)
    p.add_argument("--zeta", choices=["sine", "linear"], default="sine")
    p.add_argument("--dt", type=_positive_real, default=1e-3)
    p.add_argument("--t0", type=_real, default=0.0)
    p.add_argument("--tf", type=_real, default=REPRODUCE_TF)
    p.add_argument("--window", type=_window)
    p.add_argument("--out", default=".", help="output directory")
    return top


def _validate(args):
    if hasattr(args, "tf") and hasattr(args, "dt"):
        if not args.tf > args.t0:
            raise UsageError("--tf", "must exceed --t0")
        if args.dt > (args.tf - args.t0) / 10.0:
            raise UsageError("--dt", "must be at most (tf - t0) / 10")
    if hasattr(args, "grid") and args.grid < 2:
        raise UsageError("--grid", "must be at least 2")
    if args.command == "pair" and len(args.ic) != 2:
        raise UsageError("--ic", "pair needs exactly two --ic flags")
    if args.command == "epsstudy" and len(args.levels) < 3:
        raise UsageError("--levels", "needs at least 3 levels")


# ---------------------------------------------------------------------------
# helpers


def write_atomic(path, text):
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text, out):
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _load(config):
    if not os.path.exists(config) and config in cases.CASES:
        return cases.load_case(config)
    return load_config_file(config)


def _plan(args):
    return SamplingPlan(args.grid, args.samples, args.seed)


def _settings(args):
    skip = {"command", "config", "trace", "case", "out", "ic", "dic", "freeze", "report"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _check_names(ic, mapping, flag):
    unknown = sorted(set(mapping or {}) - set(ic.states))
    if unknown:
        raise UsageError(flag, f"unknown state names {unknown}; states are {list(ic.states)}")


def _sim_config(args, method, x0, dx0=None):
    return SimConfig(method, args.t0, args.tf, args.dt, args.eps, args.zeta, x0, dx0)


def envelope_prefactor(fit, y0):
    """Unit prefactor unless the fitted prefactor, relative to ``y0``, exceeds it."""
    return max(1.0, fit.K / y0)


def rate_analysis(series, certified_rate=None, window=None):
    """Fit, then check the envelope at the certified rate (or the fitted one)."""
    fit = fit_exponential(series, window)
    t, y = series
    c = fit.c if certified_rate is None else certified_rate - RATE_MARGIN
    K = envelope_prefactor(fit, float(y[0]))
    env = envelope_check(series, K, c, ENVELOPE_SLACK)
    return {
        "fit": fit.to_dict(),
        "envelope": {"K": K, "c": c, "slack": ENVELOPE_SLACK, **env.to_dict()},
        "certified_rate": certified_rate,
    }


def _trace_series(trace: Trace, norm):
    if trace.var is not None:
        return trace.norm_series(norm, variational=True)
    return trace.norm_series(norm, variational=False)


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(args):
    ic = _load(args.config)
    rep = certify(ic, args.norm, _plan(args), Tolerances(strict=args.strict))
    d = rep.to_dict()
    d["defaults"] = _settings(args)
    _emit(_json(d), args.out)
    return EXIT_OK if rep.verdict else EXIT_FAIL


def cmd_simulate(args):
    ic = _load(args.config)
    _check_names(ic, args.ic, "--ic")
    tr = simulate(ic, _sim_config(args, args.method, args.ic))
    _emit(tr.to_csv(), args.out)
    return EXIT_OK


def cmd_variational(args):
    ic = _load(args.config)
    _check_names(ic, args.ic, "--ic")
    _check_names(ic, args.dic, "--dic")
    tr = integrate_variational(ic, _sim_config(args, "regularized", args.ic, args.dic))
    _emit(tr.to_csv(), args.out)
    return EXIT_OK


def cmd_pair(args):
    ic = _load(args.config)
    for a in args.ic:
        _check_names(ic, a, "--ic")
    s = pair_trace(ic, _sim_config(args, args.method, {}), args.ic[0], args.ic[1], args.norm)
    lines = ["t,distance"] + ["%.17g,%.17g" % (a, b) for a, b in zip(s.t, s.y)]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_epsstudy(args):
    ic = _load(args.config)
    if args.freeze:
        _check_names(ic, args.freeze, "--freeze")
        ic = freeze(ic, 0, args.freeze)
    _check_names(ic, args.ic, "--ic")
    st = eps_error_study(ic, _sim_config(args, "event", args.ic), args.levels, args.norm)
    _emit(_json({**st.to_dict(), "defaults": _settings(args)}), args.out)
    return EXIT_OK


def cmd_rate(args):
    path = Path(args.trace)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    text = path.read_text()
    if text.lstrip().startswith("t,distance"):
        data = np.loadtxt(text.splitlines()[1:], delimiter=",", ndmin=2)
        series = (data[:, 0], data[:, 1])
    else:
        series = _trace_series(Trace.from_csv(text), args.norm)
    certified = None
    if args.report:
        rep = json.loads(Path(args.report).read_text())
        certified = (rep.get("rates") or {}).get("eta")
        if certified is None:
            raise PreconditionError("report carries no certified rate (verdict fail?)")
    result = rate_analysis(series, certified, args.window)
    result["defaults"] = _settings(args)
    _emit(_json(result), args.out)
    return EXIT_OK if result["envelope"]["pass"] else EXIT_FAIL


def reproduce(case, out_dir=".", plan=None, eps=1e-3, zeta="sine", dt=1e-3, t0=0.0,
              tf=REPRODUCE_TF, window=None, norm="2", strict=False, defaults=None):
    """certify, variational run, rate fit and envelope; returns (exit code, paths)."""
    ic = cases.load_case(case)
    plan = plan or SamplingPlan()
    out = Path(out_dir)
    rep = certify(ic, norm, plan, Tolerances(strict=strict))
    rd = rep.to_dict()
    rd["defaults"] = defaults or {}
    cfg = SimConfig("regularized", t0, tf, dt, eps, zeta, dict(REPRODUCE_IC), dict(REPRODUCE_IC))
    trace = integrate_variational(ic, cfg)
    rate = rate_analysis(trace.norm_series(norm), rep.rates["eta"], window)
    rate["defaults"] = defaults or {}
    rate["initial_state"] = dict(REPRODUCE_IC)
    rate["initial_variation"] = dict(REPRODUCE_IC)
    paths = {
        "report": out / f"{case}_report.json",
        "trace": out / f"{case}_var.csv",
        "rate": out / f"{case}_rate.json",
    }
    write_atomic(paths["report"], _json(rd))
    write_atomic(paths["trace"], trace.to_csv())
    write_atomic(paths["rate"], _json(rate))
    ok = rep.verdict and rate["envelope"]["pass"]
    return (EXIT_OK if ok else EXIT_FAIL), paths


def cmd_reproduce(args):
    code, paths = reproduce(args.case, args.out, _plan(args), args.eps, args.zeta, args.dt,
                            args.t0, args.tf, args.window, args.norm, args.strict, _settings(args))
    for p in paths.values():
        print(p)
    return code


COMMANDS = {
    "check": cmd_check,
    "simulate": cmd_simulate,
    "variational": cmd_variational,
    "pair": cmd_pair,
    "epsstudy": cmd_epsstudy,
    "rate": cmd_rate,
    "reproduce": cmd_reproduce,
}


def _diag(msg):
    print(f"incstab: {msg}", file=sys.stderr)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args)
    except UsageError as err:
        _diag(f"usage error: {err}")
        return EXIT_USAGE
    except SystemExit as err:  # --help / --version
        return int(err.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        _diag(f"usage error: {err}")
        return EXIT_USAGE
    except FileNotFoundError as err:
        _diag(f"file not found: {err.filename or err}")
        return EXIT_USAGE
    except ConfigError as err:
        _diag(f"config error: {err}")
        return EXIT_USAGE
    except (SimulationAbort, EvalDomainError) as err:
        t = getattr(err, "t_last", None)
        _diag(f"numerical abort: {err}" + (f" (last good t={t:.17g})" if t is not None else ""))
        return EXIT_ABORT
    except (PreconditionError, IncstabError, json.JSONDecodeError, OSError) as err:
        _diag(f"error: {err}")
        return EXIT_USAGE


def main(argv=None):
    sys.exit(run(argv))


__all__ = ["run", "main", "build_parser", "reproduce", "rate_analysis", "write_atomic"]
