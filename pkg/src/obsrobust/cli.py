"""Command-line front end: eval, analyze, sweep, validate, simulate."""
import argparse
import sys
from pathlib import Path

import numpy as np

from . import errors
from .model_io import BENCHMARKS, _dump, builtin, parse_fsc, parse_pomdp, write_report, write_result
from .pomdp import fsc_value
from .search import EPS_MBS, RobustnessQuery, analyze
from .validation import DEFAULT_SAMPLES, monte_carlo, sweep, validate

USAGE, MODEL, NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _horizon(text):
    if text == "model":
        return text
    if text in ("inf", "infinite"):
        return None
    try:
        h = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'inf' or a positive integer, got {text!r}") from None
    if h <= 0:
        raise argparse.ArgumentTypeError(f"horizon must be positive, got {h}")
    return h


def _values(text):
    """'0.1', '0.1,0.2,0.3' or 'lo:hi:n' (n evenly spaced points)."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            return [float(x) for x in np.linspace(float(lo), float(hi), int(n))]
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, a list a,b,c or lo:hi:n, got {text!r}") from None


def _parser():
    p = _Parser(prog="obsrobust", description="Robustness of finite-state controllers "
                "against observation-model deviations.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, text in (("eval", "nominal value of the controller"),
                       ("analyze", "largest admissible observation deviation"),
                       ("sweep", "admissible deviation over a list of thresholds"),
                       ("validate", "sampling check of an analysis result"),
                       ("simulate", "Monte-Carlo rollouts of the nominal model")):
        s = sub.add_parser(name, help=text, description=text)
        src = s.add_argument_group("model")
        src.add_argument("--benchmark", choices=BENCHMARKS, help="built-in model and controller")
        src.add_argument("--model", type=Path, help="POMDP file")
        src.add_argument("--fsc", type=Path, help="controller file")
        s.add_argument("--horizon", type=_horizon, default="model",
                       help="'inf' or a positive integer (default: the model's)")
        s.add_argument("--discount", type=float, help="override the model's discount factor")
        s.add_argument("--variant", choices=("sticky", "nonsticky"), default="nonsticky")
        s.add_argument("--eta", type=_values, help="relative threshold (sweep: list or lo:hi:n)")
        s.add_argument("--delta-threshold", type=_values,
                       help="absolute threshold (sweep: list or lo:hi:n)")
        s.add_argument("--eps-mbs", type=float, default=EPS_MBS)
        s.add_argument("--eps-inner", type=float, default=1e-7,
                       help="inner evaluation tolerance (IPE or PLA)")
        s.add_argument("--eps-p", type=float,
                       help="minimum observation probability (default 0 nonsticky, 0.01 sticky)")
        s.add_argument("--samples", type=int, default=DEFAULT_SAMPLES,
                       help="sampled extrema (validate) or rollouts (simulate)")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--format", choices=("json", "csv"), default="json")
        s.add_argument("--out", type=Path, help="write machine output here instead of stdout")
        s.add_argument("--quiet", action="store_true", help="no summary on stderr")
    return p


def _load(args):
    if args.benchmark and (args.model or args.fsc):
        raise UsageError("give either --benchmark or --model with --fsc, not both")
    if args.benchmark:
        m, pi = builtin(args.benchmark)
    elif args.model and args.fsc:
        m = parse_pomdp(_read(args.model))
        pi = parse_fsc(_read(args.fsc), m)
    else:
        raise UsageError("give --benchmark, or --model together with --fsc")
    return m, pi


def _read(path):
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise errors.ModelError(f"cannot read {path}: {e.strerror}") from None


def _query(args, m, pi, many=False):
    if (args.eta is None) == (args.delta_threshold is None):
        raise UsageError("give exactly one of --eta or --delta-threshold")
    key, vals = ("eta", args.eta) if args.eta is not None else ("delta_threshold", args.delta_threshold)
    if len(vals) > 1 and not many:
        raise UsageError(f"{args.command} takes a single threshold")
    q = RobustnessQuery(m, pi, args.variant, horizon=args.horizon, eps_mbs=args.eps_mbs,
                        eps_inner=args.eps_inner, eps_p=args.eps_p, discount=args.discount,
                        **{key: vals[0]})
    return q, vals


def _emit(args, text):
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _say(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def _eval(args, m, pi):
    if args.discount is not None:
        m = m.replace(discount=args.discount)
    v, _ = fsc_value(m, pi, args.horizon, args.eps_inner)
    _say(args, f"nominal value {v:.6g}")
    if args.format == "csv":
        return f"nominal\n{v!r}\n"
    return _dump({"nominal_value": v}) + "\n"


def _analyze(args, m, pi):
    q, _ = _query(args, m, pi)
    r = analyze(q)
    _say(args, f"{r.variant}: delta {r.delta:.6g} (nominal {r.nominal_value:.6g}, "
               f"worst case {r.worst_case_value:.6g}, Delta {r.threshold:.6g})")
    return write_result(r, args.format)


def _sweep(args, m, pi):
    q, vals = _query(args, m, pi, many=True)
    rs = sweep(q, vals)
    for r in rs:
        _say(args, f"Delta {r.threshold:.6g}: delta {r.delta:.6g}")
    return write_result(rs, args.format)


def _validate(args, m, pi):
    q, _ = _query(args, m, pi)
    rep = validate(q, args.samples, args.seed)
    _say(args, f"delta {rep.delta_used:.6g}: witness eta {rep.eta_witness:.6g}, "
               f"target {rep.target_eta:.6g}")
    if args.format == "csv":
        keys = list(rep.__dataclass_fields__)
        return ",".join(keys) + "\n" + ",".join(
            "" if getattr(rep, k) is None else repr(getattr(rep, k)) for k in keys) + "\n"
    return write_report(rep)


def _simulate(args, m, pi):
    if args.discount is not None:
        m = m.replace(discount=args.discount)
    res = monte_carlo(m, pi, args.samples, args.horizon, args.seed)
    _say(args, f"mean return {res.mean:.6g} +- {res.stderr:.3g} over {args.samples} rollouts")
    visits = dict(zip(m.states, res.state_visits))
    if args.format == "csv":
        return "mean,stderr,rollouts\n" + f"{res.mean!r},{res.stderr!r},{args.samples}\n"
    return _dump({"mean": res.mean, "stderr": res.stderr, "rollouts": args.samples,
                  "state_visits": visits,
                  "node_visits": dict(zip(pi.nodes, res.node_visits))}) + "\n"


COMMANDS = {"eval": _eval, "analyze": _analyze, "sweep": _sweep, "validate": _validate,
            "simulate": _simulate}


def run(argv=None):
    p = _parser()
    try:
        args = p.parse_args(argv)
        m, pi = _load(args)
        for w in pi.warnings:
            _say(args, f"warning: {w}")
        _emit(args, COMMANDS[args.command](args, m, pi))
    except SystemExit as e:     # --help
        return e.code or 0
    except (UsageError, errors.InvalidQuery) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return USAGE
    except errors.ModelError as e:
        print(f"model error ({type(e).__name__}): {e}", file=sys.stderr)
        return MODEL
    except errors.NumericError as e:
        print(f"numeric error ({type(e).__name__}): {e}", file=sys.stderr)
        return NUMERIC
    return 0


def main():
    sys.exit(run())
