"""Command-line front end: ``kicked-atoms <subcommand> [options]``.

Exit codes: 0 success, 2 usage or parameter error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

from . import analytic, recipes
from .detection import DetectionWindow
from .ensemble import InitialDistribution
from .errors import NumericalError, ParameterError
from .units import DimensionlessParams, load_config, params_from_mapping, parse_tau

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("kicked_atoms")


def _global_parser():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global")
    g.add_argument("--config", metavar="FILE", default=argparse.SUPPRESS, help="key = value config file")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    g.add_argument("--atoms", type=int, default=argparse.SUPPRESS, help="ensemble size")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    g.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory (default: out)")
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def _model_parser():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model")
    g.add_argument("--tau", type=parse_tau, help="scaled period, e.g. 2pi or 6.2832")
    g.add_argument("--phi-d", type=float, help="kick strength (default 0.8pi)")
    g.add_argument("--kicks", type=int, help="number of kicks N")
    g.add_argument("--n-se", type=float, help="mean spontaneous emissions per kick")
    g.add_argument("--n-max", type=int, help="momentum ladder half-width")
    g.add_argument("--fwhm", type=float, help="initial momentum FWHM in lattice units")
    g.add_argument("--recoil-law", choices=("uniform", "two-point"))
    d = p.add_argument_group("detection")
    d.add_argument("--window-min", type=float)
    d.add_argument("--window-max", type=float)
    d.add_argument("--threshold", type=float)
    d.add_argument("--renormalize", action="store_true", default=None)
    return p


def build_parser() -> argparse.ArgumentParser:
    glob, model = _global_parser(), _model_parser()
    parser = argparse.ArgumentParser(prog="kicked-atoms", parents=[glob],
                                     description="Kicked cold-atom ensemble simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("tau-scan", parents=[glob, model], help="scan tau (or another parameter)")
    scan.add_argument("--lo", type=parse_tau, default=recipes.FIG1_RANGE[0])
    scan.add_argument("--hi", type=parse_tau, default=recipes.FIG1_RANGE[1])
    scan.add_argument("--steps", type=int, default=recipes.FIG1_STEPS)
    scan.add_argument("--parameter", choices=recipes.SCAN_PARAMETERS, default="tau")

    dist = sub.add_parser("distribution", parents=[glob, model], help="momentum histogram at fixed parameters")
    dist.add_argument("--dump-state", metavar="PATH", help="write the first atom's final Bloch state as CSV")
    dist.add_argument("--no-overlay", action="store_true", help="skip the stationary overlay")

    rep = sub.add_parser("reproduce", parents=[glob], help="run a canned figure recipe")
    rep.add_argument("figure", help="one of " + ", ".join(recipes.FIGURES))
    rep.add_argument("--steps", type=int, default=recipes.FIG1_STEPS, help="tau nodes for fig1 recipes")
    rep.add_argument("--window-min", type=float)
    rep.add_argument("--window-max", type=float)

    st = sub.add_parser("stationary", parents=[glob], help="asymptotic resonant distribution (analytic)")
    st.add_argument("--phi-d", type=float)
    st.add_argument("--fwhm", type=float)
    st.add_argument("--n-range", type=int, default=60)
    st.add_argument("--nodes", type=int, default=analytic.QuadratureSpec.nodes_xi,
                    help="midpoint nodes per angle (multiple of 4)")
    st.add_argument("--tolerance", type=float, default=1e-4)
    return parser


_FLAG_KEYS = {"tau": "tau", "phi_d": "phi_d", "kicks": "n_kicks", "n_se": "n_se_mean", "n_max": "n_max",
              "fwhm": "initial_fwhm", "atoms": "n_atoms", "seed": "seed"}
_OTHER_FLAGS = ("recoil_law", "window_min", "window_max", "threshold", "renormalize", "threads")


def resolve(args):
    """Merge defaults, the config file and flags into (params, options)."""
    values = load_config(args.config) if getattr(args, "config", None) else {}
    other = {k: values.pop(k) for k in list(values) if k in _OTHER_FLAGS}
    for flag, key in _FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    params = params_from_mapping(values, DimensionlessParams(tau=2 * math.pi))
    for key in _OTHER_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            other[key] = v
    window = DetectionWindow(
        float(other.get("window_min", -60.0)), float(other.get("window_max", 60.0)),
        float(other.get("threshold", 0.0)), _truthy(other.get("renormalize", False)))
    opts = {"window": window, "recoil_law": str(other.get("recoil_law", "uniform")),
            "threads": int(other.get("threads", 1))}
    return params, opts


def _truthy(v):
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes", "on")
    return bool(v)


def _run(args) -> int:
    out_dir = getattr(args, "out_dir", "out")
    params, opts = resolve(args)
    if args.command == "tau-scan":
        if args.parameter == "tau" and getattr(args, "tau", None) is not None:
            log.info("--tau is ignored by a tau scan")
        spec = recipes.ScanSpec(args.parameter, args.lo, args.hi, args.steps, params)
        table = recipes.run_scan(spec, opts["window"], opts["recoil_law"], opts["threads"])
        recipes.write_scan(table, out_dir)
        failed = sum(r.status != "ok" for r in table.rows)
        print(f"wrote {len(table.rows)} rows to {os.path.join(out_dir, 'scan.csv')} ({failed} failed nodes)")
    elif args.command == "distribution":
        run = recipes.run_distribution(params, opts["window"], recoil_law=opts["recoil_law"],
                                       threads=opts["threads"], overlay=not args.no_overlay)
        recipes.write_distribution(run, out_dir, args.dump_state)
        res = run.result
        print(f"E_true={res.energy[-1]:.6g} E_meas={run.E_meas[-1]:.6g} "
              f"atoms={res.n_atoms} fingerprint={res.fingerprint}")
    elif args.command == "reproduce":
        if args.figure not in recipes.FIGURES:
            raise ParameterError("figure", f"unknown figure id {args.figure!r}; choose from {recipes.FIGURES}")
        lines = recipes.reproduce(args.figure, out_dir, params.n_atoms, params.seed, opts["threads"],
                                  opts["window"], args.steps)
        for name, ok, detail in lines:
            print(f"{'PASS' if ok else 'FAIL'}  {name}  [{detail}]")
    elif args.command == "stationary":
        spec = analytic.QuadratureSpec(args.nodes, args.nodes)
        h = InitialDistribution("gaussian", fwhm=params.initial_fwhm)
        s = analytic.stationary_distribution(params.phi_d, h, args.n_range, spec, args.tolerance)
        recipes.write_stationary(s, params.phi_d, h, out_dir)
        print(f"wrote {s.n.size} bins to {os.path.join(out_dir, 'stationary.csv')} "
              f"(doubling change {s.doubling_change:.2e})")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ParameterError, FileNotFoundError) as exc:
        print(f"kicked-atoms: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ZeroDivisionError) as exc:
        print(f"kicked-atoms: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
