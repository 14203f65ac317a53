"""Command-line entry point: ``kleinian <command> [options]``.

Exit codes: 0 when every checked invariant holds, 1 on an invariant
failure, 2 on a configuration error.
"""

import argparse
import logging
import math
import sys

import numpy as np

from kleinian import orbit, verify
from kleinian.render import render_svg

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
MIN_R_SQUARED = 0.999


class ConfigError(Exception):
    pass


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _load(args):
    if not args.group:
        raise ConfigError("--group is required")
    try:
        return orbit.load_group(args.group)
    except OSError as exc:
        raise ConfigError(f"cannot read group config: {exc}") from None
    except orbit.GroupConfigError as exc:
        raise ConfigError(str(exc)) from None


def _need(value, flag):
    if value is None:
        raise ConfigError(f"{flag} is required")
    if not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{flag} must be a positive number")
    return value


def bends_csv(pc):
    lines = ["bend"] + [verify.fmt(b) for b in pc.bends]
    return "\n".join(lines) + "\n"


def count_table(pc, T):
    Ts = [10.0 ** k for k in range(0, int(math.floor(math.log10(T))) + 1) if 10.0 ** k < T] + [T]
    rows = [f"{'T':>14} {'N(T)':>12}"]
    rows += [f"{verify.fmt(t):>14} {orbit.count(pc, t):>12}" for t in Ts]
    return rows


def cmd_count(args):
    spec = _load(args)
    T = _need(args.T, "--T")
    horizon = T
    if args.epsilon is not None:
        if not 0 < args.epsilon < 0.5:
            raise ConfigError("--epsilon must lie in (0, 0.5)")
        horizon = T * (1 + orbit.SANDWICH_C * args.epsilon) * math.exp(args.epsilon)
    pc = orbit.orbit_enumerate(spec, horizon, max_depth=args.max_depth)
    if args.output:
        _write(args.output, bends_csv(pc))
    ok = pc.complete
    report = count_table(pc, min(T, pc.horizon))
    report += [f"horizon {verify.fmt(pc.horizon)}", f"words_explored {pc.words_explored}",
               f"complete {pc.complete}"]
    if args.epsilon is not None and pc.complete:
        eps = args.epsilon
        lo = orbit.smoothed_count(pc, T * (1 - orbit.SANDWICH_C * eps), eps).value
        hi = orbit.smoothed_count(pc, T * (1 + orbit.SANDWICH_C * eps), eps).value
        sharp = orbit.count(pc, T)
        holds = lo <= sharp <= hi
        ok = ok and holds
        report.append(f"sandwich {verify.fmt(lo)} <= {sharp} <= {verify.fmt(hi)}: "
                      f"{'holds' if holds else 'VIOLATED'}")
    print("\n".join(report))
    if not pc.complete:
        print("enumeration incomplete: raise --max-depth or lower --T", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_fit(args):
    spec = _load(args)
    lo, hi = _need(args.Tlow, "--Tlow"), _need(args.Thigh, "--Thigh")
    if lo >= hi:
        raise ConfigError("--Tlow must be below --Thigh")
    pc = orbit.orbit_enumerate(spec, hi, max_depth=args.max_depth)
    try:
        fit = orbit.fit_delta(pc, lo, hi, args.points)
    except (orbit.InsufficientDataError, orbit.IncompleteCountError) as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"slope {fit.slope:.6f}")
    print(f"intercept {fit.intercept:.6f}")
    print(f"r_squared {fit.r_squared:.8f}")
    print(f"T_range {verify.fmt(lo)} {verify.fmt(hi)}")
    if fit.degenerate or not fit.r_squared > MIN_R_SQUARED:
        print(f"fit quality check failed: r_squared must exceed {MIN_R_SQUARED}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _finish(res, args):
    if args.output:
        _write(args.output, res.to_csv())
    print(res.summary())
    if not res.passed:
        print(f"invariant failed: {res.name}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _n(args, allowed):
    if args.n not in allowed:
        raise ConfigError(f"--n must be one of {sorted(allowed)}")
    return args.n


def cmd_verify_haar(args):
    n = _n(args, range(2, 9))
    return _finish(verify.verify_haar(n, args.samples or 1000, args.seed), args)


def cmd_verify_casimir(args):
    n = _n(args, range(2, 7))
    return _finish(verify.verify_casimir(n, args.samples or 100, args.seed), args)


def cmd_verify_spectral(args):
    sigma = args.sigma if args.sigma is not None else 1e-2
    if sigma <= 0:
        raise ConfigError("--sigma must be positive")
    return _finish(verify.verify_spectral(args.samples or 10, seed=args.seed, sigma=sigma), args)


def cmd_render(args):
    spec = _load(args)
    if spec.n != 2:
        raise ConfigError("render supports n = 2 only")
    T = _need(args.T, "--T")
    pc = orbit.orbit_enumerate(spec, T, max_depth=args.max_depth, keep_vectors=True)
    _write(args.output, render_svg(np.asarray(pc.vectors, dtype=float)))
    return EXIT_OK if pc.complete else EXIT_FAIL


COMMANDS = {
    "count": cmd_count,
    "fit": cmd_fit,
    "verify-haar": cmd_verify_haar,
    "verify-casimir": cmd_verify_casimir,
    "verify-spectral": cmd_verify_spectral,
    "render": cmd_render,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="kleinian", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--group", help="group configuration (JSON)")
        p.add_argument("--T", type=float, help="bend bound")
        p.add_argument("--Tlow", type=float)
        p.add_argument("--Thigh", type=float)
        p.add_argument("--points", type=int, default=40, help="grid points for fit")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--n", type=int, default=2)
        p.add_argument("--samples", type=int)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--max-depth", type=int, dest="max_depth")
        p.add_argument("--output", "-o", help="output file (CSV or SVG)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.samples is not None and args.samples < 1:
        print("error: --samples must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except orbit.IncompleteCountError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
