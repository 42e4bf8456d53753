"""Command-line entry point ``ctmc-lumper``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 certificate failure (only with ``--strict``).
"""
from __future__ import annotations

import argparse
import json
import sys

from .chain import generator_to_dict, load_generator, load_probability_vector, probability_to_dict, stationary_measure
from .coarse import effective_generator, load_map, push_forward
from .dynamics import TimeGrid, solve_constant
from .errors import ConfigError, LumperError, NumericalError
from .multiscale import DEFAULT_EPSILONS, DEFAULT_N, DEFAULT_T
from .study import StudyConfig, dumps, run_study, verify_bounds

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERDICT = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with the configuration code, long options only."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_stationary(args):
    L = load_generator(args.generator)
    _emit(dumps(probability_to_dict(stationary_measure(L))), args.out)
    return EXIT_OK


def cmd_effective(args):
    L = load_generator(args.generator)
    xi = load_map(args.map)
    if xi.fine.labels != L.space.labels:
        raise ConfigError("map fine states do not match the generator states")
    rho = stationary_measure(L)
    N = effective_generator(L, rho, xi)
    payload = {**generator_to_dict(N), "stationary": probability_to_dict(push_forward(rho, xi))["mass"]}
    _emit(dumps(payload), args.out)
    return EXIT_OK


def _grid(kind, T, steps):
    return TimeGrid.refined(T, n_uniform=steps) if kind == "refined" else TimeGrid.uniform(T, n=steps)


def cmd_solve(args):
    L = load_generator(args.generator)
    mu0 = load_probability_vector(args.mu0)
    if mu0.space.labels != L.space.labels:
        raise ConfigError("initial measure states do not match the generator states")
    traj = solve_constant(L, mu0, _grid(args.grid, args.T, args.steps))
    traj.to_csv(args.out or sys.stdout)
    return EXIT_OK


def cmd_study(args):
    cfg = StudyConfig(scenario=args.scenario, n=args.n, epsilons=tuple(args.eps), T=args.T,
                      grid=args.grid, steps=args.steps, alpha_mode=args.alpha, out=args.out,
                      seed=args.seed, delta=args.delta, matched=args.eta0 is None,
                      eta0=tuple(args.eta0) if args.eta0 else None,
                      check_cg_ode=not args.skip_cg_ode)
    result = run_study(cfg)
    rep = result.report
    for rec in rep.records:
        if "error" in rec:
            print(f"eps={rec['eps']:.3e}  error: {rec['error']}")
        else:
            print(f"eps={rec['eps']:.3e}  sup_H={rec['sup_H']:.6e}  t_argmax={rec['t_argmax']:.6g}  "
                  f"verdict={'ok' if rec['verdict'] else 'FAIL'}")
    print(f"slope={rep.slope:.4f}" if rep.slope_defined else "slope=undefined (fewer than two points in window)")
    if any("error" in r for r in rep.records):
        return EXIT_NUMERICAL
    if args.strict:
        bad = any(not r["verdict"] or not r.get("verdict_delta", True) for r in rep.records)
        if bad:
            return EXIT_VERDICT
    return EXIT_OK


def cmd_verify(args):
    res = verify_bounds(args.study_dir)
    for name in res.files:
        status = "FAIL" if any(f[0] == name for f in res.failures) else "ok"
        print(f"{name}: {status}")
    print(f"{len(res.files) - len(res.failures)}/{len(res.files)} certificates hold")
    if args.strict and not res.ok:
        return EXIT_VERDICT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ctmc-lumper", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("stationary", help="stationary measure of a generator")
    s.add_argument("generator")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stationary)

    s = sub.add_parser("effective", help="effective generator for a coarse-graining map")
    s.add_argument("generator")
    s.add_argument("map")
    s.add_argument("--out")
    s.set_defaults(func=cmd_effective)

    s = sub.add_parser("solve", help="forward equation on a time grid, CSV output")
    s.add_argument("generator")
    s.add_argument("mu0")
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--grid", choices=("uniform", "refined"), default="uniform")
    s.add_argument("--steps", type=int, default=2000)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("study", help="epsilon sweep for a slow-fast scenario")
    s.add_argument("--scenario", default="S1", help="S1, S2, S3 or a spec JSON with 'mu0'")
    s.add_argument("--n", type=int, default=DEFAULT_N)
    s.add_argument("--eps", type=float, nargs="+", default=list(DEFAULT_EPSILONS))
    s.add_argument("--T", type=float, default=DEFAULT_T)
    s.add_argument("--grid", choices=("uniform", "refined"), default="refined")
    s.add_argument("--steps", type=int, default=2000)
    s.add_argument("--alpha", default="estimate", help="'estimate' or a fixed positive value")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--eta0", type=float, nargs="+", default=None,
                   help="effective initial datum; default is the coarse-grained one")
    s.add_argument("--skip-cg-ode", action="store_true")
    s.add_argument("--strict", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("verify-bounds", help="re-check certificates written by 'study'")
    s.add_argument("study_dir")
    s.add_argument("--strict", action="store_true")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (LumperError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
