"""Command-line entry point.

    bench run <scenario> [--out DIR] [--seed N] [--controller NAME]
    bench compare <scenario> --controllers tsid,wbcf,uf [--out DIR]
    bench scaling --sizes 8,16,32,64 --controllers tsid,wbcf [--out DIR]

Common overrides: --lambda, --sigma-min, --dt. `--assert FILE` checks a JSON
criteria file against the reports and exits 3 on violation. Exit codes:
0 success, 1 usage error, 2 scenario failure, 3 assertion violation.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .bench import (
    check_assertions,
    cmd_compare,
    cmd_run,
    cmd_scaling,
    load_criteria,
)
from .numlin import PinvConfig
from .sim import load_scenario

USAGE_ERROR, SCENARIO_ERROR, ASSERT_ERROR = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(USAGE_ERROR)


def _add_common(p):
    p.add_argument("--out", default=None, help="output directory for CSV files")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--lambda", dest="damping", type=float, default=None,
                   help="pseudoinverse damping factor")
    p.add_argument("--sigma-min", type=float, default=None,
                   help="projector truncation threshold")
    p.add_argument("--assert", dest="criteria", default=None,
                   help="JSON criteria file; exit 3 on violation")


def _build_parser():
    parser = _Parser(prog="bench", description="prioritized-control benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and report metrics")
    run.add_argument("scenario")
    run.add_argument("--controller", default=None)
    _add_common(run)

    comp = sub.add_parser("compare", help="run several controllers on one scenario")
    comp.add_argument("scenario")
    comp.add_argument("--controllers", default="tsid,wbcf,uf")
    _add_common(comp)

    scal = sub.add_parser("scaling", help="controller-evaluation scaling study")
    scal.add_argument("--sizes", default="8,16,32,64")
    scal.add_argument("--controllers", default="tsid,wbcf")
    scal.add_argument("--reps", type=int, default=200)
    _add_common(scal)
    return parser


def _apply_overrides(cfg, args):
    pinv = cfg.pinv
    if args.damping is not None:
        pinv = replace(pinv, damping=args.damping)
    if getattr(args, "sigma_min", None) is not None:
        pinv = replace(pinv, sigma_min=args.sigma_min)
    updates = {"pinv": pinv}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.dt is not None:
        updates["dt"] = args.dt
    if getattr(args, "controller", None):
        updates["controller"] = args.controller
    return replace(cfg, **updates)


def _print_reports(reports):
    header = f"{'controller':<8} {'task':<12} {'kind':<8} {'rmse':>14} {'unit':<4} {'t_mean':>12}"
    print(header)
    print("-" * len(header))
    for rep in reports:
        for t in rep.tasks:
            print(f"{rep.controller:<8} {t.name:<12} {t.kind:<8} {t.rmse:>14.6e} "
                  f"{t.unit:<4} {rep.time_mean:>12.3e}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _apply_overrides(load_scenario(args.scenario), args)
            reports = [cmd_run(cfg, args.out)]
        elif args.command == "compare":
            cfg = _apply_overrides(load_scenario(args.scenario), args)
            controllers = [c.strip() for c in args.controllers.split(",") if c.strip()]
            reports = cmd_compare(cfg, controllers, args.out)
        else:
            sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
            controllers = [c.strip() for c in args.controllers.split(",") if c.strip()]
            pinv = PinvConfig(
                damping=args.damping if args.damping is not None else 0.02,
                sigma_min=args.sigma_min if args.sigma_min is not None else 2.5e-8,
            )
            report = cmd_scaling(sizes, controllers, reps=args.reps, pinv=pinv,
                                 out_dir=args.out)
            print(f"{'controller':<8} {'n':>6} {'mean_time':>14}")
            for ctrl in report.controllers:
                for n, t in zip(report.sizes, report.mean_times[ctrl]):
                    print(f"{ctrl:<8} {n:>6} {t:>14.3e}")
                print(f"{ctrl:<8} fitted exponent: {report.exponents[ctrl]:.3f}")
            return 0
    except ValueError as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (OSError, RuntimeError) as exc:
        print(f"bench: scenario failed: {exc}", file=sys.stderr)
        return SCENARIO_ERROR

    _print_reports(reports)
    if args.criteria:
        violations = check_assertions(reports, load_criteria(args.criteria))
        if violations:
            for v in violations:
                print(f"ASSERT FAIL: {v}", file=sys.stderr)
            return ASSERT_ERROR
        print("all assertions hold")
    return 0


if __name__ == "__main__":
    sys.exit(main())
