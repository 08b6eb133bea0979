"""Command line entry point: ``mdflow run | compare | converge``.

Exit codes: 0 when every run completed, 1 when a run stopped on time step
underflow (or a convergence-study step failed), 2 for invalid input (bad case file, unknown scheme) and 3 for
output failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import SCHEMES, __version__
from .cases import BUILTIN_CASES, CaseError
from .convergence import FAMILIES, ConvergenceError, convergence_study, format_table
from .io import write_outputs
from .runner import RunResult, run_case
from .topology import TopologyError

logger = logging.getLogger("mdflow")

EXIT_OK, EXIT_UNDERFLOW, EXIT_INPUT, EXIT_OUTPUT = 0, 1, 2, 3


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", required=True, help=f"bundled case ({', '.join(BUILTIN_CASES)}) or path to a case file")
    p.add_argument("--dt-max", type=float, help="largest time step (default: from the case)")
    p.add_argument("--tol", type=float, help="Newton tolerance on ||dx|| / sqrt(n) (default: from the case)")
    p.add_argument("--t-end", type=float, help="final time (default: from the case)")
    p.add_argument("--max-iter", type=int, help="Newton iterations before a step is cut (default: 15)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one case with one scheme")
    _add_run_options(run)
    run.add_argument("--scheme", choices=sorted(SCHEMES), help="flux scheme (default: from the case)")
    run.add_argument("--out", required=True, type=Path, help="output directory")
    run.add_argument("--fields", type=int, default=10, help="number of VTK snapshots besides the initial one")

    cmp_ = sub.add_parser("compare", help="run both schemes and summarise them side by side")
    _add_run_options(cmp_)
    cmp_.add_argument("--out", required=True, type=Path, help="output directory (one subdirectory per scheme)")
    cmp_.add_argument("--fields", type=int, default=10)

    conv = sub.add_parser("converge", help="single-step spatial convergence study")
    conv.add_argument("--case", default="case1a", help="case supplying the physics (default: case1a)")
    conv.add_argument("--scheme", choices=sorted(SCHEMES), default="hu")
    conv.add_argument("--levels", type=int, nargs="+", default=[8, 16, 32], help="cells per side")
    conv.add_argument("--reference", type=int, default=128, help="cells per side of the reference grid")
    conv.add_argument("--family", choices=FAMILIES, action="append", help="mesh family (default: both)")
    conv.add_argument("--dt", type=float, help="step length (default: dt_max / 20 of the case)")
    conv.add_argument("--out", type=Path, help="also write the table as CSV into this directory")
    return parser


def _run(args, scheme: Optional[str]) -> RunResult:
    return run_case(args.case, scheme, args.dt_max, args.tol, args.t_end, args.max_iter)


def _describe(result: RunResult) -> str:
    s = result.report.summary()
    flips = " ".join(f"{k}={v}" for k, v in s["cum_flips"].items())
    return (
        f"{s['case']} [{s['scheme']}] {s['status']} at t={s['last_t']:.6g}: "
        f"{s['accepted_steps']} steps, {s['cum_newton_iters']} Newton iterations, "
        f"{s['cum_cuts']} cuts, flips {flips}, E_A={s['E_A']:.6g}"
    )


def cmd_run(args) -> int:
    result = _run(args, args.scheme)
    write_outputs(result.report, result.states, result.domain, result.layout, args.out, args.fields)
    print(_describe(result))
    if not result.completed:
        print(result.report.message, file=sys.stderr)
    return EXIT_OK if result.completed else EXIT_UNDERFLOW


def cmd_compare(args) -> int:
    results = {}
    for name in ("ppu", "hu"):
        results[name] = _run(args, name)
        r = results[name]
        write_outputs(r.report, r.states, r.domain, r.layout, args.out / name, args.fields)
    summaries = {k: r.report.summary() for k, r in results.items()}
    rows = [
        ("status", "status"),
        ("final time", "last_t"),
        ("accepted steps", "accepted_steps"),
        ("Newton iterations", "cum_newton_iters"),
        ("time step cuts", "cum_cuts"),
    ]
    lines = [f"{'':24}{'ppu':>14}{'hu':>14}"]
    for label, key in rows:
        lines.append(f"{label:24}{summaries['ppu'][key]!s:>14}{summaries['hu'][key]!s:>14}")
    for kind in ("cum_flips", "cum_wasted_flips"):
        for cat in summaries["ppu"][kind]:
            label = f"{'wasted ' if 'wasted' in kind else ''}flips {cat}"
            lines.append(f"{label:24}{summaries['ppu'][kind][cat]:>14}{summaries['hu'][kind][cat]:>14}")
    table = "\n".join(lines)
    (args.out / "compare.json").write_text(json.dumps(summaries, indent=2) + "\n")
    (args.out / "compare.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK if all(r.completed for r in results.values()) else EXIT_UNDERFLOW


def cmd_converge(args) -> int:
    table = convergence_study(
        args.case, args.scheme, args.levels, args.reference, args.family or FAMILIES, args.dt
    )
    print(format_table(table))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        keys = sorted({k for rows in table.values() for r in rows for k in r.errors})
        with (args.out / "convergence.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["family", "n", "h"] + [f"err_{k}" for k in keys] + [f"order_{k}" for k in keys])
            for family, rows in table.items():
                for r in rows:
                    w.writerow(
                        [family, r.n, repr(r.h)]
                        + [repr(r.errors.get(k, float("nan"))) for k in keys]
                        + [repr(r.orders.get(k, float("nan"))) for k in keys]
                    )
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "converge": cmd_converge}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConvergenceError as exc:
        print(f"mdflow: error: {exc}", file=sys.stderr)
        return EXIT_UNDERFLOW
    except (CaseError, TopologyError, ValueError) as exc:
        print(f"mdflow: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"mdflow: error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT


if __name__ == "__main__":
    sys.exit(main())
