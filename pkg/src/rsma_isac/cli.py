"""Command-line entry point ``rsma-isac``.

Subcommands::

    rsma-isac run <config> [--jobs N] [--output-dir DIR]
    rsma-isac validate <config>
    rsma-isac trace <config> --seed S [--scheme NAME] [--profile NAME] [--value V]

``run`` writes ``runs.csv``, ``aggregate.csv``, ``figure.csv`` and
``wsr.svg`` into the output directory.  ``--jobs`` falls back to
``$RSMA_ISAC_JOBS`` and then to 1.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    parse_config,
    run_experiment,
    trace_run,
    write_aggregate_csv,
    write_csv,
    write_figure_csv,
    write_plot,
    write_trace_csv,
)
from .scene import ConfigError

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsma-isac", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sweep and write CSV/SVG results")
    run.add_argument("config")
    run.add_argument("--jobs", type=int, default=None, help="worker processes (default $RSMA_ISAC_JOBS or 1)")
    run.add_argument("--output-dir", default=None, help="overrides [output] dir")
    run.add_argument("--quiet", action="store_true")

    val = sub.add_parser("validate", help="parse and validate a config")
    val.add_argument("config")

    tr = sub.add_parser("trace", help="dump the solver trace of one run as CSV")
    tr.add_argument("config")
    tr.add_argument("--seed", type=int, required=True)
    tr.add_argument("--scheme", default=None)
    tr.add_argument("--profile", default=None)
    tr.add_argument("--value", type=float, default=None, help="sweep value (default: first)")
    tr.add_argument("--output-dir", default=None)
    return parser


def _run(args) -> int:
    spec = parse_config(args.config, output_dir=args.output_dir)
    out = Path(spec.output_dir)
    total = len(spec.tasks())
    done = [0]

    def progress(rec):
        done[0] += 1
        if not args.quiet:
            print(f"[{done[0]}/{total}] {rec.scheme} {rec.profile} {rec.sweep_value:g} "
                  f"seed={rec.seed} wsr={rec.wsr_bps_hz:.3f} {rec.status}", file=sys.stderr)

    records, rows = run_experiment(spec, jobs=args.jobs, progress=progress)
    write_csv(records, out / "runs.csv")
    write_aggregate_csv(rows, out / "aggregate.csv")
    write_figure_csv(rows, out / "figure.csv")
    write_plot(rows, out / "wsr.svg", title=f"Mean WSR ({spec.sweep_kind})")
    print(f"wrote {len(records)} runs to {out}")
    return 0


def _validate(args) -> int:
    spec = parse_config(args.config)
    print(f"ok: {spec.sweep_kind} over {list(spec.sweep_values)}, "
          f"{len(spec.schemes)} scheme(s), {len(spec.profiles)} profile(s), "
          f"{len(spec.seeds)} seed(s) -> {len(spec.tasks())} runs")
    return 0


def _trace(args) -> int:
    spec = parse_config(args.config, output_dir=args.output_dir)
    record, trace = trace_run(spec, args.seed, args.scheme, args.profile, args.value)
    path = Path(spec.output_dir) / (
        f"trace_{record.scheme}_{record.profile}_{record.sweep_value:g}_seed{record.seed}.csv")
    write_trace_csv(trace, path)
    print(f"wrote {len(trace)} trace records to {path} (status {record.status})")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _run, "validate": _validate, "trace": _trace}[args.command]
    try:
        return handler(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
