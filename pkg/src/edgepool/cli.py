"""Command-line entry point: run, sweep, select, and plot-data subcommands.

Exit codes: 0 on success, 2 when a selection finds no feasible candidate,
1 on any failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiment

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INFEASIBLE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgepool",
        description="Simulate and cost-account pooled federated training on edge APs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a single run and write its record")
    run.add_argument("--config", required=True, help="experiment config file")
    run.add_argument("--k", type=int, help="number of sub-pools (default: first in config)")
    run.add_argument("--lambda-max", type=float, help="peak arrival rate (default: first in config)")
    run.add_argument("--seed", type=int, help="run seed (default: first in config)")
    run.add_argument("--out", help="output directory (default: config out_dir)")

    sweep = sub.add_parser("sweep", help="run the full k x lambda_max x seeds grid")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", help="output directory (default: config out_dir)")

    select = sub.add_parser(
        "select", help="fit surrogates to a sweep CSV and rank policy candidates"
    )
    select.add_argument("--config", required=True)
    select.add_argument("--in", dest="results_csv", required=True, help="summary CSV")
    select.add_argument("--require-accuracy", type=float, required=True)
    select.add_argument("--lambda-max", type=float, help="workload to select for")
    select.add_argument("--out", help="directory for the selection report")

    plot_data = sub.add_parser(
        "plot-data", help="flatten run records into a plot-ready curves CSV"
    )
    plot_data.add_argument("--in", dest="records_dir", required=True,
                           help="directory holding run_*.json records")
    plot_data.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_run(args) -> int:
    config = experiment.load_config(args.config)
    k = args.k if args.k is not None else config.k[0]
    lam = args.lambda_max if args.lambda_max is not None else config.lambda_max[0]
    seed = args.seed if args.seed is not None else config.seeds[0]
    record = experiment.run_single(config, k, lam, seed)
    out = Path(args.out if args.out else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / experiment.record_filename(k, lam, seed)
    path.write_text(record.to_json())
    row = record.summary_row()
    print(f"wrote {path}")
    print(
        f"k={k} lambda_max={lam} seed={seed}: "
        f"accuracy={row['final_accuracy']:.4f} loss={row['final_loss']:.4f} "
        f"total={row['total_ru_avg']:.2f} RU/s"
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = experiment.load_config(args.config)
    out = Path(args.out if args.out else config.out_dir)
    result = experiment.run_sweep(config, out_dir=out)
    print(f"wrote {out / 'summary.csv'} ({len(result.rows)} rows)")
    for key, error in result.failures:
        print(f"FAILED k={key[0]} lambda_max={key[1]} seed={key[2]}: {error}",
              file=sys.stderr)
    return EXIT_OK if not result.failures else EXIT_FAILURE


def _cmd_select(args) -> int:
    config = experiment.load_config(args.config)
    report = experiment.fit_and_select(
        config,
        args.results_csv,
        required_accuracy=args.require_accuracy,
        lambda_max=args.lambda_max,
    )
    text = report.to_text()
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "selection_report.txt").write_text(text + "\n")
    return EXIT_OK if report.candidates else EXIT_INFEASIBLE


def _cmd_plot_data(args) -> int:
    records = experiment.load_records(args.records_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "curves.csv"
    experiment.write_curves_csv(records, path)
    print(f"wrote {path} ({len(records)} runs)")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "select": _cmd_select,
        "plot-data": _cmd_plot_data,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
