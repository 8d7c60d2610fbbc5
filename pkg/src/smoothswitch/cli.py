"""Command-line entry point: ``smoothswitch {run,sweep,compare}``.

Exit codes: 0 success, 1 configuration/data error, 2 runtime or numeric error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError
from .harness import (
    ExperimentConfig,
    emit_csv,
    read_series_csv,
    run_rounds,
    select,
    summarize,
    sweep,
    write_run_outputs,
)

log = logging.getLogger("smoothswitch")


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.policies:
        changes["policies"] = tuple(p for p in args.policies.split(",") if p)
    return config.replace(**changes) if changes else config


def cmd_run(args) -> int:
    config = _load_config(args)
    series = run_rounds(config, jobs=args.jobs)
    paths = write_run_outputs(config, series, config.output_dir)
    labels = list(dict.fromkeys(s.policy for s in series))
    print(f"{'policy':<16}{'updates':>10}{'test_acc':>10}{'test_loss':>11}")
    for label in labels:
        finals = [s.final for s in select(series, label)]
        n = len(finals)
        print(f"{label:<16}{sum(f.update_count for f in finals) / n:>10.0f}"
              f"{sum(f.test_accuracy for f in finals) / n:>10.4f}"
              f"{sum(f.test_loss for f in finals) / n:>11.4f}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    if args.axis:
        values = [float(v) for v in args.values.split(",")] if args.values else []
        config = config.replace(sweep_axis=args.axis, sweep_values=tuple(values))
        ExperimentConfig.from_dict(config.to_dict())  # re-validate
    cells = sweep(config, ours=args.ours, jobs=args.jobs)
    out = Path(config.output_dir)
    table = emit_csv(cells, out / f"sweep_{config.sweep_axis}.csv")
    emit_csv([c.summary for c in cells], out / f"sweep_{config.sweep_axis}_summary.csv")
    print(f"{config.sweep_axis:>12}{'d_acc(pp)':>12}{'d_test_loss':>13}{'d_train_loss':>14}")
    for c in cells:
        s = c.summary
        print(f"{c.value:>12g}{s.d_accuracy:>+12.3f}{s.d_test_loss:>+13.4f}{s.d_train_loss:>+14.4f}")
    print(f"wrote {table}")
    return 0


def cmd_compare(args) -> int:
    ours = read_series_csv(args.ours)
    baseline = read_series_csv(args.baseline)
    if args.ours_policy:
        ours = select(ours, args.ours_policy)
    if args.baseline_policy:
        baseline = select(baseline, args.baseline_policy)
    if len({s.policy for s in ours}) != 1 or len({s.policy for s in baseline}) != 1:
        raise ConfigError("each input must hold exactly one policy; use --ours-policy/--baseline-policy")
    summary = summarize(ours, baseline)
    out = Path(args.out or ".") / "summary.csv"
    emit_csv(summary, out)
    print(f"{summary.ours} - {summary.baseline}: d_acc={summary.d_accuracy:+.3f}pp "
          f"d_test_loss={summary.d_test_loss:+.4f} d_train_loss={summary.d_train_loss:+.4f}")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smoothswitch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-run progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config (defaults used if omitted)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--policies", help="comma-separated policy list, e.g. async,hybrid:K=1")
        p.add_argument("--jobs", type=int, default=1, help="rounds to run in parallel")

    p_run = sub.add_parser("run", help="run every policy for every round, write series CSVs")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="hybrid vs baseline across one swept parameter")
    common(p_sweep)
    p_sweep.add_argument("--axis", choices=("batch_size", "step_size", "delay_std"))
    p_sweep.add_argument("--values", help="comma-separated values for --axis")
    p_sweep.add_argument("--ours", default="hybrid", help="policy compared against the baseline")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="summarize two existing series CSVs")
    p_cmp.add_argument("ours", help="series CSV of the policy under test")
    p_cmp.add_argument("baseline", help="series CSV of the baseline policy")
    p_cmp.add_argument("--ours-policy", help="policy label to pick from the first file")
    p_cmp.add_argument("--baseline-policy", help="policy label to pick from the second file")
    p_cmp.add_argument("--out", help="directory for summary.csv (default: cwd)")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
