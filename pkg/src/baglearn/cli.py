"""Command-line surface: train, eval, sweep, area, dump-config."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import BagLearnError, InvalidInputError
from .geometry import Point2, opening_area
from .harness import (
    EVAL_SEED_OFFSET,
    build_env,
    default_output_dir,
    evaluate,
    load_experiment_config,
    run_training,
    sweep,
    write_sweep_csv,
)
from .learning import PiTable, QTable, extract_policy
from .task import BAG_PRESETS, Stage, bag_params_to_ini


def _read_points_file(path: str) -> list[Point2]:
    points = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read points file {path!r}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise InvalidInputError(f"line {line_no} of {path!r} is not 'x,y': {line!r}")
        try:
            points.append(Point2(float(parts[0]), float(parts[1])))
        except ValueError:
            raise InvalidInputError(f"line {line_no} of {path!r} has non-numeric coordinates") from None
    return points


def _load_table(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header == "state,action_key,value,visits":
        return PiTable.load(path)
    if header == "state,action_key,value":
        return QTable.load(path)
    raise InvalidInputError(f"unrecognized table header in {path!r}: {header!r}")


def _cmd_train(args) -> int:
    cfg = load_experiment_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    out = Path(args.out) / cfg.name / f"seed_{seed}"
    artifacts = run_training(cfg, seed=seed, out_dir=out, record_trajectory=args.dump_trajectory)
    if not args.no_figures:
        from . import report

        report.save_stage_curves(artifacts.logs, out)
    print(f"trained {cfg.algorithm} for {cfg.total_steps} steps "
          f"({cfg.steps_per_stage} per stage), seed {seed}")
    print(f"table: {artifacts.table_path}")
    for stage, path in artifacts.curve_paths.items():
        print(f"curve {stage.token}: {path}")
    print(f"training time: {artifacts.train_seconds:.2f}s")
    return 0


def _cmd_eval(args) -> int:
    cfg = load_experiment_config(args.config)
    table = _load_table(args.table)
    policy = extract_policy(table)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    env = build_env(cfg, seed + EVAL_SEED_OFFSET)
    report = evaluate(
        policy,
        env,
        Stage.from_token(args.start_stage),
        attempts=args.attempts,
        max_steps_per_attempt=args.max_steps,
    )
    print(f"success rate from {report.start_stage.token}: "
          f"{report.successes}/{report.attempts}")
    for stage in report.stage_entered:
        print(f"  {stage.token}: completed {report.stage_completed[stage]}"
              f"/{report.stage_entered[stage]} entered, "
              f"mean reward {report.stage_rewards[stage]:.4f}")
    print(f"total reward: {report.total_reward:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "eval.csv"
        report.save(str(path))
        print(f"report: {path}")
    return 0


def _cmd_sweep(args) -> int:
    variants = [load_experiment_config(path) for path in args.configs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep(variants)
    csv_path = out / "sweep.csv"
    write_sweep_csv(rows, csv_path)
    print(f"sweep table: {csv_path}")
    if not args.no_figures:
        from . import report

        fig_path = report.save_sweep_figure(rows, out / "sweep.png")
        print(f"sweep figure: {fig_path}")
    errors = [r for r in rows if r.status.startswith("error")]
    for row in errors:
        print(f"variant {row.variant} seed {row.seed}: {row.status}", file=sys.stderr)
    return 1 if errors else 0


def _cmd_area(args) -> int:
    points = _read_points_file(args.points_file)
    print(repr(opening_area(points)))
    return 0


def _cmd_dump_config(args) -> int:
    chunks = [bag_params_to_ini(name, params) for name, params in BAG_PRESETS.items()]
    print("\n".join(chunks), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="baglearn",
        description="Train and evaluate tabular agents on the simulated bagging task.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one agent and write curves, table, figures")
    p_train.add_argument("--config", required=True, help="experiment INI file")
    p_train.add_argument("--seed", type=int, default=None, help="override the config's first seed")
    p_train.add_argument("--out", default=default_output_dir(), help="output directory root")
    p_train.add_argument("--dump-trajectory", action="store_true",
                         help="also write the per-step simulator trajectory CSV")
    p_train.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved table")
    p_eval.add_argument("--table", required=True, help="serialized table CSV")
    p_eval.add_argument("--config", required=True, help="experiment INI file")
    p_eval.add_argument("--start-stage", default="unfold",
                        choices=[s.token for s in Stage])
    p_eval.add_argument("--attempts", type=int, default=10)
    p_eval.add_argument("--max-steps", type=int, default=50)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--out", default=None, help="directory for eval.csv")
    p_eval.set_defaults(func=_cmd_eval)

    p_sweep = sub.add_parser("sweep", help="run several experiment variants and compare")
    p_sweep.add_argument("--configs", nargs="+", required=True, help="experiment INI files")
    p_sweep.add_argument("--out", default=default_output_dir())
    p_sweep.add_argument("--no-figures", action="store_true")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_area = sub.add_parser("area", help="opening area of newline-delimited x,y points")
    p_area.add_argument("--points-file", required=True)
    p_area.set_defaults(func=_cmd_area)

    p_dump = sub.add_parser("dump-config", help="print the shipped bag presets")
    p_dump.set_defaults(func=_cmd_dump_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BagLearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
