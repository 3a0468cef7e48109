"""End-to-end experiment protocol: staged training, evaluation, sweeps.

A run trains one table through the four stages in task order, each stage
getting the same step budget with the environment reset to that stage.  The
trained greedy policy is then evaluated by repeated attempts from a start
stage, repeating the chosen action whenever the state does not transition.

All CSV output is deterministic for a fixed configuration and seed: floats
are written with `repr`, rows are ordered, and wall-clock timings stay out
of the files.
"""

from __future__ import annotations

import configparser
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    BagLearnError,
    IncompletePolicyError,
    InvalidConfigError,
)
from .learning import (
    EpisodeLog,
    TrainConfig,
    extract_policy,
    train,
    train_q,
)
from .sim import BagEnv, LatentBagModel, default_latent_model, make_env
from .task import (
    BAG_PRESETS,
    BagParams,
    STAGES,
    Stage,
    TaskState,
    bag_params_from_section,
    object_at_center,
    reward,
)

ALGORITHM_PI = "pi"
ALGORITHM_Q = "q"
ALGORITHMS = (ALGORITHM_PI, ALGORITHM_Q)

DEFAULT_EVAL_ATTEMPTS = 10
DEFAULT_MAX_EVAL_STEPS = 50
EVAL_SEED_OFFSET = 10_000_019
STAGE_SEED_STRIDE = 1_000_003

OUTPUT_DIR_ENV_VAR = "BAGLEARN_OUT"
SWEEP_HEADER = "variant,seed,status,total_reward,success_from_unfold,success_from_open"
EVAL_HEADER = "scope,entered,completed,reward"


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV_VAR, "runs")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs: bag, simulator, learner, protocol."""

    name: str = "experiment"
    algorithm: str = ALGORITHM_PI
    bag: BagParams = field(default_factory=lambda: BAG_PRESETS["bag1"])
    steps_per_stage: int = 100
    eval_attempts: int = DEFAULT_EVAL_ATTEMPTS
    eval_start_stage: Stage = Stage.UNFOLD
    max_eval_steps: int = DEFAULT_MAX_EVAL_STEPS
    seeds: tuple[int, ...] = (0,)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(n=1))
    zeta: int = 3
    zeta_carry: int = 9
    model: LatentBagModel | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.steps_per_stage < 1:
            raise InvalidConfigError("steps_per_stage must be at least 1")
        if self.eval_attempts < 1:
            raise InvalidConfigError("eval_attempts must be at least 1")
        if self.max_eval_steps < 1:
            raise InvalidConfigError("max_eval_steps must be at least 1")
        if not self.seeds:
            raise InvalidConfigError("at least one seed is required")
        if self.model is None:
            object.__setattr__(
                self, "model", default_latent_model(self.bag, self.zeta, self.zeta_carry)
            )

    @property
    def total_steps(self) -> int:
        return self.steps_per_stage * len(STAGES)

    def with_(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)


def _parse_seeds(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(s.strip()) for s in raw.split(",") if s.strip())
    except ValueError:
        raise InvalidConfigError(f"seeds must be comma-separated integers, got {raw!r}") from None


def _parse_quality_overrides(section: Mapping[str, str]) -> dict[Stage, tuple[float, ...]]:
    overrides = {}
    for stage in STAGES:
        key = f"{stage.token}_q"
        if key in section:
            overrides[stage] = tuple(float(v) for v in section[key].split(","))
    return overrides


def load_experiment_config(path: str) -> ExperimentConfig:
    """Read one experiment from an INI file.

    Sections: `[experiment]` for the protocol, `[train]` for learner knobs,
    `[bag]` for an inline bag (or `bag = <preset>` under `[experiment]`),
    and `[sim]` for simulator geometry and latent-model overrides, so a
    full experiment fits in one file.
    """
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise InvalidConfigError(f"cannot read experiment config {path!r}")

    exp = parser["experiment"] if "experiment" in parser else {}
    name = exp.get("name", Path(path).stem)
    algorithm = exp.get("algorithm", ALGORITHM_PI)
    steps_per_stage = int(exp.get("steps_per_stage", "100"))
    eval_attempts = int(exp.get("eval_attempts", str(DEFAULT_EVAL_ATTEMPTS)))
    eval_start_stage = Stage.from_token(exp.get("eval_start_stage", "unfold"))
    max_eval_steps = int(exp.get("max_eval_steps", str(DEFAULT_MAX_EVAL_STEPS)))
    seeds = _parse_seeds(exp.get("seeds", "0"))

    if "bag" in parser:
        bag = bag_params_from_section(parser["bag"])
    else:
        preset = exp.get("bag", "bag1")
        if preset not in BAG_PRESETS:
            raise InvalidConfigError(f"unknown bag preset {preset!r}")
        bag = BAG_PRESETS[preset]

    tr = parser["train"] if "train" in parser else {}
    train_cfg = TrainConfig(
        n=steps_per_stage,
        epsilon=float(tr.get("epsilon", "0.3")),
        update_mode=tr.get("update_mode", "damped"),
        exploration=tr.get("exploration", "epsilon-greedy"),
        seed=seeds[0],
        alpha=float(tr.get("alpha", "0.1")),
        gamma=float(tr.get("gamma", "0.9")),
        reward_scale=float(tr.get("reward_scale", "1.0")),
    )

    sm = parser["sim"] if "sim" in parser else {}
    zeta = int(sm.get("zeta", "3"))
    zeta_carry = int(sm.get("zeta_carry", "9"))
    model = default_latent_model(
        bag,
        zeta,
        zeta_carry,
        noise_frac=float(sm.get("noise_frac", "0.02")),
        p_refold=float(sm.get("p_refold", "0.15")),
        center_fraction=float(sm.get("center_fraction", "0.1")),
        unfold_gain=float(sm["unfold_gain"]) if "unfold_gain" in sm else None,
        open_gain=float(sm["open_gain"]) if "open_gain" in sm else None,
        qualities=_parse_quality_overrides(sm) or None,
    )

    return ExperimentConfig(
        name=name,
        algorithm=algorithm,
        bag=bag,
        steps_per_stage=steps_per_stage,
        eval_attempts=eval_attempts,
        eval_start_stage=eval_start_stage,
        max_eval_steps=max_eval_steps,
        seeds=seeds,
        train=train_cfg,
        zeta=zeta,
        zeta_carry=zeta_carry,
        model=model,
    )


def build_env(cfg: ExperimentConfig, seed: int, record_trajectory: bool = False) -> BagEnv:
    return make_env(
        cfg.bag,
        cfg.model,
        seed=seed,
        zeta=cfg.zeta,
        zeta_carry=cfg.zeta_carry,
        record_trajectory=record_trajectory,
    )


def train_tables(cfg: ExperimentConfig, seed: int, env: BagEnv | None = None):
    """Train one table through all four stages in task order.

    Returns (final table, per-stage logs, per-stage table snapshots).  The
    stage budgets share a single table so later stages keep what earlier
    budgets learned about their states.
    """
    if env is None:
        env = build_env(cfg, seed)
    table = None
    logs: dict[Stage, EpisodeLog] = {}
    snapshots: dict[Stage, object] = {}
    for i, stage in enumerate(STAGES):
        env.reset(stage)
        stage_cfg = cfg.train.with_(n=cfg.steps_per_stage, seed=seed + i * STAGE_SEED_STRIDE)
        if cfg.algorithm == ALGORITHM_PI:
            table, log = train(env, stage_cfg, table=table)
        else:
            table, log = train_q(env, stage_cfg, table=table)
        logs[stage] = log
        snapshots[stage] = table.copy()
    return table, logs, snapshots


@dataclass
class EvalReport:
    """Outcome of repeated policy attempts from one start stage.

    `stage_entered` counts attempts that reached each stage and
    `stage_completed` those that also moved past it (for the carry stage:
    ended in success).  `stage_rewards` holds the mean reward per step taken
    in each stage, so a policy that stalls cannot out-score one that
    finishes; their sum is `total_reward`.
    """

    start_stage: Stage
    attempts: int
    successes: int
    stage_entered: dict[Stage, int]
    stage_completed: dict[Stage, int]
    stage_rewards: dict[Stage, float]
    stage_steps: dict[Stage, int] = field(default_factory=dict)
    train_seconds: float | None = None

    @property
    def success_rate(self) -> float:
        return self.successes / self.attempts

    @property
    def total_reward(self) -> float:
        return sum(self.stage_rewards.values())

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(EVAL_HEADER + "\n")
            for stage in STAGES:
                fh.write(
                    f"{stage.token},{self.stage_entered[stage]},"
                    f"{self.stage_completed[stage]},{self.stage_rewards[stage]!r}\n"
                )
            fh.write(
                f"end_to_end,{self.attempts},{self.successes},{self.total_reward!r}\n"
            )


def evaluate(
    policy: Mapping[TaskState, str],
    env: BagEnv,
    start_stage: Stage,
    attempts: int = DEFAULT_EVAL_ATTEMPTS,
    max_steps_per_attempt: int = DEFAULT_MAX_EVAL_STEPS,
) -> EvalReport:
    """Greedily execute `policy` from `start_stage` for `attempts` attempts.

    Each attempt runs until success, failure, or the step budget; since the
    action is looked up from the current state, a non-transitioning step
    simply repeats the same action.  The policy and its table are never
    modified.
    """
    if attempts < 1 or max_steps_per_attempt < 1:
        raise InvalidConfigError("attempts and max_steps_per_attempt must be at least 1")
    entered = {s: 0 for s in STAGES}
    completed = {s: 0 for s in STAGES}
    rewards = {s: 0.0 for s in STAGES}
    steps = {s: 0 for s in STAGES}
    successes = 0
    for _ in range(attempts):
        env.reset(start_stage)
        visited = {env.state}
        for _ in range(max_steps_per_attempt):
            state = env.state
            if state.terminal:
                break
            key = policy.get(state)
            if key is None:
                raise IncompletePolicyError(state)
            pair = env.action_for(state, key)
            obs_after, state_after, terminal = env.step(pair)
            at_center = object_at_center(obs_after, env.center_radius)
            stage = Stage.for_state(state)
            rewards[stage] += reward(state_after, obs_after, env.params, at_center)
            steps[stage] += 1
            visited.add(state_after)
            if terminal:
                break
        if TaskState.SUCCESS in visited:
            successes += 1
        for stage in STAGES:
            if stage.state not in visited:
                continue
            entered[stage] += 1
            if stage is Stage.CARRY:
                done = TaskState.SUCCESS in visited
            else:
                done = any(s.value > stage.state.value for s in visited)
            if done:
                completed[stage] += 1
    mean_rewards = {
        s: (rewards[s] / steps[s] if steps[s] else 0.0) for s in STAGES
    }
    return EvalReport(
        start_stage, attempts, successes, entered, completed, mean_rewards, steps
    )


@dataclass
class ExperimentResult:
    """One (config, seed) training run plus its two standard evaluations."""

    config: ExperimentConfig
    seed: int
    report_from_unfold: EvalReport
    report_from_open: EvalReport
    train_seconds: float

    @property
    def total_reward(self) -> float:
        return self.report_from_unfold.total_reward


def run_experiment(cfg: ExperimentConfig, seed: int) -> ExperimentResult:
    """Train once, then evaluate from the unfold and open stages."""
    t0 = time.perf_counter()
    table, _, _ = train_tables(cfg, seed)
    seconds = time.perf_counter() - t0
    policy = extract_policy(table)
    env = build_env(cfg, seed + EVAL_SEED_OFFSET)
    rep_unfold = evaluate(policy, env, Stage.UNFOLD, cfg.eval_attempts, cfg.max_eval_steps)
    rep_open = evaluate(policy, env, Stage.OPEN, cfg.eval_attempts, cfg.max_eval_steps)
    rep_unfold.train_seconds = seconds
    rep_open.train_seconds = seconds
    return ExperimentResult(cfg, seed, rep_unfold, rep_open, seconds)


@dataclass
class RunArtifacts:
    """What a `run_training` call produced on disk and in memory."""

    table: object
    logs: dict[Stage, EpisodeLog]
    snapshots: dict[Stage, object]
    table_path: Path | None
    curve_paths: dict[Stage, Path]
    train_seconds: float


def run_training(
    cfg: ExperimentConfig,
    seed: int | None = None,
    out_dir: str | Path | None = None,
    record_trajectory: bool = False,
) -> RunArtifacts:
    """Train through all stages, writing curves and the table when asked.

    With `out_dir` set, writes one learning-curve CSV per stage plus the
    serialized final table (and the per-step trajectory when recording).
    """
    if seed is None:
        seed = cfg.seeds[0]
    env = build_env(cfg, seed, record_trajectory=record_trajectory)
    t0 = time.perf_counter()
    table, logs, snapshots = train_tables(cfg, seed, env=env)
    seconds = time.perf_counter() - t0

    table_path = None
    curve_paths: dict[Stage, Path] = {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for stage, log in logs.items():
            path = out / f"curve_{stage.token}.csv"
            log.save(str(path))
            curve_paths[stage] = path
        table_name = "pi_table.csv" if cfg.algorithm == ALGORITHM_PI else "q_table.csv"
        table_path = out / table_name
        table.save(str(table_path))
        if record_trajectory:
            env.save_trajectory(str(out / "trajectory.csv"))
    return RunArtifacts(table, logs, snapshots, table_path, curve_paths, seconds)


@dataclass
class SweepRow:
    variant: str
    seed: str
    status: str
    total_reward: float | None
    success_from_unfold: float | None
    success_from_open: float | None

    def as_csv(self) -> str:
        def fmt(v):
            return "" if v is None else repr(v)

        return (
            f"{self.variant},{self.seed},{self.status},"
            f"{fmt(self.total_reward)},{fmt(self.success_from_unfold)},"
            f"{fmt(self.success_from_open)}"
        )


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _std(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    m = _mean(values)
    return (sum((v - m) ** 2 for v in values) / (len(values) - 1)) ** 0.5


def sweep(variants: Sequence[ExperimentConfig], out_path: str | Path | None = None) -> list[SweepRow]:
    """Run every (variant, seed) pair and tabulate the comparison.

    One data row per pair, then a mean and a std summary row per variant.
    A failing variant is recorded in its rows and does not stop the others.
    """
    if not variants:
        raise InvalidConfigError("sweep needs at least one variant")
    names = [v.name for v in variants]
    if len(set(names)) != len(names):
        raise InvalidConfigError("sweep variant names must be unique")

    rows: list[SweepRow] = []
    for cfg in variants:
        totals: list[float] = []
        unfold_rates: list[float] = []
        open_rates: list[float] = []
        for seed in cfg.seeds:
            try:
                result = run_experiment(cfg, seed)
            except BagLearnError as exc:
                rows.append(SweepRow(cfg.name, str(seed), f"error: {exc}", None, None, None))
                continue
            totals.append(result.total_reward)
            unfold_rates.append(result.report_from_unfold.success_rate)
            open_rates.append(result.report_from_open.success_rate)
            rows.append(
                SweepRow(
                    cfg.name,
                    str(seed),
                    "ok",
                    result.total_reward,
                    result.report_from_unfold.success_rate,
                    result.report_from_open.success_rate,
                )
            )
        if totals:
            rows.append(
                SweepRow(cfg.name, "mean", "summary", _mean(totals), _mean(unfold_rates), _mean(open_rates))
            )
            rows.append(
                SweepRow(cfg.name, "std", "summary", _std(totals), _std(unfold_rates), _std(open_rates))
            )
    if out_path is not None:
        write_sweep_csv(rows, out_path)
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for row in rows:
            fh.write(row.as_csv() + "\n")
