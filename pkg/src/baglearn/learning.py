"""Tabular learners: the visit-normalized table, a Q baseline, and training.

The main learner scores every (state, action) pair with a value and a visit
count m.  Two update modes are supported:

* ``damped``  -- value <- (value + reward) / m after incrementing m.  Later
  rewards dominate and constant rewards decay (1, 1, 2/3, 5/12, ... for a
  constant reward of 1), so values are not averages.
* ``mean``    -- value <- value + (reward - value) / m, the incremental
  arithmetic mean of all rewards seen for the pair.

Both modes agree after a single visit, and the greedy policy extracted from
either is invariant under positive scaling of all rewards.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .errors import (
    InvalidConfigError,
    InvalidInputError,
    NoAffordanceError,
    TrainStepError,
)
from .task import (
    ActionPair,
    TaskState,
    action_key_indices,
    object_at_center,
    reward,
)

UPDATE_DAMPED = "damped"
UPDATE_MEAN = "mean"
UPDATE_MODES = (UPDATE_DAMPED, UPDATE_MEAN)

EXPLORE_EPSILON_GREEDY = "epsilon-greedy"
EXPLORE_ROUND_ROBIN = "round-robin"
EXPLORATION_SCHEDULES = (EXPLORE_EPSILON_GREEDY, EXPLORE_ROUND_ROBIN)


@dataclass
class TableEntry:
    value: float = 0.0
    visits: int = 0


class PiTable:
    """Per (state, action-key) value and visit count."""

    def __init__(self, update_mode: str = UPDATE_DAMPED):
        if update_mode not in UPDATE_MODES:
            raise InvalidConfigError(f"unknown update mode {update_mode!r}")
        self.update_mode = update_mode
        self._entries: dict[tuple[TaskState, str], TableEntry] = {}

    def value(self, state: TaskState, key: str) -> float:
        entry = self._entries.get((state, key))
        return entry.value if entry is not None else 0.0

    def visits(self, state: TaskState, key: str) -> int:
        entry = self._entries.get((state, key))
        return entry.visits if entry is not None else 0

    def update(self, state: TaskState, key: str, r: float) -> float:
        if not math.isfinite(r):
            raise InvalidInputError(f"reward must be finite, got {r!r}")
        entry = self._entries.setdefault((state, key), TableEntry())
        entry.visits += 1
        if self.update_mode == UPDATE_DAMPED:
            entry.value = (entry.value + r) / entry.visits
        else:
            entry.value = entry.value + (r - entry.value) / entry.visits
        return entry.value

    def states(self) -> list[TaskState]:
        return sorted({s for s, _ in self._entries}, key=lambda s: s.value)

    def items_for(self, state: TaskState) -> list[tuple[str, float]]:
        return [(k, e.value) for (s, k), e in self._entries.items() if s is state]

    def copy(self) -> "PiTable":
        clone = PiTable(self.update_mode)
        clone._entries = {
            k: TableEntry(e.value, e.visits) for k, e in self._entries.items()
        }
        return clone

    def __len__(self) -> int:
        return len(self._entries)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("state,action_key,value,visits\n")
            for (state, key), entry in sorted(
                self._entries.items(), key=_table_sort_key
            ):
                fh.write(f"{state.token},{key},{entry.value!r},{entry.visits}\n")

    @classmethod
    def load(cls, path: str, update_mode: str = UPDATE_DAMPED) -> "PiTable":
        table = cls(update_mode)
        for state, key, fields in _read_table_rows(path, "state,action_key,value,visits"):
            table._entries[(state, key)] = TableEntry(float(fields[0]), int(fields[1]))
        return table


class QTable:
    """Plain q-value table; unseen pairs default to 0."""

    def __init__(self):
        self._values: dict[tuple[TaskState, str], float] = {}

    def value(self, state: TaskState, key: str) -> float:
        return self._values.get((state, key), 0.0)

    def update(
        self,
        state: TaskState,
        key: str,
        r: float,
        next_state: TaskState,
        next_keys: Sequence[str],
        alpha: float,
        gamma: float,
    ) -> float:
        if not math.isfinite(r):
            raise InvalidInputError(f"reward must be finite, got {r!r}")
        if next_keys:
            best_next = max(self.value(next_state, nk) for nk in next_keys)
        else:
            best_next = 0.0
        q = self.value(state, key)
        q_new = q + alpha * (r + gamma * best_next - q)
        self._values[(state, key)] = q_new
        return q_new

    def states(self) -> list[TaskState]:
        return sorted({s for s, _ in self._values}, key=lambda s: s.value)

    def items_for(self, state: TaskState) -> list[tuple[str, float]]:
        return [(k, v) for (s, k), v in self._values.items() if s is state]

    def copy(self) -> "QTable":
        clone = QTable()
        clone._values = dict(self._values)
        return clone

    def __len__(self) -> int:
        return len(self._values)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("state,action_key,value\n")
            for (state, key), value in sorted(self._values.items(), key=_table_sort_key):
                fh.write(f"{state.token},{key},{value!r}\n")

    @classmethod
    def load(cls, path: str) -> "QTable":
        table = cls()
        for state, key, fields in _read_table_rows(path, "state,action_key,value"):
            table._values[(state, key)] = float(fields[0])
        return table


def _table_sort_key(item):
    (state, key), _ = item
    return (state.value, action_key_indices(key))


def _read_table_rows(path: str, expected_header: str):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != expected_header:
            raise InvalidInputError(
                f"table file {path!r} has header {header!r}, expected {expected_header!r}"
            )
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(expected_header.split(",")):
                raise InvalidInputError(f"malformed row {line_no} in {path!r}: {line!r}")
            yield TaskState.from_token(parts[0]), parts[1], parts[2:]


def pi_update(table: PiTable, state: TaskState, action_key: str, r: float) -> float:
    """Record one reward for (state, action) and return the new value."""
    return table.update(state, action_key, r)


def q_update(
    table: QTable,
    state: TaskState,
    action_key: str,
    r: float,
    next_state: TaskState,
    next_keys: Sequence[str],
    alpha: float,
    gamma: float,
) -> float:
    """One-step q-learning update; `next_keys` empty means terminal."""
    return table.update(state, action_key, r, next_state, next_keys, alpha, gamma)


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run.

    `reward_scale` multiplies every reward before it reaches the table and
    the log; it exists to make scale-invariance of the greedy policy
    directly checkable.
    """

    n: int
    epsilon: float = 0.3
    update_mode: str = UPDATE_DAMPED
    exploration: str = EXPLORE_EPSILON_GREEDY
    seed: int = 0
    alpha: float = 0.1
    gamma: float = 0.9
    reward_scale: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise InvalidConfigError(f"training steps must be at least 1, got {self.n}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidConfigError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.update_mode not in UPDATE_MODES:
            raise InvalidConfigError(f"unknown update mode {self.update_mode!r}")
        if self.exploration not in EXPLORATION_SCHEDULES:
            raise InvalidConfigError(f"unknown exploration schedule {self.exploration!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not (math.isfinite(self.reward_scale) and self.reward_scale > 0):
            raise InvalidConfigError(f"reward_scale must be positive, got {self.reward_scale}")

    def with_(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


def select_action(
    table,
    state: TaskState,
    actions: Sequence[ActionPair],
    cfg: TrainConfig,
    rng: random.Random,
    schedule: dict | None = None,
) -> ActionPair:
    """Pick the next action.

    Epsilon-greedy explores uniformly with probability epsilon and otherwise
    takes the highest-valued action, lowest index first on ties.  The
    round-robin schedule cycles through the list in index order using the
    caller-owned `schedule` counters, one counter per state.
    """
    if not actions:
        raise NoAffordanceError(f"no actions to select from in state {state.token!r}")
    if cfg.exploration == EXPLORE_ROUND_ROBIN:
        counters = schedule if schedule is not None else {}
        i = counters.get(state, 0)
        counters[state] = i + 1
        return actions[i % len(actions)]
    if rng.random() < cfg.epsilon:
        return actions[rng.randrange(len(actions))]
    best_i = 0
    best_v = table.value(state, actions[0].key)
    for i in range(1, len(actions)):
        v = table.value(state, actions[i].key)
        if v > best_v:
            best_v = v
            best_i = i
    return actions[best_i]


def extract_policy(table) -> dict[TaskState, str]:
    """Greedy policy: per state, the updated action with the highest value.

    Ties resolve to the lowest pose indices.  States with no updated action
    are absent, so an empty table yields an empty policy.
    """
    policy: dict[TaskState, str] = {}
    for state in table.states():
        items = sorted(table.items_for(state), key=lambda kv: action_key_indices(kv[0]))
        best_key = None
        best_v = -math.inf
        for key, value in items:
            if value > best_v:
                best_v = value
                best_key = key
        if best_key is not None:
            policy[state] = best_key
    return policy


@dataclass(frozen=True)
class LogStep:
    step: int
    state: TaskState
    action: str
    reward: float
    cum_reward: float


class EpisodeLog:
    """Per-step training record, serializable as CSV."""

    HEADER = "step,state,action,reward,cum_reward"

    def __init__(self, steps: Iterable[LogStep] = ()):
        self.steps: list[LogStep] = list(steps)

    def append(self, step: LogStep) -> None:
        self.steps.append(step)

    def total_reward(self) -> float:
        return self.steps[-1].cum_reward if self.steps else 0.0

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.HEADER + "\n")
            for s in self.steps:
                fh.write(
                    f"{s.step},{s.state.token},{s.action},{s.reward!r},{s.cum_reward!r}\n"
                )

    def __eq__(self, other) -> bool:
        return isinstance(other, EpisodeLog) and self.steps == other.steps

    def __len__(self) -> int:
        return len(self.steps)


def _train_loop(env, cfg: TrainConfig, table, update_step) -> EpisodeLog:
    rng = random.Random(cfg.seed)
    schedule: dict = {}
    log = EpisodeLog()
    cum = 0.0
    for step in range(cfg.n):
        state = env.state
        actions = env.action_space(state)
        pair = select_action(table, state, actions, cfg, rng, schedule)
        try:
            obs_after, state_after, terminal = env.step(pair)
        except Exception as exc:
            raise TrainStepError(step, exc) from exc
        at_center = object_at_center(obs_after, env.center_radius)
        r = reward(state_after, obs_after, env.params, at_center) * cfg.reward_scale
        update_step(state, pair, r, state_after, obs_after, terminal)
        cum += r
        log.append(LogStep(step, state, pair.key, r, cum))
        if terminal:
            env.reset(env.start_stage)
    return log


def train(env, cfg: TrainConfig, table: PiTable | None = None) -> tuple[PiTable, EpisodeLog]:
    """Run `cfg.n` steps against `env`, updating a visit-normalized table.

    Each step observes the state, selects among the state's affordable
    action pairs, steps the environment, scores the transition, and updates
    the pre-step state's row.  A terminal transition consumes its step and
    resets the environment to its start stage.
    """
    if table is None:
        table = PiTable(cfg.update_mode)
    elif table.update_mode != cfg.update_mode:
        raise InvalidConfigError(
            f"table update mode {table.update_mode!r} does not match config {cfg.update_mode!r}"
        )

    def update_step(state, pair, r, state_after, obs_after, terminal):
        table.update(state, pair.key, r)

    log = _train_loop(env, cfg, table, update_step)
    return table, log


def train_q(env, cfg: TrainConfig, table: QTable | None = None) -> tuple[QTable, EpisodeLog]:
    """Like `train` but with the one-step q-learning baseline update."""
    if table is None:
        table = QTable()

    def update_step(state, pair, r, state_after, obs_after, terminal):
        if terminal:
            next_keys: list[str] = []
        else:
            next_keys = [a.key for a in env.action_space(state_after)]
        table.update(state, pair.key, r, state_after, next_keys, cfg.alpha, cfg.gamma)

    log = _train_loop(env, cfg, table, update_step)
    return table, log
