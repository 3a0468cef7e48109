"""The bagging task's formal structure.

States, observations, primitive action pairs, affordance rules, action-space
construction, state classification from observed areas, and the reward
function.  Everything here is a pure function over immutable values.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Mapping, Union

from .errors import (
    InvalidConfigError,
    InvalidInputError,
    NoAffordanceError,
    UnclassifiableObservationError,
)
from .geometry import Point2

PoseEntry = Union[Point2, float]


class TaskState(IntEnum):
    """The six task states; SUCCESS and FAIL are terminal."""

    FOLDED = 0
    EXPANDED = 1
    OPENED = 2
    LOADED = 3
    SUCCESS = 4
    FAIL = 5

    @property
    def terminal(self) -> bool:
        return self in (TaskState.SUCCESS, TaskState.FAIL)

    @property
    def token(self) -> str:
        return _STATE_TOKENS[self]

    @classmethod
    def from_token(cls, token: str) -> "TaskState":
        try:
            return _STATE_FROM_TOKEN[token]
        except KeyError:
            raise InvalidInputError(f"unknown state token {token!r}") from None


_STATE_TOKENS = {
    TaskState.FOLDED: "folded",
    TaskState.EXPANDED: "expanded",
    TaskState.OPENED: "opened",
    TaskState.LOADED: "loaded",
    TaskState.SUCCESS: "success",
    TaskState.FAIL: "fail",
}
_STATE_FROM_TOKEN = {v: k for k, v in _STATE_TOKENS.items()}


class Stage(Enum):
    """The four training stages, one per non-terminal state."""

    UNFOLD = "unfold"
    OPEN = "open"
    PLACE = "place"
    CARRY = "carry"

    @property
    def token(self) -> str:
        return self.value

    @property
    def state(self) -> TaskState:
        return _STAGE_STATE[self]

    @classmethod
    def from_token(cls, token: str) -> "Stage":
        try:
            return cls(token)
        except ValueError:
            raise InvalidInputError(f"unknown stage token {token!r}") from None

    @classmethod
    def for_state(cls, state: TaskState) -> "Stage":
        try:
            return _STATE_STAGE[state]
        except KeyError:
            raise InvalidInputError(f"terminal state {state.token!r} has no stage") from None


_STAGE_STATE = {
    Stage.UNFOLD: TaskState.FOLDED,
    Stage.OPEN: TaskState.EXPANDED,
    Stage.PLACE: TaskState.OPENED,
    Stage.CARRY: TaskState.LOADED,
}
_STATE_STAGE = {v: k for k, v in _STAGE_STATE.items()}

STAGES = (Stage.UNFOLD, Stage.OPEN, Stage.PLACE, Stage.CARRY)


class Primitive(Enum):
    """The eight primitive robot motions.

    Primary motions grab some part of the scene; each is always paired with
    the complementary motion that finishes the manoeuvre.  ``close`` grasps
    a single layer next to the opening before the bag is carried, which is
    why it is sometimes described as a grasp.
    """

    GRASP = "grasp"
    SCRATCH = "scratch"
    PICK = "pick"
    CLOSE = "close"
    LIFT = "lift"
    DRAG = "drag"
    PLACE = "place"
    CARRY = "carry"

    @property
    def is_primary(self) -> bool:
        return self in _PRIMARY_KINDS


_PRIMARY_KINDS = frozenset({Primitive.GRASP, Primitive.SCRATCH, Primitive.PICK, Primitive.CLOSE})
_COMPLEMENTARY_KINDS = frozenset(
    {Primitive.LIFT, Primitive.DRAG, Primitive.PLACE, Primitive.CARRY}
)


@dataclass(frozen=True)
class AffordanceRule:
    """The one valid (primary, complementary) pairing for a state."""

    state: TaskState
    primary: Primitive
    complementary: Primitive


AFFORDANCE_RULES: Mapping[TaskState, AffordanceRule] = {
    TaskState.FOLDED: AffordanceRule(TaskState.FOLDED, Primitive.GRASP, Primitive.LIFT),
    TaskState.EXPANDED: AffordanceRule(TaskState.EXPANDED, Primitive.SCRATCH, Primitive.DRAG),
    TaskState.OPENED: AffordanceRule(TaskState.OPENED, Primitive.PICK, Primitive.PLACE),
    TaskState.LOADED: AffordanceRule(TaskState.LOADED, Primitive.CLOSE, Primitive.CARRY),
}


def affordances(state: TaskState) -> AffordanceRule:
    """The affordance rule for a non-terminal state."""
    if state.terminal:
        raise NoAffordanceError(f"terminal state {state.token!r} affords no actions")
    return AFFORDANCE_RULES[state]


@dataclass(frozen=True)
class ActionPair:
    """One primary primitive bound to a pose index, plus its complement.

    The indices address the observation's primary and complementary pose
    sets.  `key` is the stable serialization token used everywhere a table
    or CSV refers to the action.
    """

    primary: Primitive
    primary_index: int
    complementary: Primitive
    complementary_index: int
    key: str = field(init=False, compare=False)

    def __post_init__(self):
        if not self.primary.is_primary or self.complementary.is_primary:
            raise InvalidInputError(
                f"bad action pairing {self.primary.value}/{self.complementary.value}"
            )
        if self.primary_index < 0 or self.complementary_index < 0:
            raise InvalidInputError("pose indices must be non-negative")
        object.__setattr__(
            self,
            "key",
            f"{self.primary.value}:{self.primary_index}"
            f"+{self.complementary.value}:{self.complementary_index}",
        )


def parse_action_key(key: str) -> ActionPair:
    """Rebuild an ActionPair from its serialization key."""
    try:
        primary_part, complementary_part = key.split("+")
        pk, pi = primary_part.split(":")
        ck, ci = complementary_part.split(":")
        return ActionPair(Primitive(pk), int(pi), Primitive(ck), int(ci))
    except (ValueError, KeyError) as exc:
        raise InvalidInputError(f"malformed action key {key!r}") from exc


def action_key_indices(key: str) -> tuple[int, int]:
    """(primary_index, complementary_index) of a key, for ordering."""
    primary_part, complementary_part = key.split("+")
    return int(primary_part.split(":")[1]), int(complementary_part.split(":")[1])


@dataclass(frozen=True)
class BagParams:
    """Per-bag thresholds and maxima.

    `a_th` separates a folded from an expanded bag, `a_oth` a barely visible
    from a usable opening; the maxima normalize rewards.  Lengths are in cm
    and informational only.
    """

    a_th: float
    a_oth: float
    a_b_max: float
    a_o_max: float
    opening_length: float = 0.0
    bag_width: float = 0.0
    material: str = ""

    def __post_init__(self):
        if not (0 < self.a_th < self.a_b_max):
            raise InvalidConfigError(
                f"need 0 < a_th < a_b_max, got a_th={self.a_th}, a_b_max={self.a_b_max}"
            )
        if not (0 < self.a_oth < self.a_o_max):
            raise InvalidConfigError(
                f"need 0 < a_oth < a_o_max, got a_oth={self.a_oth}, a_o_max={self.a_o_max}"
            )


BAG_PRESETS: Mapping[str, BagParams] = {
    "bag1": BagParams(25000, 150, 34000, 3900, opening_length=30, bag_width=35, material="Cotton"),
    "bag2": BagParams(18000, 50, 28000, 3200, opening_length=25, bag_width=25, material="Polyester"),
    "bag3": BagParams(25000, 150, 34000, 3900, opening_length=33, bag_width=26, material="Cotton"),
}

_BAG_FLOAT_KEYS = ("a_th", "a_oth", "a_b_max", "a_o_max", "opening_length", "bag_width")


def bag_params_to_ini(name: str, params: BagParams) -> str:
    lines = [f"[{name}]"]
    lines.append(f"opening_length = {params.opening_length:g}")
    lines.append(f"bag_width = {params.bag_width:g}")
    lines.append(f"material = {params.material}")
    for key in ("a_th", "a_oth", "a_b_max", "a_o_max"):
        lines.append(f"{key} = {getattr(params, key):g}")
    return "\n".join(lines) + "\n"


def bag_params_from_section(section: Mapping[str, str]) -> BagParams:
    """Build BagParams from one config-file section."""
    kwargs = {}
    for key in _BAG_FLOAT_KEYS:
        if key in section:
            try:
                kwargs[key] = float(section[key])
            except ValueError:
                raise InvalidConfigError(f"bag key {key!r} must be numeric") from None
    if "material" in section:
        kwargs["material"] = section["material"]
    missing = [k for k in ("a_th", "a_oth", "a_b_max", "a_o_max") if k not in kwargs]
    if missing:
        raise InvalidConfigError(f"bag section is missing keys: {', '.join(missing)}")
    return BagParams(**kwargs)


def load_bag_params(path: str, name: str | None = None) -> BagParams:
    """Load one bag's parameters from an INI file with one section per bag."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise InvalidConfigError(f"cannot read bag config file {path!r}")
    sections = parser.sections()
    if not sections:
        raise InvalidConfigError(f"no bag sections in {path!r}")
    if name is None:
        name = sections[0]
    if name not in parser:
        raise InvalidConfigError(f"no section {name!r} in {path!r}")
    return bag_params_from_section(parser[name])


@dataclass(frozen=True)
class Observation:
    """Everything the perception side reports for one instant.

    `primary_points` and `complementary_points` are the per-state pose sets
    that primary and complementary primitives index into; complementary
    entries may be 2-D points or scalar lift heights.
    """

    a_bag: float
    a_o: float
    a_cube: float
    primary_points: tuple[PoseEntry, ...] = ()
    complementary_points: tuple[PoseEntry, ...] = ()
    opening_center: Point2 | None = None
    cube_position: Point2 | None = None

    def __post_init__(self):
        for label, v in (("a_bag", self.a_bag), ("a_o", self.a_o), ("a_cube", self.a_cube)):
            if not math.isfinite(v) or v < 0:
                raise InvalidInputError(f"{label} must be finite and non-negative, got {v!r}")


def classify_state(obs: Observation, params: BagParams) -> TaskState:
    """Map observed areas to a task state.

    Predicates are evaluated most-specific first (success, fail, loaded,
    opened, expanded, folded) because an opened bag also satisfies the
    expanded predicate.  Area combinations outside every predicate raise
    instead of defaulting, so an inconsistent simulator fails loudly.
    """
    a, o, c = obs.a_bag, obs.a_o, obs.a_cube
    if a == 0 and o == 0:
        return TaskState.SUCCESS if c == 0 else TaskState.FAIL
    if a > params.a_th and o > params.a_oth:
        return TaskState.LOADED if c > 0 else TaskState.OPENED
    if a > params.a_th and o > 0 and c == 0:
        return TaskState.EXPANDED
    if a < params.a_th and o == 0 and c == 0:
        return TaskState.FOLDED
    raise UnclassifiableObservationError(a, o, c)


DEFAULT_CENTER_FRACTION = 0.1


def center_radius(opening_diagonal: float, fraction: float = DEFAULT_CENTER_FRACTION) -> float:
    """Radius within which the object counts as centered in the opening."""
    if opening_diagonal <= 0 or fraction <= 0:
        raise InvalidInputError("opening diagonal and fraction must be positive")
    return fraction * opening_diagonal


def object_at_center(obs: Observation, radius: float) -> bool:
    """True when the observed object sits within `radius` of the opening center."""
    if obs.cube_position is None or obs.opening_center is None:
        return False
    dx = obs.cube_position.x - obs.opening_center.x
    dy = obs.cube_position.y - obs.opening_center.y
    return dx * dx + dy * dy <= radius * radius


def reward(
    state_after: TaskState,
    obs_after: Observation,
    params: BagParams,
    at_center: bool = False,
) -> float:
    """Reward for landing in `state_after` with areas `obs_after`.

    Folded and expanded states pay the normalized bag area, the opened state
    the normalized opening area, both clamped to 1.  A loaded bag pays 1
    only when the object is centered.  Success pays 1, failure -0.1.
    """
    if params.a_b_max <= 0 or params.a_o_max <= 0:
        raise InvalidConfigError("a_b_max and a_o_max must be positive")
    if state_after in (TaskState.FOLDED, TaskState.EXPANDED):
        return min(obs_after.a_bag / params.a_b_max, 1.0)
    if state_after is TaskState.OPENED:
        return min(obs_after.a_o / params.a_o_max, 1.0)
    if state_after is TaskState.LOADED:
        return 1.0 if at_center else 0.0
    if state_after is TaskState.SUCCESS:
        return 1.0
    if state_after is TaskState.FAIL:
        return -0.1
    return 0.0


PAIRING_CARTESIAN = "cartesian"
PAIRING_INDEXED = "indexed"

PAIRING_DEFAULTS: Mapping[TaskState, str] = {
    TaskState.FOLDED: PAIRING_INDEXED,
    TaskState.EXPANDED: PAIRING_CARTESIAN,
    TaskState.OPENED: PAIRING_CARTESIAN,
    TaskState.LOADED: PAIRING_INDEXED,
}


def build_action_space(
    state: TaskState,
    obs: Observation,
    pairing: str | None = None,
) -> list[ActionPair]:
    """All affordable action pairs for `state` given the observed pose sets.

    `cartesian` pairing crosses every primary pose with every complementary
    pose; `indexed` binds them one-to-one, which keeps lift-style complements
    attached to their grasp points.  Defaults: folded and loaded bags pair
    indexed, expanded and opened bags pair cartesian.
    """
    rule = affordances(state)
    primary_points = obs.primary_points
    complementary_points = obs.complementary_points
    if not primary_points or not complementary_points:
        raise InvalidInputError(f"state {state.token!r} needs non-empty pose sets")
    mode = PAIRING_DEFAULTS[state] if pairing is None else pairing
    if mode == PAIRING_INDEXED:
        if len(primary_points) != len(complementary_points):
            raise InvalidConfigError(
                "indexed pairing needs equally sized pose sets, got "
                f"{len(primary_points)} and {len(complementary_points)}"
            )
        return [
            ActionPair(rule.primary, i, rule.complementary, i)
            for i in range(len(primary_points))
        ]
    if mode == PAIRING_CARTESIAN:
        return [
            ActionPair(rule.primary, i, rule.complementary, j)
            for i in range(len(primary_points))
            for j in range(len(complementary_points))
        ]
    raise InvalidConfigError(f"unknown pairing mode {mode!r}")


def full_unfiltered_count(num_primitives: int, num_pose_points: int, num_states: int) -> int:
    """Size of the exploration space with no affordance filtering at all.

    The affordance rules cut this product down to one primitive pair per
    state, which is the whole point of carrying the rules around.
    """
    for label, v in (
        ("num_primitives", num_primitives),
        ("num_pose_points", num_pose_points),
        ("num_states", num_states),
    ):
        if v < 1:
            raise InvalidInputError(f"{label} must be at least 1, got {v}")
    return num_primitives * num_pose_points * num_states
