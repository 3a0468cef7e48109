"""Seeded stochastic stand-in for the physical bag.

Real training happens on a table with a textile bag; this module replaces
that with a stage-structured sampler whose hidden parameters (per-action
qualities, area gains, noise, refold probability) are declared up front and
calibrated so a planted optimal action exists for every stage.  The point is
a reproducible desk-scale testbed, not cloth physics.

Stage dynamics:

* unfold -- the bag area grows by ``unfold_gain * quality`` plus noise.
  Once the area would cross the folded/expanded threshold, the opening
  becomes visible with probability equal to the action's quality; otherwise
  the bag settles just below the threshold.
* open -- the opening area grows by ``open_gain * quality`` plus noise and
  the bag opens once the opening threshold is exceeded.  A failed attempt
  may let the loose layer fall back: with probability
  ``(1 - quality) * p_refold`` the opening collapses to a small value.
* place -- the cube lands on the chosen placing point (plus noise) and the
  bag is loaded if the landing spot is inside the opening-center radius;
  otherwise the cube is taken off the bag again.
* carry -- a Bernoulli draw on the action's quality decides between the
  success and fail terminal states.

Every emitted observation classifies back to the state the simulator claims
to be in; inconsistencies raise immediately.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import (
    ContractViolationError,
    InspectionError,
    InvalidConfigError,
    MustResetError,
)
from .geometry import Box, Point2, grid_points
from .task import (
    ActionPair,
    BagParams,
    Observation,
    STAGES,
    Stage,
    TaskState,
    build_action_space,
    center_radius,
    classify_state,
)

CUBE_AREA = 625.0
LIFT_HEIGHT = 30.0
CARRY_HEIGHT = 40.0

FOLD_RESET_FRAC = 0.45
FOLD_FLOOR_FRAC = 0.05
FOLD_CEILING_FRAC = 0.98
OPEN_BAG_FRAC = 0.90
OPEN_SEED_FRAC = 0.50
OPEN_FLOOR_FRAC = 0.05
COLLAPSE_FRAC = 0.20
PLACE_RESET_FRAC = 0.60

TRAJECTORY_HEADER = "step,stage,action,a_bag,a_o,a_cube,state"


@dataclass(frozen=True)
class LatentBagModel:
    """Hidden simulator parameters.

    `qualities` holds one array per stage, one entry per action-pair index
    in that stage's canonical action list.  Each stage must have a unique
    best action: that is the planted optimum the tests recover.
    """

    qualities: Mapping[Stage, tuple[float, ...]]
    unfold_gain: float
    open_gain: float
    noise_frac: float = 0.02
    p_refold: float = 0.15
    center_fraction: float = 0.1

    def __post_init__(self):
        for stage in STAGES:
            if stage not in self.qualities:
                raise InvalidConfigError(f"missing quality array for stage {stage.token!r}")
            qs = self.qualities[stage]
            if not qs:
                raise InvalidConfigError(f"empty quality array for stage {stage.token!r}")
            if any(not (0.0 <= q <= 1.0) for q in qs):
                raise InvalidConfigError(f"{stage.token} qualities must lie in [0, 1]")
            top = max(qs)
            if sum(1 for q in qs if q == top) != 1:
                raise InvalidConfigError(
                    f"{stage.token} qualities must have a unique maximum"
                )
        if self.unfold_gain < 0 or self.open_gain < 0:
            raise InvalidConfigError("area gains must be non-negative")
        if self.noise_frac < 0:
            raise InvalidConfigError("noise_frac must be non-negative")
        if not 0.0 <= self.p_refold <= 1.0:
            raise InvalidConfigError("p_refold must lie in [0, 1]")
        if not 0.0 < self.center_fraction < 1.0:
            raise InvalidConfigError("center_fraction must lie in (0, 1)")

    def planted_index(self, stage: Stage) -> int:
        qs = self.qualities[stage]
        return max(range(len(qs)), key=lambda i: qs[i])


@dataclass(frozen=True)
class StagePoses:
    """Static per-stage workspace geometry and pose sets."""

    bag_box: Box
    opening_box: Box
    opening_center: Point2
    cube_home: Point2
    primary: Mapping[Stage, tuple]
    complementary: Mapping[Stage, tuple]


def stage_poses(params: BagParams, zeta: int = 3, zeta_carry: int = 9) -> StagePoses:
    """Derive the workspace layout from the bag parameters.

    The bag occupies a square of area `a_b_max`; the opening is a concentric
    square of area `a_o_max`; the cube waits beside the bag.  Grasping uses
    a coarse grid except in the carry stage, which needs the fine grid.
    """
    side = math.sqrt(params.a_b_max)
    bag_box = Box(0.0, 0.0, side, side)
    oside = math.sqrt(params.a_o_max)
    cx = cy = side / 2.0
    opening_box = Box(cx - oside / 2.0, cy - oside / 2.0, cx + oside / 2.0, cy + oside / 2.0)
    cube_home = Point2(side * 1.15, side * 0.5)

    unfold_p = tuple(grid_points(bag_box, zeta))
    open_p = tuple(grid_points(opening_box, zeta))
    open_d = tuple(grid_points(bag_box, zeta))
    place_d = tuple(grid_points(opening_box, zeta))
    carry_p = tuple(grid_points(bag_box, zeta_carry))

    primary = {
        Stage.UNFOLD: unfold_p,
        Stage.OPEN: open_p,
        Stage.PLACE: (cube_home,),
        Stage.CARRY: carry_p,
    }
    complementary = {
        Stage.UNFOLD: (LIFT_HEIGHT,) * len(unfold_p),
        Stage.OPEN: open_d,
        Stage.PLACE: place_d,
        Stage.CARRY: (CARRY_HEIGHT,) * len(carry_p),
    }
    return StagePoses(bag_box, opening_box, opening_box.center, cube_home, primary, complementary)


def _dist(a: Point2, b: Point2) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def default_latent_model(
    params: BagParams,
    zeta: int = 3,
    zeta_carry: int = 9,
    noise_frac: float = 0.02,
    p_refold: float = 0.15,
    center_fraction: float = 0.1,
    unfold_gain: float | None = None,
    open_gain: float | None = None,
    qualities: Mapping[Stage, Sequence[float]] | None = None,
) -> LatentBagModel:
    """The shipped default model, calibrated for the default bag presets.

    Qualities are shaped by workspace geometry: unfolding works best when
    grasping the middle of the folded bag, opening when pulling the top
    layer away from the opening, placing when aiming at the opening center,
    and carrying when gripping right at the closed opening.  A tiny
    index-dependent offset keeps every argmax unique even on symmetric
    grids.  Explicit `qualities` entries override the shaped arrays.
    """
    poses = stage_poses(params, zeta, zeta_carry)
    side = poses.bag_box.width
    oside = poses.opening_box.width
    center = poses.opening_center

    def jittered(values: list[float]) -> tuple[float, ...]:
        n = len(values)
        return tuple(v + (n - i) * 1e-9 for i, v in enumerate(values))

    unfold_q = jittered(
        [
            0.25 + 0.65 * math.exp(-((_dist(p, center) / (0.45 * side)) ** 2))
            for p in poses.primary[Stage.UNFOLD]
        ]
    )

    grasp_anchor = Point2(center.x, poses.opening_box.y1)
    drag_anchor = Point2(center.x, 0.9 * side)
    grasp_w = [
        math.exp(-((_dist(p, grasp_anchor) / oside) ** 2)) for p in poses.primary[Stage.OPEN]
    ]
    drag_w = [
        math.exp(-((_dist(p, drag_anchor) / (0.5 * side)) ** 2))
        for p in poses.complementary[Stage.OPEN]
    ]
    open_q = jittered([0.05 + 0.92 * gw * dw for gw in grasp_w for dw in drag_w])

    place_q = jittered(
        [
            0.05 + 0.92 * math.exp(-((_dist(p, center) / (0.55 * oside)) ** 2))
            for p in poses.complementary[Stage.PLACE]
        ]
    )

    # Grip quality is high on the patch of cells covering the closed opening
    # and negligible elsewhere: one ring of near-best cells keeps the patch
    # findable, while the low floor lets a fluke success far from the
    # opening decay back out of the greedy policy.
    carry_cells = zeta_carry
    carry_center = (carry_cells - 1) / 2.0
    carry_vals = []
    for i in range(carry_cells * carry_cells):
        row, col = divmod(i, carry_cells)
        ring = max(abs(row - carry_center), abs(col - carry_center))
        if ring < 0.75:
            carry_vals.append(0.97)
        elif ring < 1.75:
            carry_vals.append(0.93)
        else:
            carry_vals.append(0.03)
    carry_q = jittered(carry_vals)

    arrays = {
        Stage.UNFOLD: unfold_q,
        Stage.OPEN: open_q,
        Stage.PLACE: place_q,
        Stage.CARRY: carry_q,
    }
    if qualities:
        for stage, values in qualities.items():
            arrays[stage] = tuple(float(v) for v in values)

    return LatentBagModel(
        qualities=arrays,
        unfold_gain=0.25 * params.a_b_max if unfold_gain is None else unfold_gain,
        open_gain=1.0 * params.a_o_max if open_gain is None else open_gain,
        noise_frac=noise_frac,
        p_refold=p_refold,
        center_fraction=center_fraction,
    )


@dataclass
class TrajectoryRow:
    step: int
    stage: str
    action: str
    a_bag: float
    a_o: float
    a_cube: float
    state: str


class BagEnv:
    """One bag on one table, owned by one training run.

    `inspectable` gates access to the planted optima so learners cannot
    consult them; `record_trajectory` keeps a per-step area log for the
    trajectory dump.
    """

    def __init__(
        self,
        params: BagParams,
        model: LatentBagModel,
        seed: int = 0,
        zeta: int = 3,
        zeta_carry: int = 9,
        inspectable: bool = False,
        record_trajectory: bool = False,
    ):
        self.params = params
        self.model = model
        self.poses = stage_poses(params, zeta, zeta_carry)
        self.center_radius = center_radius(self.poses.opening_box.diagonal, model.center_fraction)
        self._rng = random.Random(seed)
        self._inspectable = inspectable
        self._record = record_trajectory
        self.trajectory: list[TrajectoryRow] = []
        self._steps = 0

        self._spaces: dict[Stage, tuple[ActionPair, ...]] = {}
        self._key_index: dict[Stage, dict[str, int]] = {}
        for stage in STAGES:
            template = Observation(
                a_bag=1.0,
                a_o=0.0,
                a_cube=0.0,
                primary_points=self.poses.primary[stage],
                complementary_points=self.poses.complementary[stage],
            )
            space = tuple(build_action_space(stage.state, template))
            self._spaces[stage] = space
            self._key_index[stage] = {pair.key: i for i, pair in enumerate(space)}
            if len(model.qualities[stage]) != len(space):
                raise InvalidConfigError(
                    f"{stage.token} quality array has {len(model.qualities[stage])} entries, "
                    f"action space has {len(space)}"
                )

        self._validate_place_alignment()
        self.reset(Stage.UNFOLD)

    def _validate_place_alignment(self) -> None:
        # The planted place action must be the point the geometry lets in.
        points = self.poses.complementary[Stage.PLACE]
        center = self.poses.opening_center
        nearest = min(range(len(points)), key=lambda i: _dist(points[i], center))
        if _dist(points[nearest], center) > self.center_radius:
            raise InvalidConfigError("no placing point lies inside the opening-center radius")
        if self.model.planted_index(Stage.PLACE) != nearest:
            raise InvalidConfigError(
                "place-stage quality maximum must be the point nearest the opening center"
            )

    @property
    def observation(self) -> Observation:
        return self._obs

    @property
    def state(self) -> TaskState:
        return self._state

    @property
    def stage(self) -> Stage:
        return Stage.for_state(self._state)

    @property
    def start_stage(self) -> Stage:
        return self._start_stage

    def action_space(self, state: TaskState) -> tuple[ActionPair, ...]:
        return self._spaces[Stage.for_state(state)]

    def action_for(self, state: TaskState, key: str) -> ActionPair:
        stage = Stage.for_state(state)
        idx = self._key_index[stage].get(key)
        if idx is None:
            raise ContractViolationError(
                f"action {key!r} does not exist in state {state.token!r}"
            )
        return self._spaces[stage][idx]

    def planted_optimum(self, stage: Stage) -> str:
        if not self._inspectable:
            raise InspectionError("planted optima are hidden; construct the env with inspectable=True")
        return self._spaces[stage][self.model.planted_index(stage)].key

    def planted_index(self, stage: Stage) -> int:
        if not self._inspectable:
            raise InspectionError("planted optima are hidden; construct the env with inspectable=True")
        return self.model.planted_index(stage)

    def reset(self, stage: Stage) -> Observation:
        """Re-enter the canonical observation for `stage`."""
        p = self.params
        self._start_stage = stage
        self._cube_pos: Point2 | None = None
        if stage is Stage.UNFOLD:
            self._a_bag = FOLD_RESET_FRAC * p.a_th
            self._a_o = 0.0
        elif stage is Stage.OPEN:
            self._a_bag = OPEN_BAG_FRAC * p.a_b_max
            self._a_o = OPEN_SEED_FRAC * p.a_oth
        elif stage is Stage.PLACE:
            self._a_bag = OPEN_BAG_FRAC * p.a_b_max
            self._a_o = p.a_oth + PLACE_RESET_FRAC * (p.a_o_max - p.a_oth)
        else:
            self._a_bag = OPEN_BAG_FRAC * p.a_b_max
            self._a_o = p.a_oth + PLACE_RESET_FRAC * (p.a_o_max - p.a_oth)
            self._cube_pos = self.poses.opening_center
        self._set_state(stage.state)
        return self._obs

    def step(self, action: ActionPair) -> tuple[Observation, TaskState, bool]:
        """Sample one transition for an affordable action pair."""
        if self._state.terminal:
            raise MustResetError(f"environment is terminal ({self._state.token}); reset first")
        stage = Stage.for_state(self._state)
        idx = self._key_index[stage].get(action.key)
        if idx is None:
            raise ContractViolationError(
                f"action {action.key!r} is not affordable in state {self._state.token!r}"
            )
        q = self.model.qualities[stage][idx]
        if stage is Stage.UNFOLD:
            intended = self._step_unfold(q)
        elif stage is Stage.OPEN:
            intended = self._step_open(q)
        elif stage is Stage.PLACE:
            intended = self._step_place(action.complementary_index)
        else:
            intended = self._step_carry(q)
        self._set_state(intended)
        self._steps += 1
        if self._record:
            obs = self._obs
            self.trajectory.append(
                TrajectoryRow(
                    self._steps, stage.token, action.key,
                    obs.a_bag, obs.a_o, obs.a_cube, self._state.token,
                )
            )
        return self._obs, self._state, self._state.terminal

    def save_trajectory(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(TRAJECTORY_HEADER + "\n")
            for row in self.trajectory:
                fh.write(
                    f"{row.step},{row.stage},{row.action},"
                    f"{row.a_bag!r},{row.a_o!r},{row.a_cube!r},{row.state}\n"
                )

    # stage dynamics

    def _noise(self, scale: float) -> float:
        if self.model.noise_frac <= 0:
            return 0.0
        return self._rng.gauss(0.0, self.model.noise_frac * scale)

    def _step_unfold(self, q: float) -> TaskState:
        p = self.params
        a_new = self._a_bag + self.model.unfold_gain * q + self._noise(p.a_b_max)
        a_new = min(max(a_new, FOLD_FLOOR_FRAC * p.a_th), p.a_b_max)
        if a_new > p.a_th and self._rng.random() < q:
            self._a_bag = a_new
            self._a_o = OPEN_SEED_FRAC * p.a_oth
            return TaskState.EXPANDED
        self._a_bag = min(a_new, FOLD_CEILING_FRAC * p.a_th)
        self._a_o = 0.0
        return TaskState.FOLDED

    def _step_open(self, q: float) -> TaskState:
        p = self.params
        o_new = self._a_o + self.model.open_gain * q + self._noise(p.a_o_max)
        o_new = min(max(o_new, OPEN_FLOOR_FRAC * p.a_oth), p.a_o_max)
        if o_new > p.a_oth:
            self._a_o = o_new
            return TaskState.OPENED
        if self._rng.random() < (1.0 - q) * self.model.p_refold:
            self._a_o = COLLAPSE_FRAC * p.a_oth
        else:
            self._a_o = o_new
        return TaskState.EXPANDED

    def _step_place(self, d_index: int) -> TaskState:
        target = self.poses.complementary[Stage.PLACE][d_index]
        land = Point2(
            target.x + self._noise(self.poses.opening_box.width),
            target.y + self._noise(self.poses.opening_box.height),
        )
        if _dist(land, self.poses.opening_center) <= self.center_radius:
            self._cube_pos = land
            return TaskState.LOADED
        self._cube_pos = None
        return TaskState.OPENED

    def _step_carry(self, q: float) -> TaskState:
        if self._rng.random() < q:
            return TaskState.SUCCESS
        return TaskState.FAIL

    # observation assembly

    def _set_state(self, intended: TaskState) -> None:
        obs = self._build_obs(intended)
        state = classify_state(obs, self.params)
        assert state is intended, f"simulator produced {state.token} for intended {intended.token}"
        self._obs = obs
        self._state = state

    def _build_obs(self, state: TaskState) -> Observation:
        poses = self.poses
        if state is TaskState.FOLDED:
            return Observation(
                self._a_bag, 0.0, 0.0,
                poses.primary[Stage.UNFOLD], poses.complementary[Stage.UNFOLD],
            )
        if state is TaskState.EXPANDED:
            return Observation(
                self._a_bag, self._a_o, 0.0,
                poses.primary[Stage.OPEN], poses.complementary[Stage.OPEN],
                opening_center=poses.opening_center,
            )
        if state is TaskState.OPENED:
            return Observation(
                self._a_bag, self._a_o, 0.0,
                poses.primary[Stage.PLACE], poses.complementary[Stage.PLACE],
                opening_center=poses.opening_center,
                cube_position=poses.cube_home,
            )
        if state is TaskState.LOADED:
            return Observation(
                self._a_bag, self._a_o, CUBE_AREA,
                poses.primary[Stage.CARRY], poses.complementary[Stage.CARRY],
                opening_center=poses.opening_center,
                cube_position=self._cube_pos,
            )
        if state is TaskState.SUCCESS:
            return Observation(0.0, 0.0, 0.0)
        return Observation(0.0, 0.0, CUBE_AREA)


def make_env(
    params: BagParams,
    model: LatentBagModel,
    seed: int = 0,
    zeta: int = 3,
    zeta_carry: int = 9,
    inspectable: bool = False,
    record_trajectory: bool = False,
) -> BagEnv:
    """Build an environment positioned at the folded-bag start."""
    return BagEnv(
        params,
        model,
        seed=seed,
        zeta=zeta,
        zeta_carry=zeta_carry,
        inspectable=inspectable,
        record_trajectory=record_trajectory,
    )


def planted_optimum(env: BagEnv, stage: Stage) -> str:
    """Key of the hidden best action for `stage` (inspection-gated)."""
    return env.planted_optimum(stage)
