import math
import random

import pytest

from baglearn.errors import (
    ContractViolationError,
    InspectionError,
    InvalidConfigError,
    MustResetError,
)
from baglearn.learning import TrainConfig, train
from baglearn.sim import (
    CUBE_AREA,
    LatentBagModel,
    TRAJECTORY_HEADER,
    default_latent_model,
    make_env,
    planted_optimum,
    stage_poses,
)
from baglearn.task import (
    BAG_PRESETS,
    Stage,
    TaskState,
    classify_state,
)

from conftest import recovery_model


class TestConstruction:
    def test_initial_state_is_folded(self, default_env):
        assert default_env.state is TaskState.FOLDED
        assert classify_state(default_env.observation, default_env.params) is TaskState.FOLDED

    def test_same_seed_same_initial_observation(self, bag1, default_model):
        a = make_env(bag1, default_model, seed=5)
        b = make_env(bag1, default_model, seed=5)
        assert a.observation == b.observation

    def test_bag2_preset_parameters(self):
        bag2 = BAG_PRESETS["bag2"]
        env = make_env(bag2, default_latent_model(bag2), seed=0)
        assert env.params.a_th == 18_000
        assert env.params.a_oth == 50

    def test_action_space_sizes(self, default_env):
        assert len(default_env.action_space(TaskState.FOLDED)) == 9
        assert len(default_env.action_space(TaskState.EXPANDED)) == 81
        assert len(default_env.action_space(TaskState.OPENED)) == 9
        assert len(default_env.action_space(TaskState.LOADED)) == 81

    def test_quality_array_size_mismatch_raises(self, bag1, default_model):
        bad = LatentBagModel(
            qualities={
                Stage.UNFOLD: (0.5, 0.6),
                Stage.OPEN: default_model.qualities[Stage.OPEN],
                Stage.PLACE: default_model.qualities[Stage.PLACE],
                Stage.CARRY: default_model.qualities[Stage.CARRY],
            },
            unfold_gain=default_model.unfold_gain,
            open_gain=default_model.open_gain,
        )
        with pytest.raises(InvalidConfigError):
            make_env(bag1, bad, seed=0)

    def test_misaligned_place_quality_raises(self, bag1, default_model):
        qualities = dict(default_model.qualities)
        place = list(qualities[Stage.PLACE])
        place[0], best = 0.99, place.index(max(place))
        assert best != 0
        qualities[Stage.PLACE] = tuple(place)
        bad = LatentBagModel(
            qualities=qualities,
            unfold_gain=default_model.unfold_gain,
            open_gain=default_model.open_gain,
        )
        with pytest.raises(InvalidConfigError):
            make_env(bag1, bad, seed=0)


class TestLatentBagModel:
    def test_tied_maximum_rejected(self, default_model):
        qualities = dict(default_model.qualities)
        qualities[Stage.CARRY] = (0.5, 0.5)
        with pytest.raises(InvalidConfigError):
            LatentBagModel(qualities=qualities, unfold_gain=1.0, open_gain=1.0)

    def test_out_of_range_quality_rejected(self, default_model):
        qualities = dict(default_model.qualities)
        qualities[Stage.UNFOLD] = (0.5, 1.5)
        with pytest.raises(InvalidConfigError):
            LatentBagModel(qualities=qualities, unfold_gain=1.0, open_gain=1.0)

    def test_planted_index_is_argmax(self):
        model = default_latent_model(
            BAG_PRESETS["bag1"],
            qualities={Stage.CARRY: tuple(0.9 if i == 17 else 0.1 for i in range(81))},
        )
        assert model.planted_index(Stage.CARRY) == 17

    def test_default_model_qualities_in_range(self, default_model):
        for stage in Stage:
            for q in default_model.qualities[stage]:
                assert 0.0 <= q <= 1.0


class TestReset:
    @pytest.mark.parametrize("stage,expected", [
        (Stage.UNFOLD, TaskState.FOLDED),
        (Stage.OPEN, TaskState.EXPANDED),
        (Stage.PLACE, TaskState.OPENED),
        (Stage.CARRY, TaskState.LOADED),
    ])
    def test_reset_classifies_to_stage_state(self, default_env, stage, expected):
        obs = default_env.reset(stage)
        assert default_env.state is expected
        assert classify_state(obs, default_env.params) is expected

    def test_open_reset_has_small_visible_opening(self, default_env):
        obs = default_env.reset(Stage.OPEN)
        assert obs.a_bag > default_env.params.a_th
        assert 0 < obs.a_o <= default_env.params.a_oth

    def test_carry_reset_has_centered_cube(self, default_env):
        obs = default_env.reset(Stage.CARRY)
        assert obs.a_cube > 0
        assert obs.a_o > default_env.params.a_oth
        assert obs.cube_position == default_env.poses.opening_center

    def test_reset_is_deterministic(self, bag1, default_model):
        a = make_env(bag1, default_model, seed=9)
        b = make_env(bag1, default_model, seed=9)
        assert a.reset(Stage.UNFOLD) == b.reset(Stage.UNFOLD)
        assert a.reset(Stage.PLACE) == b.reset(Stage.PLACE)


class TestStepDynamics:
    def test_carry_with_certain_quality_succeeds(self, bag1):
        model = recovery_model(bag1)
        env = make_env(bag1, model, seed=0, inspectable=True)
        env.reset(Stage.CARRY)
        best = env.action_for(TaskState.LOADED, env.planted_optimum(Stage.CARRY))
        obs, state, terminal = env.step(best)
        assert state is TaskState.SUCCESS
        assert terminal
        assert (obs.a_bag, obs.a_o, obs.a_cube) == (0.0, 0.0, 0.0)

    def test_carry_with_zero_quality_fails(self, bag1):
        env = make_env(bag1, recovery_model(bag1), seed=0)
        env.reset(Stage.CARRY)
        worst = env.action_space(TaskState.LOADED)[0]
        obs, state, terminal = env.step(worst)
        assert state is TaskState.FAIL
        assert terminal
        assert obs.a_cube == CUBE_AREA

    def test_unfold_growth_reaches_cap_within_closed_form_bound(self):
        # With the expansion threshold pushed next to the maximum area, the
        # area cap binds before the threshold Bernoulli can fire, so the
        # best action (quality 1) must reach the cap within
        # ceil((a_b_max - a_bag0) / gain) steps.
        from baglearn.task import BagParams

        params = BagParams(a_th=33_966, a_oth=150, a_b_max=34_000, a_o_max=3_900)
        gain = 5_000.0
        model = default_latent_model(
            params,
            noise_frac=0.0,
            p_refold=0.0,
            unfold_gain=gain,
            qualities={Stage.UNFOLD: tuple(1.0 if i == 4 else 0.0 for i in range(9))},
        )
        env = make_env(params, model, seed=0, inspectable=True)
        best = env.action_for(TaskState.FOLDED, env.planted_optimum(Stage.UNFOLD))
        a0 = env.observation.a_bag
        bound = math.ceil((params.a_b_max - a0) / gain)
        reached_at = None
        for step in range(1, bound + 1):
            before = env.observation.a_bag
            obs, state, _ = env.step(best)
            if state is TaskState.FOLDED:
                assert obs.a_bag == pytest.approx(before + gain)
            if obs.a_bag == params.a_b_max:
                reached_at = step
                break
        assert reached_at is not None and reached_at <= bound

    def test_unfold_failed_crossing_stays_below_threshold(self, bag1):
        model = default_latent_model(
            bag1,
            noise_frac=0.0,
            p_refold=0.0,
            unfold_gain=30_000.0,
            qualities={Stage.UNFOLD: tuple(0.0 if i else 1e-9 for i in range(9))},
        )
        env = make_env(bag1, model, seed=1)
        worst = env.action_space(TaskState.FOLDED)[1]
        obs, state, _ = env.step(worst)
        assert state is TaskState.FOLDED
        assert obs.a_bag < bag1.a_th
        assert obs.a_o == 0.0

    def test_open_crossing_transitions_to_opened(self, bag1):
        env = make_env(bag1, recovery_model(bag1), seed=0, inspectable=True)
        env.reset(Stage.OPEN)
        best = env.action_for(TaskState.EXPANDED, env.planted_optimum(Stage.OPEN))
        obs, state, terminal = env.step(best)
        assert state is TaskState.OPENED
        assert not terminal
        assert obs.a_o > bag1.a_oth

    def test_open_refold_collapses_the_opening(self, bag1):
        # gain 0 and quality 0 make the refold draw the only stochastic
        # branch; p_refold=1 forces it.
        model = default_latent_model(
            bag1,
            noise_frac=0.0,
            p_refold=1.0,
            open_gain=0.0,
            qualities={Stage.OPEN: tuple(1e-9 if i == 0 else 0.0 for i in range(81))},
        )
        env = make_env(bag1, model, seed=0)
        env.reset(Stage.OPEN)
        before = env.observation.a_o
        obs, state, _ = env.step(env.action_space(TaskState.EXPANDED)[5])
        assert state is TaskState.EXPANDED
        assert 0 < obs.a_o < before

    def test_place_at_center_loads_the_bag(self, bag1):
        env = make_env(bag1, recovery_model(bag1), seed=0, inspectable=True)
        env.reset(Stage.PLACE)
        best = env.action_for(TaskState.OPENED, env.planted_optimum(Stage.PLACE))
        obs, state, _ = env.step(best)
        assert state is TaskState.LOADED
        assert obs.a_cube == CUBE_AREA
        assert obs.cube_position == env.poses.opening_center

    def test_place_off_center_removes_the_cube(self, bag1):
        env = make_env(bag1, recovery_model(bag1), seed=0)
        env.reset(Stage.PLACE)
        corner = env.action_space(TaskState.OPENED)[0]
        obs, state, _ = env.step(corner)
        assert state is TaskState.OPENED
        assert obs.a_cube == 0.0

    def test_unaffordable_action_raises(self, default_env):
        default_env.reset(Stage.UNFOLD)
        carry_action = default_env.action_space(TaskState.LOADED)[0]
        with pytest.raises(ContractViolationError):
            default_env.step(carry_action)

    def test_terminal_env_requires_reset(self, bag1):
        env = make_env(bag1, recovery_model(bag1), seed=0)
        env.reset(Stage.CARRY)
        env.step(env.action_space(TaskState.LOADED)[40])
        assert env.state.terminal
        with pytest.raises(MustResetError):
            env.step(env.action_space(TaskState.LOADED)[40])


class TestInvariants:
    def test_observation_always_classifies_to_reported_state(self, bag1, default_model):
        # Cross-module consistency over a long random rollout.
        env = make_env(bag1, default_model, seed=1234)
        rng = random.Random(99)
        stages = list(Stage)
        for i in range(100_000):
            if env.state.terminal:
                env.reset(rng.choice(stages))
            actions = env.action_space(env.state)
            obs, state, _ = env.step(actions[rng.randrange(len(actions))])
            assert classify_state(obs, bag1) is state

    def test_state_index_never_decreases_within_an_episode(self, bag1, default_model):
        env = make_env(bag1, default_model, seed=77)
        rng = random.Random(7)
        for episode in range(300):
            env.reset(Stage.UNFOLD)
            prev = env.state.value
            for _ in range(60):
                if env.state.terminal:
                    break
                actions = env.action_space(env.state)
                _, state, _ = env.step(actions[rng.randrange(len(actions))])
                assert state.value >= prev
                prev = state.value

    def test_sampled_areas_stay_in_range(self, bag1, default_model):
        env = make_env(bag1, default_model, seed=31)
        rng = random.Random(8)
        for _ in range(20_000):
            if env.state.terminal:
                env.reset(rng.choice(list(Stage)))
            actions = env.action_space(env.state)
            obs, _, _ = env.step(actions[rng.randrange(len(actions))])
            assert 0.0 <= obs.a_bag <= bag1.a_b_max
            assert 0.0 <= obs.a_o <= bag1.a_o_max

    def test_same_seed_and_actions_give_identical_trajectories(self, bag1, default_model):
        def rollout():
            env = make_env(bag1, default_model, seed=2024)
            rng = random.Random(55)
            out = []
            for _ in range(500):
                if env.state.terminal:
                    env.reset(Stage.UNFOLD)
                actions = env.action_space(env.state)
                obs, state, term = env.step(actions[rng.randrange(len(actions))])
                out.append((obs.a_bag, obs.a_o, obs.a_cube, state, term))
            return out

        assert rollout() == rollout()


class TestPlantedOptimum:
    def test_requires_inspection_flag(self, bag1, default_model):
        env = make_env(bag1, default_model, seed=0)
        with pytest.raises(InspectionError):
            env.planted_optimum(Stage.CARRY)

    def test_module_level_helper(self, default_env):
        key = planted_optimum(default_env, Stage.CARRY)
        assert key == default_env.planted_optimum(Stage.CARRY)

    def test_argmax_of_custom_qualities(self, bag1):
        model = default_latent_model(
            bag1,
            qualities={Stage.CARRY: tuple(0.9 if i == 1 else (0.1 if i == 0 else 0.3) for i in range(81))},
        )
        env = make_env(bag1, model, seed=0, inspectable=True)
        assert env.planted_index(Stage.CARRY) == 1

    def test_default_planted_policy_is_reliable_end_to_end(self, bag1, default_model):
        # Monte-Carlo estimate over many policy rollouts; the shipped model
        # is calibrated so this clears 0.9 with margin.
        from baglearn.harness import evaluate

        env = make_env(bag1, default_model, seed=424242, inspectable=True)
        policy = {st.state: env.planted_optimum(st) for st in Stage}
        report = evaluate(policy, env, Stage.UNFOLD, attempts=3000, max_steps_per_attempt=50)
        assert report.success_rate >= 0.9


class TestTrajectory:
    def test_rows_and_header(self, bag1, default_model, tmp_path):
        env = make_env(bag1, default_model, seed=0, record_trajectory=True)
        train(env, TrainConfig(n=25, epsilon=0.5, seed=3))
        path = tmp_path / "traj.csv"
        env.save_trajectory(str(path))
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == TRAJECTORY_HEADER
        assert len(lines) == 26
        first = lines[1].split(",")
        assert first[0] == "1"
        assert first[1] in {s.token for s in Stage}
        assert first[6] in {s.token for s in TaskState}


class TestStagePoses:
    def test_carry_grid_is_fine(self, bag1):
        poses = stage_poses(bag1, zeta=3, zeta_carry=9)
        assert len(poses.primary[Stage.CARRY]) == 81
        assert len(poses.primary[Stage.UNFOLD]) == 9

    def test_opening_box_is_concentric(self, bag1):
        poses = stage_poses(bag1, 3, 9)
        assert poses.opening_box.center == poses.bag_box.center
        assert poses.opening_box.width == pytest.approx(math.sqrt(bag1.a_o_max))
