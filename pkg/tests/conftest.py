import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from baglearn.learning import TrainConfig
from baglearn.sim import default_latent_model, make_env
from baglearn.task import BAG_PRESETS, Stage


@pytest.fixture
def bag1():
    return BAG_PRESETS["bag1"]


@pytest.fixture
def default_model(bag1):
    return default_latent_model(bag1)


@pytest.fixture
def default_env(bag1, default_model):
    return make_env(bag1, default_model, seed=0, inspectable=True)


def recovery_model(bag1):
    """Zero-noise model with per-action rewards that identify the optimum.

    Unfold and open qualities ramp so every action's one-step reward is
    distinct; gains keep unfold below the expansion threshold while every
    open action crosses the opening threshold.  Carry qualities are 0/1 so
    its Bernoulli draws are degenerate.
    """
    unfold_q = tuple(0.1 + 0.8 * i / 8 for i in range(9))
    open_q = tuple(0.2 + 0.75 * i / 80 for i in range(81))
    place_q = tuple(0.9 - 0.1 * abs(j - 4) for j in range(9))
    carry_q = tuple(1.0 if i == 40 else 0.0 for i in range(81))
    return default_latent_model(
        bag1,
        noise_frac=0.0,
        p_refold=0.0,
        unfold_gain=10_000.0,
        open_gain=3_500.0,
        qualities={
            Stage.UNFOLD: unfold_q,
            Stage.OPEN: open_q,
            Stage.PLACE: place_q,
            Stage.CARRY: carry_q,
        },
    )


@pytest.fixture
def zero_noise_env(bag1):
    return make_env(bag1, recovery_model(bag1), seed=3, inspectable=True)


@pytest.fixture
def quick_train_cfg():
    return TrainConfig(n=20, epsilon=0.3, seed=11)
