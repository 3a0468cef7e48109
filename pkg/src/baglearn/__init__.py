"""Tabular reinforcement learning testbed for a four-stage bagging task."""

from .errors import (
    BagLearnError,
    ContractViolationError,
    IncompletePolicyError,
    InspectionError,
    InvalidConfigError,
    InvalidInputError,
    MustResetError,
    NoAffordanceError,
    TrainStepError,
    UnclassifiableObservationError,
)
from .geometry import (
    Box,
    Point2,
    Triangle,
    centroid,
    find_closest_node,
    grid_points,
    opening_area,
    opening_triangles,
    polygon_area,
    triangle_area,
)
from .harness import (
    EvalReport,
    ExperimentConfig,
    ExperimentResult,
    evaluate,
    load_experiment_config,
    run_experiment,
    run_training,
    sweep,
)
from .learning import (
    EpisodeLog,
    PiTable,
    QTable,
    TrainConfig,
    extract_policy,
    pi_update,
    q_update,
    select_action,
    train,
    train_q,
)
from .sim import BagEnv, LatentBagModel, default_latent_model, make_env, planted_optimum
from .task import (
    ActionPair,
    AffordanceRule,
    BAG_PRESETS,
    BagParams,
    Observation,
    Primitive,
    Stage,
    TaskState,
    affordances,
    build_action_space,
    classify_state,
    full_unfiltered_count,
    load_bag_params,
    object_at_center,
    reward,
)

__version__ = "0.1.0"
