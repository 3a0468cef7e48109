"""Exception hierarchy shared by every module."""


class BagLearnError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(BagLearnError):
    """An argument is malformed: non-finite, empty, or out of range."""


class InvalidConfigError(BagLearnError):
    """A configuration value or combination of values is inconsistent."""


class UnclassifiableObservationError(BagLearnError):
    """The observed areas match no state predicate.

    Carries the raw areas so simulator bugs surface with context instead of
    being silently mapped to the folded state.
    """

    def __init__(self, a_bag: float, a_o: float, a_cube: float):
        self.a_bag = a_bag
        self.a_o = a_o
        self.a_cube = a_cube
        super().__init__(
            f"no state matches areas a_bag={a_bag!r}, a_o={a_o!r}, a_cube={a_cube!r}"
        )


class NoAffordanceError(BagLearnError):
    """Requested actions for a terminal state or from an empty action list."""


class ContractViolationError(BagLearnError):
    """A caller broke an environment contract, e.g. an unaffordable action."""


class MustResetError(ContractViolationError):
    """The environment is terminal and must be reset before stepping."""


class InspectionError(BagLearnError):
    """Hidden simulator internals were queried without the inspection flag."""


class IncompletePolicyError(BagLearnError):
    """Evaluation reached a state the policy has no action for."""

    def __init__(self, state):
        self.state = state
        super().__init__(f"policy has no action for state {state.token!r}")


class TrainStepError(BagLearnError):
    """An environment step failed during training; records the step index."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        super().__init__(f"environment step {step} failed: {cause}")
