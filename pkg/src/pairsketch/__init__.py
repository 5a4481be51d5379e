"""Pair-sampling sketch simulator and the streaming estimators built on it."""
from .errors import (
    CapacityError,
    ConfigError,
    InvalidInitError,
    InvalidParamsError,
    InvalidQueryError,
    PairsketchError,
    ParseError,
    PermutationError,
    ScriptError,
    SketchDestroyedError,
    TooLargeError,
    ValidationError,
)
from .permutation import CyclicShift, PermutationSpec, SwapStage, swap_perm
from .qsim import (
    OutcomeDistribution,
    StateVector,
    enumerate_distribution,
    qs_apply_permutation,
    qs_create,
    qs_measure_one,
    qs_measure_pair,
)
from .sketch import (
    QueryOne,
    QueryOutcome,
    QueryPair,
    ReplayStep,
    ReplayTrace,
    ScriptOp,
    SketchHandle,
    Update,
    create,
    replay_noiseless,
    run_script,
)
from .universe import Block, Factor, IntRange, Labels, UniverseSpec

__all__ = [
    "Block",
    "CapacityError",
    "ConfigError",
    "CyclicShift",
    "Factor",
    "IntRange",
    "InvalidInitError",
    "InvalidParamsError",
    "InvalidQueryError",
    "Labels",
    "OutcomeDistribution",
    "PairsketchError",
    "ParseError",
    "PermutationError",
    "PermutationSpec",
    "QueryOne",
    "QueryOutcome",
    "QueryPair",
    "ReplayStep",
    "ReplayTrace",
    "ScriptError",
    "ScriptOp",
    "SketchDestroyedError",
    "SketchHandle",
    "StateVector",
    "SwapStage",
    "TooLargeError",
    "Update",
    "UniverseSpec",
    "ValidationError",
    "create",
    "enumerate_distribution",
    "qs_apply_permutation",
    "qs_create",
    "qs_measure_one",
    "qs_measure_pair",
    "replay_noiseless",
    "run_script",
    "swap_perm",
]

__version__ = "0.1.0"
