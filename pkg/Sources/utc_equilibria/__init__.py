# MIT License
# Copyright (c) 2025 Ronnie Garrison
"""
Learning linear correlated equilibria in extensive-form games.

Deviations are untimed-communication (UTC) strategies over a DAG whose
sequence-form matrices (A, B) represent exactly the linear maps of a
player's strategy polytope into itself.
"""
from .errors import (
    ConfigError,
    DimensionMismatchError,
    EnumerationLimitError,
    FixedPointError,
    InfeasibleStrategyError,
    MalformedGameError,
    PerfectRecallError,
    UtcEquilibriaError,
)
from .evaluation import ProfileAccumulator, best_response_value, external_gap, linear_swap_gap
from .game_core import ExtensiveFormGame, SequenceFormGame, TreeFormDecisionProblem, build_tfdp
from .games import GameSpec, build_game, load_game, save_game
from .learning import CfrState, Dynamics, fixed_point, run_dynamics
from .utc import UtcDag, UtcDeviation, build_utc_dag

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionMismatchError",
    "EnumerationLimitError",
    "FixedPointError",
    "InfeasibleStrategyError",
    "MalformedGameError",
    "PerfectRecallError",
    "UtcEquilibriaError",
    "ProfileAccumulator",
    "best_response_value",
    "external_gap",
    "linear_swap_gap",
    "ExtensiveFormGame",
    "SequenceFormGame",
    "TreeFormDecisionProblem",
    "build_tfdp",
    "GameSpec",
    "build_game",
    "load_game",
    "save_game",
    "CfrState",
    "Dynamics",
    "fixed_point",
    "run_dynamics",
    "UtcDag",
    "UtcDeviation",
    "build_utc_dag",
]
