# MIT License
# Copyright (c) 2025 Ronnie Garrison
"""
Empirical-profile bookkeeping and equilibrium gaps.

The deviation payoff of a linear map A against the empirical profile is
<G_bar, A> with G_bar = sum_t g(t) x(t)^T, so one outer product per
iteration replaces storing the whole history.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, UtcEquilibriaError
from .game_core import TreeFormDecisionProblem, best_pure_response
from .utc import (
    BehavioralUtcStrategy,
    UtcDag,
    UtcDeviation,
    behavioral_to_sequence,
    greedy_edges,
    observation_gains,
    value_pass,
)

logger = logging.getLogger(__name__)


@dataclass
class ProfileAccumulator:
    """Running sums over iterations, per player."""

    G_bar: List[np.ndarray]
    v_bar: np.ndarray
    g_sum: List[np.ndarray]
    T: int = 0

    @classmethod
    def for_problems(cls, tfdps: Sequence[TreeFormDecisionProblem]) -> "ProfileAccumulator":
        return cls(
            [np.zeros((t.d, t.d)) for t in tfdps],
            np.zeros(len(tfdps)),
            [np.zeros(t.d) for t in tfdps],
        )

    @property
    def num_players(self) -> int:
        return len(self.G_bar)

    def accumulate(self, strategies: Sequence[np.ndarray], gradients: Sequence[np.ndarray]) -> None:
        if len(strategies) != self.num_players or len(gradients) != self.num_players:
            raise DimensionMismatchError(f"expected {self.num_players} strategies and gradients")
        for i, (x, g) in enumerate(zip(strategies, gradients)):
            x = np.asarray(x, dtype=np.float64)
            g = np.asarray(g, dtype=np.float64)
            if x.shape != self.g_sum[i].shape or g.shape != self.g_sum[i].shape:
                raise DimensionMismatchError(f"player {i}: vectors of shape {x.shape}/{g.shape}")
            self.G_bar[i] += np.outer(g, x)
            self.v_bar[i] += float(g @ x)
            self.g_sum[i] += g
        self.T += 1

    def average_utilities(self) -> np.ndarray:
        if self.T == 0:
            raise UtcEquilibriaError("no iterations accumulated")
        return self.v_bar / self.T


def accumulate(
    acc: ProfileAccumulator, t: int, strategies: Sequence[np.ndarray], gradients: Sequence[np.ndarray]
) -> ProfileAccumulator:
    if t != acc.T + 1:
        logger.debug("accumulating iteration %d after %d recorded iterations", t, acc.T)
    acc.accumulate(strategies, gradients)
    return acc


class BestResponse(NamedTuple):
    value: float
    deviation: UtcDeviation
    strategy: BehavioralUtcStrategy


def best_response_value(dag: UtcDag, G: Any) -> BestResponse:
    """max over feasible (A, B) of <G_A, A>, plus the greedy pure plan attaining it."""
    G_A = getattr(G, "G_A", G)
    if not np.all(np.isfinite(G_A)):
        raise UtcEquilibriaError("gradient has non-finite entries")
    value = value_pass(dag, observation_gains(dag, G_A))
    plan = BehavioralUtcStrategy.from_choices(dag, greedy_edges(dag, value))
    return BestResponse(float(value[dag.root]), behavioral_to_sequence(plan), plan)


def linear_swap_gap(acc: ProfileAccumulator, dags: Sequence[UtcDag]) -> Tuple[np.ndarray, float]:
    """Per-player (best deviation payoff - realized payoff) / T, and their max."""
    if acc.T == 0:
        raise UtcEquilibriaError("linear swap gap needs at least one accumulated iteration")
    gaps = np.array([
        (best_response_value(dag, acc.G_bar[i]).value - acc.v_bar[i]) / acc.T
        for i, dag in enumerate(dags)
    ])
    return gaps, float(gaps.max())


def external_gap(acc: ProfileAccumulator, tfdps: Sequence[TreeFormDecisionProblem]) -> np.ndarray:
    """Gap against constant deviations (a coarse correlated equilibrium gap)."""
    if acc.T == 0:
        raise UtcEquilibriaError("external gap needs at least one accumulated iteration")
    return np.array([
        (best_pure_response(tfdp, acc.g_sum[i])[0] - acc.v_bar[i]) / acc.T
        for i, tfdp in enumerate(tfdps)
    ])


@dataclass(frozen=True)
class GapReport:
    t: int
    gaps: Tuple[float, ...]
    ext_gaps: Tuple[float, ...]
    average_utilities: Tuple[float, ...] = field(default=())

    @property
    def gap_max(self) -> float:
        return max(self.gaps)

    @property
    def gap_sum(self) -> float:
        return float(sum(self.gaps))

    @property
    def ext_gap_max(self) -> float:
        return max(self.ext_gaps)

    def to_record(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "gap_per_player": list(self.gaps),
            "gap_max": self.gap_max,
            "gap_sum": self.gap_sum,
            "ext_gap_per_player": list(self.ext_gaps),
            "average_utilities": list(self.average_utilities),
        }


def gap_report(
    acc: ProfileAccumulator, dags: Sequence[UtcDag], tfdps: Sequence[TreeFormDecisionProblem]
) -> GapReport:
    gaps, _ = linear_swap_gap(acc, dags)
    ext = external_gap(acc, tfdps)
    report = GapReport(
        acc.T,
        tuple(float(g) for g in gaps),
        tuple(float(g) for g in ext),
        tuple(float(u) for u in acc.average_utilities()),
    )
    logger.debug("t=%d gap_max=%.6g ext_gap_max=%.6g", report.t, report.gap_max, report.ext_gap_max)
    return report
