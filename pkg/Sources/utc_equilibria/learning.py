# MIT License
# Copyright (c) 2025 Ronnie Garrison
"""
Linear-swap regret minimization.

Each player runs counterfactual regret minimization over its UTC DAG to
pick a deviation (A, B), plays a fixed point x = A x of it, and feeds the
resulting linear utility A -> <g, A x> back to the DAG learner.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, Literal, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from .config import RunConfig, resolve_threads
from .errors import DimensionMismatchError, FixedPointError, UtcEquilibriaError
from .evaluation import GapReport, ProfileAccumulator, accumulate, gap_report
from .game_core import ExtensiveFormGame, TreeFormDecisionProblem, check_sequence_form, random_strategy
from .utc import (
    BehavioralUtcStrategy,
    UtcDag,
    UtcDeviation,
    behavioral_to_sequence,
    build_utc_dag,
    observation_gains,
    value_pass,
)

logger = logging.getLogger(__name__)

RegretKind = Literal["rm", "rm+"]
CESARO_STEPS = 20_000


# ===== Local regret minimizers =====
@dataclass
class LocalRegretMinimizer:
    """Regret matching (or RM+) over one local action set."""

    kind: RegretKind
    regrets: np.ndarray
    strategy: np.ndarray

    @classmethod
    def create(cls, kind: RegretKind, num_actions: int) -> "LocalRegretMinimizer":
        return cls(kind, np.zeros(num_actions), np.full(num_actions, 1.0 / num_actions))

    def next_strategy(self) -> np.ndarray:
        positive = np.maximum(self.regrets, 0.0)
        total = positive.sum()
        self.strategy = positive / total if total > 0 else np.full(len(self.regrets), 1.0 / len(self.regrets))
        return self.strategy

    def observe(self, utility: np.ndarray) -> None:
        utility = np.asarray(utility, dtype=np.float64)
        if not np.all(np.isfinite(utility)):
            raise UtcEquilibriaError("local utility has non-finite entries")
        self.regrets = self.regrets + (utility - float(self.strategy @ utility))
        if self.kind == "rm+":
            self.regrets = np.maximum(self.regrets, 0.0)


def rm_observe(lrm: LocalRegretMinimizer, utility: np.ndarray) -> LocalRegretMinimizer:
    lrm.observe(utility)
    return lrm


def rm_next_strategy(lrm: LocalRegretMinimizer) -> np.ndarray:
    return lrm.next_strategy()


class RegretBank:
    """All decision nodes of one DAG at once: one regret entry per decision edge."""

    def __init__(self, dag: UtcDag, kind: RegretKind) -> None:
        self.dag = dag
        self.kind = kind
        self.regrets = np.zeros(dag.num_decision_edges)

    def strategy(self) -> np.ndarray:
        dag = self.dag
        if dag.num_decision_edges == 0:
            return np.zeros(0)
        positive = np.maximum(self.regrets, 0.0)
        totals = np.add.reduceat(positive, dag.dec_ptr[:-1])[dag.edge_src]
        uniform = 1.0 / dag.edge_sizes
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(totals > 0, positive / totals, uniform)

    def observe(self, instantaneous: np.ndarray) -> None:
        self.regrets += instantaneous
        if self.kind == "rm+":
            np.maximum(self.regrets, 0.0, out=self.regrets)

    def local(self, decision: int) -> LocalRegretMinimizer:
        """Snapshot of one decision node's learner."""
        lo, hi = self.dag.dec_ptr[decision], self.dag.dec_ptr[decision + 1]
        return LocalRegretMinimizer(self.kind, self.regrets[lo:hi].copy(), self.strategy()[lo:hi])


# ===== DAG-CFR =====
@dataclass(frozen=True, eq=False)
class DeviationGradient:
    """Linear utility over deviations; only the A block carries utility."""

    G_A: np.ndarray
    G_B: np.ndarray

    @classmethod
    def from_outer(cls, g: np.ndarray, x: np.ndarray, dag: UtcDag) -> "DeviationGradient":
        """A -> <g, A x> written as <g x^T, A>."""
        g = np.asarray(g, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        if g.shape != (dag.real.d,) or x.shape != (dag.mediator.d,):
            raise DimensionMismatchError(f"gradient {g.shape} / strategy {x.shape} do not fit the DAG")
        return cls(np.outer(g, x), np.zeros((dag.real.num_decision_points, dag.mediator.num_decision_points)))


@dataclass
class CfrState:
    dag: UtcDag
    bank: RegretBank
    t: int = 0
    last_probs: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def create(cls, dag: UtcDag, kind: RegretKind = "rm+") -> "CfrState":
        return cls(dag, RegretBank(dag, kind))

    @property
    def kind(self) -> RegretKind:
        return self.bank.kind


def cfr_recommend(state: CfrState) -> UtcDeviation:
    probs = state.bank.strategy()
    state.last_probs = probs
    return behavioral_to_sequence(BehavioralUtcStrategy(state.dag, probs))


def cfr_observe(state: CfrState, grad: DeviationGradient) -> CfrState:
    """
    One value pass under the last recommended strategy; every decision edge
    then gains (child value - node value) of regret.
    """
    dag = state.dag
    G_A = np.asarray(grad.G_A, dtype=np.float64)
    if not np.all(np.isfinite(G_A)):
        raise UtcEquilibriaError("deviation gradient has non-finite entries")
    probs = state.bank.strategy() if state.last_probs is None else state.last_probs
    value = value_pass(dag, observation_gains(dag, G_A), probs)
    if dag.num_decision_edges:
        instantaneous = value[dag.edge_dst] - value[dag.dec_nodes][dag.edge_src]
        state.bank.observe(instantaneous)
    state.last_probs = None
    state.t += 1
    return state


# ===== Fixed points =====
def fixed_point_residual(A: np.ndarray, x: np.ndarray, tfdp: TreeFormDecisionProblem) -> float:
    return max(float(np.max(np.abs(A @ x - x), initial=0.0)), check_sequence_form(x, tfdp))


def _polish(A: np.ndarray, x: np.ndarray, tfdp: TreeFormDecisionProblem) -> np.ndarray:
    F, f = tfdp.constraint_matrix
    system = np.vstack((A - np.eye(tfdp.d), F))
    rhs = np.concatenate((np.zeros(tfdp.d), f))
    step, *_ = np.linalg.lstsq(system, rhs - system @ x, rcond=None)
    return np.clip(x + step, 0.0, 1.0)


def cesaro_fixed_point(A: np.ndarray, x0: np.ndarray, steps: int = CESARO_STEPS) -> np.ndarray:
    """(1/K) sum_k A^k x0; its fixed-point residual is at most 2 max|x| / K."""
    x = np.asarray(x0, dtype=np.float64).copy()
    total = np.zeros_like(x)
    for _ in range(steps):
        total += x
        x = A @ x
    return total / steps


def fixed_point(
    dev: UtcDeviation,
    tfdp: TreeFormDecisionProblem,
    eps: float = 1e-9,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """A sequence-form x with A x = x, to within eps."""
    A = np.asarray(dev.A, dtype=np.float64)
    if A.shape != (tfdp.d, tfdp.d):
        raise DimensionMismatchError(f"deviation matrix has shape {A.shape}, expected ({tfdp.d}, {tfdp.d})")
    F, f = tfdp.constraint_matrix
    result = linprog(
        np.zeros(tfdp.d),
        A_eq=np.vstack((A - np.eye(tfdp.d), F)),
        b_eq=np.concatenate((np.zeros(tfdp.d), f)),
        bounds=(0.0, 1.0),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "presolve": True},
    )
    best = np.inf
    if result.status == 0 and result.x is not None:
        x = _polish(A, result.x, tfdp)
        best = fixed_point_residual(A, x, tfdp)
        if best <= eps:
            return x
        logger.warning("fixed point from the LP has residual %.3e; falling back to averaging", best)
    else:
        logger.warning("fixed-point LP failed (%s); falling back to averaging", result.message)
    start = random_strategy(tfdp, rng if rng is not None else np.random.default_rng(0))
    x = _polish(A, cesaro_fixed_point(A, start), tfdp)
    residual = fixed_point_residual(A, x, tfdp)
    if residual <= eps:
        return x
    raise FixedPointError(f"no fixed point within {eps:g} for player {tfdp.player}", min(best, residual))


# ===== Dynamics =====
@dataclass(frozen=True)
class IterationRecord:
    t: int
    wall_ms: float
    fp_residuals: Tuple[float, ...]
    gaps: Optional[GapReport] = None

    @property
    def fp_residual_max(self) -> float:
        return max(self.fp_residuals)


@dataclass
class RunLog:
    records: List[IterationRecord] = field(default_factory=list)
    termination: str = "iterations"
    total_time: float = 0.0
    accumulator: Optional[ProfileAccumulator] = None
    dags: Tuple[UtcDag, ...] = ()

    @property
    def iterations_completed(self) -> int:
        return len(self.records)

    @property
    def gap_reports(self) -> List[GapReport]:
        return [r.gaps for r in self.records if r.gaps is not None]


class Dynamics:
    """
    Simultaneous linear-swap regret dynamics for all players.

    Iterate to advance; each step yields an IterationRecord. The
    accumulated empirical profile lives in `accumulator`.
    """

    def __init__(self, game: ExtensiveFormGame, config: RunConfig) -> None:
        self.game = game
        self.config = config
        self.sf = game.sequence_form
        self.tfdps = self.sf.tfdps
        self.dags = tuple(build_utc_dag(t) for t in self.tfdps)
        kind: RegretKind = "rm+" if config.plus else "rm"
        self.states = [CfrState.create(dag, kind) for dag in self.dags]
        self.accumulator = ProfileAccumulator.for_problems(self.tfdps)
        self.rngs = [np.random.default_rng([config.seed, i]) for i in range(game.num_players)]
        self.threads = resolve_threads(config, game.num_players)
        self.t = 0
        self.termination = "iterations"
        for i, dag in enumerate(self.dags):
            logger.info("player %d: d=%d, UTC DAG %s", i, self.tfdps[i].d, dag.node_counts)

    def _play(self, i: int) -> Tuple[np.ndarray, float]:
        dev = cfr_recommend(self.states[i])
        try:
            x = fixed_point(dev, self.tfdps[i], self.config.eps_fp, self.rngs[i])
        except FixedPointError as exc:
            exc.context.update({"player": i, "iteration": self.t + 1})
            raise
        return x, fixed_point_residual(dev.A, x, self.tfdps[i])

    def _learn(self, i: int, g: np.ndarray, x: np.ndarray) -> None:
        cfr_observe(self.states[i], DeviationGradient.from_outer(g, x, self.dags[i]))

    def step(self, executor: Optional[ThreadPoolExecutor] = None) -> IterationRecord:
        started = time.perf_counter()
        players = range(self.game.num_players)
        mapper = executor.map if executor is not None else map
        played = list(mapper(self._play, players))
        strategies = [x for x, _ in played]
        raw = [self.sf.utility_gradient(i, strategies) for i in players]
        learned = (
            [self.sf.utility_gradient(i, strategies, normalized=True) for i in players]
            if self.config.normalize else raw
        )
        list(mapper(self._learn, players, learned, strategies))
        self.t += 1
        accumulate(self.accumulator, self.t, strategies, raw)
        return IterationRecord(
            self.t, (time.perf_counter() - started) * 1000.0, tuple(r for _, r in played)
        )

    def report_due(self, t: int, final: bool) -> bool:
        return t == 1 or final or t % self.config.log_every == 0

    def run(self) -> Iterator[IterationRecord]:
        """Yield one record per iteration until the iteration or time limit."""
        config = self.config
        started = time.perf_counter()
        executor = ThreadPoolExecutor(max_workers=self.threads) if self.threads > 1 else None
        try:
            while self.t < config.iters:
                if config.time_limit is not None and time.perf_counter() - started >= config.time_limit:
                    self.termination = "time_limit"
                    break
                record = self.step(executor)
                out_of_time = (
                    config.time_limit is not None and time.perf_counter() - started >= config.time_limit
                )
                if self.report_due(record.t, record.t == config.iters or out_of_time):
                    record = IterationRecord(
                        record.t, record.wall_ms, record.fp_residuals,
                        gap_report(self.accumulator, self.dags, self.tfdps),
                    )
                    logger.info("t=%d gap_max=%.6g", record.t, record.gaps.gap_max)
                yield record
        finally:
            if executor is not None:
                executor.shutdown(wait=True)
        logger.info("dynamics stopped after %d iterations (%s)", self.t, self.termination)


def run_dynamics(game: ExtensiveFormGame, config: RunConfig) -> RunLog:
    dynamics = Dynamics(game, config)
    started = time.perf_counter()
    log = RunLog(accumulator=dynamics.accumulator, dags=dynamics.dags)
    log.records.extend(dynamics.run())
    log.termination = dynamics.termination
    log.total_time = time.perf_counter() - started
    return log
