# MIT License
# Copyright (c) 2025 Ronnie Garrison
from __future__ import annotations

import numpy as np
import pytest

from conftest import plan_from_rule, pure_strategy, copy_guess_rule
from utc_equilibria.config import RunConfig
from utc_equilibria.errors import DimensionMismatchError, FixedPointError, UtcEquilibriaError
from utc_equilibria.game_core import TreeFormDecisionProblem, check_sequence_form, random_strategy
from utc_equilibria.learning import (
    CfrState,
    DeviationGradient,
    LocalRegretMinimizer,
    cesaro_fixed_point,
    cfr_observe,
    cfr_recommend,
    fixed_point,
    fixed_point_residual,
    rm_next_strategy,
    rm_observe,
    run_dynamics,
)
from utc_equilibria.utc import (
    BehavioralUtcStrategy,
    UtcDeviation,
    behavioral_to_sequence,
    build_utc_dag,
    check_constraints,
    constant_deviation,
    enumerate_pure_deviations,
    identity_deviation,
    observation_gains,
    value_pass,
)


def learner(kind, regrets):
    lrm = LocalRegretMinimizer.create(kind, len(regrets))
    lrm.regrets = np.array(regrets, dtype=np.float64)
    return lrm


# ===== Local regret minimizers =====
def test_rm_plus_first_step():
    lrm = LocalRegretMinimizer.create("rm+", 2)
    rm_next_strategy(lrm)
    rm_observe(lrm, np.array([1.0, 0.0]))
    np.testing.assert_array_equal(lrm.regrets, [0.5, 0.0])


def test_constant_utility_leaves_regrets_alone():
    lrm = learner("rm+", [0.25, 0.0, 2.0])
    rm_next_strategy(lrm)
    rm_observe(lrm, np.full(3, 0.7))
    np.testing.assert_allclose(lrm.regrets, [0.25, 0.0, 2.0], atol=1e-15)


@pytest.mark.parametrize(
    "regrets, expected",
    [
        ([3.0, 1.0], [0.75, 0.25]),
        ([0.0, 0.0], [0.5, 0.5]),
        ([-1.0, -1.0], [0.5, 0.5]),
        ([2.0, -1.0, 0.0], [1.0, 0.0, 0.0]),
    ],
)
def test_next_strategy(regrets, expected):
    np.testing.assert_allclose(rm_next_strategy(learner("rm", regrets)), expected)


def test_rm_and_rm_plus_differ_where_clamping_bites():
    plain, plus = LocalRegretMinimizer.create("rm", 2), LocalRegretMinimizer.create("rm+", 2)
    for utility in ([1.0, 0.0], [-1.0, 0.0]):
        for lrm in (plain, plus):
            rm_next_strategy(lrm)
            rm_observe(lrm, np.array(utility))
    np.testing.assert_array_equal(plain.regrets, [0.5, 0.5])
    np.testing.assert_array_equal(plus.regrets, [0.5, 1.0])


def test_non_finite_local_utility_is_rejected():
    lrm = LocalRegretMinimizer.create("rm", 2)
    with pytest.raises(UtcEquilibriaError):
        rm_observe(lrm, np.array([np.nan, 0.0]))


# ===== DAG-CFR =====
def test_fresh_recommendation_is_feasible(fig1_dag):
    dev = cfr_recommend(CfrState.create(fig1_dag))
    assert dev.A[0, 0] == 1.0
    assert check_constraints(dev, fig1_dag).residual <= 1e-9


def test_zero_gradient_changes_nothing(fig3_dag):
    state = CfrState.create(fig3_dag)
    before = cfr_recommend(state)
    cfr_observe(state, DeviationGradient(np.zeros((6, 6)), np.zeros((2, 2))))
    assert state.t == 1
    assert not state.bank.regrets.any()
    np.testing.assert_array_equal(cfr_recommend(state).A, before.A)


@pytest.mark.parametrize("kind", ["rm", "rm+"])
def test_regret_bank_matches_one_learner_per_node(kind, fig3_dag, rng):
    dag = fig3_dag
    state = CfrState.create(dag, kind)
    learners = [LocalRegretMinimizer.create(kind, int(n)) for n in np.diff(dag.dec_ptr)]
    for _ in range(8):
        cfr_recommend(state)
        probs = state.last_probs
        np.testing.assert_allclose(probs, np.concatenate([rm_next_strategy(lrm) for lrm in learners]), atol=1e-12)
        G = rng.normal(size=(dag.real.d, dag.mediator.d))
        child = value_pass(dag, observation_gains(dag, G), probs)[dag.edge_dst]
        for k, lrm in enumerate(learners):
            rm_observe(lrm, child[dag.dec_ptr[k]:dag.dec_ptr[k + 1]])
        cfr_observe(state, DeviationGradient(G, np.zeros((2, 2))))
        for k, lrm in enumerate(learners):
            np.testing.assert_allclose(state.bank.local(k).regrets, lrm.regrets, atol=1e-12)
        if kind == "rm+":
            assert state.bank.regrets.min() >= 0.0


def test_rewarding_the_diagonal_learns_the_identity(fig3_dag):
    state = CfrState.create(fig3_dag)
    grad = DeviationGradient(np.eye(6), np.zeros((2, 2)))
    distances = []
    for _ in range(300):
        dev = cfr_recommend(state)
        distances.append(float(np.abs(dev.A - np.eye(6)).max()))
        cfr_observe(state, grad)
    assert distances[-1] < distances[0]
    assert distances[-1] <= 0.1


def test_cfr_observe_rejects_non_finite_gradients(fig3_dag):
    G = np.zeros((6, 6))
    G[2, 3] = np.nan
    with pytest.raises(UtcEquilibriaError):
        cfr_observe(CfrState.create(fig3_dag), DeviationGradient(G, np.zeros((2, 2))))


def test_outer_gradient_shapes(fig3, fig3_dag):
    x = pure_strategy(fig3.tfdp(0), {"A": "a2"})
    grad = DeviationGradient.from_outer(np.arange(6.0), x, fig3_dag)
    np.testing.assert_array_equal(grad.G_A[:, 2], np.arange(6.0))
    assert not grad.G_B.any()
    with pytest.raises(DimensionMismatchError):
        DeviationGradient.from_outer(np.arange(5.0), x, fig3_dag)


def vertex_regrets(single3, single3_dag, seed):
    """Phi-regret of DAG-CFR and of plain RM over all 30 pure deviations, same utility stream."""
    rng = np.random.default_rng(seed)
    T = 5000
    vertices = np.stack([dev.A for dev in enumerate_pure_deviations(single3_dag)])
    state = CfrState.create(single3_dag, "rm")
    vertex_rm = LocalRegretMinimizer.create("rm", len(vertices))
    G_sum = np.zeros((4, 4))
    earned_cfr = earned_rm = 0.0
    for _ in range(T):
        A = cfr_recommend(state).A
        p = rm_next_strategy(vertex_rm)
        u = np.concatenate(([0.0], rng.random(3)))
        G = np.outer(u, random_strategy(single3, rng))
        payoffs = np.einsum("kij,ij->k", vertices, G)
        earned_cfr += float(np.sum(G * A))
        earned_rm += float(p @ payoffs)
        cfr_observe(state, DeviationGradient(G, np.zeros((1, 1))))
        rm_observe(vertex_rm, payoffs)
        G_sum += G
    best = float(np.max(np.einsum("kij,ij->k", vertices, G_sum)))
    return (best - earned_cfr) / T, (best - earned_rm) / T


def test_dag_cfr_tracks_regret_matching_over_vertices(single3, single3_dag):
    regrets = np.array([vertex_regrets(single3, single3_dag, seed) for seed in range(4)])
    mean_cfr, mean_rm = regrets.mean(axis=0)
    assert mean_rm > 0.0
    # per-seed ratios spread by up to a third
    assert mean_cfr <= 1.5 * mean_rm + 5e-4
    assert mean_rm <= 1.5 * mean_cfr + 5e-4
    assert np.all(regrets <= 0.05)


# ===== Fixed points =====
def test_identity_fixed_point(fig1, fig1_dag):
    tfdp = fig1.tfdp(0)
    dev = identity_deviation(fig1_dag)
    x = fixed_point(dev, tfdp)
    assert fixed_point_residual(dev.A, x, tfdp) <= 1e-9


def test_constant_deviation_fixed_point_is_its_target(fig1, fig1_dag):
    tfdp = fig1.tfdp(0)
    x0 = pure_strategy(tfdp, {"A": "a2", "C": "c2", "E": "e2"})
    np.testing.assert_allclose(fixed_point(constant_deviation(fig1_dag, x0), tfdp), x0, atol=1e-9)


def test_copy_guess_deviation_has_a_fixed_point(fig1, fig1_dag):
    tfdp = fig1.tfdp(0)
    dev = behavioral_to_sequence(plan_from_rule(fig1_dag, copy_guess_rule))
    x = fixed_point(dev, tfdp)
    assert np.abs(dev.A @ x - x).max() <= 1e-9
    assert check_sequence_form(x, tfdp) <= 1e-9


def test_fixed_points_of_random_deviations_agree_with_averaging(kuhn23, rng):
    tfdp = kuhn23.tfdp(0)
    dag = build_utc_dag(tfdp)
    for _ in range(10):
        dev = behavioral_to_sequence(BehavioralUtcStrategy.random(dag, rng))
        x = fixed_point(dev, tfdp, rng=rng)
        assert fixed_point_residual(dev.A, x, tfdp) <= 1e-9
        averaged = cesaro_fixed_point(dev.A, random_strategy(tfdp, rng), steps=2000)
        assert np.abs(dev.A @ averaged - averaged).max() <= 2 * 2.0 / 2000
        assert check_sequence_form(averaged, tfdp) <= 1e-9


def test_fixed_point_failure_reports_best_residual():
    tfdp = TreeFormDecisionProblem.single_decision(2)
    dev = UtcDeviation(np.zeros((3, 3)), np.zeros((1, 1)))
    with pytest.raises(FixedPointError) as info:
        fixed_point(dev, tfdp)
    assert info.value.best_residual > 1e-9
    with pytest.raises(DimensionMismatchError):
        fixed_point(UtcDeviation(np.eye(2), np.zeros((1, 1))), tfdp)


# ===== Dynamics =====
def test_single_iteration_on_fig1(fig1):
    log = run_dynamics(fig1, RunConfig(game="fig1", iters=1, threads=1))
    assert log.iterations_completed == 1
    assert log.termination == "iterations"
    assert len(log.records[0].fp_residuals) == 2
    assert all(r <= 1e-9 for r in log.records[0].fp_residuals)
    assert len(log.gap_reports) == 1 and log.gap_reports[0].t == 1


def test_gap_reports_follow_the_cadence(fig3):
    log = run_dynamics(fig3, RunConfig(game="fig3", iters=25, log_every=10, threads=1))
    assert [r.t for r in log.gap_reports] == [1, 10, 20, 25]
    assert log.accumulator.T == 25


def test_runs_are_deterministic_across_thread_counts(kuhn23):
    one = run_dynamics(kuhn23, RunConfig(game="kuhn:P=2,D=3", iters=20, log_every=5, seed=7, threads=1))
    two = run_dynamics(kuhn23, RunConfig(game="kuhn:P=2,D=3", iters=20, log_every=5, seed=7, threads=2))
    assert [r.gaps for r in one.gap_reports] == [r.gaps for r in two.gap_reports]
    for a, b in zip(one.accumulator.G_bar, two.accumulator.G_bar):
        np.testing.assert_array_equal(a, b)


def test_normalized_learning_still_reports_raw_gaps(fig1):
    normalized = run_dynamics(fig1, RunConfig(game="fig1", iters=5, normalize=True, threads=1))
    raw = run_dynamics(fig1, RunConfig(game="fig1", iters=5, threads=1))
    # the first iteration plays before any utility is learned
    assert normalized.gap_reports[0].gaps == raw.gap_reports[0].gaps
    assert normalized.gap_reports[0].average_utilities == raw.gap_reports[0].average_utilities


def test_time_limit_stops_before_the_first_iteration(fig3):
    log = run_dynamics(fig3, RunConfig(game="fig3", iters=10, time_limit=1e-9, threads=1))
    assert log.termination == "time_limit"
    assert log.iterations_completed == 0


@pytest.mark.slow
def test_every_iteration_plays_a_fixed_point(kuhn23):
    log = run_dynamics(kuhn23, RunConfig(game="kuhn:P=2,D=3", iters=10_000, log_every=1000, seed=0))
    assert log.iterations_completed == 10_000
    assert max(r.fp_residual_max for r in log.records) <= 1e-9


@pytest.mark.slow
def test_kuhn_gap_shrinks(kuhn23):
    log = run_dynamics(kuhn23, RunConfig(game="kuhn:P=2,D=3", iters=10_000, log_every=100, seed=0))
    gaps = {r.t: r.gap_max for r in log.gap_reports}
    assert gaps[10_000] <= gaps[100] / 3


@pytest.mark.slow
def test_fig1_gap_shrinks(fig1):
    log = run_dynamics(fig1, RunConfig(game="fig1", iters=10_000, log_every=10, seed=0))
    gaps = {r.t: r.gap_max for r in log.gap_reports}
    assert gaps[10_000] <= 0.05 * gaps[10]
