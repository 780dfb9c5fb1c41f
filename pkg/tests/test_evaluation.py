# MIT License
# Copyright (c) 2025 Ronnie Garrison
from __future__ import annotations

import numpy as np
import pytest

from conftest import pure_strategy
from utc_equilibria.errors import UtcEquilibriaError
from utc_equilibria.evaluation import (
    GapReport,
    ProfileAccumulator,
    accumulate,
    best_response_value,
    external_gap,
    gap_report,
    linear_swap_gap,
)
from utc_equilibria.game_core import (
    ExtensiveFormGame,
    decision,
    enumerate_pure_strategies,
    random_strategy,
    terminal,
    utility_gradient,
)
from utc_equilibria.learning import DeviationGradient
from utc_equilibria.utc import build_utc_dag, check_constraints, enumerate_pure_deviations


def play_profiles(game, profiles):
    """Accumulate a uniform distribution over pure profiles given as infoset -> action maps."""
    tfdps = game.sequence_form.tfdps
    acc = ProfileAccumulator.for_problems(tfdps)
    for t, choices in enumerate(profiles, start=1):
        xs = [pure_strategy(tfdp, c) for tfdp, c in zip(tfdps, choices)]
        gs = [utility_gradient(game, i, xs) for i in range(game.num_players)]
        accumulate(acc, t, xs, gs)
    return acc


def fig1_profiles():
    return [
        ({"A": f"a{i}", "B": f"b{j}", "C": "c1"}, {"F": f"f{i}", "G": f"g{j}"})
        for i in (1, 2) for j in (1, 2)
    ]


# ===== Accumulation =====
def test_accumulator_identities(kuhn23, rng):
    tfdps = kuhn23.sequence_form.tfdps
    acc = ProfileAccumulator.for_problems(tfdps)
    zeros = [np.zeros(t.d) for t in tfdps]
    xs = [random_strategy(t, rng) for t in tfdps]
    accumulate(acc, 1, xs, zeros)
    assert all(not G.any() for G in acc.G_bar)
    gs = [utility_gradient(kuhn23, i, xs) for i in range(2)]
    accumulate(acc, 2, xs, gs)
    once = [G.copy() for G in acc.G_bar]
    accumulate(acc, 3, xs, gs)
    for G, G1 in zip(acc.G_bar, once):
        np.testing.assert_array_equal(G, 2 * G1)
    assert acc.T == 3
    for i in range(2):
        assert np.trace(acc.G_bar[i]) == pytest.approx(acc.v_bar[i], abs=1e-6 * acc.T)


def test_empty_accumulator_has_no_gap(fig3):
    acc = ProfileAccumulator.for_problems(fig3.sequence_form.tfdps)
    dags = [build_utc_dag(t) for t in fig3.sequence_form.tfdps]
    with pytest.raises(UtcEquilibriaError):
        linear_swap_gap(acc, dags)
    with pytest.raises(UtcEquilibriaError):
        external_gap(acc, fig3.sequence_form.tfdps)
    with pytest.raises(UtcEquilibriaError):
        acc.average_utilities()


# ===== Best response over the DAG =====
def test_zero_gradient_best_response(fig3_dag):
    best = best_response_value(fig3_dag, np.zeros((6, 6)))
    assert best.value == 0.0
    assert check_constraints(best.deviation, fig3_dag).ok


def test_best_response_accepts_deviation_gradients(fig3_dag, rng):
    G = rng.normal(size=(6, 6))
    grad = DeviationGradient(G, np.zeros((2, 2)))
    assert best_response_value(fig3_dag, grad).value == best_response_value(fig3_dag, G).value
    G[0, 0] = np.inf
    with pytest.raises(UtcEquilibriaError):
        best_response_value(fig3_dag, G)


@pytest.mark.parametrize("name", ["single3_dag", "fig1_dag", "fig3_dag"])
def test_best_response_matches_enumeration(name, request, rng):
    dag = request.getfixturevalue(name)
    pure = enumerate_pure_deviations(dag)
    for _ in range(100):
        G = rng.normal(size=(dag.real.d, dag.mediator.d))
        best = best_response_value(dag, G)
        oracle, _ = pure.maximize(G)
        assert best.value == pytest.approx(oracle, abs=1e-9)
        assert check_constraints(best.deviation, dag).residual == 0.0
        assert float(np.sum(G * best.deviation.A)) == pytest.approx(best.value, abs=1e-9)


@pytest.mark.parametrize("name", ["single3_dag", "fig3_dag"])
def test_best_response_matches_full_vertex_scan(name, request, rng):
    dag = request.getfixturevalue(name)
    vertices = np.stack([dev.A for dev in enumerate_pure_deviations(dag)])
    for _ in range(20):
        G = rng.normal(size=(dag.real.d, dag.mediator.d))
        scan = float(np.max(np.einsum("kij,ij->k", vertices, G)))
        assert best_response_value(dag, G).value == pytest.approx(scan, abs=1e-9)


# ===== Gaps =====
def test_fig1_profile_gap(fig1):
    acc = play_profiles(fig1, fig1_profiles())
    dags = [build_utc_dag(t) for t in fig1.sequence_form.tfdps]
    gaps, worst = linear_swap_gap(acc, dags)
    assert gaps[0] == pytest.approx(1 / 3, abs=1e-9)
    assert gaps[1] == pytest.approx(0.0, abs=1e-9)
    assert worst == pytest.approx(1 / 3, abs=1e-9)
    oracle, _ = enumerate_pure_deviations(dags[0]).maximize(acc.G_bar[0])
    assert (oracle - acc.v_bar[0]) / acc.T == pytest.approx(1 / 3, abs=1e-9)


def test_fig1_profile_is_a_coarse_equilibrium(fig1):
    acc = play_profiles(fig1, fig1_profiles())
    ext = external_gap(acc, fig1.sequence_form.tfdps)
    np.testing.assert_allclose(ext, 0.0, atol=1e-9)


def test_fig3_profile_gap(fig3):
    acc = play_profiles(fig3, [({"A": "a1", "B": "b1"}, {"C": "c1"}), ({"A": "a1", "B": "b2"}, {"C": "c2"})])
    dags = [build_utc_dag(t) for t in fig3.sequence_form.tfdps]
    gaps, _ = linear_swap_gap(acc, dags)
    assert gaps[0] == pytest.approx(1.0, abs=1e-9)
    oracle, _ = enumerate_pure_deviations(dags[0]).maximize(acc.G_bar[0])
    assert (oracle - acc.v_bar[0]) / acc.T == pytest.approx(1.0, abs=1e-9)


def test_strict_equilibrium_has_zero_gap():
    # coordination game, (x1, y1) is a strict equilibrium
    game = ExtensiveFormGame(2, decision(0, "X", [
        ("x1", decision(1, "Y", [("y1", terminal(2, 2)), ("y2", terminal(0, 0))])),
        ("x2", decision(1, "Y", [("y1", terminal(0, 0)), ("y2", terminal(1, 1))])),
    ]))
    acc = play_profiles(game, [({"X": "x1"}, {"Y": "y1"})])
    dags = [build_utc_dag(t) for t in game.sequence_form.tfdps]
    gaps, worst = linear_swap_gap(acc, dags)
    np.testing.assert_allclose(gaps, 0.0, atol=1e-9)
    assert worst == pytest.approx(0.0, abs=1e-9)


def test_external_gap_is_dominated_by_linear_gap(kuhn23, rng):
    tfdps = kuhn23.sequence_form.tfdps
    dags = [build_utc_dag(t) for t in tfdps]
    acc = ProfileAccumulator.for_problems(tfdps)
    for t in range(1, 16):
        xs = [random_strategy(tfdp, rng) for tfdp in tfdps]
        accumulate(acc, t, xs, [utility_gradient(kuhn23, i, xs) for i in range(2)])
        gaps, _ = linear_swap_gap(acc, dags)
        ext = external_gap(acc, tfdps)
        assert np.all(gaps >= -1e-9)
        assert np.all(ext <= gaps + 1e-9)


def test_external_gap_matches_pure_strategy_scan(kuhn23, rng):
    tfdps = kuhn23.sequence_form.tfdps
    acc = ProfileAccumulator.for_problems(tfdps)
    for t in range(1, 6):
        xs = [random_strategy(tfdp, rng) for tfdp in tfdps]
        accumulate(acc, t, xs, [utility_gradient(kuhn23, i, xs) for i in range(2)])
    ext = external_gap(acc, tfdps)
    for i, tfdp in enumerate(tfdps):
        scan = float(np.max(enumerate_pure_strategies(tfdp) @ acc.g_sum[i]))
        assert ext[i] == pytest.approx((scan - acc.v_bar[i]) / acc.T, abs=1e-12)


def test_zero_gradients_give_zero_external_gap(fig3):
    tfdps = fig3.sequence_form.tfdps
    acc = ProfileAccumulator.for_problems(tfdps)
    accumulate(acc, 1, [np.eye(t.d)[0] for t in tfdps], [np.zeros(t.d) for t in tfdps])
    np.testing.assert_array_equal(external_gap(acc, tfdps), 0.0)


def test_gap_report_record(fig1):
    acc = play_profiles(fig1, fig1_profiles())
    tfdps = fig1.sequence_form.tfdps
    report = gap_report(acc, [build_utc_dag(t) for t in tfdps], tfdps)
    assert isinstance(report, GapReport)
    record = report.to_record()
    assert record["t"] == 4
    assert record["gap_max"] == pytest.approx(1 / 3, abs=1e-9)
    assert record["gap_sum"] == pytest.approx(1 / 3, abs=1e-9)
    assert len(record["gap_per_player"]) == len(record["ext_gap_per_player"]) == 2
    assert record["average_utilities"] == [0.0, 0.0]
