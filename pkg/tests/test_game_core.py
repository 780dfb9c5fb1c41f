# MIT License
# Copyright (c) 2025 Ronnie Garrison
from __future__ import annotations

import numpy as np
import pytest

from conftest import playout_utilities, pure_strategy
from utc_equilibria.errors import (
    DimensionMismatchError,
    EnumerationLimitError,
    InfeasibleStrategyError,
    MalformedGameError,
    PerfectRecallError,
)
from utc_equilibria.game_core import (
    ExtensiveFormGame,
    TreeFormDecisionProblem,
    best_pure_response,
    build_tfdp,
    chance,
    check_sequence_form,
    count_pure_strategies,
    decision,
    enumerate_pure_strategies,
    expected_utility,
    random_strategy,
    require_feasible,
    sequence_to_behavioral,
    behavioral_to_sequence_form,
    terminal,
    uniform_strategy,
    utility_gradient,
    validate_perfect_recall,
)


def test_fig1_decision_problems(fig1):
    p1, p2 = fig1.tfdp(0), fig1.tfdp(1)
    assert fig1.num_terminals == 13
    assert p1.d == 11 and p2.d == 5
    assert p1.infosets == ("A", "B", "C", "D", "E")
    assert p1.seq_labels[:3] == ("∅", "A:a1", "A:a2")
    assert count_pure_strategies(p1) == 20
    assert count_pure_strategies(p2) == 4
    # D and E hang below c2
    assert p1.dp_parent[p1.dp_index["D"]] == p1.seq_labels.index("C:c2")


def test_fig3_decision_problem(fig3):
    p1 = fig3.tfdp(0)
    assert fig3.num_terminals == 8
    assert p1.d == 6
    assert p1.children[p1.seq_labels.index("A:a1")] == (p1.dp_index["B"],)
    assert fig3.tfdp(1).d == 3


def test_sequence_indices_follow_parents(kuhn23):
    for player in range(2):
        tfdp = kuhn23.tfdp(player)
        assert np.all(tfdp.dp_parent < tfdp.dp_start)
        assert tfdp.seq_depth[0] == 0
        assert np.all(tfdp.seq_depth[1:] == tfdp.dp_depth[tfdp.seq_dp[1:]] + 1)


def test_enumerated_pure_strategies_are_feasible(fig1):
    for player in range(2):
        tfdp = fig1.tfdp(player)
        plans = enumerate_pure_strategies(tfdp)
        assert len(plans) == count_pure_strategies(tfdp)
        assert len({tuple(row) for row in plans}) == len(plans)
        for row in plans:
            assert check_sequence_form(row, tfdp) == 0.0


def test_enumeration_bound(kuhn23):
    with pytest.raises(EnumerationLimitError):
        enumerate_pure_strategies(kuhn23.tfdp(0), bound=5)


def test_uniform_and_random_strategies_are_feasible(kuhn23, rng):
    tfdp = kuhn23.tfdp(1)
    assert check_sequence_form(uniform_strategy(tfdp), tfdp) <= 1e-12
    for _ in range(20):
        assert check_sequence_form(random_strategy(tfdp, rng), tfdp) <= 1e-12


def test_behavioral_round_trip(kuhn23, rng):
    tfdp = kuhn23.tfdp(0)
    x = random_strategy(tfdp, rng)
    again = behavioral_to_sequence_form(tfdp, sequence_to_behavioral(tfdp, x))
    np.testing.assert_allclose(again, x, atol=1e-12)


def test_require_feasible_rejects_bad_vectors(fig3):
    tfdp = fig3.tfdp(0)
    x = uniform_strategy(tfdp)
    x[1] += 0.1
    with pytest.raises(InfeasibleStrategyError):
        require_feasible(x, tfdp)
    with pytest.raises(DimensionMismatchError):
        require_feasible(np.ones(3), tfdp)


def test_best_pure_response_matches_enumeration(fig1, rng):
    tfdp = fig1.tfdp(0)
    plans = enumerate_pure_strategies(tfdp)
    for _ in range(25):
        g = rng.normal(size=tfdp.d)
        value, x = best_pure_response(tfdp, g)
        assert value == pytest.approx(float(np.max(plans @ g)), abs=1e-12)
        assert float(g @ x) == pytest.approx(value, abs=1e-12)


def test_fig1_gradient_of_guessing_game(fig1):
    p1, p2 = fig1.tfdp(0), fig1.tfdp(1)
    y = pure_strategy(p2, {"F": "f1", "G": "g2"})
    g = utility_gradient(fig1, 0, [None, y])
    labels = p1.seq_labels
    assert g[labels.index("D:d1")] == pytest.approx(1 / 6)
    assert g[labels.index("D:d2")] == pytest.approx(-10 / 6)
    assert g[labels.index("E:e2")] == pytest.approx(1 / 6)
    assert g[labels.index("A:a1")] == 0.0


def test_expected_utility_matches_playout(kuhn23, rng):
    xs = [random_strategy(kuhn23.tfdp(p), rng) for p in range(2)]
    exact = expected_utility(kuhn23, xs)
    assert exact.sum() == pytest.approx(0.0, abs=1e-12)
    estimate = playout_utilities(kuhn23, xs, rng, samples=20_000)
    np.testing.assert_allclose(estimate, exact, atol=0.06)


def test_gradient_is_linear_in_own_strategy(kuhn23, rng):
    xs = [random_strategy(kuhn23.tfdp(p), rng) for p in range(2)]
    g = utility_gradient(kuhn23, 1, xs)
    assert float(g @ xs[1]) == pytest.approx(expected_utility(kuhn23, xs)[1], abs=1e-12)


GAMES = ["fig1", "fig3", "kuhn23"]


@pytest.mark.parametrize("name", GAMES)
def test_gradient_matches_finite_differences(name, request, rng):
    game = request.getfixturevalue(name)
    h = 1e-4
    for i in range(game.num_players):
        xs = [random_strategy(game.tfdp(p), rng) for p in range(game.num_players)]
        y = random_strategy(game.tfdp(i), rng)
        g = utility_gradient(game, i, xs)
        moved = list(xs)
        moved[i] = (1 - h) * xs[i] + h * y
        slope = (expected_utility(game, moved)[i] - expected_utility(game, xs)[i]) / h
        assert slope == pytest.approx(float(g @ (y - xs[i])), abs=1e-6)


@pytest.mark.parametrize("name", GAMES)
def test_utilities_are_multilinear(name, request, rng):
    game = request.getfixturevalue(name)
    n = game.num_players
    for _ in range(10):
        xs = [random_strategy(game.tfdp(p), rng) for p in range(n)]
        for k in range(n):
            other = random_strategy(game.tfdp(k), rng)
            lam = float(rng.random())
            mixed, alt = list(xs), list(xs)
            mixed[k] = lam * xs[k] + (1 - lam) * other
            alt[k] = other
            np.testing.assert_allclose(
                expected_utility(game, mixed),
                lam * expected_utility(game, xs) + (1 - lam) * expected_utility(game, alt),
                atol=1e-9,
            )


@pytest.mark.parametrize("name", GAMES)
def test_zero_vector_violates_the_root_row(name, request):
    game = request.getfixturevalue(name)
    for p in range(game.num_players):
        tfdp = game.tfdp(p)
        assert check_sequence_form(np.zeros(tfdp.d), tfdp) == 1.0


def test_normalized_utilities_lie_in_unit_interval(fig1):
    sf = fig1.sequence_form
    assert sf.utility_bounds == (-10.0, 1.0)
    assert sf.normalized_utilities.min() == 0.0
    assert sf.normalized_utilities.max() == 1.0


def test_structure_errors():
    with pytest.raises(MalformedGameError):
        ExtensiveFormGame(2, chance([(0.5, terminal(0, 0)), (0.4, terminal(1, 1))]))
    with pytest.raises(MalformedGameError):
        ExtensiveFormGame(2, decision(0, "X", [("x", terminal(1.0))]))
    with pytest.raises(MalformedGameError):
        ExtensiveFormGame(2, decision(2, "X", [("x", terminal(0, 0))]))
    shared = terminal(0, 0)
    with pytest.raises(MalformedGameError):
        ExtensiveFormGame(2, decision(0, "X", [("x1", shared), ("x2", shared)]))
    with pytest.raises(MalformedGameError):
        ExtensiveFormGame(2, decision(0, "X", [
            ("x1", decision(1, "Y", [("y", terminal(0, 0))])),
            ("x2", decision(0, "Y", [("y", terminal(0, 0))])),
        ]))


def test_perfect_recall_violation_is_reported():
    forgetful = ExtensiveFormGame(1, decision(0, "X", [
        ("x1", decision(0, "Y", [("y1", terminal(1)), ("y2", terminal(0))])),
        ("x2", decision(0, "Y", [("y1", terminal(0)), ("y2", terminal(1))])),
    ]))
    report = validate_perfect_recall(forgetful)
    assert not report.valid and report.infoset == "Y"
    with pytest.raises(PerfectRecallError, match="'Y'"):
        build_tfdp(forgetful, 0)


def test_single_decision_problem():
    tfdp = TreeFormDecisionProblem.single_decision(3)
    assert tfdp.d == 4
    assert tfdp.root_decision_points == (0,)
    F, f = tfdp.constraint_matrix
    x = np.array([1.0, 0.2, 0.3, 0.5])
    np.testing.assert_allclose(F @ x, f)


def test_summary(fig1):
    summary = fig1.summary()
    assert summary["terminal_states"] == 13
    assert summary["d_per_player"] == [11, 5]
    assert summary["infosets_per_player"] == [5, 2]
