# MIT License
# Copyright (c) 2025 Ronnie Garrison
from __future__ import annotations

from typing import Callable, Dict, Mapping, Optional, Sequence

import numpy as np
import pytest

from utc_equilibria.game_core import (
    ChanceNode,
    ExtensiveFormGame,
    PlayerNode,
    TerminalNode,
    TreeFormDecisionProblem,
    behavioral_to_sequence_form,
    sequence_to_behavioral,
)
from utc_equilibria.games import gen_fig1_example, gen_fig3_example, gen_kuhn
from utc_equilibria.utc import BehavioralUtcStrategy, UtcDag, build_utc_dag


@pytest.fixture(scope="session")
def fig1() -> ExtensiveFormGame:
    return gen_fig1_example()


@pytest.fixture(scope="session")
def fig3() -> ExtensiveFormGame:
    return gen_fig3_example()


@pytest.fixture(scope="session")
def kuhn23() -> ExtensiveFormGame:
    return gen_kuhn(players=2, deck=3)


@pytest.fixture(scope="session")
def single3() -> TreeFormDecisionProblem:
    return TreeFormDecisionProblem.single_decision(3)


@pytest.fixture(scope="session")
def fig1_dag(fig1: ExtensiveFormGame) -> UtcDag:
    return build_utc_dag(fig1.tfdp(0))


@pytest.fixture(scope="session")
def fig3_dag(fig3: ExtensiveFormGame) -> UtcDag:
    return build_utc_dag(fig3.tfdp(0))


@pytest.fixture(scope="session")
def single3_dag(single3: TreeFormDecisionProblem) -> UtcDag:
    return build_utc_dag(single3)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def pure_strategy(tfdp: TreeFormDecisionProblem, choices: Mapping[str, str]) -> np.ndarray:
    """Sequence-form vector playing choices[infoset] (first action elsewhere)."""
    behavior = np.zeros(tfdp.d)
    for j, (infoset, actions) in enumerate(zip(tfdp.infosets, tfdp.actions)):
        k = actions.index(choices[infoset]) if infoset in choices else 0
        behavior[tfdp.dp_start[j] + k] = 1.0
    return behavioral_to_sequence_form(tfdp, behavior)


def plan_from_rule(dag: UtcDag, rule: Callable[[str, str], Optional[str]]) -> BehavioralUtcStrategy:
    """
    Pure UTC plan: rule(infoset, mediator sequence label) names the edge
    ("play A:a1" or "query A"); None picks the first edge.
    """
    chosen = []
    for k, node in enumerate(dag.dec_nodes):
        infoset = dag.real.infosets[dag.row[node]]
        state = dag.mediator.seq_labels[dag.col[node]]
        labels = dag.edge_labels(k)
        wanted = rule(infoset, state)
        offset = labels.index(wanted) if wanted is not None else 0
        chosen.append(dag.dec_ptr[k] + offset)
    return BehavioralUtcStrategy.from_choices(dag, np.array(chosen))


def playout_utilities(
    game: ExtensiveFormGame, strategies: Sequence[np.ndarray], rng: np.random.Generator, samples: int
) -> np.ndarray:
    """Monte-Carlo estimate of expected utilities by sampling root-to-leaf paths."""
    tfdps = game.sequence_form.tfdps
    behaviors = [sequence_to_behavioral(t, x) for t, x in zip(tfdps, strategies)]
    local: Dict[str, np.ndarray] = {}
    for t, b in zip(tfdps, behaviors):
        for j, infoset in enumerate(t.infosets):
            local[infoset] = b[t.dp_start[j]:t.dp_stop[j]]
    total = np.zeros(game.num_players)
    for _ in range(samples):
        node = game.root
        while not isinstance(node, TerminalNode):
            if isinstance(node, ChanceNode):
                node = node.children[rng.choice(len(node.children), p=np.asarray(node.probs))]
            else:
                assert isinstance(node, PlayerNode)
                probs = local[node.infoset]
                node = node.children[rng.choice(len(node.children), p=probs / probs.sum())]
        total += node.utils
    return total / samples


def copy_guess_rule(infoset: str, state: str) -> Optional[str]:
    """fig1 deviation: play c2 without asking, then copy the recommendation at A (for D) or B (for E)."""
    return {
        ("A", "∅"): "play A:a1",
        ("B", "∅"): "play B:b1",
        ("C", "∅"): "play C:c2",
        ("D", "∅"): "query A",
        ("D", "A:a1"): "play D:d1",
        ("D", "A:a2"): "play D:d2",
        ("E", "∅"): "query B",
        ("E", "B:b1"): "play E:e1",
        ("E", "B:b2"): "play E:e2",
    }.get((infoset, state))
