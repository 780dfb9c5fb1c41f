# MIT License
# Copyright (c) 2025 Ronnie Garrison
"""
Extensive-form games and their sequence-form view.

A game is an immutable tree of ChanceNode / PlayerNode / TerminalNode
objects. Each player's view of it is a TreeFormDecisionProblem whose
decision points are the player's infosets and whose sequences are
(infoset, action) pairs plus the empty sequence at index 0. Infosets are
discovered depth-first, left to right, and a decision point's sequences get
contiguous indices when it is discovered, so every decision point comes
after the decision point owning its parent sequence.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from .errors import (
    DimensionMismatchError,
    EnumerationLimitError,
    InfeasibleStrategyError,
    MalformedGameError,
    PerfectRecallError,
)

logger = logging.getLogger(__name__)

CHANCE_TOLERANCE = 1e-12
FEASIBILITY_TOLERANCE = 1e-6
DEFAULT_ENUMERATION_BOUND = 10**6
ROOT_LABEL = "∅"


# ===== Game tree =====
@dataclass(frozen=True, eq=False)
class TerminalNode:
    utils: Tuple[float, ...]


@dataclass(frozen=True, eq=False)
class ChanceNode:
    probs: Tuple[float, ...]
    children: Tuple["Node", ...]
    labels: Tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class PlayerNode:
    player: int
    infoset: str
    actions: Tuple[str, ...]
    children: Tuple["Node", ...]


Node = Union[ChanceNode, PlayerNode, TerminalNode]


class InfosetInfo(NamedTuple):
    player: int
    actions: Tuple[str, ...]


def chance(outcomes: Sequence[Tuple[float, Node]], labels: Sequence[str] = ()) -> ChanceNode:
    return ChanceNode(tuple(float(p) for p, _ in outcomes), tuple(n for _, n in outcomes), tuple(labels))


def decision(player: int, infoset: str, branches: Sequence[Tuple[str, Node]]) -> PlayerNode:
    return PlayerNode(player, infoset, tuple(a for a, _ in branches), tuple(n for _, n in branches))


def terminal(*utils: float) -> TerminalNode:
    return TerminalNode(tuple(float(u) for u in utils))


@dataclass(frozen=True, eq=False)
class ExtensiveFormGame:
    """An n-player game tree with a validated infoset registry."""

    num_players: int
    root: Node = field(repr=False)
    name: str = ""
    utility_range: Optional[Tuple[float, float]] = None
    infosets: Dict[str, InfosetInfo] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.num_players < 1:
            raise MalformedGameError(f"a game needs at least one player (got {self.num_players})")
        object.__setattr__(self, "infosets", _check_structure(self.root, self.num_players))

    def nodes(self) -> Iterator[Node]:
        """Depth-first, left-to-right node iterator."""
        stack: List[Node] = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not isinstance(node, TerminalNode):
                stack.extend(reversed(node.children))

    @cached_property
    def num_terminals(self) -> int:
        return sum(1 for n in self.nodes() if isinstance(n, TerminalNode))

    @cached_property
    def num_nodes(self) -> int:
        return sum(1 for _ in self.nodes())

    @cached_property
    def sequence_form(self) -> "SequenceFormGame":
        return SequenceFormGame.build(self)

    def tfdp(self, player: int) -> "TreeFormDecisionProblem":
        return self.sequence_form.tfdps[player]

    def summary(self) -> Dict[str, object]:
        sf = self.sequence_form
        return {
            "name": self.name,
            "players": self.num_players,
            "terminal_states": self.num_terminals,
            "nodes": self.num_nodes,
            "infosets_per_player": [t.num_decision_points for t in sf.tfdps],
            "d_per_player": [t.d for t in sf.tfdps],
        }


def _check_structure(root: Node, num_players: int) -> Dict[str, InfosetInfo]:
    registry: Dict[str, InfosetInfo] = {}
    seen = set()
    stack: List[Node] = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            raise MalformedGameError("node reachable along two paths (the game graph is not a tree)")
        seen.add(id(node))
        if isinstance(node, TerminalNode):
            if len(node.utils) != num_players:
                raise MalformedGameError(
                    f"terminal utility has {len(node.utils)} entries for {num_players} players"
                )
            if not all(np.isfinite(node.utils)):
                raise MalformedGameError("terminal utility is not finite")
            continue
        if isinstance(node, ChanceNode):
            if not node.children or len(node.probs) != len(node.children):
                raise MalformedGameError("chance node needs one probability per outcome")
            if node.labels and len(node.labels) != len(node.children):
                raise MalformedGameError("chance node labels do not match its outcomes")
            if min(node.probs) < 0.0:
                raise MalformedGameError("chance node has a negative outcome probability")
            mass = float(np.sum(node.probs))
            if abs(mass - 1.0) > CHANCE_TOLERANCE:
                raise MalformedGameError(f"chance node probabilities sum to {mass!r}, not 1")
        elif isinstance(node, PlayerNode):
            if not 0 <= node.player < num_players:
                raise MalformedGameError(f"player {node.player} out of range at infoset {node.infoset!r}")
            if not node.actions or len(node.actions) != len(node.children):
                raise MalformedGameError(f"infoset {node.infoset!r} needs one child per action")
            if len(set(node.actions)) != len(node.actions):
                raise MalformedGameError(f"infoset {node.infoset!r} repeats an action label")
            info = InfosetInfo(node.player, node.actions)
            known = registry.setdefault(node.infoset, info)
            if known != info:
                raise MalformedGameError(
                    f"infoset {node.infoset!r} mixes owners or action sets: {known} vs {info}"
                )
        else:
            raise MalformedGameError(f"unknown node type {type(node).__name__}")
        stack.extend(node.children)
    return registry


# ===== Perfect recall =====
@dataclass(frozen=True)
class RecallReport:
    valid: bool
    infoset: Optional[str] = None
    histories: Optional[Tuple[Tuple[Tuple[str, str], ...], Tuple[Tuple[str, str], ...]]] = None


def validate_perfect_recall(game: ExtensiveFormGame) -> RecallReport:
    """
    Check that every infoset is reached with one own-history.

    The own-history of a node is the sequence of (infoset, action) pairs the
    owning player took on the root path. Structural defects never get here:
    they are rejected with MalformedGameError when the game is built.
    """
    first_seen: Dict[str, Tuple[Tuple[str, str], ...]] = {}
    empty: Tuple[Tuple[str, str], ...] = ()
    stack: List[Tuple[Node, Tuple[Tuple[Tuple[str, str], ...], ...]]] = [
        (game.root, tuple(empty for _ in range(game.num_players)))
    ]
    while stack:
        node, histories = stack.pop()
        if isinstance(node, TerminalNode):
            continue
        if isinstance(node, ChanceNode):
            stack.extend((child, histories) for child in reversed(node.children))
            continue
        own = histories[node.player]
        known = first_seen.setdefault(node.infoset, own)
        if known != own:
            return RecallReport(False, node.infoset, (known, own))
        for action, child in reversed(list(zip(node.actions, node.children))):
            updated = list(histories)
            updated[node.player] = own + ((node.infoset, action),)
            stack.append((child, tuple(updated)))
    return RecallReport(True)


# ===== Tree-form decision problems =====
@dataclass(frozen=True, eq=False)
class TreeFormDecisionProblem:
    """
    One player's decision problem in sequence form.

    Decision point j has parent sequence dp_parent[j] and owns the
    contiguous sequences dp_start[j] .. dp_start[j] + len(actions[j]) - 1.
    """

    player: int
    infosets: Tuple[str, ...]
    actions: Tuple[Tuple[str, ...], ...]
    dp_parent: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "dp_parent", np.asarray(self.dp_parent, dtype=np.int64).reshape(-1))
        if len(self.infosets) != len(self.actions) or len(self.dp_parent) != len(self.actions):
            raise MalformedGameError("decision point arrays disagree in length")
        for j, parent in enumerate(self.dp_parent):
            if not 0 <= parent < self.dp_start[j]:
                raise MalformedGameError(f"decision point {self.infosets[j]!r} precedes its parent sequence")

    @classmethod
    def single_decision(cls, num_actions: int, player: int = 0, label: str = "J") -> "TreeFormDecisionProblem":
        actions = tuple(f"a{k + 1}" for k in range(num_actions))
        return cls(player, (label,), (actions,), np.array([0]))

    @cached_property
    def num_decision_points(self) -> int:
        return len(self.infosets)

    @cached_property
    def dp_sizes(self) -> np.ndarray:
        return np.array([len(a) for a in self.actions], dtype=np.int64)

    @cached_property
    def dp_start(self) -> np.ndarray:
        return 1 + np.concatenate(([0], np.cumsum(self.dp_sizes)))[:-1].astype(np.int64)

    @cached_property
    def dp_stop(self) -> np.ndarray:
        return self.dp_start + self.dp_sizes

    @cached_property
    def d(self) -> int:
        return 1 + int(self.dp_sizes.sum())

    @cached_property
    def seq_dp(self) -> np.ndarray:
        """Decision point owning each sequence, -1 for the empty sequence."""
        return np.concatenate(([-1], np.repeat(np.arange(self.num_decision_points), self.dp_sizes)))

    @cached_property
    def seq_parent(self) -> np.ndarray:
        """Parent sequence p_j of each sequence's decision point, -1 at the root."""
        out = np.full(self.d, -1, dtype=np.int64)
        out[1:] = np.asarray(self.dp_parent)[self.seq_dp[1:]]
        return out

    @cached_property
    def seq_depth(self) -> np.ndarray:
        depth = np.zeros(self.d, dtype=np.int64)
        for j in range(self.num_decision_points):
            depth[self.dp_start[j]:self.dp_stop[j]] = depth[self.dp_parent[j]] + 1
        return depth

    @cached_property
    def dp_depth(self) -> np.ndarray:
        return self.seq_depth[np.asarray(self.dp_parent)]

    @cached_property
    def children(self) -> Tuple[Tuple[int, ...], ...]:
        """C_sigma: decision points whose parent sequence is sigma."""
        out: List[List[int]] = [[] for _ in range(self.d)]
        for j, parent in enumerate(self.dp_parent):
            out[int(parent)].append(j)
        return tuple(tuple(c) for c in out)

    @cached_property
    def root_decision_points(self) -> Tuple[int, ...]:
        return self.children[0]

    @cached_property
    def seq_labels(self) -> Tuple[str, ...]:
        labels = [ROOT_LABEL]
        for infoset, acts in zip(self.infosets, self.actions):
            labels.extend(f"{infoset}:{a}" for a in acts)
        return tuple(labels)

    @cached_property
    def dp_index(self) -> Dict[str, int]:
        return {label: j for j, label in enumerate(self.infosets)}

    @cached_property
    def parent_matrix(self) -> sparse.csr_matrix:
        """|J| x d, entry (j, p_j) = 1."""
        n = self.num_decision_points
        return sparse.csr_matrix(
            (np.ones(n), (np.arange(n), np.asarray(self.dp_parent))), shape=(n, self.d)
        )

    @cached_property
    def action_matrix(self) -> sparse.csr_matrix:
        """|J| x d, entry (j, ja) = 1."""
        return sparse.csr_matrix(
            (np.ones(self.d - 1), (self.seq_dp[1:], np.arange(1, self.d))),
            shape=(self.num_decision_points, self.d),
        )

    @cached_property
    def constraint_matrix(self) -> Tuple[np.ndarray, np.ndarray]:
        """Sequence-form constraints as F x = f: root row, then x(p_j) - sum_a x(ja) = 0."""
        rows = np.zeros((self.num_decision_points + 1, self.d))
        rows[0, 0] = 1.0
        rows[1:] = (self.parent_matrix - self.action_matrix).toarray()
        rhs = np.zeros(self.num_decision_points + 1)
        rhs[0] = 1.0
        return rows, rhs


def build_tfdp(game: ExtensiveFormGame, player: int) -> TreeFormDecisionProblem:
    """Derive a player's tree-form decision problem from the game tree."""
    if not 0 <= player < game.num_players:
        raise DimensionMismatchError(f"player {player} out of range for a {game.num_players}-player game")
    report = validate_perfect_recall(game)
    if not report.valid:
        raise PerfectRecallError(report)
    infosets: List[str] = []
    actions: List[Tuple[str, ...]] = []
    parents: List[int] = []
    starts: Dict[str, int] = {}
    next_seq = 1
    stack: List[Tuple[Node, int]] = [(game.root, 0)]
    while stack:
        node, seq = stack.pop()
        if isinstance(node, TerminalNode):
            continue
        if isinstance(node, PlayerNode) and node.player == player:
            if node.infoset not in starts:
                starts[node.infoset] = next_seq
                infosets.append(node.infoset)
                actions.append(node.actions)
                parents.append(seq)
                next_seq += len(node.actions)
            base = starts[node.infoset]
            stack.extend((child, base + k) for k, child in reversed(list(enumerate(node.children))))
        else:
            stack.extend((child, seq) for child in reversed(node.children))
    return TreeFormDecisionProblem(player, tuple(infosets), tuple(actions), np.array(parents, dtype=np.int64))


# ===== Sequence-form vectors =====
def _as_vector(x: np.ndarray, tfdp: TreeFormDecisionProblem, what: str = "strategy") -> np.ndarray:
    vec = np.asarray(x, dtype=np.float64)
    if vec.shape != (tfdp.d,):
        raise DimensionMismatchError(f"{what} has shape {vec.shape}, expected ({tfdp.d},)")
    return vec


def check_sequence_form(x: np.ndarray, tfdp: TreeFormDecisionProblem) -> float:
    """Largest violation of the flow constraints, nonnegativity and the unit upper bound."""
    vec = _as_vector(x, tfdp)
    flow = tfdp.parent_matrix @ vec - tfdp.action_matrix @ vec
    return float(max(
        abs(vec[0] - 1.0),
        float(np.max(np.abs(flow), initial=0.0)),
        float(np.max(-vec, initial=0.0)),
        float(np.max(vec - 1.0, initial=0.0)),
    ))


def require_feasible(x: np.ndarray, tfdp: TreeFormDecisionProblem, tol: float = FEASIBILITY_TOLERANCE) -> np.ndarray:
    vec = _as_vector(x, tfdp)
    residual = check_sequence_form(vec, tfdp)
    if residual > tol:
        raise InfeasibleStrategyError(f"player {tfdp.player} strategy is not in the sequence-form polytope", residual)
    return vec


def behavioral_to_sequence_form(tfdp: TreeFormDecisionProblem, behavior: np.ndarray) -> np.ndarray:
    """Push local action probabilities (indexed like sequences) top-down."""
    local = _as_vector(behavior, tfdp, "behavior")
    x = np.zeros(tfdp.d)
    x[0] = 1.0
    for j in range(tfdp.num_decision_points):
        lo, hi = tfdp.dp_start[j], tfdp.dp_stop[j]
        x[lo:hi] = x[tfdp.dp_parent[j]] * local[lo:hi]
    return x


def sequence_to_behavioral(tfdp: TreeFormDecisionProblem, x: np.ndarray) -> np.ndarray:
    vec = _as_vector(x, tfdp)
    out = np.zeros(tfdp.d)
    for j in range(tfdp.num_decision_points):
        lo, hi = tfdp.dp_start[j], tfdp.dp_stop[j]
        mass = vec[tfdp.dp_parent[j]]
        out[lo:hi] = vec[lo:hi] / mass if mass > 0 else 1.0 / (hi - lo)
    return out


def uniform_strategy(tfdp: TreeFormDecisionProblem) -> np.ndarray:
    behavior = np.ones(tfdp.d)
    behavior[1:] = 1.0 / tfdp.dp_sizes[tfdp.seq_dp[1:]]
    return behavioral_to_sequence_form(tfdp, behavior)


def random_strategy(tfdp: TreeFormDecisionProblem, rng: np.random.Generator) -> np.ndarray:
    behavior = np.ones(tfdp.d)
    for j in range(tfdp.num_decision_points):
        behavior[tfdp.dp_start[j]:tfdp.dp_stop[j]] = rng.dirichlet(np.ones(tfdp.dp_sizes[j]))
    return behavioral_to_sequence_form(tfdp, behavior)


def count_pure_strategies(tfdp: TreeFormDecisionProblem) -> int:
    counts = [1] * tfdp.d
    for seq in range(tfdp.d - 1, -1, -1):
        total = 1
        for j in tfdp.children[seq]:
            total *= sum(counts[s] for s in range(tfdp.dp_start[j], tfdp.dp_stop[j]))
        counts[seq] = total
    return counts[0]


def enumerate_pure_strategies(
    tfdp: TreeFormDecisionProblem, bound: int = DEFAULT_ENUMERATION_BOUND
) -> np.ndarray:
    """All reduced pure strategies as rows of a 0/1 matrix."""
    count = count_pure_strategies(tfdp)
    if count > bound:
        raise EnumerationLimitError(f"pure strategies of player {tfdp.player}", count, bound)
    plans: List[Optional[np.ndarray]] = [None] * tfdp.d
    for seq in range(tfdp.d - 1, -1, -1):
        rows = np.zeros((1, tfdp.d), dtype=np.uint8)
        rows[0, seq] = 1
        for j in tfdp.children[seq]:
            options = np.vstack([plans[s] for s in range(tfdp.dp_start[j], tfdp.dp_stop[j])])
            rows = (rows[:, None, :] + options[None, :, :]).reshape(-1, tfdp.d)
        plans[seq] = rows
    return plans[0].astype(np.float64)


def best_pure_response(tfdp: TreeFormDecisionProblem, g: np.ndarray) -> Tuple[float, np.ndarray]:
    """Maximize <g, x> over pure x by a bottom-up pass; ties go to the first action."""
    values = _as_vector(g, tfdp, "gradient").copy()
    choice = np.zeros(tfdp.num_decision_points, dtype=np.int64)
    for j in range(tfdp.num_decision_points - 1, -1, -1):
        lo, hi = tfdp.dp_start[j], tfdp.dp_stop[j]
        k = int(np.argmax(values[lo:hi]))
        choice[j] = lo + k
        values[tfdp.dp_parent[j]] += values[lo + k]
    behavior = np.zeros(tfdp.d)
    behavior[choice] = 1.0
    return float(values[0]), behavioral_to_sequence_form(tfdp, behavior)


# ===== Utilities =====
@dataclass(frozen=True, eq=False)
class SequenceFormGame:
    """Per-player decision problems plus a flat table of terminals."""

    game: ExtensiveFormGame
    tfdps: Tuple[TreeFormDecisionProblem, ...]
    chance_reach: np.ndarray
    terminal_seqs: np.ndarray
    utilities: np.ndarray

    @classmethod
    def build(cls, game: ExtensiveFormGame) -> "SequenceFormGame":
        tfdps = tuple(build_tfdp(game, p) for p in range(game.num_players))
        reach: List[float] = []
        seqs: List[Tuple[int, ...]] = []
        utils: List[Tuple[float, ...]] = []
        stack: List[Tuple[Node, float, Tuple[int, ...]]] = [(game.root, 1.0, (0,) * game.num_players)]
        while stack:
            node, prob, last = stack.pop()
            if isinstance(node, TerminalNode):
                reach.append(prob)
                seqs.append(last)
                utils.append(node.utils)
            elif isinstance(node, ChanceNode):
                for p, child in zip(reversed(node.probs), reversed(node.children)):
                    stack.append((child, prob * p, last))
            else:
                tfdp = tfdps[node.player]
                base = int(tfdp.dp_start[tfdp.dp_index[node.infoset]])
                for k in range(len(node.children) - 1, -1, -1):
                    updated = list(last)
                    updated[node.player] = base + k
                    stack.append((node.children[k], prob, tuple(updated)))
        logger.debug("sequence form of %s: %d terminals, d=%s", game.name or "game", len(reach),
                     [t.d for t in tfdps])
        return cls(
            game,
            tfdps,
            np.array(reach),
            np.array(seqs, dtype=np.int64).reshape(-1, game.num_players),
            np.array(utils, dtype=np.float64).reshape(-1, game.num_players),
        )

    @cached_property
    def utility_bounds(self) -> Tuple[float, float]:
        if self.game.utility_range is not None:
            lo, hi = self.game.utility_range
            return float(lo), float(hi)
        return float(self.utilities.min()), float(self.utilities.max())

    @cached_property
    def normalized_utilities(self) -> np.ndarray:
        lo, hi = self.utility_bounds
        if hi - lo <= 0.0:
            return self.utilities.copy()
        return (self.utilities - lo) / (hi - lo)

    def _checked(self, strategies: Sequence[Optional[np.ndarray]], skip: Optional[int]) -> List[Optional[np.ndarray]]:
        if len(strategies) != self.game.num_players:
            raise DimensionMismatchError(
                f"expected {self.game.num_players} strategies, got {len(strategies)}"
            )
        return [
            None if k == skip else require_feasible(x, self.tfdps[k])
            for k, x in enumerate(strategies)
        ]

    def _opponent_weights(self, i: int, strategies: List[Optional[np.ndarray]]) -> np.ndarray:
        weights = self.chance_reach.copy()
        for k, x in enumerate(strategies):
            if k != i:
                weights *= x[self.terminal_seqs[:, k]]
        return weights

    def utility_gradient(self, i: int, strategies: Sequence[Optional[np.ndarray]], normalized: bool = False) -> np.ndarray:
        """g(sigma) = sum over terminals with player-i sequence sigma of reach-weighted utility."""
        if not 0 <= i < self.game.num_players:
            raise DimensionMismatchError(f"player {i} out of range")
        checked = self._checked(strategies, skip=i)
        table = self.normalized_utilities if normalized else self.utilities
        weights = self._opponent_weights(i, checked) * table[:, i]
        return np.bincount(self.terminal_seqs[:, i], weights=weights, minlength=self.tfdps[i].d)

    def expected_utility(self, strategies: Sequence[np.ndarray]) -> np.ndarray:
        checked = self._checked(strategies, skip=None)
        reach = self.chance_reach.copy()
        for k, x in enumerate(checked):
            reach *= x[self.terminal_seqs[:, k]]
        return reach @ self.utilities


def utility_gradient(game: ExtensiveFormGame, i: int, strategies: Sequence[Optional[np.ndarray]]) -> np.ndarray:
    return game.sequence_form.utility_gradient(i, strategies)


def expected_utility(game: ExtensiveFormGame, strategies: Sequence[np.ndarray]) -> np.ndarray:
    return game.sequence_form.expected_utility(strategies)
