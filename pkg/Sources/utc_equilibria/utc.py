# MIT License
# Copyright (c) 2025 Ronnie Garrison
"""
The untimed-communication (UTC) deviation DAG and (A, B) deviations.

Three node kinds, keyed by index pairs into the real (deviator's) decision
problem and the mediator's decision problem:

    O1 (sigma, sigma~)  observation: real sequence sigma reached while the
                        deepest mediator recommendation seen is sigma~
    D  (j, sigma~)      decision: at real decision point j, either play an
                        action a (edge to O1 (ja, sigma~)) or query a mediator
                        decision point j~ in C(sigma~) (edge to O2 (j, j~))
    O2 (j, j~)          observation: the mediator answers with some a at j~
                        (edges to D (j, j~a))

Every node carries the potential 3 * (real depth + mediator depth) plus
0 / 1 / 2 for O1 / D / O2, which strictly increases along every edge. Node
ids are sorted by potential, so id order is a topological order and each
potential level is a contiguous block of ids.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .errors import DimensionMismatchError, EnumerationLimitError, InfeasibleStrategyError
from .game_core import (
    DEFAULT_ENUMERATION_BOUND,
    FEASIBILITY_TOLERANCE,
    TreeFormDecisionProblem,
    check_sequence_form,
)
from .io_utils import write_json

logger = logging.getLogger(__name__)

O1, DEC, O2 = 0, 1, 2
PLAY, QUERY = 0, 1
NODE_KINDS = {O1: "observe-real", DEC: "decide", O2: "observe-mediator"}
VERIFY_TOLERANCE = 1e-9


def _segments(counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Owner index and offset within owner for a run-length layout."""
    counts = np.asarray(counts, dtype=np.int64)
    owner = np.repeat(np.arange(len(counts)), counts)
    starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
    offset = np.arange(int(counts.sum())) - np.repeat(starts, counts)
    return owner, offset


def _child_lists(tfdp: TreeFormDecisionProblem) -> Tuple[np.ndarray, np.ndarray]:
    """CSR layout of C_sigma: pointer array over sequences, flat decision point list."""
    sizes = np.array([len(c) for c in tfdp.children], dtype=np.int64)
    flat = np.array([j for c in tfdp.children for j in c], dtype=np.int64)
    return np.concatenate(([0], np.cumsum(sizes))), flat


@dataclass(frozen=True)
class LevelBlock:
    level: int
    kind: int
    nodes: slice
    edges: slice
    decisions: slice


# ===== DAG =====
@dataclass(frozen=True, eq=False)
class UtcDag:
    """Reachable part of the UTC decision problem for a (real, mediator) pair."""

    real: TreeFormDecisionProblem
    mediator: TreeFormDecisionProblem
    kind: np.ndarray
    row: np.ndarray
    col: np.ndarray
    level: np.ndarray
    o1_id: np.ndarray
    dec_id: np.ndarray
    o2_id: np.ndarray
    dec_nodes: np.ndarray
    dec_ptr: np.ndarray
    edge_dst: np.ndarray
    edge_kind: np.ndarray
    edge_label: np.ndarray
    obs_src: np.ndarray
    obs_dst: np.ndarray
    obs_ptr: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.kind)

    @property
    def num_decision_nodes(self) -> int:
        return len(self.dec_nodes)

    @property
    def num_decision_edges(self) -> int:
        return len(self.edge_dst)

    @property
    def root(self) -> int:
        return 0

    @property
    def topological_order(self) -> np.ndarray:
        return np.arange(self.num_nodes)

    @cached_property
    def edge_src(self) -> np.ndarray:
        """Decision index (position in dec_nodes) owning each decision edge."""
        return np.repeat(np.arange(self.num_decision_nodes), np.diff(self.dec_ptr))

    @cached_property
    def edge_sizes(self) -> np.ndarray:
        """Out-degree of the owning decision node, per decision edge."""
        return np.diff(self.dec_ptr)[self.edge_src]

    @cached_property
    def dec_index(self) -> np.ndarray:
        out = np.full(self.num_nodes, -1, dtype=np.int64)
        out[self.dec_nodes] = np.arange(self.num_decision_nodes)
        return out

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.bincount(np.concatenate((self.edge_dst, self.obs_dst)), minlength=self.num_nodes)

    @cached_property
    def o1_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.kind == O1)

    @cached_property
    def o2_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.kind == O2)

    @cached_property
    def blocks(self) -> Tuple[LevelBlock, ...]:
        """Per potential level: node range, outgoing edge range, decision range."""
        out = []
        levels = np.unique(self.level)
        node_lo = np.searchsorted(self.level, levels, side="left")
        node_hi = np.searchsorted(self.level, levels, side="right")
        dec_level = self.level[self.dec_nodes]
        src_level = self.level[self.obs_src]
        for lvl, lo, hi in zip(levels, node_lo, node_hi):
            kind = int(lvl % 3)
            if kind == DEC:
                d_lo = int(np.searchsorted(dec_level, lvl, side="left"))
                d_hi = int(np.searchsorted(dec_level, lvl, side="right"))
                edges = slice(int(self.dec_ptr[d_lo]), int(self.dec_ptr[d_hi]))
                decisions = slice(d_lo, d_hi)
            else:
                e_lo = int(np.searchsorted(src_level, lvl, side="left"))
                e_hi = int(np.searchsorted(src_level, lvl, side="right"))
                edges = slice(e_lo, e_hi)
                decisions = slice(0, 0)
            out.append(LevelBlock(int(lvl), kind, slice(int(lo), int(hi)), edges, decisions))
        return tuple(out)

    @cached_property
    def node_counts(self) -> Dict[str, int]:
        """Full product counts next to the reachable (pruned) counts."""
        real, med = self.real, self.mediator
        return {
            "o1_full": real.d * med.d,
            "o2_full": real.num_decision_points * med.num_decision_points,
            "decision_full": real.num_decision_points * med.d,
            "o1": int(np.sum(self.kind == O1)),
            "o2": int(np.sum(self.kind == O2)),
            "decision": self.num_decision_nodes,
            "nodes": self.num_nodes,
            "edges": self.num_decision_edges + len(self.obs_dst),
            "pruned": real.d * med.d + real.num_decision_points * (med.num_decision_points + med.d) - self.num_nodes,
        }

    def node_label(self, node: int) -> str:
        k, r, c = int(self.kind[node]), int(self.row[node]), int(self.col[node])
        if k == O1:
            return f"O({self.real.seq_labels[r]}, {self.mediator.seq_labels[c]})"
        if k == DEC:
            return f"D({self.real.infosets[r]}, {self.mediator.seq_labels[c]})"
        return f"O({self.real.infosets[r]}, {self.mediator.infosets[c]}~)"

    def edge_labels(self, decision: int) -> List[str]:
        """Readable labels of one decision node's outgoing edges, in edge order."""
        out = []
        for e in range(self.dec_ptr[decision], self.dec_ptr[decision + 1]):
            if self.edge_kind[e] == PLAY:
                out.append(f"play {self.real.seq_labels[self.edge_label[e]]}")
            else:
                out.append(f"query {self.mediator.infosets[self.edge_label[e]]}")
        return out

    def children(self, node: int) -> np.ndarray:
        if self.kind[node] == DEC:
            k = self.dec_index[node]
            return self.edge_dst[self.dec_ptr[k]:self.dec_ptr[k + 1]]
        return self.obs_dst[self.obs_ptr[node]:self.obs_ptr[node + 1]]


def build_utc_dag(real: TreeFormDecisionProblem, mediator: Optional[TreeFormDecisionProblem] = None) -> UtcDag:
    """
    Build the reachable UTC DAG. With no mediator problem the real one is
    used for both sides. The only unreachable states of the full product are
    O1 (empty, sigma~) with sigma~ non-empty.
    """
    med = real if mediator is None else mediator
    d, dt = real.d, med.d
    nj, njt = real.num_decision_points, med.num_decision_points

    # --- node keys ---
    s_grid, st_grid = np.meshgrid(np.arange(d), np.arange(dt), indexing="ij")
    keep = (s_grid > 0) | (st_grid == 0)
    o1_row, o1_col = s_grid[keep], st_grid[keep]
    dec_row, dec_col = (a.ravel() for a in np.meshgrid(np.arange(nj), np.arange(dt), indexing="ij"))
    o2_row, o2_col = (a.ravel() for a in np.meshgrid(np.arange(nj), np.arange(njt), indexing="ij"))

    o1_level = 3 * (real.seq_depth[o1_row] + med.seq_depth[o1_col])
    dec_level = 3 * (real.dp_depth[dec_row] + med.seq_depth[dec_col]) + 1
    o2_level = 3 * (real.dp_depth[o2_row] + med.dp_depth[o2_col]) + 2

    kind = np.concatenate((np.full(len(o1_row), O1), np.full(len(dec_row), DEC), np.full(len(o2_row), O2)))
    row = np.concatenate((o1_row, dec_row, o2_row)).astype(np.int64)
    col = np.concatenate((o1_col, dec_col, o2_col)).astype(np.int64)
    level = np.concatenate((o1_level, dec_level, o2_level)).astype(np.int64)
    order = np.argsort(level, kind="stable")
    kind, row, col, level = kind[order], row[order], col[order], level[order]
    ids = np.arange(len(kind))

    o1_id = np.full((d, dt), -1, dtype=np.int64)
    dec_id = np.full((nj, dt), -1, dtype=np.int64)
    o2_id = np.full((nj, njt), -1, dtype=np.int64)
    for k, table in ((O1, o1_id), (DEC, dec_id), (O2, o2_id)):
        mask = kind == k
        table[row[mask], col[mask]] = ids[mask]

    # --- decision edges: play edges in action order, then query edges ---
    dec_nodes = ids[kind == DEC]
    dj, dst_seq = row[dec_nodes], col[dec_nodes]
    owner, offset = _segments(real.dp_sizes[dj])
    play_seq = real.dp_start[dj][owner] + offset
    play_dst = o1_id[play_seq, dst_seq[owner]]
    play_owner = owner

    med_ptr, med_children = _child_lists(med)
    q_owner, q_offset = _segments(med_ptr[dst_seq + 1] - med_ptr[dst_seq])
    q_dp = med_children[med_ptr[dst_seq][q_owner] + q_offset]
    q_dst = o2_id[dj[q_owner], q_dp]

    e_owner = np.concatenate((play_owner, q_owner))
    e_kind = np.concatenate((np.full(len(play_owner), PLAY), np.full(len(q_owner), QUERY)))
    e_dst = np.concatenate((play_dst, q_dst))
    e_label = np.concatenate((play_seq, q_dp))
    perm = np.lexsort((np.arange(len(e_owner)), e_kind, e_owner))
    e_owner, e_kind, e_dst, e_label = e_owner[perm], e_kind[perm], e_dst[perm], e_label[perm]
    dec_ptr = np.concatenate(([0], np.cumsum(np.bincount(e_owner, minlength=len(dec_nodes))))).astype(np.int64)

    # --- observation edges ---
    real_ptr, real_children = _child_lists(real)
    o1_nodes = ids[kind == O1]
    s, st = row[o1_nodes], col[o1_nodes]
    r_owner, r_offset = _segments(real_ptr[s + 1] - real_ptr[s])
    r_src = o1_nodes[r_owner]
    r_dst = dec_id[real_children[real_ptr[s][r_owner] + r_offset], st[r_owner]]

    o2_nodes = ids[kind == O2]
    j, jt = row[o2_nodes], col[o2_nodes]
    m_owner, m_offset = _segments(med.dp_sizes[jt])
    m_src = o2_nodes[m_owner]
    m_dst = dec_id[j[m_owner], med.dp_start[jt][m_owner] + m_offset]

    obs_src = np.concatenate((r_src, m_src))
    obs_dst = np.concatenate((r_dst, m_dst))
    perm = np.argsort(obs_src, kind="stable")
    obs_src, obs_dst = obs_src[perm], obs_dst[perm]
    obs_ptr = np.searchsorted(obs_src, np.arange(len(kind) + 1), side="left").astype(np.int64)

    dag = UtcDag(
        real=real, mediator=med, kind=kind, row=row, col=col, level=level,
        o1_id=o1_id, dec_id=dec_id, o2_id=o2_id,
        dec_nodes=dec_nodes, dec_ptr=dec_ptr, edge_dst=e_dst, edge_kind=e_kind, edge_label=e_label,
        obs_src=obs_src, obs_dst=obs_dst, obs_ptr=obs_ptr,
    )
    logger.debug("UTC DAG for player %d: %s", real.player, dag.node_counts)
    return dag


def to_networkx(dag: UtcDag) -> nx.DiGraph:
    """Export the DAG with readable node and edge labels."""
    graph = nx.DiGraph(player=dag.real.player)
    for node in range(dag.num_nodes):
        graph.add_node(int(node), kind=NODE_KINDS[int(dag.kind[node])], label=dag.node_label(node),
                       level=int(dag.level[node]))
    for k, node in enumerate(dag.dec_nodes):
        for e, text in zip(range(dag.dec_ptr[k], dag.dec_ptr[k + 1]), dag.edge_labels(k)):
            graph.add_edge(int(node), int(dag.edge_dst[e]), kind="play" if dag.edge_kind[e] == PLAY else "query",
                           label=text)
    for src, dst in zip(dag.obs_src, dag.obs_dst):
        graph.add_edge(int(src), int(dst), kind="observe", label="")
    return graph


def write_graphml(dag: UtcDag, path: Union[str, Path]) -> Path:
    target = Path(path).expanduser()
    target.parent.mkdir(parents=True, exist_ok=True)
    nx.write_graphml(to_networkx(dag), str(target))
    logger.info("wrote UTC DAG (%d nodes) to %s", dag.num_nodes, target)
    return target


# ===== Deviations =====
@dataclass(frozen=True, eq=False)
class UtcDeviation:
    """A: |Sigma| x |Sigma~| (acts as x~ -> A x~), B: |J| x |J~|."""

    A: np.ndarray
    B: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x


@dataclass(frozen=True, eq=False)
class BehavioralUtcStrategy:
    """A distribution over the outgoing edges of every decision node."""

    dag: UtcDag
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (self.dag.num_decision_edges,):
            raise DimensionMismatchError(
                f"behavioral strategy has shape {probs.shape}, expected ({self.dag.num_decision_edges},)"
            )
        if probs.size and probs.min() < 0:
            raise InfeasibleStrategyError("negative edge probability", float(-probs.min()))
        totals = np.add.reduceat(probs, self.dag.dec_ptr[:-1]) if probs.size else probs
        worst = float(np.max(np.abs(totals - 1.0), initial=0.0))
        if worst > 1e-12 * max(1.0, float(np.max(np.diff(self.dag.dec_ptr), initial=1))):
            raise InfeasibleStrategyError("edge probabilities do not sum to 1 at a decision node", worst)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, dag: UtcDag) -> "BehavioralUtcStrategy":
        return cls(dag, 1.0 / dag.edge_sizes)

    @classmethod
    def random(cls, dag: UtcDag, rng: np.random.Generator) -> "BehavioralUtcStrategy":
        raw = rng.random(dag.num_decision_edges) + 1e-3
        totals = np.add.reduceat(raw, dag.dec_ptr[:-1])
        return cls(dag, raw / totals[dag.edge_src])

    @classmethod
    def from_choices(cls, dag: UtcDag, chosen_edges: np.ndarray) -> "BehavioralUtcStrategy":
        """Pure strategy choosing one edge (absolute edge index) per decision node."""
        probs = np.zeros(dag.num_decision_edges)
        probs[np.asarray(chosen_edges, dtype=np.int64)] = 1.0
        return cls(dag, probs)


def reach_pass(dag: UtcDag, edge_probs: np.ndarray) -> np.ndarray:
    """Top-down: node reach = sum over in-edges of parent reach times edge probability."""
    reach = np.zeros(dag.num_nodes)
    reach[dag.root] = 1.0
    src_nodes = dag.dec_nodes[dag.edge_src]
    for block in dag.blocks:
        e = block.edges
        if block.kind == DEC:
            # O nodes have a single parent
            reach[dag.edge_dst[e]] += reach[src_nodes[e]] * edge_probs[e]
        else:
            # within one level every D node has at most one parent
            reach[dag.obs_dst[e]] += reach[dag.obs_src[e]]
    return reach


def observation_gains(dag: UtcDag, G_A: np.ndarray) -> np.ndarray:
    """Per-node local utility: G_A at first-kind observation nodes, 0 elsewhere."""
    G_A = np.asarray(G_A, dtype=np.float64)
    if G_A.shape != (dag.real.d, dag.mediator.d):
        raise DimensionMismatchError(f"gradient has shape {G_A.shape}, expected ({dag.real.d}, {dag.mediator.d})")
    gains = np.zeros(dag.num_nodes)
    o1 = dag.o1_nodes
    gains[o1] = G_A[dag.row[o1], dag.col[o1]]
    return gains


def value_pass(dag: UtcDag, gains: np.ndarray, edge_probs: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Bottom-up node values. Observation nodes sum their children; decision
    nodes take the edge_probs expectation, or the maximum when edge_probs
    is None.
    """
    value = np.array(gains, dtype=np.float64, copy=True)
    for block in reversed(dag.blocks):
        e = block.edges
        if block.kind == DEC:
            if e.stop == e.start:
                continue
            rel = dag.dec_ptr[block.decisions] - e.start
            children = value[dag.edge_dst[e]]
            if edge_probs is None:
                value[dag.dec_nodes[block.decisions]] = np.maximum.reduceat(children, rel)
            else:
                value[dag.dec_nodes[block.decisions]] = np.add.reduceat(edge_probs[e] * children, rel)
        elif e.stop > e.start:
            np.add.at(value, dag.obs_src[e], value[dag.obs_dst[e]])
    return value


def greedy_edges(dag: UtcDag, value: np.ndarray) -> np.ndarray:
    """First edge attaining the maximum child value at every decision node."""
    if dag.num_decision_edges == 0:
        return np.zeros(0, dtype=np.int64)
    child = value[dag.edge_dst]
    best = child >= value[dag.dec_nodes][dag.edge_src]
    index = np.where(best, np.arange(dag.num_decision_edges), dag.num_decision_edges)
    return np.minimum.reduceat(index, dag.dec_ptr[:-1])


def behavioral_to_sequence(strategy: BehavioralUtcStrategy, dag: Optional[UtcDag] = None) -> UtcDeviation:
    dag = strategy.dag if dag is None else dag
    if dag is not strategy.dag and dag.num_decision_edges != strategy.dag.num_decision_edges:
        raise DimensionMismatchError("behavioral strategy belongs to a different DAG")
    return deviation_from_reach(dag, reach_pass(dag, strategy.probs))


def deviation_from_reach(dag: UtcDag, reach: np.ndarray) -> UtcDeviation:
    A = np.zeros((dag.real.d, dag.mediator.d))
    B = np.zeros((dag.real.num_decision_points, dag.mediator.num_decision_points))
    o1, o2 = dag.o1_nodes, dag.o2_nodes
    A[dag.row[o1], dag.col[o1]] = reach[o1]
    B[dag.row[o2], dag.col[o2]] = reach[o2]
    return UtcDeviation(A, B)


def identity_deviation(dag: UtcDag) -> UtcDeviation:
    """Query the current decision point and play the recommendation."""
    if dag.real is not dag.mediator:
        raise DimensionMismatchError("the identity deviation needs the same decision problem on both sides")
    A = np.eye(dag.real.d)
    return UtcDeviation(A, complete_matrix(A, dag))


def constant_deviation(dag: UtcDag, x0: np.ndarray) -> UtcDeviation:
    """Ignore the mediator and play x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (dag.real.d,):
        raise DimensionMismatchError(f"constant deviation target has shape {x0.shape}, expected ({dag.real.d},)")
    A = np.zeros((dag.real.d, dag.mediator.d))
    A[:, 0] = x0
    return UtcDeviation(A, np.zeros((dag.real.num_decision_points, dag.mediator.num_decision_points)))


# ===== Constraint system =====
@dataclass(frozen=True)
class ConstraintReport:
    residual: float
    violation: Optional[str]

    @property
    def ok(self) -> bool:
        return self.violation is None


def _check_shapes(dev: UtcDeviation, dag: UtcDag) -> Tuple[np.ndarray, np.ndarray]:
    A, B = np.asarray(dev.A, dtype=np.float64), np.asarray(dev.B, dtype=np.float64)
    want_a = (dag.real.d, dag.mediator.d)
    want_b = (dag.real.num_decision_points, dag.mediator.num_decision_points)
    if A.shape != want_a or B.shape != want_b:
        raise DimensionMismatchError(f"deviation shapes A{A.shape} B{B.shape}, expected A{want_a} B{want_b}")
    return A, B


def flow_residuals(A: np.ndarray, B: np.ndarray, dag: UtcDag) -> np.ndarray:
    """
    |J| x |Sigma~| residuals of
    A(p_j, s~) + B(j, p_s~) - sum_a A(ja, s~) - sum_{j~ in C(s~)} B(j, j~).
    """
    real, med = dag.real, dag.mediator
    into = A[real.dp_parent] + (med.action_matrix.T @ B.T).T
    out = real.action_matrix @ A + (med.parent_matrix.T @ B.T).T
    return np.asarray(into - out)


def check_constraints(dev: UtcDeviation, dag: UtcDag, tol: float = VERIFY_TOLERANCE) -> ConstraintReport:
    """Largest violation over the root row, the flow equalities and nonnegativity."""
    A, B = _check_shapes(dev, dag)
    real, med = dag.real, dag.mediator
    root = np.abs(A[0].copy())
    root[0] = abs(A[0, 0] - 1.0)
    flow = np.abs(flow_residuals(A, B, dag))
    neg_a, neg_b = np.maximum(-A, 0.0), np.maximum(-B, 0.0)
    candidates = [
        ("root", root, lambda idx: f"root row A({real.seq_labels[0]}, {med.seq_labels[idx[0]]})"),
        ("flow", flow, lambda idx: f"flow at (j={real.infosets[idx[0]]}, s~={med.seq_labels[idx[1]]})"),
        ("nonneg-A", neg_a, lambda idx: f"A({real.seq_labels[idx[0]]}, {med.seq_labels[idx[1]]}) < 0"),
        ("nonneg-B", neg_b, lambda idx: f"B({real.infosets[idx[0]]}, {med.infosets[idx[1]]}) < 0"),
    ]
    residual = max(float(np.max(values, initial=0.0)) for _, values, _ in candidates)
    for _, values, describe in candidates:
        bad = np.argwhere(values > tol)
        if len(bad):
            return ConstraintReport(residual, describe(tuple(int(i) for i in bad[0])))
    return ConstraintReport(residual, None)


def apply_deviation(
    dev: UtcDeviation, x: np.ndarray, dag: UtcDag, tol: float = FEASIBILITY_TOLERANCE
) -> np.ndarray:
    """phi(x) = A x for feasible inputs; the output is a real-side sequence-form vector."""
    report = check_constraints(dev, dag, tol)
    if not report.ok:
        raise InfeasibleStrategyError(f"deviation infeasible ({report.violation})", report.residual)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dag.mediator.d,):
        raise DimensionMismatchError(f"strategy has shape {x.shape}, expected ({dag.mediator.d},)")
    residual = check_sequence_form(x, dag.mediator)
    if residual > tol:
        raise InfeasibleStrategyError("strategy is not in the sequence-form polytope", residual)
    return np.asarray(dev.A) @ x


# ===== Completing A into (A, B) =====
def canonicalize_rows(A_raw: np.ndarray, mediator: TreeFormDecisionProblem, tol: float = VERIFY_TOLERANCE) -> np.ndarray:
    """
    Rewrite every row c so that c >= 0 and min_a c(j~a) = 0 at every mediator
    decision point, without changing <c, x~> on the sequence-form polytope.
    """
    A = np.array(A_raw, dtype=np.float64, copy=True)
    if A.ndim != 2 or A.shape[1] != mediator.d:
        raise DimensionMismatchError(f"matrix has shape {A.shape}, expected (*, {mediator.d})")
    for jt in range(mediator.num_decision_points - 1, -1, -1):
        lo, hi = mediator.dp_start[jt], mediator.dp_stop[jt]
        m = A[:, lo:hi].min(axis=1)
        A[:, lo:hi] -= m[:, None]
        A[:, mediator.dp_parent[jt]] += m
    worst = float(np.min(A[:, 0], initial=0.0))
    if worst < -tol:
        raise InfeasibleStrategyError("row functional is negative on some pure strategy", -worst)
    A[(A < 0) & (A >= -tol)] = 0.0
    return A


def complete_matrix(A: np.ndarray, dag: UtcDag, tol: float = VERIFY_TOLERANCE) -> np.ndarray:
    """
    Recover B for a row-canonical A, deepest mediator decision points first:
    B~(j, s~) = sum_a A(ja, s~) + sum_{j~ in C(s~)} B(j, j~) - A(p_j, s~),
    B(j, j~) = min over a of B~(j, j~a).
    """
    real, med = dag.real, dag.mediator
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (real.d, med.d):
        raise DimensionMismatchError(f"matrix has shape {A.shape}, expected ({real.d}, {med.d})")
    base = np.asarray(real.action_matrix @ A) - A[real.dp_parent]
    B = np.zeros((real.num_decision_points, med.num_decision_points))
    below = np.zeros((real.num_decision_points, med.d))
    for jt in range(med.num_decision_points - 1, -1, -1):
        lo, hi = med.dp_start[jt], med.dp_stop[jt]
        B[:, jt] = (base[:, lo:hi] + below[:, lo:hi]).min(axis=1)
        below[:, med.dp_parent[jt]] += B[:, jt]
    worst = float(np.min(B, initial=0.0))
    if worst < -tol:
        raise InfeasibleStrategyError("completion produced a negative B entry; A does not map into the polytope", -worst)
    B[B < 0] = 0.0
    return B


# ===== Pure deviations =====
class PureDeviations:
    """
    Pure deviator plans, factored by the real root decision points.

    Below distinct root decision points the deviator's choices touch disjoint
    rows of (A, B), so a plan is one component plan per root decision point.
    Each component is a table of reached O1/O2 node ids padded with -1.
    """

    def __init__(self, dag: UtcDag, components: List[np.ndarray], count: int) -> None:
        self.dag = dag
        self.components = components
        self.count = count

    def __len__(self) -> int:
        return self.count

    @property
    def materialized(self) -> int:
        return sum(len(t) for t in self.components)

    def deviation(self, rows: Sequence[np.ndarray]) -> UtcDeviation:
        dag = self.dag
        A = np.zeros((dag.real.d, dag.mediator.d))
        B = np.zeros((dag.real.num_decision_points, dag.mediator.num_decision_points))
        A[0, 0] = 1.0
        codes = np.concatenate([np.asarray(r) for r in rows]) if rows else np.zeros(0, dtype=np.int64)
        codes = codes[codes >= 0]
        kinds = dag.kind[codes]
        o1, o2 = codes[kinds == O1], codes[kinds == O2]
        A[dag.row[o1], dag.col[o1]] = 1.0
        B[dag.row[o2], dag.col[o2]] = 1.0
        return UtcDeviation(A, B)

    def __iter__(self) -> Iterator[UtcDeviation]:
        for picks in itertools.product(*(range(len(t)) for t in self.components)):
            yield self.deviation([t[i] for t, i in zip(self.components, picks)])

    def covering(self) -> Iterator[UtcDeviation]:
        """Every component plan at least once, the other components at their first plan."""
        if not self.components:
            yield self.deviation([])
            return
        defaults = [t[0] for t in self.components]
        for c, table in enumerate(self.components):
            for row in table:
                rows = list(defaults)
                rows[c] = row
                yield self.deviation(rows)

    def sample(self, rng: np.random.Generator) -> UtcDeviation:
        return self.deviation([t[rng.integers(len(t))] for t in self.components])

    def _gains(self, G_A: np.ndarray) -> np.ndarray:
        # trailing 0 absorbs the -1 padding
        return np.append(observation_gains(self.dag, G_A), 0.0)

    def maximize(self, G_A: np.ndarray) -> Tuple[float, UtcDeviation]:
        """max over all plans of <G_A, A>, with the lowest-index plan per component on ties."""
        gains = self._gains(G_A)
        G_A = np.asarray(G_A, dtype=np.float64)
        value = float(G_A[0, 0])
        rows = []
        for table in self.components:
            scores = gains[table].sum(axis=1)
            best = int(np.argmax(scores))
            value += float(scores[best])
            rows.append(table[best])
        return value, self.deviation(rows)


def count_pure_deviations(dag: UtcDag) -> List[int]:
    """Plan counts per root component (Python ints, no materialization)."""
    counts: Dict[int, int] = {}
    for node in range(dag.num_nodes - 1, -1, -1):
        kids = dag.children(node)
        if dag.kind[node] == DEC:
            counts[node] = sum(counts[int(c)] for c in kids)
        else:
            total = 1
            for c in kids:
                total *= counts[int(c)]
            counts[node] = total
    return [counts[int(c)] for c in dag.children(dag.root)]


def enumerate_pure_deviations(dag: UtcDag, bound: int = DEFAULT_ENUMERATION_BOUND) -> PureDeviations:
    """All pure deviator plans; `bound` caps the number of materialized component plans."""
    sizes = count_pure_deviations(dag)
    total_rows = sum(sizes)
    count = 1
    for s in sizes:
        count *= s
    if total_rows > bound:
        raise EnumerationLimitError(f"pure deviations of player {dag.real.player}", total_rows, bound)

    memo: Dict[int, np.ndarray] = {}

    def plans(node: int) -> np.ndarray:
        if node in memo:
            return memo[node]
        kids = [int(c) for c in dag.children(node)]
        if dag.kind[node] == DEC:
            tables = [plans(c) for c in kids]
            width = max(t.shape[1] for t in tables)
            table = np.vstack([
                np.pad(t, ((0, 0), (0, width - t.shape[1])), constant_values=-1) for t in tables
            ])
        else:
            table = np.array([[node]], dtype=np.int64)
            for c in kids:
                sub = plans(c)
                table = np.hstack([np.repeat(table, len(sub), axis=0), np.tile(sub, (len(table), 1))])
        memo[node] = table
        return table

    components = [plans(int(c)) for c in dag.children(dag.root)]
    logger.debug("pure deviations of player %d: count=%d, components=%s", dag.real.player, count, sizes)
    return PureDeviations(dag, components, count)


# ===== Export =====
def deviation_to_document(dev: UtcDeviation, dag: UtcDag) -> Dict[str, object]:
    report = check_constraints(dev, dag)
    return {
        "player": dag.real.player,
        "A": {
            "rows": list(dag.real.seq_labels),
            "cols": list(dag.mediator.seq_labels),
            "data": np.asarray(dev.A).tolist(),
        },
        "B": {
            "rows": list(dag.real.infosets),
            "cols": list(dag.mediator.infosets),
            "data": np.asarray(dev.B).tolist(),
        },
        "residual": report.residual,
    }


def write_deviation(path: Union[str, Path], dev: UtcDeviation, dag: UtcDag) -> Path:
    return write_json(path, deviation_to_document(dev, dag))
