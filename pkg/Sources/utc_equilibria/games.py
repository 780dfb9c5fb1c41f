# MIT License
# Copyright (c) 2025 Ronnie Garrison
"""
Benchmark and example games, game spec strings, and the JSON game document.

Spec strings: "kuhn:P=4,D=5", "leduc:P=3,R=3,S=2", "sheriff:N=10,B=2,R=2",
"fig1", "fig3", "file:<path>".
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import jsonschema

from .errors import ConfigError, MalformedGameError, PerfectRecallError
from .game_core import (
    ChanceNode,
    ExtensiveFormGame,
    Node,
    PlayerNode,
    TerminalNode,
    chance,
    decision,
    terminal,
    validate_perfect_recall,
)
from .io_utils import atomic_write_text, dumps_json, read_json

logger = logging.getLogger(__name__)

KUHN_ANTE = 1
KUHN_BET = 1
LEDUC_ANTE = 1
LEDUC_BETS = (2, 4)
SHERIFF_ITEM_VALUE = 1
SHERIFF_ITEM_PENALTY = 2
SHERIFF_PENALTY = 3


# ===== Shared betting round =====
Continuation = Callable[[str, Tuple[int, ...], Optional[int], Tuple[int, ...]], Node]


def _betting_round(
    seats: Tuple[int, ...],
    history: str,
    infoset: Callable[[int, str], str],
    finish: Continuation,
) -> Node:
    """
    One-bet round: seats act in order with check/bet until someone bets,
    then every other seat, starting after the bettor, calls or folds.
    `finish(history, seats, bettor, callers)` builds what follows the round.
    """

    def opening(k: int, hist: str) -> Node:
        if k == len(seats):
            return finish(hist, seats, None, ())
        seat = seats[k]
        return decision(seat, infoset(seat, hist), [
            ("check", opening(k + 1, hist + "k")),
            ("bet", responding(k, (), 1, hist + "b")),
        ])

    def responding(bettor_pos: int, callers: Tuple[int, ...], offset: int, hist: str) -> Node:
        if offset == len(seats):
            return finish(hist, seats, seats[bettor_pos], tuple(sorted(callers)))
        seat = seats[(bettor_pos + offset) % len(seats)]
        return decision(seat, infoset(seat, hist), [
            ("call", responding(bettor_pos, callers + (seat,), offset + 1, hist + "c")),
            ("fold", responding(bettor_pos, callers, offset + 1, hist + "f")),
        ])

    return opening(0, history)


def _remaining(seats: Tuple[int, ...], bettor: Optional[int], callers: Tuple[int, ...]) -> Tuple[int, ...]:
    if bettor is None:
        return seats
    return tuple(sorted((bettor,) + callers))


def _split_pot(pot: float, winners: Sequence[int], contributions: Sequence[float]) -> TerminalNode:
    share = pot / len(winners)
    return terminal(*((share if p in winners else 0.0) - c for p, c in enumerate(contributions)))


def _card(rank: int) -> str:
    return str(rank + 1)


# ===== Kuhn =====
def gen_kuhn(players: int = 4, deck: int = 5) -> ExtensiveFormGame:
    """n-player Kuhn poker: ante 1, one private card each, one bet of size 1."""
    if not 2 <= players <= deck:
        raise ConfigError(f"kuhn requires 2 <= players <= deck (got P={players}, D={deck})")
    seats = tuple(range(players))
    deals = list(itertools.permutations(range(deck), players))
    prob = 1.0 / len(deals)

    def subgame(cards: Tuple[int, ...]) -> Node:
        def infoset(seat: int, hist: str) -> str:
            return f"P{seat + 1}|{_card(cards[seat])}|{hist}"

        def finish(hist: str, active: Tuple[int, ...], bettor: Optional[int], callers: Tuple[int, ...]) -> Node:
            contributions = [float(KUHN_ANTE)] * players
            if bettor is not None:
                for seat in (bettor,) + callers:
                    contributions[seat] += KUHN_BET
            remaining = _remaining(active, bettor, callers)
            winner = max(remaining, key=lambda seat: cards[seat])
            return _split_pot(sum(contributions), (winner,), contributions)

        return _betting_round(seats, "", infoset, finish)

    root = chance(
        [(prob, subgame(cards)) for cards in deals],
        labels=["".join(_card(c) for c in cards) for cards in deals],
    )
    game = ExtensiveFormGame(players, root, name=f"kuhn:P={players},D={deck}")
    logger.debug("built %s with %d terminals", game.name, game.num_terminals)
    return game


# ===== Leduc =====
def _rank_deals(ranks: int, suits: int, players: int) -> List[Tuple[Tuple[int, ...], Fraction]]:
    deck = ranks * suits
    out = []
    for combo in itertools.product(range(ranks), repeat=players):
        left = [suits] * ranks
        prob = Fraction(1)
        for k, rank in enumerate(combo):
            prob *= Fraction(left[rank], deck - k)
            left[rank] -= 1
        if prob > 0:
            out.append((combo, prob))
    return out


def gen_leduc(players: int = 3, ranks: int = 3, suits: int = 2) -> ExtensiveFormGame:
    """Leduc hold'em with one bet per round (sizes 2 then 4), ante 1, cards dealt by rank."""
    if players < 2 or ranks < 1 or suits < 1:
        raise ConfigError(f"leduc requires players >= 2, ranks >= 1, suits >= 1 (got P={players}, R={ranks}, S={suits})")
    if players + 1 > ranks * suits:
        raise ConfigError(
            f"leduc requires players + 1 <= ranks * suits (got P={players}, R={ranks}, S={suits})"
        )
    deck = ranks * suits
    seats = tuple(range(players))

    def subgame(private: Tuple[int, ...]) -> Node:
        left = [suits - private.count(r) for r in range(ranks)]

        def first_infoset(seat: int, hist: str) -> str:
            return f"P{seat + 1}|{_card(private[seat])}|{hist}"

        def after_first(hist: str, active: Tuple[int, ...], bettor: Optional[int], callers: Tuple[int, ...]) -> Node:
            contributions = [float(LEDUC_ANTE)] * players
            if bettor is not None:
                for seat in (bettor,) + callers:
                    contributions[seat] += LEDUC_BETS[0]
            remaining = _remaining(active, bettor, callers)
            if len(remaining) == 1:
                return _split_pot(sum(contributions), remaining, contributions)
            outcomes = [
                (float(Fraction(left[r], deck - players)), community(r, hist, remaining, contributions))
                for r in range(ranks) if left[r] > 0
            ]
            return chance(outcomes, labels=[_card(r) for r in range(ranks) if left[r] > 0])

        def community(board: int, hist1: str, remaining: Tuple[int, ...], paid: List[float]) -> Node:
            prefix = f"{hist1}/{_card(board)}/"

            def infoset(seat: int, hist: str) -> str:
                return f"P{seat + 1}|{_card(private[seat])}|{hist}"

            def showdown(hist: str, active: Tuple[int, ...], bettor: Optional[int], callers: Tuple[int, ...]) -> Node:
                contributions = list(paid)
                if bettor is not None:
                    for seat in (bettor,) + callers:
                        contributions[seat] += LEDUC_BETS[1]
                alive = _remaining(active, bettor, callers)
                strength = {seat: (private[seat] == board, private[seat]) for seat in alive}
                best = max(strength.values())
                winners = tuple(seat for seat in alive if strength[seat] == best)
                return _split_pot(sum(contributions), winners, contributions)

            return _betting_round(remaining, prefix, infoset, showdown)

        return _betting_round(seats, "", first_infoset, after_first)

    deals = _rank_deals(ranks, suits, players)
    root = chance(
        [(float(prob), subgame(combo)) for combo, prob in deals],
        labels=["".join(_card(r) for r in combo) for combo, _ in deals],
    )
    game = ExtensiveFormGame(players, root, name=f"leduc:P={players},R={ranks},S={suits}")
    logger.debug("built %s with %d terminals", game.name, game.num_terminals)
    return game


# ===== Sheriff =====
def gen_sheriff(items: int = 10, max_bribe: int = 2, rounds: int = 2) -> ExtensiveFormGame:
    """
    Sheriff of Nottingham. Player 0 is the smuggler, player 1 the sheriff.

    The smuggler loads 0..items illegal items, then `rounds` non-binding
    bargaining rounds (bribe, accept/reject) are followed by a final bribe
    after which the sheriff's inspect/pass choice settles the game.
    """
    if items < 0 or max_bribe < 0 or rounds < 1:
        raise ConfigError(
            f"sheriff requires items >= 0, max_bribe >= 0, rounds >= 1 "
            f"(got N={items}, B={max_bribe}, R={rounds})"
        )

    def settle(load: int, bribe: int, inspect: bool) -> TerminalNode:
        if not inspect:
            return terminal(SHERIFF_ITEM_VALUE * load - bribe, bribe)
        if load > 0:
            return terminal(-SHERIFF_ITEM_PENALTY * load, SHERIFF_ITEM_PENALTY * load)
        return terminal(SHERIFF_PENALTY, -SHERIFF_PENALTY)

    def bargain(load: int, round_index: int, hist: str) -> Node:
        branches = []
        for bribe in range(max_bribe + 1):
            offer = f"{hist}b{bribe}"
            if round_index == rounds:
                response = decision(1, f"sheriff|{offer}", [
                    ("inspect", settle(load, bribe, True)),
                    ("pass", settle(load, bribe, False)),
                ])
            else:
                response = decision(1, f"sheriff|{offer}", [
                    ("accept", bargain(load, round_index + 1, offer + "a")),
                    ("reject", bargain(load, round_index + 1, offer + "r")),
                ])
            branches.append((f"b{bribe}", response))
        return decision(0, f"smuggler|n{load}|{hist}", branches)

    root = decision(0, "smuggler|load", [(f"n{load}", bargain(load, 0, "")) for load in range(items + 1)])
    game = ExtensiveFormGame(2, root, name=f"sheriff:N={items},B={max_bribe},R={rounds}")
    logger.debug("built %s with %d terminals", game.name, game.num_terminals)
    return game


# ===== Worked examples =====
def gen_fig1_example() -> ExtensiveFormGame:
    """
    Chance picks one of P1's infosets A, B, C uniformly. A and B pay 0.
    At C, c1 pays 0 and c2 leads to a fair coin between guessing games D and
    E, where P1 must match P2's action at F (resp. G): +1 on a match, -10
    otherwise. P2's utility is 0 everywhere.
    """

    def guess(mine: str, theirs: str) -> Node:
        return decision(0, mine.upper(), [
            (f"{mine}1", decision(1, theirs.upper(), [(f"{theirs}1", terminal(1, 0)), (f"{theirs}2", terminal(-10, 0))])),
            (f"{mine}2", decision(1, theirs.upper(), [(f"{theirs}1", terminal(-10, 0)), (f"{theirs}2", terminal(1, 0))])),
        ])

    root = chance([
        (1 / 3, decision(0, "A", [("a1", terminal(0, 0)), ("a2", terminal(0, 0))])),
        (1 / 3, decision(0, "B", [("b1", terminal(0, 0)), ("b2", terminal(0, 0))])),
        (1 / 3, decision(0, "C", [
            ("c1", terminal(0, 0)),
            ("c2", chance([(0.5, guess("d", "f")), (0.5, guess("e", "g"))])),
        ])),
    ])
    return ExtensiveFormGame(2, root, name="fig1")


def gen_fig3_example() -> ExtensiveFormGame:
    """P1 picks a1/a2/a3 at A, then b1/b2 at B after a1; P2's infoset C spans all four of its nodes."""

    def respond(first: float, second: float) -> Node:
        return decision(1, "C", [("c1", terminal(first, 0)), ("c2", terminal(second, 0))])

    root = decision(0, "A", [
        ("a1", decision(0, "B", [("b1", respond(0, 0)), ("b2", respond(0, 0))])),
        ("a2", respond(1, -1)),
        ("a3", respond(-1, 1)),
    ])
    return ExtensiveFormGame(2, root, name="fig3")


# ===== Game specs =====
_PARAMETERS: Dict[str, Tuple[Tuple[str, str, int], ...]] = {
    "kuhn": (("P", "players", 4), ("D", "deck", 5)),
    "leduc": (("P", "players", 3), ("R", "ranks", 3), ("S", "suits", 2)),
    "sheriff": (("N", "items", 10), ("B", "max_bribe", 2), ("R", "rounds", 2)),
    "fig1": (),
    "fig3": (),
}


@dataclass(frozen=True)
class GameSpec:
    variant: str
    params: Tuple[Tuple[str, int], ...] = ()
    path: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> "GameSpec":
        raw = text.strip()
        variant, _, rest = raw.partition(":")
        variant = variant.strip().lower()
        if variant == "file":
            if not rest.strip():
                raise ConfigError("file game spec needs a path, e.g. file:game.json")
            return cls("file", (), rest.strip())
        if variant not in _PARAMETERS:
            raise ConfigError(f"unknown game variant {variant!r} in spec {text!r}")
        known = {key: (name, default) for key, name, default in _PARAMETERS[variant]}
        values = {name: default for name, default in known.values()}
        for item in filter(None, (part.strip() for part in rest.split(","))):
            key, sep, value = item.partition("=")
            key = key.strip().upper()
            if not sep or key not in known:
                raise ConfigError(f"unknown parameter {item!r} for {variant} (expected {sorted(known)})")
            try:
                values[known[key][0]] = int(value)
            except ValueError as exc:
                raise ConfigError(f"parameter {key} of {variant} must be an integer (got {value!r})") from exc
        spec = cls(variant, tuple((name, values[name]) for _, name, _ in _PARAMETERS[variant]))
        spec.validate()
        return spec

    @property
    def kwargs(self) -> Dict[str, int]:
        return dict(self.params)

    def validate(self) -> None:
        p = self.kwargs
        if self.variant == "kuhn" and not 2 <= p["players"] <= p["deck"]:
            raise ConfigError(f"kuhn requires 2 <= P <= D (got P={p['players']}, D={p['deck']})")
        if self.variant == "leduc":
            if p["players"] < 2 or p["ranks"] < 1 or p["suits"] < 1:
                raise ConfigError(f"leduc requires P >= 2, R >= 1, S >= 1 (got P={p['players']}, R={p['ranks']}, S={p['suits']})")
            if p["players"] + 1 > p["ranks"] * p["suits"]:
                raise ConfigError(
                    f"leduc requires P + 1 <= R * S (got P={p['players']}, R={p['ranks']}, S={p['suits']})"
                )
        if self.variant == "sheriff" and (p["items"] < 0 or p["max_bribe"] < 0 or p["rounds"] < 1):
            raise ConfigError(
                f"sheriff requires N >= 0, B >= 0, R >= 1 (got N={p['items']}, B={p['max_bribe']}, R={p['rounds']})"
            )

    def build(self) -> ExtensiveFormGame:
        if self.variant == "file":
            return load_game(self.path)
        builders: Dict[str, Callable[..., ExtensiveFormGame]] = {
            "kuhn": gen_kuhn,
            "leduc": gen_leduc,
            "sheriff": gen_sheriff,
            "fig1": gen_fig1_example,
            "fig3": gen_fig3_example,
        }
        return builders[self.variant](**self.kwargs)

    def __str__(self) -> str:
        if self.variant == "file":
            return f"file:{self.path}"
        if not self.params:
            return self.variant
        keys = {name: key for key, name, _ in _PARAMETERS[self.variant]}
        return f"{self.variant}:" + ",".join(f"{keys[name]}={value}" for name, value in self.params)


def build_game(spec: Union[str, GameSpec]) -> ExtensiveFormGame:
    return (GameSpec.parse(spec) if isinstance(spec, str) else spec).build()


# ===== JSON game document =====
GAME_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["players", "root"],
    "properties": {
        "players": {"type": "integer", "minimum": 1},
        "name": {"type": "string"},
        "utility_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "root": {"$ref": "#/definitions/node"},
    },
    "definitions": {
        "node": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["type", "outcomes"],
                    "properties": {
                        "type": {"const": "chance"},
                        "outcomes": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "object",
                                "required": ["p", "node"],
                                "properties": {
                                    "p": {"type": "number", "minimum": 0},
                                    "label": {"type": "string"},
                                    "node": {"$ref": "#/definitions/node"},
                                },
                            },
                        },
                    },
                },
                {
                    "type": "object",
                    "required": ["type", "player", "infoset", "actions"],
                    "properties": {
                        "type": {"const": "player"},
                        "player": {"type": "integer", "minimum": 0},
                        "infoset": {"type": "string"},
                        "actions": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "object",
                                "required": ["label", "node"],
                                "properties": {
                                    "label": {"type": "string"},
                                    "node": {"$ref": "#/definitions/node"},
                                },
                            },
                        },
                    },
                },
                {
                    "type": "object",
                    "required": ["type", "utils"],
                    "properties": {
                        "type": {"const": "terminal"},
                        "utils": {"type": "array", "items": {"type": "number"}},
                    },
                },
            ]
        }
    },
}


def _node_to_document(node: Node) -> Dict[str, Any]:
    if isinstance(node, TerminalNode):
        return {"type": "terminal", "utils": list(node.utils)}
    if isinstance(node, ChanceNode):
        outcomes = []
        for k, (p, child) in enumerate(zip(node.probs, node.children)):
            entry: Dict[str, Any] = {"p": p, "node": _node_to_document(child)}
            if node.labels:
                entry["label"] = node.labels[k]
            outcomes.append(entry)
        return {"type": "chance", "outcomes": outcomes}
    return {
        "type": "player",
        "player": node.player,
        "infoset": node.infoset,
        "actions": [{"label": a, "node": _node_to_document(c)} for a, c in zip(node.actions, node.children)],
    }


def _node_from_document(doc: Dict[str, Any]) -> Node:
    kind = doc["type"]
    if kind == "terminal":
        return TerminalNode(tuple(float(u) for u in doc["utils"]))
    if kind == "chance":
        outcomes = doc["outcomes"]
        labels = tuple(o["label"] for o in outcomes) if all("label" in o for o in outcomes) else ()
        return ChanceNode(
            tuple(float(o["p"]) for o in outcomes),
            tuple(_node_from_document(o["node"]) for o in outcomes),
            labels,
        )
    return PlayerNode(
        int(doc["player"]),
        str(doc["infoset"]),
        tuple(a["label"] for a in doc["actions"]),
        tuple(_node_from_document(a["node"]) for a in doc["actions"]),
    )


def game_to_document(game: ExtensiveFormGame) -> Dict[str, Any]:
    doc: Dict[str, Any] = {"players": game.num_players, "root": _node_to_document(game.root)}
    if game.name:
        doc["name"] = game.name
    if game.utility_range is not None:
        doc["utility_range"] = list(game.utility_range)
    return doc


def game_from_document(doc: Dict[str, Any]) -> ExtensiveFormGame:
    try:
        jsonschema.validate(doc, GAME_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "document"
        raise MalformedGameError(f"game document invalid at {where}: {exc.message}") from exc
    utility_range = doc.get("utility_range")
    game = ExtensiveFormGame(
        int(doc["players"]),
        _node_from_document(doc["root"]),
        name=doc.get("name", ""),
        utility_range=tuple(utility_range) if utility_range is not None else None,
    )
    recall = validate_perfect_recall(game)
    if not recall.valid:
        raise PerfectRecallError(recall)
    return game


def save_game(game: ExtensiveFormGame, path: Union[str, Path]) -> Path:
    target = atomic_write_text(path, dumps_json(game_to_document(game)))
    logger.info("saved game %s (%d terminals) to %s", game.name or "<unnamed>", game.num_terminals, target)
    return target


def load_game(path: Union[str, Path, None]) -> ExtensiveFormGame:
    if path is None:
        raise ConfigError("no game file given")
    source = Path(path).expanduser()
    if not source.is_file():
        raise ConfigError(f"game file not found: {source}")
    try:
        document = read_json(source)
    except ValueError as exc:
        raise MalformedGameError(f"{source}: not valid JSON ({exc})") from exc
    game = game_from_document(document)
    logger.info("loaded game %s from %s", game.name or source.name, source)
    return game
