"""Deterministic offline generator: style templates, score-driven reflections, AST edits."""

from __future__ import annotations

import dataclasses
import threading

import numpy as np

from ..exprlang import (
    Binary,
    Compare,
    Const,
    Let,
    ParseError,
    Reduce,
    Ref,
    Roll,
    ShapeError,
    Unary,
    Where,
    children,
    iter_nodes,
    parse,
    shape_of,
    to_source,
    validate,
)
from .prompts import Contender, GenerationContext, Reflection, reflection_case, winner_loser
from .styles import STYLES, get_style

SWAPPABLE = ("sin", "cos", "tanh", "abs")
PERTURBATION = 0.2
MAX_EDIT_ATTEMPTS = 20

_CHILD_FIELDS = {
    Unary: ("arg",),
    Reduce: ("arg",),
    Roll: ("arg",),
    Binary: ("left", "right"),
    Compare: ("left", "right"),
    Where: ("cond", "then", "other"),
    Let: ("value", "body"),
}


def replace_at(node, path: tuple[int, ...], new):
    if not path:
        return new
    name = _CHILD_FIELDS[type(node)][path[0]]
    return dataclasses.replace(node, **{name: replace_at(getattr(node, name), path[1:], new)})


def _walk(node, d: int, env: dict, path=()):
    """Yield ``(path, node, shape)`` for every node; compare nodes get shape None."""
    if isinstance(node, Compare):
        yield path, node, None
    else:
        yield path, node, shape_of(node, d, env)
    if isinstance(node, Let):
        yield from _walk(node.value, d, env, path + (0,))
        inner = dict(env)
        inner[node.name] = shape_of(node.value, d, env)
        yield from _walk(node.body, d, inner, path + (1,))
        return
    for k, child in enumerate(children(node)):
        yield from _walk(child, d, env, path + (k,))


def free_refs(node) -> set[str]:
    if isinstance(node, Ref):
        return {node.name}
    if isinstance(node, Let):
        return free_refs(node.value) | (free_refs(node.body) - {node.name})
    out: set[str] = set()
    for child in children(node):
        out |= free_refs(child)
    return out


def perturb_constant(root, d: int, rng: np.random.Generator):
    sites = [(p, n) for p, n, _ in _walk(root, d, {}) if isinstance(n, Const) and n.value > 0]
    if not sites:
        return None
    path, node = sites[rng.integers(len(sites))]
    factor = 1.0 + rng.uniform(-PERTURBATION, PERTURBATION)
    return replace_at(root, path, Const(node.value * factor))


def swap_unary(root, d: int, rng: np.random.Generator):
    sites = [(p, n) for p, n, _ in _walk(root, d, {}) if isinstance(n, Unary) and n.op in SWAPPABLE]
    if not sites:
        return None
    path, node = sites[rng.integers(len(sites))]
    choices = [op for op in SWAPPABLE if op != node.op]
    return replace_at(root, path, Unary(choices[rng.integers(len(choices))], node.arg))


def graft_subtree(root, donor, d: int, rng: np.random.Generator):
    """Replace a non-root node of ``root`` by a closed, same-shaped subtree of ``donor``."""
    try:
        pieces = [(n, s) for _, n, s in _walk(donor, d, {}) if s is not None and not free_refs(n)]
    except (ShapeError, KeyError):
        return None
    if not pieces:
        return None
    piece, shape = pieces[rng.integers(len(pieces))]
    sites = [p for p, n, s in _walk(root, d, {}) if p and s == shape and n != piece]
    if not sites:
        return None
    return replace_at(root, sites[rng.integers(len(sites))], piece)


def _op_summary(source: str) -> str:
    try:
        root = parse(source).root
    except ParseError:
        return "no parseable structure"
    ops = []
    for node in iter_nodes(root):
        name = getattr(node, "op", None) or type(node).__name__.lower()
        if name not in ops and not isinstance(node, Const):
            ops.append(name)
    return ", ".join(ops[:8])


def mock_reflection(a: Contender, b: Contender) -> Reflection:
    winner, loser = winner_loser(a, b)
    case = reflection_case(a.valid, b.valid)
    if case == "aggressive_mutation":
        return Reflection(
            summary=f"Both {a.id} and {b.id} are invalid ({a.reason}; {b.reason}).",
            case=case,
            successful_patterns="",
            valuable_patterns_in_loser="",
            trade_off_insight="neither parent yields a usable landscape",
            innovation_strategy="random restart from a fresh landscape style",
            winner_id=winner.id,
            loser_id=loser.id,
        )
    if case == "conservative_mutation":
        return Reflection(
            summary=f"{winner.id} is valid (LSI {winner.lsi:.4f}, ADC {winner.adc:.4f}); {loser.id} is not.",
            case=case,
            successful_patterns=f"operators of {winner.id}: {_op_summary(winner.source)}",
            valuable_patterns_in_loser="",
            trade_off_insight=f"{loser.id} failed with {loser.reason}; keep edits small",
            innovation_strategy="perturb one constant or swap one elementwise function",
            winner_id=winner.id,
            loser_id=loser.id,
        )
    better = "LSI" if loser.lsi > winner.lsi else "ADC" if loser.adc > winner.adc else "neither score"
    return Reflection(
        summary=f"{winner.id} (PBI {winner.pbi:.4f}) beats {loser.id} (PBI {loser.pbi:.4f}).",
        case=case,
        successful_patterns=f"operators of {winner.id}: {_op_summary(winner.source)}",
        valuable_patterns_in_loser=f"{loser.id} is better on {better}; operators: {_op_summary(loser.source)}",
        trade_off_insight=(
            f"LSI {winner.lsi:.4f} vs {loser.lsi:.4f}, ADC {winner.adc:.4f} vs {loser.adc:.4f}"
        ),
        innovation_strategy="graft a sub-expression of the loser or perturb a constant of the winner",
        winner_id=winner.id,
        loser_id=loser.id,
    )


def random_template(rng: np.random.Generator) -> str:
    return STYLES[rng.integers(len(STYLES))].instantiate(rng)


def mock_reproduce(
    reflection: Reflection,
    parent_a: Contender,
    parent_b: Contender,
    dim: int,
    bounds=(-5.0, 5.0),
    seed: int = 0,
    n_probe: int = 64,
    probe_seed: int = 0,
) -> str:
    """Edit the winner ``parent_a``; fall back to it unchanged if no edit validates."""
    rng = np.random.default_rng(seed)
    if reflection.case == "aggressive_mutation":
        return random_template(rng)
    root = parse(parent_a.source, dim).root
    donor = None
    if reflection.case == "reflection_crossover":
        try:
            donor = parse(parent_b.source, dim).root
        except (ParseError, ShapeError):
            donor = None
    edits = ["perturb", "swap"] + (["graft"] if donor is not None else [])
    for _ in range(MAX_EDIT_ATTEMPTS):
        kind = edits[rng.integers(len(edits))]
        if kind == "perturb":
            child = perturb_constant(root, dim, rng)
        elif kind == "swap":
            child = swap_unary(root, dim, rng)
        else:
            child = graft_subtree(root, donor, dim, rng)
        if child is None or child == root:
            continue
        source = to_source(child)
        if validate(source, dim, bounds, n_probe, probe_seed).valid:
            return source
    return parse(parent_a.source).canonical_source


def mock_generate(role: str, inputs: dict, seed: int) -> str:
    """Text the mock 'model' returns for ``role`` in {init, reflect, reproduce}."""
    if role == "init":
        ctx: GenerationContext = inputs["ctx"]
        return get_style(ctx.style).instantiate(np.random.default_rng(seed))
    if role == "reflect":
        return mock_reflection(inputs["a"], inputs["b"]).to_json()
    if role == "reproduce":
        return mock_reproduce(
            inputs["reflection"],
            inputs["parent_a"],
            inputs["parent_b"],
            inputs["dim"],
            inputs.get("bounds", (-5.0, 5.0)),
            seed,
            inputs.get("n_probe", 64),
            inputs.get("probe_seed", 0),
        )
    raise ValueError(f"unknown role {role!r}")


class MockGenerator:
    kind = "mock"

    def __init__(self, n_probe: int = 64, probe_seed: int = 0):
        self.n_probe = n_probe
        self.probe_seed = probe_seed
        self._lock = threading.Lock()
        self._telemetry: list[dict] = []

    def init_program(self, ctx: GenerationContext, seed: int) -> str:
        return mock_generate("init", {"ctx": ctx}, seed)

    def reflect(self, a: Contender, b: Contender, seed: int) -> Reflection:
        return mock_reflection(a, b)

    def reproduce(self, reflection, parent_a, parent_b, lam, dim, bounds, seed: int) -> str:
        inputs = {
            "reflection": reflection,
            "parent_a": parent_a,
            "parent_b": parent_b,
            "dim": dim,
            "bounds": bounds,
            "n_probe": self.n_probe,
            "probe_seed": self.probe_seed,
        }
        return mock_generate("reproduce", inputs, seed)

    def drain_telemetry(self) -> list[dict]:
        with self._lock:
            out, self._telemetry = self._telemetry, []
        return out

