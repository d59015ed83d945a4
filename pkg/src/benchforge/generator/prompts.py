"""Prompt builders and the reflection schema.

Every builder is a pure function of its arguments and returns
``{"system": ..., "user": ...}``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass

from .styles import get_style

CASES = ("aggressive_mutation", "conservative_mutation", "reflection_crossover")
REFLECTION_TEXT_FIELDS = (
    "summary",
    "successful_patterns",
    "valuable_patterns_in_loser",
    "trade_off_insight",
    "innovation_strategy",
)
MAX_LETS = 4

GRAMMAR = """\
Expression language (one expression per program, evaluated on a batch of points):
  x                      the decision vector (length d)
  x[i], x[i:j]           coordinate access and slices; negative indices count from the end
  numbers, pi, e         constants
  + - * / ^              arithmetic on vectors and scalars with broadcasting
  sin cos tan tanh exp log abs sqrt sign floor   elementwise functions
  min2(a, b), max2(a, b) elementwise minimum and maximum
  sum mean prod max min  reductions over the coordinates of a vector
  where(a CMP b, u, v)   elementwise selection, CMP in < <= > >= == !=
  roll(v, k)             cyclic shift of a vector by integer k
  let name = expr; body  bind an intermediate quantity
The program must produce one scalar per point, so every vector term has to pass
through a reduction. log, division and powers are protected against domain errors,
but large intermediate values still overflow: keep magnitudes moderate."""

CODING_RULES = f"""\
Rules for the program you write:
1. Output exactly one expression in the language above, optionally inside a ```dsl fence. No prose around it.
2. The expression returns one scalar per point; it is minimized.
3. Compose operators directly. Use at most {MAX_LETS} let-bindings, each named after the quantity it holds.
4. Keep every intermediate quantity bounded over the search box (avoid exp of large arguments and deep powers).
5. The function must not be constant anywhere near the whole box."""

GENERATOR_ROLE = (
    "You design objective functions for benchmarking black-box optimizers. "
    "Each function is written as a program in a small vectorized expression language."
)

SIMILARITY_TEXT = (
    "Similarity emphasis (weight {w:.3f}): the landscape should resemble at least one problem of the "
    "target benchmark set. Match its global structure: modality, basin sizes, separability, "
    "conditioning and the way values change toward the boundary."
)
HARDNESS_TEXT = (
    "Discrimination emphasis (weight {w:.3f}): the landscape should separate strong optimizers from weak "
    "ones. A good function lets an effective search strategy reach clearly better values than a naive "
    "one within the same budget, and does not let every method stall at the same level."
)


@dataclass(frozen=True)
class GenerationContext:
    lam: tuple[float, float]
    style: str
    dim: int
    bounds: tuple[float, float] = (-5.0, 5.0)
    grammar: str = GRAMMAR

    def __post_init__(self):
        get_style(self.style)
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))


@dataclass(frozen=True)
class Contender:
    """What the generator sees of a scored candidate."""

    id: str
    source: str
    valid: bool
    lsi: float
    adc: float
    pbi: float
    lam: tuple[float, float]
    reason: str | None = None


@dataclass(frozen=True)
class Reflection:
    summary: str
    case: str
    successful_patterns: str
    valuable_patterns_in_loser: str
    trade_off_insight: str
    innovation_strategy: str
    winner_id: str | None = None
    loser_id: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


class ReflectionParseError(ValueError):
    pass


def reflection_case(valid_a: bool, valid_b: bool) -> str:
    if valid_a and valid_b:
        return "reflection_crossover"
    if valid_a or valid_b:
        return "conservative_mutation"
    return "aggressive_mutation"


def winner_loser(a: Contender, b: Contender) -> tuple[Contender, Contender]:
    """Higher PBI wins; ties (including two invalid candidates) go to ``a``."""
    return (b, a) if b.pbi > a.pbi else (a, b)


def _lam_text(lam) -> str:
    return f"({lam[0]:.3f}, {lam[1]:.3f})"


def _preference(lam) -> str:
    parts = [f"Reference vector (similarity, discrimination) = {_lam_text(lam)}."]
    if lam[0] > 0:
        parts.append(SIMILARITY_TEXT.format(w=lam[0]))
    if lam[1] > 0:
        parts.append(HARDNESS_TEXT.format(w=lam[1]))
    return "\n".join(parts)


def _box(ctx_dim: int, bounds) -> str:
    lo, hi = bounds
    return f"The search space is [{lo:g}, {hi:g}]^{ctx_dim}."


def build_init_prompt(ctx: GenerationContext) -> dict[str, str]:
    style = get_style(ctx.style)
    system = f"{GENERATOR_ROLE}\n\n{CODING_RULES}"
    user = "\n\n".join(
        [
            "Write a new objective function program.",
            _box(ctx.dim, ctx.bounds),
            "Generation preference:\n" + _preference(ctx.lam),
            f"Landscape style: {style.title}\n{style.knowledge}\nExample in this style:\n    {style.exemplar}",
            ctx.grammar,
        ]
    )
    return {"system": system, "user": user}


REFLECTOR_ROLE = """\
You analyse pairs of benchmark functions produced during an evolutionary search and write a recipe for the next offspring.

Scores of a function:
- LSI in (0, 1]: similarity of its sampled landscape features to the closest target problem.
- ADC in [0, 0.5]: spread of the normalized final results of a pool of optimizers; high means the function discriminates.
- PBI: the two scores combined along a reference vector relative to the best values seen so far. Higher is better.

Analysis rules:
- Name the concrete structures (operators, couplings, constants, guards) that explain the winner's scores.
- Look for structures in the loser that are worth keeping even though it lost, e.g. a part that raises one score.
- State the trade-off between similarity and discrimination that the comparison reveals.
- Propose one concrete innovation strategy for the offspring.

Invalid functions:
- If one function is invalid, ignore it and base the recipe on the valid one.
- If both are invalid, explain the failure and call for a random restart with a different structure.

Answer with a single JSON object and nothing else. Keys: summary, case, successful_patterns,
valuable_patterns_in_loser, trade_off_insight, innovation_strategy, winner_id, loser_id.
The value of "case" is one of aggressive_mutation, conservative_mutation, reflection_crossover."""

_SCENARIO = {
    "reflection_crossover": (
        "Both functions are valid. Compare them, keep what makes {w} win, and identify what {l} contributes "
        'that {w} lacks. Use case "reflection_crossover"; every field must be filled in.'
    ),
    "conservative_mutation": (
        "Only {w} is valid. Ignore the invalid candidate {l} and focus on the valid one: suggest a careful "
        'modification of {w} that keeps it valid. Use case "conservative_mutation".'
    ),
    "aggressive_mutation": (
        "Both functions are invalid. Diagnose why they fail, then ask for a random restart: an entirely new "
        'structure that does not repeat either failure. Use case "aggressive_mutation".'
    ),
}


def _fmt(v: float) -> str:
    return "-inf" if v == -math.inf else f"{v:.6f}"


def _describe(label: str, c: Contender) -> str:
    status = "valid" if c.valid else f"invalid ({c.reason or 'failed validation'})"
    return (
        f"{label} [id {c.id}] reference vector {_lam_text(c.lam)}, {status}\n"
        f"    source: {c.source}\n"
        f"    LSI = {_fmt(c.lsi)}, ADC = {_fmt(c.adc)}, PBI = {_fmt(c.pbi)}"
    )


def build_reflection_prompt(a: Contender, b: Contender) -> dict[str, str]:
    winner, loser = winner_loser(a, b)
    case = reflection_case(a.valid, b.valid)
    user = "\n\n".join(
        [
            _describe("Function A", a),
            _describe("Function B", b),
            f"Winner: {winner.id}. Loser: {loser.id}.",
            _SCENARIO[case].format(w=winner.id, l=loser.id),
            "Reply with the JSON object only.",
        ]
    )
    return {"system": REFLECTOR_ROLE, "user": user}


REPAIR_INSTRUCTION = (
    "Your previous reply could not be parsed. Reply again with one JSON object only, no markdown, "
    "containing the keys: " + ", ".join(("case",) + REFLECTION_TEXT_FIELDS) + "."
)

OPERATOR_ROLE = """\
You act as the variation operator of an evolutionary search over benchmark function programs.
Build one offspring from two parents in four steps:
1. Inherit: keep the structure of parent A that the recipe marks as successful.
2. Transfer: bring in the parts of parent B that the recipe marks as valuable.
3. Innovate: apply the innovation strategy.
4. Synthesize: merge everything into one coherent expression, not a concatenation of the parents."""


def build_reproduction_prompt(
    reflection: Reflection, parent_a: Contender, parent_b: Contender, lam, dim: int, bounds=(-5.0, 5.0)
) -> dict[str, str]:
    system = f"{GENERATOR_ROLE}\n\n{OPERATOR_ROLE}\n\n{CODING_RULES}"
    recipe = "\n".join(
        [
            f"Keep: {reflection.successful_patterns}",
            f"Incorporate: {reflection.valuable_patterns_in_loser}",
            f"Avoid: {reflection.trade_off_insight}",
            f"Innovation: {reflection.innovation_strategy}",
        ]
    )
    user = "\n\n".join(
        [
            _box(dim, bounds),
            "Objectives:\n" + _preference(lam),
            f"Parent A (winner, id {parent_a.id}):\n    {parent_a.source}",
            f"Parent B (id {parent_b.id}):\n    {parent_b.source}",
            f"Recipe ({reflection.case}):\n{recipe}",
            GRAMMAR,
            "Write exactly one expression for the offspring.",
        ]
    )
    return {"system": system, "user": user}


def as_messages(prompt: dict[str, str]) -> list[dict[str, str]]:
    return [{"role": "system", "content": prompt["system"]}, {"role": "user", "content": prompt["user"]}]


_FENCE = re.compile(r"```[A-Za-z]*\s*\n?(.*?)```", re.DOTALL)


def strip_fences(text: str) -> str:
    match = _FENCE.search(text)
    return (match.group(1) if match else text).strip()


def parse_reflection(text: str) -> Reflection:
    body = strip_fences(text)
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ReflectionParseError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ReflectionParseError("expected a JSON object")
    case = doc.get("case")
    if case not in CASES:
        raise ReflectionParseError(f"case must be one of {CASES}, got {case!r}")
    fields = {}
    for name in REFLECTION_TEXT_FIELDS:
        if name not in doc:
            raise ReflectionParseError(f"missing field {name!r}")
        if not isinstance(doc[name], str):
            raise ReflectionParseError(f"field {name!r} must be a string")
        fields[name] = doc[name]
    if case == "reflection_crossover":
        empty = [name for name in REFLECTION_TEXT_FIELDS if not fields[name].strip()]
        if empty:
            raise ReflectionParseError(f"crossover reflection has empty fields {empty}")
    ids = {}
    for name in ("winner_id", "loser_id"):
        value = doc.get(name)
        ids[name] = None if value is None else str(value)
    return Reflection(case=case, **fields, **ids)


def extract_program(text: str) -> str:
    """The expression inside the first fence, or the whole reply, on one line."""
    return " ".join(strip_fences(text).split())


def fallback_reflection(a: Contender, b: Contender) -> Reflection:
    """Conservative recipe around the winner, used when the model's reflection is unusable."""
    winner, loser = winner_loser(a, b)
    return Reflection(
        summary=f"No usable analysis was returned; keep {winner.id} and modify it carefully.",
        case="conservative_mutation",
        successful_patterns=f"the overall structure of {winner.source}",
        valuable_patterns_in_loser="",
        trade_off_insight="avoid changes that break validity",
        innovation_strategy="adjust one constant or swap one elementwise function",
        winner_id=winner.id,
        loser_id=loser.id,
    )
