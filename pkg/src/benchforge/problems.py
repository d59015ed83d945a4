"""Problems (a program bound to a search box), suites, and the built-in target suite."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .exprlang import ParseError, Program, ShapeError, parse


class SchemaError(ValueError):
    """A suite document violates the schema; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _normalize_bounds(bounds, dim: int | None = None) -> tuple[tuple[float, float], ...]:
    b = np.asarray(bounds, dtype=float)
    if b.shape == (2,):
        if dim is None:
            raise ValueError("uniform bounds need an explicit dimension")
        b = np.tile(b, (dim, 1))
    if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] < 1:
        raise ValueError(f"bounds must be a list of [lo, hi] pairs, got shape {b.shape}")
    if dim is not None and b.shape[0] != dim:
        raise ValueError(f"bounds cover {b.shape[0]} coordinates, expected {dim}")
    if not np.all(np.isfinite(b)) or not np.all(b[:, 0] < b[:, 1]):
        raise ValueError("bounds need finite lo < hi on every coordinate")
    return tuple((float(lo), float(hi)) for lo, hi in b)


@dataclass(frozen=True)
class Problem:
    """A DSL program on a box. ``source`` is stored in canonical form."""

    label: str
    source: str
    bounds: tuple[tuple[float, float], ...]
    scores: dict[str, float] | None = None
    features: dict[str, float] | None = None
    lineage: dict[str, Any] | None = None
    program: Program = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bounds = _normalize_bounds(self.bounds)
        program = parse(self.source, len(bounds))
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "source", program.canonical_source)
        object.__setattr__(self, "program", program)

    @classmethod
    def from_source(cls, label: str, source: str, dim: int, bounds=(-5.0, 5.0), **extra) -> "Problem":
        return cls(label, source, _normalize_bounds(bounds, dim), **extra)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    def evaluate(self, points) -> np.ndarray:
        return self.program(points)

    def to_unit(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.lower) / (self.upper - self.lower)

    def from_unit(self, unit) -> np.ndarray:
        return self.lower + np.asarray(unit, dtype=float) * (self.upper - self.lower)


@dataclass(frozen=True)
class Suite:
    name: str
    problems: tuple[Problem, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problems = tuple(self.problems)
        if not problems:
            raise ValueError("a suite needs at least one problem")
        labels = [p.label for p in problems]
        dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
        if dupes:
            raise ValueError(f"duplicate problem labels: {dupes}")
        object.__setattr__(self, "problems", problems)

    def __len__(self) -> int:
        return len(self.problems)

    def __iter__(self):
        return iter(self.problems)

    def __getitem__(self, label: str) -> Problem:
        for p in self.problems:
            if p.label == label:
                return p
        raise KeyError(label)

    @property
    def labels(self) -> list[str]:
        return [p.label for p in self.problems]


# ---------------------------------------------------------------------------
# classic12
# ---------------------------------------------------------------------------

SCHWEFEL_CONSTANT = 418.9828872724338
WEIERSTRASS_TERMS = 12  # k = 0..11, a = 0.5, b = 3


def _num(v: float) -> str:
    return repr(float(v))


def _griewank(d: int) -> str:
    prod = " * ".join(f"cos(x[{i}] / sqrt({i + 1}))" for i in range(d))
    return f"sum(x^2) / 4000 - {prod} + 1"


def _zakharov(d: int) -> str:
    weighted = " + ".join(f"{_num(0.5 * (i + 1))} * x[{i}]" for i in range(d))
    return f"let s = {weighted}; sum(x^2) + s^2 + s^4"


def _weierstrass(d: int) -> str:
    terms = " + ".join(
        f"{_num(0.5**k)} * cos({_num(2.0 * 3**k)} * pi * (x + 0.5))" for k in range(WEIERSTRASS_TERMS)
    )
    # cos(pi * 3^k) = -1, so the offset is d * sum(a^k)
    offset = d * sum(0.5**k for k in range(WEIERSTRASS_TERMS))
    return f"sum({terms}) + {_num(offset)}"


_LEVY = (
    "sin(pi * (1 + (x[0] - 1) / 4))^2"
    " + sum(((x[:-1] - 1) / 4)^2 * (1 + 10 * sin(pi * (1 + (x[:-1] - 1) / 4) + 1)^2))"
    " + ((x[-1] - 1) / 4)^2 * (1 + sin(2 * pi * (1 + (x[-1] - 1) / 4))^2)"
)


def classic12_sources(dim: int) -> dict[str, str]:
    """DSL sources for the twelve classic functions at dimension ``dim``."""
    return {
        "sphere": "sum(x^2)",
        "rastrigin": "sum(x^2 - 10 * cos(2 * pi * x) + 10)",
        "rosenbrock": "sum(100 * (x[1:] - x[:-1]^2)^2 + (1 - x[:-1])^2)",
        "ackley": "-20 * exp(-0.2 * sqrt(mean(x^2))) - exp(mean(cos(2 * pi * x))) + 20 + e",
        "griewank": _griewank(dim),
        "schwefel226": f"{_num(SCHWEFEL_CONSTANT * dim)} - sum(x * sin(sqrt(abs(x))))",
        "levy": _LEVY,
        "zakharov": _zakharov(dim),
        "bent_cigar": "x[0]^2 + 1000000 * sum(x[1:]^2)",
        "discus": "1000000 * x[0]^2 + sum(x[1:]^2)",
        "weierstrass": _weierstrass(dim),
        "step": "sum(floor(x + 0.5)^2)",
    }


def known_optima(dim: int) -> dict[str, tuple[np.ndarray, float]]:
    """Closed-form minimizers and minima of the classic12 members that have one."""
    zero, ones = np.zeros(dim), np.ones(dim)
    zero_at_origin = ("sphere", "rastrigin", "ackley", "griewank", "zakharov", "bent_cigar", "discus", "step")
    optima = {name: (zero, 0.0) for name in zero_at_origin}
    optima["rosenbrock"] = (ones, 0.0)
    optima["levy"] = (ones, 0.0)
    return optima


BUILTIN_SUITES = ("classic12",)


def builtin_target_suite(name: str = "classic12", dim: int = 10) -> Suite:
    if name not in BUILTIN_SUITES:
        raise ValueError(f"unknown built-in suite {name!r}; available: {', '.join(BUILTIN_SUITES)}")
    if dim < 2:
        raise ValueError(f"classic12 needs dim >= 2, got {dim}")
    problems = []
    for label, src in classic12_sources(dim).items():
        box = (-500.0, 500.0) if label == "schwefel226" else (-5.0, 5.0)
        problems.append(Problem.from_source(label, src, dim, box))
    return Suite(name, tuple(problems), {"seed": None, "provenance": f"builtin:{name}", "dim": dim})


# ---------------------------------------------------------------------------
# Suite JSON
# ---------------------------------------------------------------------------


def problem_to_dict(p: Problem) -> dict[str, Any]:
    return {
        "label": p.label,
        "dim": p.dim,
        "bounds": [list(b) for b in p.bounds],
        "dsl_source": p.source,
        "scores": p.scores,
        "features": p.features,
        "lineage": p.lineage,
    }


def suite_to_dict(suite: Suite) -> dict[str, Any]:
    return {
        "name": suite.name,
        "metadata": suite.metadata,
        "entries": [problem_to_dict(p) for p in suite.problems],
    }


def dumps_suite(suite: Suite) -> str:
    return json.dumps(suite_to_dict(suite), indent=2, sort_keys=True, allow_nan=False) + "\n"


def save_suite(suite: Suite, path) -> None:
    """Write atomically (temp file, then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps_suite(suite))
    os.replace(tmp, path)


def _require(obj: dict, key: str, kind, path: str):
    if key not in obj:
        raise SchemaError(f"{path}.{key}", "missing required field")
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise SchemaError(f"{path}.{key}", f"expected {names}, got {type(value).__name__}")
    return value


def _optional_map(obj: dict, key: str, path: str):
    value = obj.get(key)
    if value is not None and not isinstance(value, dict):
        raise SchemaError(f"{path}.{key}", "expected an object or null")
    return value


def suite_from_dict(doc: Any) -> Suite:
    if not isinstance(doc, dict):
        raise SchemaError("$", "suite document must be an object")
    name = _require(doc, "name", str, "$")
    metadata = doc.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise SchemaError("$.metadata", "expected an object")
    entries = _require(doc, "entries", list, "$")
    if not entries:
        raise SchemaError("$.entries", "suite has no entries")
    problems, seen = [], set()
    for k, entry in enumerate(entries):
        path = f"$.entries[{k}]"
        if not isinstance(entry, dict):
            raise SchemaError(path, "expected an object")
        label = _require(entry, "label", str, path)
        if label in seen:
            raise SchemaError(f"{path}.label", f"duplicate label {label!r}")
        seen.add(label)
        dim = _require(entry, "dim", int, path)
        source = _require(entry, "dsl_source", str, path)
        bounds = _require(entry, "bounds", list, path)
        try:
            bounds = _normalize_bounds(bounds, dim)
        except ValueError as exc:
            raise SchemaError(f"{path}.bounds", str(exc)) from None
        try:
            problems.append(
                Problem(
                    label,
                    source,
                    bounds,
                    scores=_optional_map(entry, "scores", path),
                    features=_optional_map(entry, "features", path),
                    lineage=_optional_map(entry, "lineage", path),
                )
            )
        except (ParseError, ShapeError) as exc:
            raise SchemaError(f"{path}.dsl_source", str(exc)) from None
    return Suite(name, tuple(problems), metadata)


def load_suite(path) -> Suite:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return suite_from_dict(doc)


def resolve_suite(spec: str, dim: int = 10) -> Suite:
    """``builtin:<name>`` or a bare built-in name selects a built-in suite; anything else is a path."""
    name = spec.removeprefix("builtin:")
    if name in BUILTIN_SUITES and not Path(spec).exists():
        return builtin_target_suite(name, dim)
    return load_suite(spec)

