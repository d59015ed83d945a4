"""The seven landscape-construction styles used to diversify initialization.

Each style carries prompt knowledge, a fixed exemplar program, and a
template with seeded positive constants used by the mock generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exprlang import format_number, parse


@dataclass(frozen=True)
class Style:
    key: str
    title: str
    knowledge: str
    exemplar: str
    template: str
    ranges: dict[str, tuple[float, float]]

    def instantiate(self, rng: np.random.Generator) -> str:
        """Template with constants drawn uniformly from ``ranges``, in canonical form."""
        values = {name: format_number(rng.uniform(lo, hi)) for name, (lo, hi) in self.ranges.items()}
        return parse(self.template.format(**values)).canonical_source


STYLES: tuple[Style, ...] = (
    Style(
        "asymmetric_masking",
        "Asymmetric Masking",
        "Split the box with a boolean guard such as `x <= b` inside `where(...)` and apply a different "
        "formula on each side. The two regions should differ in curvature or slope so that the landscape "
        "loses its global symmetry and shows a sharp regional shift or a discontinuity at the guard. "
        "Rotation-invariant search strategies tend to misjudge such regions.",
        "sum(where(x <= 0.5, x^2, 3 * abs(x - 0.5) + 0.25))",
        "sum(where(x <= {b}, {a} * (x - {b})^2, {c} * abs(x - {b}) + {k}))",
        {"a": (0.5, 3.0), "b": (0.0, 2.0), "c": (0.5, 4.0), "k": (0.0, 1.0)},
    ),
    Style(
        "nested_activation",
        "Nested Activation",
        "Pass coordinates through a short chain of saturating activations (tanh, abs) and close the chain "
        "with a rational map such as `1 / (abs(tanh(x)) + 1)`. This carves steep but bounded basins and "
        "narrow valleys while every intermediate value stays in a safe numeric range.",
        "sum(x^2 / 10 - 1 / (abs(tanh(2 * x)) + 1))",
        "sum({b} * x^2 - {c} / (abs(tanh({a} * x)) + 1))",
        {"a": (0.5, 4.0), "b": (0.05, 1.0), "c": (0.5, 3.0)},
    ),
    Style(
        "warped_periodicity",
        "Polynomially Warped Periodicity",
        "Feed a polynomial of the coordinates into a periodic function, for example `sin(x^2 + 0.3 * x^3)` "
        "or `sin(2 * pi * x^3)`. The local frequency then changes across the box (a chirp), which defeats "
        "step-size rules tuned to a single oscillation scale.",
        "sum(sin(2 * pi * x^3))",
        "sum(sin({a} * x^2 + {b} * x^3) + {c} * x^2)",
        {"a": (0.5, 2.0), "b": (0.1, 0.6), "c": (0.01, 0.3)},
    ),
    Style(
        "chained_perturbation",
        "Chained Multi-stage Perturbation",
        "Compose unlike operators in sequence, e.g. an exponential decay fed into a logarithm and then into "
        "an oscillation, so that no single operator sets the global trend. The result mixes features of "
        "several classic function families.",
        "sum(sin(3 * log(1 + exp(-x^2)) + x) + abs(x) / 2)",
        "sum(sin({a} * log(1 + exp(-{b} * x^2)) + {c} * x) + {k} * abs(x))",
        {"a": (1.0, 5.0), "b": (0.2, 2.0), "c": (0.2, 1.5), "k": (0.1, 1.0)},
    ),
    Style(
        "recursive_feedback",
        "Recursive Symbolic Feedback",
        "Bind an intermediate quantity with `let` and reuse it several times later in the expression, as in "
        "`let z = 2 * x; sum(sin(z) + z * cos(z))`. Re-entering the same quantity builds deep dependencies in "
        "which small input changes create many high-frequency local optima.",
        "let z = 2 * x + 1; sum(sin(z) + z * cos(z)) + sum(x^2) / 10",
        "let z = {a} * x + {b}; sum(sin(z) + z * cos(z)) + {c} * sum(x^2)",
        {"a": (0.5, 3.0), "b": (0.0, 2.0), "c": (0.02, 0.5)},
    ),
    Style(
        "operator_switching",
        "Nonlinear Operator Switching",
        "Let a symbolic trigger such as the sign or magnitude of a coordinate choose which operator is "
        "applied, e.g. `where(abs(x) > 1, x^2, 1 - cos(3 * x))`. The topology switches between regimes "
        "while the overall surface stays continuous or nearly so.",
        "sum(where(abs(x) > 1, x^2, 2 * (1 - cos(3 * x))))",
        "sum(where(abs(x) > {b}, {a} * x^2, {c} * (1 - cos({k} * x))))",
        {"a": (0.5, 2.0), "b": (0.5, 2.5), "c": (0.5, 3.0), "k": (1.0, 6.0)},
    ),
    Style(
        "cross_dimensional",
        "Cross-Dimensional Operator Interaction",
        "Couple coordinates: products of shifted copies (`x[:-1] * x[1:]`), differences with `roll(x, 1)`, or "
        "a reduction over all coordinates that is broadcast back into a per-coordinate term. Such coupling "
        "breaks separability, so coordinate-wise search no longer suffices.",
        "sum((x - roll(x, 1))^2) + sum(x[:-1] * x[1:]) / 2 + sum(x^2) / 4",
        "{a} * sum((x - roll(x, 1))^2) + {b} * sum(x[:-1] * x[1:]) + {c} * sum(x^2)",
        {"a": (0.2, 2.0), "b": (0.1, 1.0), "c": (0.1, 1.0)},
    ),
)

STYLE_KEYS = tuple(s.key for s in STYLES)
_BY_KEY = {s.key: s for s in STYLES}


def get_style(key: str) -> Style:
    try:
        return _BY_KEY[key]
    except KeyError:
        raise ValueError(f"unknown landscape style {key!r}; choose from {', '.join(STYLE_KEYS)}") from None
