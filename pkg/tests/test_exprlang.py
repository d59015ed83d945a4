import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astgen import TreeGen, corpus
from benchforge.exprlang import (
    Binary,
    Compare,
    Const,
    Coord,
    Named,
    ParseError,
    Reduce,
    ShapeError,
    Unary,
    Where,
    evaluate,
    parse,
    print_canonical,
    probe_points,
    shape_of,
    to_source,
    validate,
)
from benchforge.generator.styles import STYLES


def test_sphere_tree():
    assert parse("sum(x^2)").root == Reduce("sum", Binary("^", Coord(), Const(2.0)))


def test_where_has_comparison_guard():
    root = parse("where(x < 0, -x, x^2)").root
    assert isinstance(root, Where)
    assert root.cond == Compare("<", Coord(), Const(0.0))
    assert root.then == Unary("neg", Coord())


def test_warped_periodicity_tree():
    root = parse("sin(2*pi*x^3)").root
    assert root == Unary("sin", Binary("*", Binary("*", Const(2.0), Named("pi")), Binary("^", Coord(), Const(3.0))))


@pytest.mark.parametrize(
    "source, tree",
    [
        ("-x^2", Unary("neg", Binary("^", Coord(), Const(2.0)))),
        ("2^3^2", Binary("^", Const(2.0), Binary("^", Const(3.0), Const(2.0)))),
        ("1 - 2 - 3", Binary("-", Binary("-", Const(1.0), Const(2.0)), Const(3.0))),
        ("1 + 2 * 3", Binary("+", Const(1.0), Binary("*", Const(2.0), Const(3.0)))),
        ("2 * -3", Binary("*", Const(2.0), Unary("neg", Const(3.0)))),
        ("2^-1", Binary("^", Const(2.0), Unary("neg", Const(1.0)))),
    ],
)
def test_precedence(source, tree):
    assert parse(source).root == tree


def test_whitespace_insensitive():
    assert parse("sum( x ^ 2 )").canonical_source == "sum(x^2)"
    assert parse(" sum(\n\tx^2)").root == parse("sum(x^2)").root


def test_unknown_identifier_reports_offset_and_candidates():
    with pytest.raises(ParseError) as info:
        parse("sum(y)")
    assert info.value.offset == 4
    assert "x" in info.value.expected


def test_missing_paren_reports_expected_token():
    with pytest.raises(ParseError) as info:
        parse("sum(x^2")
    assert info.value.offset == 7
    assert ")" in info.value.expected


@pytest.mark.parametrize("source", ["", "sum(x", "x +", "let x = 1; x", "roll(x, 1.5)", "sum(x) $ 2", "where(x, 1, 2)"])
def test_syntax_errors(source):
    with pytest.raises(ParseError):
        parse(source)


def test_let_scope_ends_with_its_body():
    parse("let s = sum(x); s^2")
    with pytest.raises(ParseError):
        parse("(let s = sum(x); s) + s")


@pytest.mark.parametrize(
    "source", ["x^2", "x[5]", "x[-6]", "sum(x[1:]) + x[:-1]", "sum(x[3:3])", "sum(sum(x))", "roll(sum(x), 1)"]
)
def test_shape_errors_at_dim_5(source):
    with pytest.raises(ShapeError):
        parse(source, 5)


def test_shapes():
    assert shape_of(parse("x[1:]").root, 5) == 4
    assert shape_of(parse("x[-2:]").root, 5) == 2
    assert shape_of(parse("x * 2").root, 3) == 3
    assert shape_of(parse("sum(x[:-1] * x[1:])").root, 3) == 0


@pytest.mark.parametrize(
    "source, point, expected",
    [
        ("sum(x^2)", [0.0] * 10, 0.0),
        ("sum(x^2)", [1.0, 2.0], 5.0),
        ("sum(where(x <= 0, x, 2 * x))", [-1.0, 3.0], 5.0),
        ("x[-1] - x[0]", [1.0, 2.0, 7.0], 6.0),
        ("sum(roll(x, 1) * x)", [1.0, 2.0, 3.0], 2.0 + 6.0 + 3.0),
        ("let s = sum(x); s^2 + s", [1.0, 2.0], 12.0),
        ("max2(x[0], x[1]) - min2(x[0], x[1])", [4.0, -1.0], 5.0),
        ("prod(x) + mean(x) + max(x) + min(x)", [1.0, 2.0, 3.0], 6.0 + 2.0 + 3.0 + 1.0),
    ],
)
def test_evaluate_examples(source, point, expected):
    assert evaluate(parse(source), np.array([point]))[0] == pytest.approx(expected, abs=1e-12)


def _reference(source: str, x: list[float]) -> float:
    """Plain-python reading of a few masking programs, one sample at a time."""
    if source == "sum(where(x <= 0, x, 2 * x))":
        return sum(v if v <= 0 else 2 * v for v in x)
    if source == "sum(where(abs(x) > 1, x^2, 1 - cos(3 * x)))":
        return sum(v * v if abs(v) > 1 else 1 - math.cos(3 * v) for v in x)
    raise KeyError(source)


@pytest.mark.parametrize("source", ["sum(where(x <= 0, x, 2 * x))", "sum(where(abs(x) > 1, x^2, 1 - cos(3 * x)))"])
def test_masking_matches_scalar_interpreter(source):
    X = np.random.default_rng(5).uniform(-3, 3, (50, 4))
    got = evaluate(parse(source), X)
    want = [_reference(source, list(row)) for row in X]
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


class TestTotalSemantics:
    def one(self, source, point=(0.0,)):
        return evaluate(parse(source), np.array([point]))[0]

    def test_log_is_clamped(self):
        assert self.one("log(x[0])", (-3.0,)) == pytest.approx(math.log(1e-12))
        assert self.one("log(x[0])", (0.0,)) == pytest.approx(math.log(1e-12))

    def test_division_by_zero_uses_signed_epsilon(self):
        assert self.one("1 / x[0]", (0.0,)) == pytest.approx(1e12)
        assert self.one("1 / x[0]", (-1e-13,)) == pytest.approx(-1e12)
        assert self.one("1 / x[0]", (1e-13,)) == pytest.approx(1e12)

    def test_fractional_power_of_negative_keeps_sign(self):
        assert self.one("x[0]^0.5", (-4.0,)) == pytest.approx(-2.0)
        assert self.one("x[0]^2", (-3.0,)) == pytest.approx(9.0)
        assert self.one("x[0]^3", (-2.0,)) == pytest.approx(-8.0)

    def test_sqrt_keeps_sign(self):
        assert self.one("sqrt(x[0])", (-9.0,)) == pytest.approx(-3.0)

    def test_overflow_is_not_an_exception(self):
        assert self.one("exp(exp(x[0]))", (10.0,)) == math.inf


def test_validate_examples():
    assert validate("sum(x^2)", 10, (-5, 5), 64, 0).valid
    report = validate("1/0", 10, (-5, 5))
    assert not report.valid and report.reason == "constant-output"
    assert validate("sum(y)", 10, (-5, 5)).reason == "parse-error"
    assert validate("x^2", 10, (-5, 5)).reason == "shape-error"
    assert validate("exp(exp(sum(x)))", 10, (-5, 5)).reason == "non-finite"


def test_valid_report_carries_probe_statistics():
    report = validate("sum(x^2)", 3, (-1, 1), 32, 4)
    assert report.reason is None
    assert 0 <= report.probe_min < report.probe_mean < report.probe_max <= 3


def test_constancy_is_relative_to_magnitude():
    assert validate("1e12 + 1e-5 * sum(x)", 2, (-1, 1)).reason == "constant-output"
    assert validate("1 + 1e-5 * sum(x)", 2, (-1, 1)).valid


def test_probe_points_inside_bounds_and_seeded():
    a = probe_points(4, (-2, 3), 64, 9)
    assert a.shape == (64, 4) and a.min() >= -2 and a.max() <= 3
    np.testing.assert_array_equal(a, probe_points(4, (-2, 3), 64, 9))
    assert not np.array_equal(a, probe_points(4, (-2, 3), 64, 10))


def test_print_uses_17_significant_digits():
    assert parse("0.1 * sum(x)").canonical_source == "0.10000000000000001 * sum(x)"
    value = 1 / 3
    assert parse(print_canonical(parse(f"{value!r} * sum(x)"))).root.left.value == value


FUZZ = corpus(500)


def test_fuzz_corpus_round_trip():
    for tree in FUZZ:
        text = to_source(tree)
        program = parse(text, 4)
        assert program.root == tree
        assert program.canonical_source == text


def test_mock_corpus_round_trip():
    rng = np.random.default_rng(3)
    for k in range(100):
        source = STYLES[k % len(STYLES)].instantiate(rng)
        assert parse(print_canonical(parse(source))).root == parse(source).root


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), split=st.integers(1, 15))
def test_batch_independence(seed, split):
    tree = TreeGen(seed).program(4)
    X = np.random.default_rng(seed).uniform(-5, 5, (16, 4))
    whole = evaluate(tree, X)
    parts = np.concatenate([evaluate(tree, X[:split]), evaluate(tree, X[split:])])
    np.testing.assert_array_equal(whole, parts)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_determinism_and_permutation(seed):
    tree = TreeGen(seed).program(4)
    rng = np.random.default_rng(seed)
    X = rng.uniform(-5, 5, (12, 4))
    y = evaluate(tree, X)
    np.testing.assert_array_equal(y, evaluate(tree, X))
    perm = rng.permutation(12)
    np.testing.assert_array_equal(evaluate(tree, X[perm]), y[perm])


@pytest.mark.parametrize("style", STYLES, ids=lambda s: s.key)
def test_style_exemplars_validate(style):
    report = validate(style.exemplar, 10, (-5, 5))
    assert report.valid, report
    assert report.probe_max > report.probe_min
