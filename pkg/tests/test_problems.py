import json
import math

import numpy as np
import pytest

from benchforge.exprlang import validate
from benchforge.problems import (
    Problem,
    SchemaError,
    Suite,
    builtin_target_suite,
    classic12_sources,
    dumps_suite,
    known_optima,
    load_suite,
    resolve_suite,
    save_suite,
    suite_from_dict,
    suite_to_dict,
)


def test_classic12_members_and_boxes():
    suite = builtin_target_suite("classic12", 10)
    assert len(suite) == 12
    assert suite.labels == list(classic12_sources(10))
    for p in suite:
        want = (-500.0, 500.0) if p.label == "schwefel226" else (-5.0, 5.0)
        assert p.dim == 10 and set(p.bounds) == {want}


@pytest.mark.parametrize("dim", [2, 10])
def test_builtin_members_validate(dim):
    for p in builtin_target_suite("classic12", dim):
        assert validate(p.program, dim, p.bounds).valid, p.label


@pytest.mark.parametrize("dim", [2, 5, 10])
def test_known_optima(dim):
    suite = builtin_target_suite("classic12", dim)
    optima = known_optima(dim)
    assert len(optima) == 10
    for label, (x_star, f_star) in optima.items():
        assert suite[label].evaluate(x_star[None, :])[0] == pytest.approx(f_star, abs=1e-9), label


def test_schwefel_and_weierstrass_near_zero_at_their_optima():
    suite = builtin_target_suite("classic12", 10)
    assert abs(suite["schwefel226"].evaluate(np.full((1, 10), 420.9687462275036))[0]) < 1e-3
    assert abs(suite["weierstrass"].evaluate(np.zeros((1, 10)))[0]) < 1e-9


def _rastrigin(x):
    return 10 * len(x) + sum(v * v - 10 * math.cos(2 * math.pi * v) for v in x)


def _rosenbrock(x):
    return sum(100 * (x[i + 1] - x[i] ** 2) ** 2 + (1 - x[i]) ** 2 for i in range(len(x) - 1))


def _ackley(x):
    d = len(x)
    a = -20 * math.exp(-0.2 * math.sqrt(sum(v * v for v in x) / d))
    return a - math.exp(sum(math.cos(2 * math.pi * v) for v in x) / d) + 20 + math.e


def _griewank(x):
    return sum(v * v for v in x) / 4000 - math.prod(math.cos(v / math.sqrt(i + 1)) for i, v in enumerate(x)) + 1


def _levy(x):
    w = [1 + (v - 1) / 4 for v in x]
    body = sum((wi - 1) ** 2 * (1 + 10 * math.sin(math.pi * wi + 1) ** 2) for wi in w[:-1])
    return math.sin(math.pi * w[0]) ** 2 + body + (w[-1] - 1) ** 2 * (1 + math.sin(2 * math.pi * w[-1]) ** 2)


def _zakharov(x):
    s = sum(0.5 * (i + 1) * v for i, v in enumerate(x))
    return sum(v * v for v in x) + s**2 + s**4


def _schwefel(x):
    return 418.9828872724338 * len(x) - sum(v * math.sin(math.sqrt(abs(v))) for v in x)


def _weierstrass(x):
    a, b, k = 0.5, 3, range(12)
    body = sum(sum(a**j * math.cos(2 * math.pi * b**j * (v + 0.5)) for j in k) for v in x)
    return body - len(x) * sum(a**j * math.cos(math.pi * b**j) for j in k)


TEXTBOOK = {
    "sphere": lambda x: sum(v * v for v in x),
    "rastrigin": _rastrigin,
    "rosenbrock": _rosenbrock,
    "ackley": _ackley,
    "griewank": _griewank,
    "schwefel226": _schwefel,
    "levy": _levy,
    "zakharov": _zakharov,
    "bent_cigar": lambda x: x[0] ** 2 + 1e6 * sum(v * v for v in x[1:]),
    "discus": lambda x: 1e6 * x[0] ** 2 + sum(v * v for v in x[1:]),
    "weierstrass": _weierstrass,
    "step": lambda x: sum(math.floor(v + 0.5) ** 2 for v in x),
}


@pytest.mark.parametrize("label", list(TEXTBOOK))
def test_dsl_matches_textbook_formula(label):
    p = builtin_target_suite("classic12", 6)[label]
    rng = np.random.default_rng(11)
    X = p.from_unit(rng.random((5, 6)))
    got = p.evaluate(X)
    want = [TEXTBOOK[label](list(row)) for row in X]
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-8)


def test_unknown_builtin_and_small_dim():
    with pytest.raises(ValueError):
        builtin_target_suite("bbob24", 10)
    with pytest.raises(ValueError):
        builtin_target_suite("classic12", 1)


def test_problem_normalizes_source_and_bounds():
    p = Problem.from_source("p", "sum( x ^ 2 )", 3, (-1, 2))
    assert p.source == "sum(x^2)"
    assert p.bounds == ((-1.0, 2.0),) * 3
    np.testing.assert_allclose(p.from_unit(p.to_unit([[0.5, -1, 2]])), [[0.5, -1, 2]])
    with pytest.raises(ValueError):
        Problem.from_source("p", "sum(x)", 2, (1, 1))


def test_suite_rejects_duplicates_and_empty():
    p = Problem.from_source("a", "sum(x)", 2)
    with pytest.raises(ValueError):
        Suite("s", (p, p))
    with pytest.raises(ValueError):
        Suite("s", ())


def test_save_load_round_trip(tmp_path):
    suite = builtin_target_suite("classic12", 4)
    labelled = Suite(
        "x",
        (Problem.from_source("a", "sum(x^2)", 4, scores={"lsi": 0.5, "adc": 0.1}, lineage={"parents": ["b"]}),)
        + suite.problems,
        {"seed": 3},
    )
    path = tmp_path / "s.json"
    save_suite(labelled, path)
    loaded = load_suite(path)
    assert loaded == labelled
    assert dumps_suite(loaded) == path.read_text()
    assert not (tmp_path / "s.json.tmp").exists()


def _doc():
    return suite_to_dict(Suite("s", (Problem.from_source("a", "sum(x)", 2), Problem.from_source("b", "sum(x^2)", 2))))


def test_duplicate_label_is_schema_violation():
    doc = _doc()
    doc["entries"][1]["label"] = "a"
    with pytest.raises(SchemaError) as info:
        suite_from_dict(doc)
    assert info.value.path == "$.entries[1].label"


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda d: d["entries"][0].pop("dsl_source"), "$.entries[0].dsl_source"),
        (lambda d: d["entries"][1].update(dsl_source="sum(y)"), "$.entries[1].dsl_source"),
        (lambda d: d["entries"][0].update(dim="2"), "$.entries[0].dim"),
        (lambda d: d["entries"][0].update(bounds=[[0, 1]]), "$.entries[0].bounds"),
        (lambda d: d["entries"][0].update(dsl_source="x"), "$.entries[0].dsl_source"),
        (lambda d: d.update(entries=[]), "$.entries"),
        (lambda d: d.pop("name"), "$.name"),
    ],
)
def test_schema_errors_carry_field_path(mutate, path):
    doc = _doc()
    mutate(doc)
    with pytest.raises(SchemaError) as info:
        suite_from_dict(doc)
    assert info.value.path == path


def test_load_rejects_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        load_suite(path)


def test_resolve_suite(tmp_path):
    assert resolve_suite("builtin:classic12", 3).name == "classic12"
    assert len(resolve_suite("classic12", 3)) == 12
    path = tmp_path / "s.json"
    path.write_text(json.dumps(_doc()))
    assert resolve_suite(str(path)).labels == ["a", "b"]
