import itertools
import json
from dataclasses import replace

import numpy as np
import pytest

from conftest import FAST_POOL
from benchforge.config import RunConfig
from benchforge.evolution import (
    Candidate,
    Engine,
    EvolutionState,
    GenerationAborted,
    ResumeError,
    checkpoint_path,
    hypervolume,
    latest_checkpoint,
    load_checkpoint,
    non_dominated,
    prune,
    read_runlog,
    reference_vectors,
    run,
    update_archive,
)
from benchforge.generator import GeneratorError, MockGenerator
from benchforge.generator.mock import mock_reflection
from benchforge.objectives import IdealPoint, Scores, dominates
from benchforge.problems import load_suite

SMALL = RunConfig(
    n_refs=6, generations=5, dim=2, runs=2, budget=200, feature_n=40, n_probe=16, pool=FAST_POOL, master_seed=3
)


def cand(cid, lsi, adc, slot=0, source=None, valid=True):
    scores = Scores(valid, lsi, adc) if valid else Scores.invalid("constant-output")
    return Candidate(cid, source or f"src:{cid}", scores, slot, 0)


# -- reference vectors ------------------------------------------------------


def test_reference_vectors_three():
    refs = reference_vectors(3)
    assert [r.weights for r in refs] == [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]


@pytest.mark.parametrize("n", [2, 5, 32])
def test_reference_vector_invariants(n):
    refs = reference_vectors(n)
    assert refs[0].weights == (0.0, 1.0) and refs[-1].weights == (1.0, 0.0)
    for r in refs:
        assert sum(r.weights) == pytest.approx(1.0)
        assert r.index in r.neighbors and len(r.neighbors) == min(5, n) == len(set(r.neighbors))


def test_neighborhood_ties_go_to_lower_index():
    refs = reference_vectors(32)
    assert refs[0].neighbors == (0, 1, 2, 3, 4)
    assert refs[10].neighbors == (10, 9, 11, 8, 12)
    assert refs[31].neighbors == (31, 30, 29, 28, 27)
    # with an even neighborhood the extra member is the lower-index side
    assert reference_vectors(9, 4)[4].neighbors == (4, 3, 5, 2)
    with pytest.raises(ValueError):
        reference_vectors(1)


# -- archive ----------------------------------------------------------------


def test_update_archive_examples():
    a, b = cand("g0-0", 0.6, 0.3), cand("g0-1", 0.3, 0.6)
    archive = update_archive([], [a, b])
    assert archive == [a, b]
    assert update_archive(archive, [cand("g1-0", 0.2, 0.2)]) == archive
    top = cand("g1-1", 0.9, 0.9)
    assert update_archive(archive, [top]) == [top]
    assert update_archive(archive, [cand("g1-2", 0.99, 0.99, valid=False)]) == archive


def test_update_archive_keeps_earlier_duplicate():
    a = cand("g0-0", 0.5, 0.5, source="sum(x^2)")
    again = cand("g3-4", 0.5, 0.5, source="sum(x^2)")
    assert update_archive([a], [again]) == [a]


def _hv_by_cells(points):
    """Exact dominated area by summing covered cells of the coordinate grid."""
    xs = sorted({0.0} | {p[0] for p in points})
    ys = sorted({0.0} | {p[1] for p in points})
    area = 0.0
    for (x0, x1), (y0, y1) in itertools.product(zip(xs, xs[1:]), zip(ys, ys[1:])):
        if any(px >= x1 and py >= y1 for px, py in points):
            area += (x1 - x0) * (y1 - y0)
    return area


def test_hypervolume_examples_and_oracle():
    assert hypervolume([]) == 0.0
    assert hypervolume([(0.5, 0.5)]) == 0.25
    assert hypervolume([(1, 0.1), (0.5, 0.5), (0.1, 1)]) == pytest.approx(0.1 + 0.2 + 0.05)
    rng = np.random.default_rng(4)
    for _ in range(200):
        pts = [tuple(p) for p in rng.random((rng.integers(1, 9), 2))]
        assert hypervolume(pts) == pytest.approx(_hv_by_cells(pts), abs=1e-12)


def test_prune_drops_smallest_exclusive_contribution():
    a, b, c = cand("a-0", 1, 0.1), cand("b-1", 0.5, 0.5), cand("c-2", 0.1, 1)
    # exclusive areas: a 0.05, b 0.16, c 0.05; the tie drops the later entry
    assert prune([a, b, c], 2) == [a, b]
    assert prune([a, b, c], 1) == [b]
    assert prune([a, b, c], 5) == [a, b, c]


# -- selection --------------------------------------------------------------


@pytest.fixture(scope="module")
def engine():
    return Engine(SMALL, MockGenerator(SMALL.n_probe))


def _state(points):
    pop = [cand(f"g0-{i}", lsi, adc, slot=i) for i, (lsi, adc) in enumerate(points)]
    ideal = IdealPoint()
    for c in pop:
        ideal.update(c.scores)
    return EvolutionState(pop, update_archive([], pop), ideal, 0, SMALL.config_hash())


def test_dominating_offspring_hits_slot_and_exactly_two_neighbors(engine):
    state = _state([(0.1 * k, 0.1) for k in range(6)])
    child = cand("g1-2", 0.9, 0.9, slot=2)
    state.ideal.update(child.scores)
    writes = engine.select(2, child, state, np.random.default_rng(0))
    assert writes[0] == 2 and len(writes) == 3
    assert set(writes[1:]) <= set(engine.refs[2].neighbors) - {2}
    assert sum(c is child for c in state.population) == 3


def test_invalid_offspring_replaces_nothing(engine):
    state = _state([(0.0, 0.0)] * 6)
    before = list(state.population)
    child = cand("g1-0", 0, 0, valid=False)
    assert engine.select(0, child, state, np.random.default_rng(0)) == []
    assert state.population == before


def test_equal_pbi_keeps_incumbent(engine):
    state = _state([(0.3, 0.3)] * 6)
    incumbent = state.population[1]
    twin = cand("g1-1", 0.3, 0.3, slot=1, source="sum(x) * 1")
    assert engine.select(1, twin, state, np.random.default_rng(0)) == []
    assert state.population[1] is incumbent


def test_zero_cap_writes_only_own_slot():
    engine = Engine(replace(SMALL, replacement_cap=0), MockGenerator(SMALL.n_probe))
    state = _state([(0.0, 0.0)] * 6)
    child = cand("g1-3", 1, 1, slot=3)
    state.ideal.update(child.scores)
    assert engine.select(3, child, state, np.random.default_rng(0)) == [3]


# -- whole generations ------------------------------------------------------


class EchoGenerator(MockGenerator):
    """Reproduction returns the winning parent unchanged."""

    def reproduce(self, reflection, parent_a, parent_b, lam, dim, bounds, seed):
        return parent_a.source

    def reflect(self, a, b, seed):
        return mock_reflection(a, b)


def test_echo_generator_introduces_no_new_programs():
    engine = Engine(SMALL, EchoGenerator(SMALL.n_probe))
    state = engine.initialize()
    archive = [c.id for c in state.archive]
    known = {c.source: c.point for c in state.population}
    ideal = state.ideal.as_tuple()
    for _ in range(2):
        before = [engine.pbi(c, i, state.ideal) for i, c in enumerate(state.population)]
        state, _ = engine.step(state)
        after = [engine.pbi(c, i, state.ideal) for i, c in enumerate(state.population)]
        assert all(b >= a for a, b in zip(before, after))
        assert all(known[c.source] == c.point for c in state.population)
        assert [c.id for c in state.archive] == archive
        assert state.ideal.as_tuple() == ideal


@pytest.fixture(scope="module")
def recorded_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    result = run(SMALL, MockGenerator(SMALL.n_probe), out)
    return out, result


def test_run_completes_and_exports(recorded_run):
    out, result = recorded_run
    assert result.completed and result.state.t == 5
    suite = load_suite(out / "suite.json")
    assert len(suite) == len(result.state.archive) >= 1
    assert suite.metadata["created"] == "generation 5"
    assert latest_checkpoint(out) == 5
    assert len(read_runlog(out)) == 6


def test_archive_invariants_over_the_run(recorded_run):
    out, _ = recorded_run
    records = read_runlog(out)
    hv = [r["hypervolume"] for r in records]
    assert all(b >= a - 1e-15 for a, b in zip(hv, hv[1:]))
    for r in records:
        pts = [(a["lsi"], a["adc"]) for a in r["archive"]]
        assert not any(dominates(p, q) for p in pts for q in pts)
        for child, slots in r["writes"].items():
            assert len(slots) <= 1 + SMALL.replacement_cap
    for prev, cur in zip(records, records[1:]):
        cur_pts = [(a["lsi"], a["adc"]) for a in cur["archive"]]
        for a in prev["archive"]:
            p = (a["lsi"], a["adc"])
            assert p in cur_pts or any(dominates(q, p) for q in cur_pts)


def test_archive_equals_brute_force_filter_over_run_log(recorded_run):
    out, result = recorded_run
    first_seen = {}
    for r in read_runlog(out):
        for e in r["evaluated"]:
            if e["valid"] and e["source"] not in first_seen:
                first_seen[e["source"]] = e
    everything = list(first_seen.values())
    front = non_dominated(everything, point=lambda e: (e["lsi"], e["adc"]))
    assert sorted(e["id"] for e in front) == sorted(c.id for c in result.state.archive)


def test_slot_pbi_never_drops_at_commit(recorded_run):
    out, _ = recorded_run
    # Under one generation's ideal point, the slot stays or improves.
    engine = Engine(SMALL, MockGenerator(SMALL.n_probe))
    state = load_checkpoint(out, 2)
    before = list(state.population)
    state, _ = engine.step(state)
    for i, (old, new) in enumerate(zip(before, state.population)):
        assert engine.pbi(new, i, state.ideal) >= engine.pbi(old, i, state.ideal)


def test_run_is_deterministic_and_resumable(recorded_run, tmp_path):
    out, _ = recorded_run
    partial = run(SMALL, MockGenerator(SMALL.n_probe), tmp_path, stop_after=2)
    assert not partial.completed and latest_checkpoint(tmp_path) == 2
    resumed = run(SMALL, MockGenerator(SMALL.n_probe), tmp_path, resume=True)
    assert resumed.completed
    assert (tmp_path / "suite.json").read_bytes() == (out / "suite.json").read_bytes()
    assert [r["generation"] for r in read_runlog(tmp_path)] == list(range(6))


def test_resume_rejects_other_config(recorded_run, tmp_path):
    out, _ = recorded_run
    (tmp_path / "checkpoints").mkdir()
    checkpoint_path(tmp_path, 1).write_text(checkpoint_path(out, 1).read_text())
    other = replace(SMALL, theta=2.0)
    with pytest.raises(ResumeError):
        run(other, MockGenerator(SMALL.n_probe), tmp_path, resume=True)


class FlakyGenerator(MockGenerator):
    def reflect(self, a, b, seed):
        raise GeneratorError("service unavailable")


def test_generator_outage_aborts_with_checkpoint(tmp_path):
    with pytest.raises(GenerationAborted):
        run(SMALL, FlakyGenerator(SMALL.n_probe), tmp_path)
    assert latest_checkpoint(tmp_path) == 0
    state = json.loads(checkpoint_path(tmp_path, 0).read_text())
    assert state["t"] == 0 and len(state["population"]) == 6


def test_initialization_falls_back_to_templates():
    class Broken(MockGenerator):
        def init_program(self, ctx, seed):
            return "1/0"

    state = Engine(SMALL, Broken(SMALL.n_probe)).initialize()
    assert len(state.population) == 6
    for c in state.population:
        assert c.valid and c.lineage["fallback"]
