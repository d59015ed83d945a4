"""Decomposition-based evolution of benchmark programs over (LSI, ADC).

One subproblem per reference vector; offspring come from a generator
(reflection, then reproduction) and survive by PBI under the subproblem's
weights. All randomness is derived from the master seed and the position
in the run, so checkpoints need no RNG state.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .config import RunConfig
from .exprlang import ParseError, parse
from .generator import Contender, GenerationContext, GeneratorError, STYLE_KEYS, get_style, winner_loser
from .generator.remote import AuthError
from .landscape import FeatureVector, auto_sigma, extract_features
from .objectives import EvalConfig, IdealPoint, Scores, dominates, evaluate_candidate, pbi_score
from .problems import Problem, Suite, resolve_suite, save_suite
from .solvers import derive_seed

log = logging.getLogger(__name__)

SUITE_FILE = "suite.json"
RUNLOG_FILE = "runlog.jsonl"
CHECKPOINT_DIR = "checkpoints"


class GenerationAborted(RuntimeError):
    """The generator failed mid-generation; the last checkpoint is intact."""


class ResumeError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Reference vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceVector:
    index: int
    weights: tuple[float, float]
    neighbors: tuple[int, ...]


def reference_vectors(n: int, neighborhood_size: int = 5) -> list[ReferenceVector]:
    """``lambda_i = (i/(n-1), (n-1-i)/(n-1))`` on (LSI, ADC), with Euclidean neighborhoods."""
    if n < 2:
        raise ValueError(f"need at least 2 reference vectors, got {n}")
    if neighborhood_size < 1:
        raise ValueError("neighborhood size must be positive")
    weights = [(i / (n - 1), (n - 1 - i) / (n - 1)) for i in range(n)]
    w = np.array(weights)
    # rounding makes mirror-image distances compare equal, so ties fall to the lower index
    dist = np.round(np.linalg.norm(w[:, None, :] - w[None, :, :], axis=2), 12)
    k = min(neighborhood_size, n)
    out = []
    for i in range(n):
        order = sorted(range(n), key=lambda j: (dist[i, j], j))
        out.append(ReferenceVector(i, weights[i], tuple(order[:k])))
    return out


# ---------------------------------------------------------------------------
# Candidates and state
# ---------------------------------------------------------------------------


def scores_to_dict(s: Scores) -> dict[str, Any]:
    return {
        "valid": s.valid,
        "lsi": s.lsi,
        "adc": s.adc,
        "reason": s.reason,
        "features": None if s.features is None else {**s.features.to_dict(), "_n": s.features.n, "_seed": s.features.seed},
    }


def scores_from_dict(doc: dict[str, Any]) -> Scores:
    feats = doc.get("features")
    fv = None
    if feats is not None:
        feats = dict(feats)
        fv = FeatureVector.from_dict(feats, feats.pop("_n", 0), feats.pop("_seed", 0))
    return Scores(doc["valid"], doc["lsi"], doc["adc"], doc.get("reason"), fv)


@dataclass
class Candidate:
    id: str
    source: str
    scores: Scores
    slot: int
    born: int
    lineage: dict[str, Any] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return self.scores.valid

    @property
    def point(self) -> tuple[float, float]:
        return self.scores.point

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "source": self.source,
            "scores": scores_to_dict(self.scores),
            "slot": self.slot,
            "born": self.born,
            "lineage": self.lineage,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Candidate":
        return cls(doc["id"], doc["source"], scores_from_dict(doc["scores"]), doc["slot"], doc["born"], doc["lineage"])


@dataclass
class EvolutionState:
    population: list[Candidate]
    archive: list[Candidate]
    ideal: IdealPoint
    t: int
    config_hash: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "config_hash": self.config_hash,
            "ideal": list(self.ideal.as_tuple()),
            "population": [c.to_dict() for c in self.population],
            "archive": [c.to_dict() for c in self.archive],
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "EvolutionState":
        return cls(
            [Candidate.from_dict(c) for c in doc["population"]],
            [Candidate.from_dict(c) for c in doc["archive"]],
            IdealPoint(*doc["ideal"]),
            doc["t"],
            doc["config_hash"],
        )


# ---------------------------------------------------------------------------
# Archive
# ---------------------------------------------------------------------------


def non_dominated(items: Sequence, point: Callable = lambda c: c.point) -> list:
    return [a for a in items if not any(dominates(point(b), point(a)) for b in items if b is not a)]


def update_archive(archive: Sequence[Candidate], batch: Sequence[Candidate]) -> list[Candidate]:
    """Non-dominated subset of ``archive + batch``; repeated sources keep the earliest entry."""
    seen: set[str] = set()
    pool = []
    for c in list(archive) + [c for c in batch if c.valid]:
        if c.source in seen:
            continue
        seen.add(c.source)
        pool.append(c)
    return non_dominated(pool)


def hypervolume(points: Sequence[tuple[float, float]], ref: tuple[float, float] = (0.0, 0.0)) -> float:
    """Area dominated by ``points`` (maximization) and bounded below by ``ref``."""
    pts = sorted(((x, y) for x, y in points if x > ref[0] and y > ref[1]), reverse=True)
    area, top = 0.0, ref[1]
    for x, y in pts:
        if y > top:
            area += (x - ref[0]) * (y - top)
            top = y
    return area


def prune(archive: Sequence[Candidate], size: int) -> list[Candidate]:
    """Greedily drop the entry with the smallest exclusive hypervolume until ``size`` remain.

    Ties drop the later entry.
    """
    kept = list(archive)
    while len(kept) > max(size, 0):
        total = hypervolume([c.point for c in kept])
        losses = [total - hypervolume([c.point for k, c in enumerate(kept) if k != j]) for j in range(len(kept))]
        worst = min(range(len(kept)), key=lambda j: (losses[j], -j))
        del kept[worst]
    return kept


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


def slot_style(master_seed: int, i: int) -> str:
    """Landscape style for initializing slot ``i``, uniform over the seven styles."""
    rng = np.random.default_rng(derive_seed(master_seed, "style", i))
    return STYLE_KEYS[rng.integers(len(STYLE_KEYS))]


@dataclass
class Engine:
    cfg: RunConfig
    generator: Any
    threads: int = 1
    targets: list[FeatureVector] = field(init=False)
    refs: list[ReferenceVector] = field(init=False)
    eval_cfg: EvalConfig = field(init=False)

    def __post_init__(self):
        cfg = self.cfg
        suite = target_suite(cfg)
        feature_seed = derive_seed(cfg.master_seed, "features")
        self.targets = [extract_features(p, cfg.feature_n, feature_seed) for p in suite]
        sigma = auto_sigma(self.targets) if cfg.sigma == "auto" else float(cfg.sigma)
        self.eval_cfg = EvalConfig(
            cfg.dim, cfg.bounds, cfg.runs, cfg.budget, cfg.feature_n, sigma, cfg.master_seed, cfg.n_probe
        )
        self.refs = reference_vectors(cfg.n_refs, cfg.neighborhood_size)

    # -- scoring ---------------------------------------------------------

    def evaluate(self, source: str) -> tuple[str, Scores]:
        try:
            source = parse(source).canonical_source
        except ParseError:
            pass
        return source, evaluate_candidate(source, self.targets, self.cfg.pool, self.eval_cfg)

    def pbi(self, c: Candidate, slot: int, ideal: IdealPoint) -> float:
        return pbi_score(c.scores, self.refs[slot].weights, ideal, self.cfg.theta)

    def _map(self, fn, items):
        if self.threads <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    # -- initialization --------------------------------------------------

    def _init_slot(self, i: int) -> Candidate:
        cfg = self.cfg
        style = slot_style(cfg.master_seed, i)
        ctx = GenerationContext(self.refs[i].weights, style, cfg.dim, cfg.bounds)
        for attempt in range(cfg.generator.init_attempts):
            try:
                text = self.generator.init_program(ctx, derive_seed(cfg.master_seed, "init", i, attempt))
            except AuthError:
                raise
            except GeneratorError as exc:
                log.warning("slot %d: init attempt %d failed: %s", i, attempt + 1, exc)
                continue
            source, scores = self.evaluate(text)
            if scores.valid:
                return Candidate(f"g0-{i}", source, scores, i, 0, {"style": style, "attempts": attempt + 1})
            log.info("slot %d: init attempt %d invalid (%s)", i, attempt + 1, scores.reason)
        template_rng = np.random.default_rng(derive_seed(cfg.master_seed, "fallback", i))
        source, scores = self.evaluate(get_style(style).instantiate(template_rng))
        lineage = {"style": style, "attempts": cfg.generator.init_attempts, "fallback": True}
        return Candidate(f"g0-{i}", source, scores, i, 0, lineage)

    def initialize(self) -> EvolutionState:
        population = self._map(self._init_slot, range(self.cfg.n_refs))
        ideal = IdealPoint()
        for c in population:
            ideal.update(c.scores)
        return EvolutionState(population, update_archive([], population), ideal, 0, self.cfg.config_hash())

    # -- one generation --------------------------------------------------

    def _contender(self, c: Candidate, slot: int, ideal: IdealPoint) -> Contender:
        return Contender(
            c.id, c.source, c.valid, c.scores.lsi, c.scores.adc, self.pbi(c, slot, ideal),
            self.refs[c.slot].weights, c.scores.reason,
        )

    def _offspring(self, state: EvolutionState, snapshot: list[Candidate], i: int) -> Candidate:
        cfg, t = self.cfg, state.t
        rng = np.random.default_rng(derive_seed(cfg.master_seed, "parents", t, i))
        pa, pb = rng.choice(self.refs[i].neighbors, size=2, replace=False)
        a = self._contender(snapshot[pa], i, state.ideal)
        b = self._contender(snapshot[pb], i, state.ideal)
        reflection = self.generator.reflect(a, b, derive_seed(cfg.master_seed, "reflect", t, i))
        winner, loser = winner_loser(a, b)
        text = self.generator.reproduce(
            reflection, winner, loser, self.refs[i].weights, cfg.dim, cfg.bounds,
            derive_seed(cfg.master_seed, "reproduce", t, i),
        )
        source, scores = self.evaluate(text)
        parent = snapshot[pa] if winner.id == a.id else snapshot[pb]
        lineage = {
            "parents": [a.id, b.id],
            "winner": winner.id,
            "case": reflection.case,
            "style": parent.lineage.get("style"),
        }
        return Candidate(f"g{t + 1}-{i}", source, scores, i, t + 1, lineage)

    def select(self, i: int, offspring: Candidate, state: EvolutionState, rng: np.random.Generator) -> list[int]:
        """Write ``offspring`` into slot ``i`` and up to ``replacement_cap`` neighbors it strictly beats."""
        pop, ideal = state.population, state.ideal
        writes = []
        if self.pbi(offspring, i, ideal) > self.pbi(pop[i], i, ideal):
            pop[i] = offspring
            writes.append(i)
        others = [j for j in self.refs[i].neighbors if j != i]
        replaced = 0
        for j in rng.permutation(others):
            if replaced >= self.cfg.replacement_cap:
                break
            j = int(j)
            if self.pbi(offspring, j, ideal) > self.pbi(pop[j], j, ideal):
                pop[j] = offspring
                writes.append(j)
                replaced += 1
        return writes

    def step(self, state: EvolutionState) -> tuple[EvolutionState, dict[str, Any]]:
        snapshot = list(state.population)
        try:
            batch = self._map(lambda i: self._offspring(state, snapshot, i), range(self.cfg.n_refs))
        except GeneratorError as exc:
            raise GenerationAborted(f"generation {state.t + 1} aborted: {exc}") from exc
        for c in batch:
            state.ideal.update(c.scores)
        writes = {}
        for i, child in enumerate(batch):
            rng = np.random.default_rng(derive_seed(self.cfg.master_seed, "neighbors", state.t, i))
            writes[child.id] = self.select(i, child, state, rng)
        state.archive = update_archive(state.archive, batch)
        state.t += 1
        return state, {"evaluated": batch, "writes": writes}


# ---------------------------------------------------------------------------
# Persistence and the full run
# ---------------------------------------------------------------------------


def target_suite(cfg: RunConfig) -> Suite:
    kind, ref = next(iter(cfg.target.items()))
    return resolve_suite(f"builtin:{ref}" if kind == "builtin" else ref, cfg.dim)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def checkpoint_path(output_dir, t: int) -> Path:
    return Path(output_dir) / CHECKPOINT_DIR / f"gen-{t}.json"


def write_checkpoint(output_dir, state: EvolutionState) -> Path:
    path = checkpoint_path(output_dir, state.t)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, json.dumps(state.to_dict(), sort_keys=True, allow_nan=False))
    return path


def latest_checkpoint(output_dir) -> int | None:
    folder = Path(output_dir) / CHECKPOINT_DIR
    ts = [int(p.stem.split("-")[1]) for p in folder.glob("gen-*.json")] if folder.is_dir() else []
    return max(ts) if ts else None


def load_checkpoint(output_dir, t: int) -> EvolutionState:
    return EvolutionState.from_dict(json.loads(checkpoint_path(output_dir, t).read_text()))


def _slot_record(engine: Engine, state: EvolutionState) -> list[dict[str, Any]]:
    out = []
    for i, c in enumerate(state.population):
        p = engine.pbi(c, i, state.ideal)
        out.append(
            {
                "slot": i,
                "id": c.id,
                "lsi": c.scores.lsi,
                "adc": c.scores.adc,
                "pbi": None if math.isinf(p) else p,
                "valid": c.valid,
                "style": c.lineage.get("style"),
            }
        )
    return out


def runlog_record(engine, state, evaluated, writes, seconds, telemetry) -> dict[str, Any]:
    return {
        "generation": state.t,
        "slots": _slot_record(engine, state),
        "evaluated": [
            {"id": c.id, "source": c.source, "lsi": c.scores.lsi, "adc": c.scores.adc, "valid": c.valid,
             "reason": c.scores.reason, "lineage": c.lineage}
            for c in evaluated
        ],
        "writes": writes,
        "archive": [{"id": c.id, "lsi": c.scores.lsi, "adc": c.scores.adc} for c in state.archive],
        "hypervolume": hypervolume([c.point for c in state.archive]),
        "ideal": list(state.ideal.as_tuple()),
        "timing": {"seconds": round(seconds, 3)},
        "telemetry": telemetry,
    }


def read_runlog(output_dir) -> list[dict[str, Any]]:
    path = Path(output_dir) / RUNLOG_FILE
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def _truncate_runlog(output_dir, t: int) -> None:
    path = Path(output_dir) / RUNLOG_FILE
    kept = [r for r in read_runlog(output_dir) if r["generation"] <= t]
    _atomic_write(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in kept))


def _append_runlog(output_dir, record: dict[str, Any]) -> None:
    with open(Path(output_dir) / RUNLOG_FILE, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def archive_suite(archive: Sequence[Candidate], cfg: RunConfig, t: int, name: str = "evolved") -> Suite:
    problems = []
    for c in archive:
        problems.append(
            Problem.from_source(
                c.id,
                c.source,
                cfg.dim,
                cfg.bounds,
                scores={"lsi": c.scores.lsi, "adc": c.scores.adc},
                features=None if c.scores.features is None else c.scores.features.to_dict(),
                lineage={**c.lineage, "born": c.born, "slot": c.slot},
            )
        )
    # "created" names the generation rather than a wall-clock time so outputs stay byte-reproducible
    metadata = {"seed": cfg.master_seed, "config_hash": cfg.config_hash(), "created": f"generation {t}"}
    return Suite(name, tuple(problems), metadata)


@dataclass
class RunResult:
    suite: Suite
    state: EvolutionState
    completed: bool


def run(
    cfg: RunConfig,
    generator,
    output_dir=None,
    resume: bool = False,
    threads: int = 1,
    on_generation: Callable[[dict[str, Any]], None] | None = None,
    stop_after: int | None = None,
) -> RunResult:
    """Initialize, evolve ``cfg.generations`` generations and export the archive.

    With ``resume`` the run continues from the newest checkpoint in
    ``output_dir``. ``stop_after`` ends the run early after that generation's
    checkpoint, which is how interruptions are simulated.
    """
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    engine = Engine(cfg, generator, threads)

    def finish_generation(state, evaluated, writes, started):
        telemetry = generator.drain_telemetry() if hasattr(generator, "drain_telemetry") else []
        record = runlog_record(engine, state, evaluated, writes, time.monotonic() - started, telemetry)
        _append_runlog(out, record)
        write_checkpoint(out, state)
        if on_generation:
            on_generation(record)

    last = latest_checkpoint(out) if resume else None
    if last is not None:
        state = load_checkpoint(out, last)
        if state.config_hash != cfg.config_hash():
            raise ResumeError(f"checkpoint gen-{last} belongs to config {state.config_hash}, not {cfg.config_hash()}")
        _truncate_runlog(out, last)
        log.info("resuming from generation %d", last)
    else:
        (out / RUNLOG_FILE).write_text("")
        started = time.monotonic()
        state = engine.initialize()
        finish_generation(state, state.population, {}, started)

    while state.t < cfg.generations:
        if stop_after is not None and state.t >= stop_after:
            return RunResult(archive_suite(state.archive, cfg, state.t), state, False)
        started = time.monotonic()
        state, info = engine.step(state)
        finish_generation(state, info["evaluated"], info["writes"], started)

    suite = archive_suite(state.archive, cfg, state.t)
    save_suite(suite, out / SUITE_FILE)
    return RunResult(suite, state, True)
