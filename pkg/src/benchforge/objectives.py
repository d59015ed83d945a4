"""Candidate scoring: ADC, LSI, PBI scalarization and Pareto dominance."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exprlang import ParseError, Program, ShapeError, parse, validate
from .landscape import FeatureVector, extract_features, lsi
from .problems import Problem
from .solvers import SolverSpec, derive_seed, run_solver

INVALID_PBI = -math.inf


@dataclass(frozen=True)
class ObjMatrix:
    """Final best-so-far values: one row per run, one column per algorithm."""

    values: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        labels = tuple(self.labels)
        if values.ndim != 2 or values.shape[1] != len(labels):
            raise ValueError(f"matrix shape {values.shape} does not match {len(labels)} labels")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.labels)
        for row in self.values:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "ObjMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        return cls(np.array([[float(v) for v in row] for row in rows[1:]]), tuple(rows[0]))


def minmax(values: np.ndarray) -> np.ndarray:
    """Joint min-max normalization to [0, 1]; an all-equal array maps to zeros."""
    values = np.asarray(values, dtype=float)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def adc(obj: ObjMatrix | np.ndarray) -> float:
    """Std (population) across algorithms of per-algorithm mean normalized results; in [0, 0.5]."""
    values = obj.values if isinstance(obj, ObjMatrix) else np.asarray(obj, dtype=float)
    return float(np.std(minmax(values).mean(axis=0)))


@dataclass
class IdealPoint:
    lsi: float = 0.0
    adc: float = 0.0

    def update(self, scores: "Scores") -> None:
        if scores.valid:
            self.lsi = max(self.lsi, scores.lsi)
            self.adc = max(self.adc, scores.adc)

    def as_tuple(self) -> tuple[float, float]:
        return (self.lsi, self.adc)


@dataclass(frozen=True)
class Scores:
    valid: bool
    lsi: float = 0.0
    adc: float = 0.0
    reason: str | None = None
    features: FeatureVector | None = None
    obj: ObjMatrix | None = field(default=None, compare=False, repr=False)

    @property
    def point(self) -> tuple[float, float]:
        return (self.lsi, self.adc)

    @classmethod
    def invalid(cls, reason: str) -> "Scores":
        return cls(False, 0.0, 0.0, reason)


def pbi_score(objectives, lam, ideal, theta: float = 5.0) -> float:
    """Negated PBI distance of ``objectives`` (lsi, adc) to the ideal point along ``lam``.

    Higher is better; 0 is attained at the ideal point. Invalid scores get -inf.
    """
    if isinstance(objectives, Scores):
        if not objectives.valid:
            return INVALID_PBI
        objectives = objectives.point
    lam = np.asarray(lam, dtype=float)
    norm = np.linalg.norm(lam)
    if norm == 0:
        raise ValueError("reference vector must be non-zero")
    if theta < 0:
        raise ValueError(f"theta must be non-negative, got {theta}")
    z = np.asarray(ideal.as_tuple() if isinstance(ideal, IdealPoint) else ideal, dtype=float)
    gap = z - np.asarray(objectives, dtype=float)
    unit = lam / norm
    d1 = float(gap @ unit)
    d2 = float(np.linalg.norm(gap - d1 * unit))
    return -(d1 + theta * d2)


def dominates(a, b) -> bool:
    """Maximization dominance on (lsi, adc): no worse in both, strictly better in one."""
    a_l, a_a = a.point if isinstance(a, Scores) else a
    b_l, b_a = b.point if isinstance(b, Scores) else b
    return a_l >= b_l and a_a >= b_a and (a_l > b_l or a_a > b_a)


def source_key(source: str) -> str:
    """Stable identity of a program for seeding: hash of its canonical text."""
    return hashlib.sha256(source.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class EvalConfig:
    dim: int = 10
    bounds: tuple = (-5.0, 5.0)
    runs: int = 10
    budget: int = 5000
    feature_n: int = 250
    sigma: float = 1.0
    master_seed: int = 0
    n_probe: int = 64

    @property
    def feature_seed(self) -> int:
        return derive_seed(self.master_seed, "features")

    @property
    def probe_seed(self) -> int:
        return derive_seed(self.master_seed, "probe")


def run_pool(problem: Problem, pool: Sequence[SolverSpec], runs: int, budget: int, seed_of) -> ObjMatrix:
    """``runs x len(pool)`` final best values; ``seed_of(run, solver_index)`` supplies seeds."""
    values = np.empty((runs, len(pool)))
    for j, spec in enumerate(pool):
        for b in range(runs):
            values[b, j] = run_solver(spec, problem, budget, seed_of(b, j)).final_best
    return ObjMatrix(values, tuple(s.label for s in pool))


def evaluate_candidate(
    program: Program | str,
    target_features: Sequence[FeatureVector],
    pool: Sequence[SolverSpec],
    cfg: EvalConfig,
) -> Scores:
    """Validate, then score LSI against the targets and ADC over the pool.

    Solver seeds derive from (master seed, program identity, solver index,
    run index), so identical programs always receive identical scores.
    """
    if isinstance(program, str):
        try:
            program = parse(program)
        except ParseError as exc:
            return Scores.invalid(f"parse-error: {exc}")
    try:
        problem = Problem.from_source("candidate", program.canonical_source, cfg.dim, cfg.bounds)
    except ShapeError as exc:
        return Scores.invalid(f"shape-error: {exc}")
    report = validate(problem.program, cfg.dim, problem.bounds, cfg.n_probe, cfg.probe_seed)
    if not report.valid:
        return Scores.invalid(f"{report.reason}: {report.message}")

    features = extract_features(problem, cfg.feature_n, cfg.feature_seed)
    similarity = lsi(features, target_features, cfg.sigma)
    key = source_key(problem.source)
    obj = run_pool(problem, pool, cfg.runs, cfg.budget, lambda b, j: derive_seed(cfg.master_seed, key, j, b))
    if not obj.finite:
        return Scores.invalid("non-finite: a solver run ended without a finite value")
    return Scores(True, similarity, adc(obj), None, features, obj)
