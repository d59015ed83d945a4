"""Suite-level analytics: solver rank vectors, performance consistency, diversity."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .objectives import ObjMatrix, minmax, run_pool, source_key
from .problems import Suite
from .solvers import SolverSpec, derive_seed

HIST_BINS = 25
HIST_RANGE = (0.0, 0.5)


def suite_matrices(suite: Suite, pool: Sequence[SolverSpec], runs: int, budget: int, master_seed: int = 0):
    """Final-best matrix per problem label.

    Seeds depend on the problem's content and the run index but not on the
    solver, so every solver of a run sees the same random stream.
    """
    out = {}
    for p in suite:
        key = source_key(p.source)
        out[p.label] = run_pool(p, pool, runs, budget, lambda b, j: derive_seed(master_seed, "analysis", key, b))
    return out


@dataclass(frozen=True)
class PerfVector:
    values: tuple[float, ...]
    labels: tuple[str, ...]
    suite: str
    ranks: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {"suite": self.suite, "labels": list(self.labels), "S": list(self.values), "ranks": list(self.ranks)}


def rank_from_matrices(matrices: dict[str, ObjMatrix], suite_label: str = "") -> PerfVector:
    mats = list(matrices.values())
    labels = mats[0].labels
    if any(m.labels != labels for m in mats):
        raise ValueError("all matrices must share the same solver labels")
    # lower mean final value is better; ties share the average rank
    ranks = np.mean([rankdata(m.values.mean(axis=0), method="average") for m in mats], axis=0)
    return PerfVector(tuple(1.0 / ranks), labels, suite_label, tuple(ranks))


def rank_vector(suite: Suite, pool, runs: int, budget: int, master_seed: int = 0) -> PerfVector:
    return rank_from_matrices(suite_matrices(suite, pool, runs, budget, master_seed), suite.name)


def wasserstein_1d(a, b) -> float:
    """W1 between two equal-size empirical distributions (mean gap of sorted samples)."""
    a, b = np.sort(np.asarray(a, dtype=float)), np.sort(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError(f"need two non-empty samples of equal size, got {a.shape} and {b.shape}")
    return float(np.mean(np.abs(a - b)))


def consistency(source: PerfVector, target: PerfVector) -> float:
    if tuple(source.labels) != tuple(target.labels):
        raise ValueError(f"solver labels differ: {source.labels} vs {target.labels}")
    return 1.0 - wasserstein_1d(source.values, target.values)


@dataclass(frozen=True)
class DiversityReport:
    values: np.ndarray  # one std per (instance, run)
    instances: tuple[str, ...]  # instance label of each value
    runs: tuple[int, ...]
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def density(self) -> np.ndarray:
        total = self.counts.sum()
        width = np.diff(self.bin_edges)
        return self.counts / (total * width) if total else np.zeros_like(width)

    @property
    def occupied_bins(self) -> int:
        return int(np.count_nonzero(self.counts))

    def to_dict(self) -> dict:
        return {
            "values": [{"instance": i, "run": r, "std": float(v)} for i, r, v in zip(self.instances, self.runs, self.values)],
            "bin_edges": self.bin_edges.tolist(),
            "counts": self.counts.tolist(),
            "density": self.density.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def values_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["instance", "run", "std"])
        for i, r, v in zip(self.instances, self.runs, self.values):
            w.writerow([i, r, repr(float(v))])
        return buf.getvalue()

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "density"])
        for lo, hi, c, d in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts, self.density):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(float(d))])
        return buf.getvalue()


def diversity_from_matrices(matrices: dict[str, ObjMatrix]) -> DiversityReport:
    values, instances, runs = [], [], []
    for label, m in matrices.items():
        stds = np.std(minmax(m.values), axis=1)
        values.extend(stds)
        instances.extend([label] * len(stds))
        runs.extend(range(len(stds)))
    values = np.clip(np.array(values), *HIST_RANGE)
    counts, edges = np.histogram(values, bins=HIST_BINS, range=HIST_RANGE)
    return DiversityReport(values, tuple(instances), tuple(runs), edges, counts)


def diversity_distribution(suite: Suite, pool, runs: int, budget: int, master_seed: int = 0) -> DiversityReport:
    return diversity_from_matrices(suite_matrices(suite, pool, runs, budget, master_seed))
