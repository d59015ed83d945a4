"""Sampling-based landscape features and the landscape similarity indicator.

All features are computed on box-normalized inputs and min-max normalized
objective values, so they do not change under ``a * f + b`` with ``a > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.stats import kurtosis, skew

from .problems import Problem

FEATURE_NAMES = (
    "y_skewness",
    "y_kurtosis",
    "y_mean_position",
    "linear_r2",
    "quadratic_r2",
    "linear_coef_log_ratio",
    "fitness_distance_corr",
    "dispersion_ratio",
    "nn_value_corr",
    "levelset_below_mean",
    "local_optima_fraction",
    "gradient_mean",
    "gradient_std",
    "boundary_center_gap",
    "convexity_fraction",
    "information_content",
)

# Documented range of each feature; estimators clamp into it.
FEATURE_RANGES = {
    "y_skewness": (-20.0, 20.0),
    "y_kurtosis": (-3.0, 50.0),
    "y_mean_position": (0.0, 1.0),
    "linear_r2": (0.0, 1.0),
    "quadratic_r2": (0.0, 1.0),
    "linear_coef_log_ratio": (0.0, 20.0),
    "fitness_distance_corr": (-1.0, 1.0),
    "dispersion_ratio": (0.0, 3.0),
    "nn_value_corr": (-1.0, 1.0),
    "levelset_below_mean": (0.0, 1.0),
    "local_optima_fraction": (0.0, 1.0),
    "gradient_mean": (0.0, 30.0),
    "gradient_std": (0.0, 30.0),
    "boundary_center_gap": (-1.0, 1.0),
    "convexity_fraction": (0.0, 1.0),
    "information_content": (0.0, 1.0),
}

N_CONVEXITY_TESTS = 100
GRADIENT_SUBSAMPLE = 20
FD_STEP = 1e-3
IC_EPSILON = 1e-3
CONVEXITY_TOL = 1e-10


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    n: int
    seed: int

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if len(values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(values)}")
        object.__setattr__(self, "values", values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values)

    def to_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))

    @classmethod
    def from_dict(cls, mapping: dict[str, float], n: int = 0, seed: int = 0) -> "FeatureVector":
        missing = [name for name in FEATURE_NAMES if name not in mapping]
        if missing:
            raise ValueError(f"feature map is missing {missing}")
        return cls(tuple(mapping[name] for name in FEATURE_NAMES), n, seed)


@dataclass(frozen=True)
class DesignSample:
    points: np.ndarray  # (n, d) in the problem box
    unit: np.ndarray  # (n, d) in [0, 1]^d
    values: np.ndarray  # raw objective values
    normalized: np.ndarray  # min-max normalized, constant => zeros


def latin_hypercube(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """One point per 1/n stratum in every coordinate."""
    strata = np.argsort(rng.random((d, n)), axis=1).T
    return (strata + rng.random((n, d))) / n


def _finite_copy(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float).copy()
    finite = np.isfinite(y)
    if not finite.any():
        return np.zeros_like(y)
    hi, lo = y[finite].max(), y[finite].min()
    y[np.isnan(y) | (y == np.inf)] = hi
    y[y == -np.inf] = lo
    return y


def _normalize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    lo, hi = float(np.min(y)), float(np.max(y))
    span = hi - lo
    if not span > 0:
        return np.zeros_like(y), lo, 0.0
    return (y - lo) / span, lo, span


def sample_design(problem: Problem, n: int, seed: int) -> DesignSample:
    if n < 4 * problem.dim:
        raise ValueError(f"design size {n} is below 4*d = {4 * problem.dim}")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    unit = latin_hypercube(n, problem.dim, rng)
    points = problem.from_unit(unit)
    values = problem.evaluate(points)
    normalized, _, _ = _normalize(_finite_copy(values))
    return DesignSample(points, unit, values, normalized)


def _r2(design: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    total = np.sum((y - y.mean()) ** 2)
    if total <= 0:
        return 0.0, coef
    return 1.0 - float(np.sum(resid**2) / total), coef


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    if np.std(a) == 0 or np.std(b) == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def _nn_tour(dist: np.ndarray, start: int = 0) -> np.ndarray:
    n = len(dist)
    visited = np.zeros(n, dtype=bool)
    order = np.empty(n, dtype=int)
    current = start
    for step in range(n):
        order[step] = current
        visited[current] = True
        if step == n - 1:
            break
        row = np.where(visited, np.inf, dist[current])
        current = int(np.argmin(row))
    return order


def _information_content(y_tour: np.ndarray) -> float:
    delta = np.diff(y_tour)
    symbols = np.where(delta > IC_EPSILON, 1, np.where(delta < -IC_EPSILON, -1, 0))
    if len(symbols) < 2:
        return 0.0
    pairs = (symbols[:-1] + 1) * 3 + (symbols[1:] + 1)
    changes = symbols[:-1] != symbols[1:]
    counts = np.bincount(pairs[changes], minlength=9)
    p = counts[counts > 0] / len(pairs)
    return float(-np.sum(p * np.log(p)) / math.log(6))


def _clamp(name: str, value: float) -> float:
    lo, hi = FEATURE_RANGES[name]
    if not np.isfinite(value):
        value = 0.0 if np.isnan(value) else (hi if value > 0 else lo)
    return float(min(hi, max(lo, value)))


def extract_features(problem: Problem, n: int | None = None, seed: int = 0) -> FeatureVector:
    """Compute the 16 landscape features from one Latin-hypercube design.

    Besides the ``n`` design evaluations this spends ``GRADIENT_SUBSAMPLE * d``
    finite-difference evaluations and ``N_CONVEXITY_TESTS`` midpoint
    evaluations. A constant sample yields the all-zero vector.
    """
    n = 25 * problem.dim if n is None else n
    sample = sample_design(problem, n, seed)
    return features_from_sample(problem, sample.unit, sample.values, seed)


def features_from_sample(problem: Problem, unit: np.ndarray, values: np.ndarray, seed: int = 0) -> FeatureVector:
    """The 16 features of an evaluated design given in unit-box coordinates.

    Rows are put in lexicographic order first, so the result does not depend
    on the order in which the sample is presented.
    """
    d = problem.dim
    order = np.lexsort(np.asarray(unit).T[::-1])
    X = np.asarray(unit, dtype=float)[order]
    n = len(X)
    raw = _finite_copy(np.asarray(values)[order])
    y, y_lo, y_span = _normalize(raw)
    if y_span == 0:
        return FeatureVector((0.0,) * len(FEATURE_NAMES), n, seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])

    def normalized_at(unit_points: np.ndarray) -> np.ndarray:
        vals = problem.evaluate(problem.from_unit(unit_points))
        vals = np.where(np.isnan(vals) | (vals == np.inf), raw.max(), vals)
        vals = np.where(vals == -np.inf, raw.min(), vals)
        return (vals - y_lo) / y_span

    f = {}
    f["y_skewness"] = skew(y)
    f["y_kurtosis"] = kurtosis(y, fisher=True)
    f["y_mean_position"] = np.mean(y)

    ones = np.ones((n, 1))
    f["linear_r2"], coef = _r2(np.hstack([ones, X]), y)
    f["quadratic_r2"], _ = _r2(np.hstack([ones, X, X**2]), y)
    slopes = np.abs(coef[1:])
    if slopes.max() == 0:
        f["linear_coef_log_ratio"] = 0.0
    elif slopes.min() == 0:
        f["linear_coef_log_ratio"] = math.inf
    else:
        f["linear_coef_log_ratio"] = math.log(slopes.max() / slopes.min())

    best = int(np.argmin(y))
    f["fitness_distance_corr"] = _corr(y, np.linalg.norm(X - X[best], axis=1))

    n_best = max(2, math.ceil(0.1 * n))
    elite = np.argsort(y, kind="stable")[:n_best]
    f["dispersion_ratio"] = np.mean(pdist(X[elite])) / np.mean(pdist(X))

    dist = cdist(X, X)
    np.fill_diagonal(dist, np.inf)
    nn = np.argmin(dist, axis=1)
    f["nn_value_corr"] = _corr(y, y[nn])
    f["levelset_below_mean"] = np.mean(y < y.mean())

    k = min(2 * d, n - 1)
    neighbors = np.argsort(dist, axis=1, kind="stable")[:, :k]
    f["local_optima_fraction"] = np.mean(y < y[neighbors].min(axis=1))

    picked = np.sort(rng.choice(n, min(GRADIENT_SUBSAMPLE, n), replace=False))
    sub = X[picked]
    m = len(sub)
    step = np.where(sub + FD_STEP <= 1.0, FD_STEP, -FD_STEP)  # (m, d)
    shifted = np.repeat(sub, d, axis=0)
    shifted[np.arange(m * d), np.tile(np.arange(d), m)] += step.reshape(-1)
    grad = (normalized_at(shifted).reshape(m, d) - y[picked, None]) / step
    magnitude = np.linalg.norm(grad, axis=1)
    f["gradient_mean"] = math.log1p(np.mean(magnitude))
    f["gradient_std"] = math.log1p(np.std(magnitude))

    radius = np.linalg.norm(X - 0.5, axis=1)
    outer = radius > np.median(radius)
    f["boundary_center_gap"] = np.mean(y[outer]) - np.mean(y[~outer]) if outer.any() and (~outer).any() else 0.0

    a = rng.integers(0, n, N_CONVEXITY_TESTS)
    b = (a + rng.integers(1, n, N_CONVEXITY_TESTS)) % n
    mid = normalized_at((X[a] + X[b]) / 2)
    f["convexity_fraction"] = np.mean(mid <= (y[a] + y[b]) / 2 + CONVEXITY_TOL)

    tour = _nn_tour(dist, int(np.argmin(y)))
    f["information_content"] = _information_content(y[tour])

    return FeatureVector(tuple(_clamp(name, f[name]) for name in FEATURE_NAMES), n, seed)


def _as_array(z) -> np.ndarray:
    return z.as_array() if isinstance(z, FeatureVector) else np.asarray(z, dtype=float)


def min_feature_distance(z_f, targets: Iterable) -> float:
    targets = [_as_array(t) for t in targets]
    if not targets:
        raise ValueError("empty target set")
    return float(np.min(np.linalg.norm(np.stack(targets) - _as_array(z_f), axis=1)))


def lsi(z_f, targets: Sequence, sigma: float = 1.0) -> float:
    """Landscape similarity in (0, 1]: ``1 / (1 + min_p ||z_f - z_p|| / sigma^2)``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return 1.0 / (1.0 + min_feature_distance(z_f, targets) / sigma**2)


def auto_sigma(targets: Sequence) -> float:
    """Median pairwise distance among target feature vectors (1.0 if undefined)."""
    arr = np.stack([_as_array(t) for t in targets])
    if len(arr) < 2:
        return 1.0
    med = float(np.median(pdist(arr)))
    return med if med > 0 else 1.0
