"""The BBO solver pool used to score algorithm-distinguishing capability.

Every solver minimizes a :class:`~benchforge.problems.Problem` under a hard
evaluation budget, clamps candidates to the box, and reports a best-so-far
trajectory checkpointed every population-size evaluations.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .problems import Problem

SOLVER_KINDS = (
    "de_rand_1_bin",
    "de_best_2_bin",
    "de_adaptive",
    "pso_star",
    "pso_ring",
    "pso_decreasing_w",
    "cma_es",
    "sep_cma_es",
    "nelder_mead_restart",
    "random_search",
)


class InvalidSpecError(ValueError):
    pass


# (default, lower, upper); None means "derived from the problem"
_DE = {"pop_size": (50, 4, 10_000), "F": (0.5, 0.0, 2.0), "CR": (0.9, 0.0, 1.0)}
_PSO = {"pop_size": (50, 2, 10_000), "w": (0.729, 0.0, 1.5), "c1": (1.49445, 0.0, 4.0), "c2": (1.49445, 0.0, 4.0)}
_CMA = {"pop_size": (None, 2, 10_000), "sigma0": (0.3, 1e-6, 1.0)}
PARAMETERS: dict[str, dict[str, tuple]] = {
    "de_rand_1_bin": _DE,
    "de_best_2_bin": {**_DE, "pop_size": (50, 5, 10_000)},
    "de_adaptive": {"pop_size": (50, 4, 10_000), "tau1": (0.1, 0.0, 1.0), "tau2": (0.1, 0.0, 1.0)},
    "pso_star": _PSO,
    "pso_ring": _PSO,
    "pso_decreasing_w": {**_PSO, "w": (0.9, 0.0, 1.5), "w_end": (0.4, 0.0, 1.5)},
    "cma_es": _CMA,
    "sep_cma_es": _CMA,
    "nelder_mead_restart": {"step": (0.1, 1e-6, 1.0), "tol": (1e-9, 0.0, 1.0)},
    "random_search": {"pop_size": (50, 1, 10_000)},
}


@dataclass(frozen=True)
class SolverSpec:
    kind: str
    params: dict[str, float] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if self.kind not in PARAMETERS:
            raise InvalidSpecError(f"unknown solver kind {self.kind!r}")
        table = PARAMETERS[self.kind]
        for key, value in self.params.items():
            if key not in table:
                raise InvalidSpecError(f"{self.kind}: unknown parameter {key!r}")
            _, lo, hi = table[key]
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not lo <= value <= hi:
                raise InvalidSpecError(f"{self.kind}.{key}={value!r} outside [{lo}, {hi}]")
        if not self.label:
            object.__setattr__(self, "label", self.kind)

    def param(self, key: str, dim: int | None = None) -> Any:
        if key in self.params:
            return self.params[key]
        default = PARAMETERS[self.kind][key][0]
        if default is None and key == "pop_size":
            return 4 + int(3 * math.log(dim))
        return default

    def population_size(self, dim: int) -> int:
        if self.kind == "nelder_mead_restart":
            return dim + 1
        return int(self.param("pop_size", dim))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "params": dict(self.params), "label": self.label}


def default_pool() -> list[SolverSpec]:
    return [SolverSpec(kind) for kind in SOLVER_KINDS]


@dataclass(frozen=True)
class Trajectory:
    checkpoints: tuple[tuple[int, float], ...]
    final_best: float
    seed: int

    @property
    def evaluations(self) -> int:
        return self.checkpoints[-1][0] if self.checkpoints else 0


def derive_seed(master_seed: int, *keys) -> int:
    """Stable 63-bit seed from a master seed and a key path of ints/strings."""
    words = []
    for key in keys:
        if isinstance(key, str):
            words.append(int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "little"))
        else:
            words.append(int(key) & 0xFFFFFFFF)
    state = np.random.SeedSequence(int(master_seed) & (2**63 - 1), spawn_key=tuple(words)).generate_state(2)
    return int(state[0]) | (int(state[1]) & 0x7FFFFFFF) << 32


class _Exhausted(Exception):
    pass


class _BudgetedObjective:
    """Counts evaluations, enforces the budget, and records the best-so-far trajectory."""

    def __init__(self, problem: Problem, budget: int, cadence: int):
        self.problem = problem
        self.budget = budget
        self.cadence = max(1, cadence)
        self.used = 0
        self.best = math.inf
        self.checkpoints: list[tuple[int, float]] = []

    def __call__(self, X: np.ndarray) -> np.ndarray:
        remaining = self.budget - self.used
        if remaining <= 0:
            raise _Exhausted
        truncated = len(X) > remaining
        if truncated:
            X = X[:remaining]
        y = self.problem.evaluate(X)
        y = np.where(np.isnan(y), np.inf, y)
        before = self.used
        self.used += len(X)
        if len(y):
            self.best = min(self.best, float(np.min(y)))
        if self.used // self.cadence > before // self.cadence:
            self.checkpoints.append((self.used, self.best))
        if truncated:
            raise _Exhausted
        return y

    def finish(self) -> None:
        if not self.checkpoints or self.checkpoints[-1][0] != self.used:
            self.checkpoints.append((self.used, self.best))


# ---------------------------------------------------------------------------
# Differential evolution
# ---------------------------------------------------------------------------


def _distinct(rng, n: int, k: int) -> np.ndarray:
    """k indices per row, distinct from each other and from the row index."""
    keys = rng.random((n, n))
    np.fill_diagonal(keys, np.inf)
    return np.argsort(keys, axis=1)[:, :k]


def _binomial(rng, target, mutant, CR):
    n, d = target.shape
    mask = rng.random((n, d)) < np.asarray(CR).reshape(-1, 1)
    mask[np.arange(n), rng.integers(0, d, n)] = True
    return np.where(mask, mutant, target)


def _de(spec, f, lo, hi, rng, variant):
    d = len(lo)
    n = int(spec.param("pop_size"))
    pop = lo + rng.random((n, d)) * (hi - lo)
    fit = f(pop)
    F = np.full(n, float(spec.param("F"))) if variant != "adaptive" else rng.uniform(0.1, 1.0, n)
    CR = np.full(n, float(spec.param("CR"))) if variant != "adaptive" else rng.random(n)
    while True:
        if variant == "adaptive":
            tau1, tau2 = spec.param("tau1"), spec.param("tau2")
            newF = np.where(rng.random(n) < tau1, rng.uniform(0.1, 1.0, n), F)
            newCR = np.where(rng.random(n) < tau2, rng.random(n), CR)
        else:
            newF, newCR = F, CR
        if variant == "best2":
            r = _distinct(rng, n, 4)
            best = pop[np.argmin(fit)]
            mutant = best + newF[:, None] * (pop[r[:, 0]] - pop[r[:, 1]] + pop[r[:, 2]] - pop[r[:, 3]])
        else:
            r = _distinct(rng, n, 3)
            mutant = pop[r[:, 0]] + newF[:, None] * (pop[r[:, 1]] - pop[r[:, 2]])
        trial = np.clip(_binomial(rng, pop, mutant, newCR), lo, hi)
        trial_fit = f(trial)
        better = trial_fit <= fit
        pop[better], fit[better] = trial[better], trial_fit[better]
        if variant == "adaptive":
            F, CR = np.where(better, newF, F), np.where(better, newCR, CR)


# ---------------------------------------------------------------------------
# Particle swarm
# ---------------------------------------------------------------------------


def _pso(spec, f, lo, hi, rng, budget, topology, decreasing=False):
    d = len(lo)
    n = int(spec.param("pop_size"))
    span = hi - lo
    vmax = 0.5 * span
    pos = lo + rng.random((n, d)) * span
    vel = rng.uniform(-0.1, 0.1, (n, d)) * span
    fit = f(pos)
    pbest, pbest_fit = pos.copy(), fit.copy()
    used = n
    c1, c2 = spec.param("c1"), spec.param("c2")
    w0 = spec.param("w")
    w1 = spec.param("w_end") if decreasing else w0
    ring = np.stack([np.arange(n) - 1, np.arange(n), (np.arange(n) + 1) % n], axis=1)
    while True:
        w = w0 + (w1 - w0) * min(1.0, used / budget)
        if topology == "ring":
            local = ring[np.arange(n), np.argmin(pbest_fit[ring], axis=1)]
            guide = pbest[local]
        else:
            guide = pbest[np.argmin(pbest_fit)][None, :]
        r1, r2 = rng.random((n, d)), rng.random((n, d))
        vel = w * vel + c1 * r1 * (pbest - pos) + c2 * r2 * (guide - pos)
        vel = np.clip(vel, -vmax, vmax)
        pos = np.clip(pos + vel, lo, hi)
        fit = f(pos)
        used += n
        improved = fit < pbest_fit
        pbest[improved], pbest_fit[improved] = pos[improved], fit[improved]


# ---------------------------------------------------------------------------
# CMA-ES (full and separable)
# ---------------------------------------------------------------------------


def _cma(spec, f, lo, hi, rng, separable):
    d = len(lo)
    lam = int(spec.param("pop_size", d))
    mu = lam // 2
    weights = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    weights /= weights.sum()
    mueff = 1.0 / np.sum(weights**2)
    cc = (4 + mueff / d) / (d + 4 + 2 * mueff / d)
    cs = (mueff + 2) / (d + mueff + 5)
    c1 = 2 / ((d + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((d + 2) ** 2 + mueff))
    if separable:
        c1 *= (d + 2) / 3
        cmu = min(1 - c1, cmu * (d + 2) / 3)
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (d + 1)) - 1) + cs
    chi_n = math.sqrt(d) * (1 - 1 / (4 * d) + 1 / (21 * d * d))
    span = hi - lo
    sigma0 = float(spec.param("sigma0")) * float(np.mean(span))

    while True:  # restarts
        mean = lo + rng.random(d) * span
        sigma = sigma0
        pc, ps = np.zeros(d), np.zeros(d)
        if separable:
            diag = np.ones(d)
        else:
            C, B, D = np.eye(d), np.eye(d), np.ones(d)
        gen = 0
        while True:
            z = rng.standard_normal((lam, d))
            y = z * np.sqrt(diag) if separable else (z * D) @ B.T
            X = np.clip(mean + sigma * y, lo, hi)
            fit = f(X)
            gen += 1
            order = np.argsort(fit, kind="stable")[:mu]
            y_sel = (X[order] - mean) / sigma
            y_w = weights @ y_sel
            mean = mean + sigma * y_w
            if separable:
                ps = (1 - cs) * ps + math.sqrt(cs * (2 - cs) * mueff) * y_w / np.sqrt(diag)
            else:
                ps = (1 - cs) * ps + math.sqrt(cs * (2 - cs) * mueff) * (B @ ((B.T @ y_w) / D))
            hsig = np.linalg.norm(ps) / math.sqrt(1 - (1 - cs) ** (2 * gen)) / chi_n < 1.4 + 2 / (d + 1)
            pc = (1 - cc) * pc + hsig * math.sqrt(cc * (2 - cc) * mueff) * y_w
            correction = (1 - hsig) * cc * (2 - cc)
            if separable:
                diag = (1 - c1 - cmu + c1 * correction) * diag + c1 * pc**2 + cmu * (weights @ y_sel**2)
                diag = np.maximum(diag, 1e-300)
            else:
                rank_mu = (y_sel * weights[:, None]).T @ y_sel
                C = (1 - c1 - cmu + c1 * correction) * C + c1 * np.outer(pc, pc) + cmu * rank_mu
                C = (C + C.T) / 2
                evals, B = np.linalg.eigh(C)
                D = np.sqrt(np.maximum(evals, 1e-300))
            sigma *= math.exp(min(1.0, (cs / damps) * (np.linalg.norm(ps) / chi_n - 1)))
            scale = sigma * (np.sqrt(diag.max()) if separable else D.max())
            flat = np.ptp(fit) <= 1e-14 * max(1.0, abs(float(fit[order[0]])))
            condition = diag.max() / diag.min() if separable else (D.max() / D.min()) ** 2
            if not np.isfinite(scale) or scale < 1e-12 * np.mean(span) or scale > 1e3 * np.mean(span) or condition > 1e14 or flat:
                break


# ---------------------------------------------------------------------------
# Nelder-Mead with restarts
# ---------------------------------------------------------------------------


def _nelder_mead(spec, f, lo, hi, rng):
    d = len(lo)
    span = hi - lo
    step = float(spec.param("step")) * span
    tol = float(spec.param("tol"))

    def ev(p):
        return float(f(p[None, :])[0])

    while True:
        x0 = lo + rng.random(d) * span
        simplex = [x0] + [np.clip(x0 + step * np.eye(d)[j] * rng.choice((-1.0, 1.0)), lo, hi) for j in range(d)]
        simplex = np.array(simplex)
        values = f(simplex).astype(float)
        stall = 0
        while True:
            order = np.argsort(values, kind="stable")
            simplex, values = simplex[order], values[order]
            size = np.max(np.abs(simplex[1:] - simplex[0]) / span)
            if size < tol or stall > 50 * d:
                break
            best_before = values[0]
            centroid = simplex[:-1].mean(axis=0)
            xr = np.clip(centroid + (centroid - simplex[-1]), lo, hi)
            fr = ev(xr)
            if fr < values[0]:
                xe = np.clip(centroid + 2 * (centroid - simplex[-1]), lo, hi)
                fe = ev(xe)
                simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
            elif fr < values[-2]:
                simplex[-1], values[-1] = xr, fr
            else:
                if fr < values[-1]:
                    xc = np.clip(centroid + 0.5 * (xr - centroid), lo, hi)
                else:
                    xc = np.clip(centroid + 0.5 * (simplex[-1] - centroid), lo, hi)
                fc = ev(xc)
                if fc < min(fr, values[-1]):
                    simplex[-1], values[-1] = xc, fc
                else:
                    simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
                    values[1:] = f(simplex[1:])
            stall = stall + 1 if values.min() >= best_before else 0


def _random_search(spec, f, lo, hi, rng):
    n = int(spec.param("pop_size"))
    while True:
        f(lo + rng.random((n, len(lo))) * (hi - lo))


_DISPATCH: dict[str, Callable] = {
    "de_rand_1_bin": lambda s, f, lo, hi, rng, b: _de(s, f, lo, hi, rng, "rand1"),
    "de_best_2_bin": lambda s, f, lo, hi, rng, b: _de(s, f, lo, hi, rng, "best2"),
    "de_adaptive": lambda s, f, lo, hi, rng, b: _de(s, f, lo, hi, rng, "adaptive"),
    "pso_star": lambda s, f, lo, hi, rng, b: _pso(s, f, lo, hi, rng, b, "star"),
    "pso_ring": lambda s, f, lo, hi, rng, b: _pso(s, f, lo, hi, rng, b, "ring"),
    "pso_decreasing_w": lambda s, f, lo, hi, rng, b: _pso(s, f, lo, hi, rng, b, "star", decreasing=True),
    "cma_es": lambda s, f, lo, hi, rng, b: _cma(s, f, lo, hi, rng, separable=False),
    "sep_cma_es": lambda s, f, lo, hi, rng, b: _cma(s, f, lo, hi, rng, separable=True),
    "nelder_mead_restart": lambda s, f, lo, hi, rng, b: _nelder_mead(s, f, lo, hi, rng),
    "random_search": lambda s, f, lo, hi, rng, b: _random_search(s, f, lo, hi, rng),
}


def run_solver(spec: SolverSpec, problem: Problem, budget: int, seed: int) -> Trajectory:
    """Minimize ``problem`` with ``spec`` for exactly ``budget`` evaluations."""
    pop = spec.population_size(problem.dim)
    if budget < pop:
        raise InvalidSpecError(f"budget {budget} is smaller than the population size {pop} of {spec.label}")
    objective = _BudgetedObjective(problem, budget, pop)
    rng = np.random.default_rng(seed)
    try:
        _DISPATCH[spec.kind](spec, objective, problem.lower, problem.upper, rng, budget)
    except _Exhausted:
        pass
    objective.finish()
    return Trajectory(tuple(objective.checkpoints), objective.best, seed)
