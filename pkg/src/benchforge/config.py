"""Run configuration: one JSON document, validated with key-path error messages."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .generator.config import GeneratorConfig
from .solvers import InvalidSpecError, SolverSpec, default_pool


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class RunConfig:
    n_refs: int = 32
    generations: int = 10
    neighborhood_size: int = 5
    replacement_cap: int = 2
    theta: float = 5.0
    sigma: float | str = 1.0
    dim: int = 10
    bounds: tuple[float, float] = (-5.0, 5.0)
    runs: int = 10
    budget: int = 5000
    feature_n: int = 250
    n_probe: int = 64
    pool: tuple[SolverSpec, ...] = field(default_factory=lambda: tuple(default_pool()))
    target: dict[str, str] = field(default_factory=lambda: {"builtin": "classic12"})
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    master_seed: int = 0
    output_dir: str = "eob-run"

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_refs": self.n_refs,
            "generations": self.generations,
            "neighborhood_size": self.neighborhood_size,
            "replacement_cap": self.replacement_cap,
            "theta": self.theta,
            "sigma": self.sigma,
            "dim": self.dim,
            "bounds": list(self.bounds),
            "B": self.runs,
            "budget": self.budget,
            "feature_n": self.feature_n,
            "n_probe": self.n_probe,
            "pool": [s.to_dict() for s in self.pool],
            "target": dict(self.target),
            "generator": self.generator.to_dict(),
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
        }

    def config_hash(self) -> str:
        """Hash of everything that affects results (the output location does not)."""
        doc = self.to_dict()
        del doc["output_dir"]
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


_INT_KEYS = ("n_refs", "generations", "neighborhood_size", "replacement_cap", "dim", "B", "budget", "feature_n", "n_probe")
_TOP_KEYS = set(_INT_KEYS) | {"theta", "sigma", "bounds", "pool", "target", "generator", "master_seed", "output_dir"}
_GEN_KEYS = {f.name for f in fields(GeneratorConfig)}


def _int(doc: dict, key: str, path: str, minimum: int) -> int:
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {value}")
    return value


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def parse_pool(value, path: str) -> tuple[SolverSpec, ...]:
    if value == "default":
        return tuple(default_pool())
    if not isinstance(value, list) or len(value) < 2:
        raise ConfigError(path, 'expected "default" or a list of at least two solver specs')
    specs = []
    for k, item in enumerate(value):
        if not isinstance(item, dict) or "kind" not in item:
            raise ConfigError(f"{path}[{k}]", "expected an object with a kind")
        unknown = set(item) - {"kind", "params", "label"}
        if unknown:
            raise ConfigError(f"{path}[{k}].{sorted(unknown)[0]}", "unknown key")
        try:
            specs.append(SolverSpec(item["kind"], dict(item.get("params") or {}), item.get("label", "")))
        except InvalidSpecError as exc:
            raise ConfigError(f"{path}[{k}]", str(exc)) from None
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ConfigError(path, f"solver labels must be unique, got {labels}")
    return tuple(specs)


def _target(value, path: str) -> dict[str, str]:
    if not isinstance(value, dict) or len(value) != 1 or next(iter(value)) not in ("builtin", "suite"):
        raise ConfigError(path, 'expected {"builtin": name} or {"suite": path}')
    (kind, ref), = value.items()
    if not isinstance(ref, str):
        raise ConfigError(f"{path}.{kind}", "expected a string")
    return {kind: ref}


def _generator(value, path: str) -> GeneratorConfig:
    if not isinstance(value, dict):
        raise ConfigError(path, "expected an object")
    if "api_key" in value:
        raise ConfigError(f"{path}.api_key", "keys are read from the environment only")
    unknown = set(value) - _GEN_KEYS - {"temperature"}
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")
    kwargs = dict(value)
    if "temperature" in kwargs:
        t = _number(kwargs.pop("temperature"), f"{path}.temperature")
        kwargs.setdefault("temperature_init", t)
        kwargs.setdefault("temperature_evolve", t)
    try:
        return GeneratorConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def config_from_dict(doc: Any) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("$", "config must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"$.{sorted(unknown)[0]}", "unknown key")
    kwargs: dict[str, Any] = {}
    for key in _INT_KEYS:
        if key in doc:
            minimum = {"n_refs": 2, "neighborhood_size": 2, "replacement_cap": 0, "B": 2, "generations": 0}.get(key, 1)
            kwargs["runs" if key == "B" else key] = _int(doc, key, "$", minimum)
    if "theta" in doc:
        kwargs["theta"] = _number(doc["theta"], "$.theta")
        if kwargs["theta"] < 0:
            raise ConfigError("$.theta", "must be non-negative")
    if "sigma" in doc:
        if doc["sigma"] == "auto":
            kwargs["sigma"] = "auto"
        else:
            kwargs["sigma"] = _number(doc["sigma"], "$.sigma")
            if kwargs["sigma"] <= 0:
                raise ConfigError("$.sigma", 'must be positive or "auto"')
    if "bounds" in doc:
        b = doc["bounds"]
        if not isinstance(b, list) or len(b) != 2:
            raise ConfigError("$.bounds", "expected [lo, hi]")
        lo, hi = _number(b[0], "$.bounds[0]"), _number(b[1], "$.bounds[1]")
        if not lo < hi:
            raise ConfigError("$.bounds", "needs lo < hi")
        kwargs["bounds"] = (lo, hi)
    if "pool" in doc:
        kwargs["pool"] = parse_pool(doc["pool"], "$.pool")
    if "target" in doc:
        kwargs["target"] = _target(doc["target"], "$.target")
    if "generator" in doc:
        kwargs["generator"] = _generator(doc["generator"], "$.generator")
    if "master_seed" in doc:
        kwargs["master_seed"] = _int(doc, "master_seed", "$", 0)
    if "output_dir" in doc:
        if not isinstance(doc["output_dir"], str):
            raise ConfigError("$.output_dir", "expected a string")
        kwargs["output_dir"] = doc["output_dir"]
    cfg = RunConfig(**kwargs)
    if cfg.feature_n < 4 * cfg.dim:
        raise ConfigError("$.feature_n", f"must be >= 4 * dim = {4 * cfg.dim}")
    return cfg


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("$", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    return config_from_dict(doc)
