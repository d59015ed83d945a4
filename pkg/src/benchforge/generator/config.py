from __future__ import annotations

from dataclasses import asdict, dataclass

GENERATOR_KINDS = ("mock", "remote")


@dataclass(frozen=True)
class GeneratorConfig:
    """How offspring text is produced. The API key is read from ``api_key_env`` at call time."""

    kind: str = "mock"
    endpoint: str | None = None
    model: str | None = None
    temperature_init: float = 0.8
    temperature_evolve: float = 0.4
    max_retries: int = 3
    timeout: float = 60.0
    api_key_env: str = "OPENAI_API_KEY"
    seed: int = 0
    backoff_base: float = 1.0
    max_in_flight: int = 4
    init_attempts: int = 3

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"kind must be one of {GENERATOR_KINDS}, got {self.kind!r}")
        if self.kind == "remote" and not (self.endpoint and self.model):
            raise ValueError("a remote generator needs both endpoint and model")
        if self.max_retries < 0 or self.max_in_flight < 1 or self.init_attempts < 1:
            raise ValueError("max_retries must be >= 0, max_in_flight and init_attempts >= 1")
        if self.timeout <= 0 or self.backoff_base < 0:
            raise ValueError("timeout must be positive and backoff_base non-negative")

    def to_dict(self) -> dict:
        return asdict(self)
