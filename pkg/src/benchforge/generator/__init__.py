"""Variation operators: a remote chat model or a deterministic offline mock."""

from .config import GENERATOR_KINDS, GeneratorConfig
from .mock import MockGenerator, mock_generate
from .prompts import (
    CASES,
    Contender,
    GenerationContext,
    Reflection,
    ReflectionParseError,
    build_init_prompt,
    build_reflection_prompt,
    build_reproduction_prompt,
    parse_reflection,
    reflection_case,
    winner_loser,
)
from .remote import (
    AuthError,
    ChatClient,
    GeneratorError,
    MalformedResponseError,
    RateLimitedError,
    RemoteGenerator,
    TransportError,
    remote_generate,
)
from .styles import STYLE_KEYS, STYLES, get_style


def make_generator(cfg: GeneratorConfig, n_probe: int = 64, probe_seed: int = 0):
    if cfg.kind == "remote":
        return RemoteGenerator(cfg)
    return MockGenerator(n_probe, probe_seed)


__all__ = [
    "AuthError",
    "CASES",
    "ChatClient",
    "Contender",
    "GENERATOR_KINDS",
    "GenerationContext",
    "GeneratorConfig",
    "GeneratorError",
    "MalformedResponseError",
    "MockGenerator",
    "RateLimitedError",
    "Reflection",
    "ReflectionParseError",
    "RemoteGenerator",
    "STYLES",
    "STYLE_KEYS",
    "TransportError",
    "build_init_prompt",
    "build_reflection_prompt",
    "build_reproduction_prompt",
    "get_style",
    "make_generator",
    "mock_generate",
    "parse_reflection",
    "reflection_case",
    "remote_generate",
    "winner_loser",
]
