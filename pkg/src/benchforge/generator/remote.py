"""Chat-completions client and the model-backed generator."""

from __future__ import annotations

import dataclasses
import logging
import os
import threading
import time

import requests

from .config import GeneratorConfig
from .prompts import (
    REPAIR_INSTRUCTION,
    Contender,
    GenerationContext,
    Reflection,
    ReflectionParseError,
    as_messages,
    build_init_prompt,
    build_reflection_prompt,
    build_reproduction_prompt,
    extract_program,
    fallback_reflection,
    parse_reflection,
    reflection_case,
    winner_loser,
)

log = logging.getLogger(__name__)


class GeneratorError(RuntimeError):
    pass


class TransportError(GeneratorError):
    pass


class AuthError(GeneratorError):
    pass


class RateLimitedError(GeneratorError):
    pass


class MalformedResponseError(GeneratorError):
    pass


def completions_url(endpoint: str) -> str:
    endpoint = endpoint.rstrip("/")
    return endpoint if endpoint.endswith("/chat/completions") else endpoint + "/chat/completions"


class ChatClient:
    """One chat-completion round-trip per :meth:`complete`, with retries on 5xx, 429 and transport errors."""

    def __init__(self, cfg: GeneratorConfig, session: requests.Session | None = None, sleep=time.sleep):
        self.cfg = cfg
        self.session = session or requests.Session()
        self.sleep = sleep
        self.telemetry: list[dict] = []
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)

    def _record(self, entry: dict) -> None:
        with self._lock:
            self.telemetry.append(entry)

    def drain_telemetry(self) -> list[dict]:
        with self._lock:
            out, self.telemetry = self.telemetry, []
        return out

    def complete(self, messages: list[dict], temperature: float) -> str:
        key = os.environ.get(self.cfg.api_key_env)
        if not key:
            raise AuthError(f"environment variable {self.cfg.api_key_env} is not set")
        url = completions_url(self.cfg.endpoint)
        payload = {"model": self.cfg.model, "messages": messages, "temperature": temperature}
        headers = {"Authorization": f"Bearer {key}"}
        for attempt in range(self.cfg.max_retries + 1):
            started = time.monotonic()
            status, failure = None, None
            try:
                with self._slots:
                    resp = self.session.post(url, json=payload, headers=headers, timeout=self.cfg.timeout)
                status = resp.status_code
            except (requests.ConnectionError, requests.Timeout) as exc:
                failure = f"transport: {exc}"
            if status in (401, 403):
                raise AuthError(f"endpoint rejected the credentials (HTTP {status})")
            if status is not None and status != 429 and status < 500:
                if status >= 400:
                    raise TransportError(f"HTTP {status}: {resp.text[:200]}")
                return self._content(resp, time.monotonic() - started)
            failure = failure or f"HTTP {status}"
            if attempt == self.cfg.max_retries:
                if status == 429:
                    raise RateLimitedError(f"still rate limited after {attempt} retries")
                raise TransportError(f"{failure} after {attempt} retries")
            delay = self.cfg.backoff_base * 2**attempt
            log.warning("chat completion attempt %d failed (%s); retrying in %.2fs", attempt + 1, failure, delay)
            self._record({"event": "retry", "attempt": attempt + 1, "failure": failure, "delay": delay})
            self.sleep(delay)
        raise AssertionError("unreachable")

    def _content(self, resp: requests.Response, latency: float) -> str:
        try:
            body = resp.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise MalformedResponseError(f"unexpected response body: {resp.text[:200]}") from None
        if not isinstance(content, str):
            raise MalformedResponseError("message content is not a string")
        usage = body.get("usage") or {}
        entry = {
            "event": "completion",
            "request_id": resp.headers.get("x-request-id") or body.get("id"),
            "latency": round(latency, 6),
            "prompt_tokens": usage.get("prompt_tokens"),
            "completion_tokens": usage.get("completion_tokens"),
        }
        log.info("chat completion %s in %.3fs", entry["request_id"], latency)
        self._record(entry)
        return content


def remote_generate(messages: list[dict], cfg: GeneratorConfig, client: ChatClient | None = None) -> str:
    return (client or ChatClient(cfg)).complete(messages, cfg.temperature_evolve)


class RemoteGenerator:
    """Generator driven by a chat-completions model. Seeds are ignored: the model is the randomness."""

    kind = "remote"

    def __init__(self, cfg: GeneratorConfig, client: ChatClient | None = None):
        self.cfg = cfg
        self.client = client or ChatClient(cfg)

    def init_program(self, ctx: GenerationContext, seed: int) -> str:
        prompt = build_init_prompt(ctx)
        return extract_program(self.client.complete(as_messages(prompt), self.cfg.temperature_init))

    def reflect(self, a: Contender, b: Contender, seed: int) -> Reflection:
        messages = as_messages(build_reflection_prompt(a, b))
        text = self.client.complete(messages, self.cfg.temperature_evolve)
        try:
            reflection = parse_reflection(text)
        except ReflectionParseError as first:
            self.client._record({"event": "reflection-repair", "error": str(first)})
            messages = messages + [
                {"role": "assistant", "content": text},
                {"role": "user", "content": REPAIR_INSTRUCTION},
            ]
            try:
                reflection = parse_reflection(self.client.complete(messages, self.cfg.temperature_evolve))
            except ReflectionParseError as second:
                self.client._record({"event": "reflection-fallback", "error": str(second)})
                return fallback_reflection(a, b)
        expected = reflection_case(a.valid, b.valid)
        winner, loser = winner_loser(a, b)
        if reflection.case != expected:
            self.client._record({"event": "reflection-case-corrected", "from": reflection.case, "to": expected})
        return dataclasses.replace(reflection, case=expected, winner_id=winner.id, loser_id=loser.id)

    def reproduce(self, reflection, parent_a, parent_b, lam, dim, bounds, seed: int) -> str:
        prompt = build_reproduction_prompt(reflection, parent_a, parent_b, lam, dim, bounds)
        return extract_program(self.client.complete(as_messages(prompt), self.cfg.temperature_evolve))

    def drain_telemetry(self) -> list[dict]:
        return self.client.drain_telemetry()
