"""Uniform prediction interface over three engines.

builtin runs the trained model's heads through the decoders; external
renders prompts, POSTs them to a text-generation endpoint, and parses the
returned text; mock looks responses up in a scripted table and shares the
external engine's prompt-and-parse route, so swapping engines never changes
evaluation semantics.

External wire contract: POST JSON {"prompt", "max_new_tokens",
"temperature"} returning {"text": ...}.
"""

from __future__ import annotations

import json
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .corpus import (
    CONDITIONS,
    NPE_NONE,
    NpeInstance,
    Task,
    TaskInstance,
)
from .evaluation import NpePrediction, ordered_np_pairs, predict_instance
from .model import CoherenceModel, ModelConfig
from .prompts import UNPARSEABLE, is_unparseable, parse_output, render_prompt


class BackendError(Exception):
    """Transport or contract failure, carrying the underlying cause."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_new_tokens: int = 64
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")

    def to_json(self) -> dict:
        return {
            "prompt": self.prompt,
            "max_new_tokens": self.max_new_tokens,
            "temperature": self.temperature,
        }


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # {builtin, external, mock}
    endpoint: str | None = None
    timeout: float = 30.0
    max_retries: int = 2
    checkpoint_path: str | None = None
    auth_token: str | None = None
    rate_limit_delay: float = 0.0
    max_in_flight: int = 1
    transcript_path: str | None = None
    max_new_tokens: int = 64
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("builtin", "external", "mock"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "external" and not self.endpoint:
            raise ValueError("external backend needs an endpoint")
        if self.kind == "builtin" and not self.checkpoint_path:
            raise ValueError("builtin backend needs a checkpoint_path")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")


class BuiltinBackend:
    """Classification route: forward passes composed with the decoders."""

    kind = "builtin"

    def __init__(self, model: CoherenceModel):
        self.model = model

    @classmethod
    def from_checkpoint(
        cls, path: str | Path, expect_config: ModelConfig | None = None
    ) -> "BuiltinBackend":
        return cls(CoherenceModel.load(path, expect_config=expect_config))

    def predict(self, task: Task, instance: TaskInstance):
        return predict_instance(self.model, Task(task), instance)

    def predict_many(self, task: Task, instances: Sequence[TaskInstance]) -> list:
        return [self.predict(task, inst) for inst in instances]


def predict_via_generation(
    generate: Callable[[str], str], task: Task, instance: TaskInstance
):
    """Generation route shared by the external and mock engines: render the
    prompt(s), generate, parse the output back into a prediction."""
    task = Task(task)
    if task is Task.NPE:
        assert isinstance(instance, NpeInstance)
        links = []
        unparseable = 0
        for a, c in ordered_np_pairs(instance):
            text = generate(render_prompt(task, instance, np_pair=(a, c)))
            parsed = parse_output(task, text)
            if is_unparseable(parsed):
                unparseable += 1
            elif parsed.strip().upper() != NPE_NONE:
                links.append((a, c, parsed.strip()))
        return NpePrediction(links=tuple(links), unparseable=unparseable)
    if task is Task.REASONING:
        flags = []
        for condition in CONDITIONS:
            text = generate(render_prompt(task, instance, condition=condition))
            flags.append(parse_output(task, text))
        return tuple(flags)
    text = generate(render_prompt(task, instance))
    return parse_output(task, text)


class MockBackend:
    """Scripted prompt -> response table for tests; same parse route as the
    external engine."""

    kind = "mock"

    def __init__(self, script: dict[str, str], default: str | None = None):
        self.script = dict(script)
        self.default = default
        self.calls: list[str] = []

    def _generate(self, prompt: str) -> str:
        self.calls.append(prompt)
        if prompt in self.script:
            return self.script[prompt]
        if self.default is not None:
            return self.default
        raise BackendError(f"mock script has no entry for prompt: {prompt[:80]!r}")

    def predict(self, task: Task, instance: TaskInstance):
        return predict_via_generation(self._generate, task, instance)

    def predict_many(self, task: Task, instances: Sequence[TaskInstance]) -> list:
        return [self.predict(task, inst) for inst in instances]


class ExternalBackend:
    """HTTP client for a text-generation service.

    Retries transport failures up to max_retries; a malformed response body
    gets one retry before raising. Requests may run concurrently up to
    max_in_flight; results are joined back in instance order.
    """

    kind = "external"

    def __init__(self, config: BackendConfig):
        if config.kind != "external":
            raise ValueError("ExternalBackend requires kind='external'")
        self.config = config
        self._rate_lock = threading.Lock()
        self._transcript_lock = threading.Lock()
        self._last_request = 0.0

    def _throttle(self) -> None:
        if self.config.rate_limit_delay <= 0:
            return
        with self._rate_lock:
            wait = self._last_request + self.config.rate_limit_delay - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()

    def _post_once(self, request: GenerationRequest) -> str:
        self._throttle()
        body = json.dumps(request.to_json()).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.config.auth_token:
            headers["Authorization"] = f"Bearer {self.config.auth_token}"
        req = urllib.request.Request(
            self.config.endpoint, data=body, headers=headers, method="POST"
        )
        started = time.monotonic()
        with urllib.request.urlopen(req, timeout=self.config.timeout) as resp:
            raw = resp.read().decode("utf-8")
        payload = json.loads(raw)
        if not isinstance(payload, dict) or "text" not in payload:
            raise ValueError(f"response missing 'text' field: {raw[:120]!r}")
        text = str(payload["text"])
        self._log_transcript(request.prompt, text, time.monotonic() - started)
        return text

    def _log_transcript(self, prompt: str, response: str, elapsed: float) -> None:
        if not self.config.transcript_path:
            return
        line = json.dumps({"prompt": prompt, "response": response, "elapsed": round(elapsed, 6)})
        with self._transcript_lock:
            with open(self.config.transcript_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def generate(self, prompt: str) -> str:
        request = GenerationRequest(
            prompt=prompt,
            max_new_tokens=self.config.max_new_tokens,
            temperature=self.config.temperature,
        )
        transport_failures = 0
        malformed_failures = 0
        while True:
            try:
                return self._post_once(request)
            except (urllib.error.URLError, urllib.error.HTTPError, OSError, TimeoutError) as exc:
                transport_failures += 1
                if transport_failures > self.config.max_retries:
                    raise BackendError(
                        f"endpoint failed after {self.config.max_retries} retries: {exc}"
                    ) from exc
            except (json.JSONDecodeError, ValueError) as exc:
                malformed_failures += 1
                if malformed_failures > 1:
                    raise BackendError(f"malformed response: {exc}") from exc

    def predict(self, task: Task, instance: TaskInstance):
        return predict_via_generation(self.generate, task, instance)

    def predict_many(self, task: Task, instances: Sequence[TaskInstance]) -> list:
        if self.config.max_in_flight == 1 or len(instances) <= 1:
            return [self.predict(task, inst) for inst in instances]
        results: list = [UNPARSEABLE] * len(instances)
        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            futures = {
                pool.submit(self.predict, task, inst): k for k, inst in enumerate(instances)
            }
            for future, k in futures.items():
                results[k] = future.result()
        return results


Backend = BuiltinBackend | ExternalBackend | MockBackend


def create_backend(
    config: BackendConfig,
    mock_script: dict[str, str] | None = None,
    expect_config: ModelConfig | None = None,
) -> Backend:
    if config.kind == "builtin":
        return BuiltinBackend.from_checkpoint(config.checkpoint_path, expect_config)
    if config.kind == "external":
        return ExternalBackend(config)
    return MockBackend(mock_script or {})


def predict(task: Task, instance: TaskInstance, config: BackendConfig, **kwargs):
    """One-shot convenience wrapper; pipelines should build the backend once."""
    return create_backend(config, **kwargs).predict(task, instance)
