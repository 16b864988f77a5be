"""Minimal client for a chat-completions-compatible HTTP endpoint.

Each completion is requested independently and retried with bounded
exponential backoff; batch helpers preserve input order under any completion
interleaving. The transport is injectable so tests run fully offline.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

API_KEY_ENV = "LONGWEAVE_API_KEY"
DEFAULT_TIMEOUT = 300.0  # long contexts are slow
DEFAULT_MAX_ATTEMPTS = 3


class ClientConfigError(ValueError):
    """The client is misconfigured; never retried."""


class TransportError(RuntimeError):
    """Endpoint unreachable after the retry budget."""


class ProtocolError(RuntimeError):
    """Responses arrived but could not be interpreted."""


@dataclass(frozen=True)
class SamplingParams:
    n: int = 8
    temperature: float = 0.6
    top_p: float = 0.95
    max_output_tokens: int = 4096

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


@dataclass(frozen=True)
class SampleFailure:
    attempt: int  # index of the failed sample slot
    reason: str
    transport: bool = False


@dataclass(frozen=True)
class CompletionBatch:
    prompt_id: str
    completions: tuple[str, ...]
    failures: tuple[SampleFailure, ...] = ()

    @property
    def requested(self) -> int:
        return len(self.completions) + len(self.failures)


@dataclass(frozen=True)
class SampleJob:
    prompt_id: str
    system_prompt: str
    user_prompt: str
    params: SamplingParams


def _http_transport(base_url: str, api_key: str | None, timeout: float) -> Callable[[dict], dict]:
    import requests

    url = base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    def post(payload: dict) -> dict:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        resp.raise_for_status()
        return resp.json()

    return post


class ChatCompletionsClient:
    """Shareable across workers; every request is independent.

    `transport` maps a request payload to a parsed response body; the default
    posts to `{base_url}/chat/completions` with the API key read from the
    environment (never from config files).
    """

    def __init__(
        self,
        base_url: str = "",
        model: str = "",
        api_key_env: str = API_KEY_ENV,
        timeout: float = DEFAULT_TIMEOUT,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = 0.5,
        transport: Callable[[dict], dict] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if transport is None:
            if not base_url or not model:
                raise ClientConfigError("base_url and model are required without a custom transport")
            transport = _http_transport(base_url, os.environ.get(api_key_env), timeout)
        if max_attempts < 1:
            raise ClientConfigError("max_attempts must be >= 1")
        self.model = model
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._transport = transport
        self._sleep = sleep

    def _request_one(self, system_prompt: str, user_prompt: str, params: SamplingParams) -> str:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
            "n": 1,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_output_tokens,
        }
        body = self._transport(payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed response body: {exc}") from exc
        if not isinstance(content, str):
            raise ProtocolError(f"non-text completion content: {type(content).__name__}")
        return content

    def sample(
        self,
        system_prompt: str,
        user_prompt: str,
        params: SamplingParams,
        prompt_id: str = "",
    ) -> CompletionBatch:
        """Request params.n completions, retrying each slot independently.

        Per-sample model errors become failure records instead of raising;
        only a fully failed batch escalates to TransportError/ProtocolError.
        """
        batch = self._sample_collect(system_prompt, user_prompt, params, prompt_id)
        if not batch.completions and batch.failures:
            if all(f.transport for f in batch.failures):
                raise TransportError(
                    f"all {len(batch.failures)} samples failed at transport level: "
                    f"{batch.failures[0].reason}"
                )
            if all(not f.transport for f in batch.failures):
                raise ProtocolError(
                    f"all {len(batch.failures)} samples failed: {batch.failures[0].reason}"
                )
        return batch

    def _sample_collect(
        self,
        system_prompt: str,
        user_prompt: str,
        params: SamplingParams,
        prompt_id: str,
    ) -> CompletionBatch:
        completions: list[str] = []
        failures: list[SampleFailure] = []
        for slot in range(params.n):
            last_exc: Exception | None = None
            got = None
            for attempt in range(self.max_attempts):
                if attempt:
                    self._sleep(min(self.backoff_base * 2 ** (attempt - 1), 30.0))
                try:
                    got = self._request_one(system_prompt, user_prompt, params)
                    break
                except ProtocolError as exc:
                    last_exc = exc
                except Exception as exc:  # connection/timeout/HTTP errors
                    last_exc = exc
            if got is not None:
                completions.append(got)
            else:
                failures.append(
                    SampleFailure(
                        attempt=slot,
                        reason=str(last_exc),
                        transport=not isinstance(last_exc, ProtocolError),
                    )
                )
        return CompletionBatch(
            prompt_id=prompt_id, completions=tuple(completions), failures=tuple(failures)
        )

    def sample_many(self, jobs: Sequence[SampleJob], parallelism: int = 1) -> list[CompletionBatch]:
        """Run jobs with at most `parallelism` requests in flight; results
        come back in input order regardless of completion order. Per-job
        errors are aggregated as failure-only batches."""
        if parallelism < 1:
            raise ClientConfigError("parallelism must be >= 1")
        if not jobs:
            return []

        def run(job: SampleJob) -> CompletionBatch:
            return self._sample_collect(
                job.system_prompt, job.user_prompt, job.params, job.prompt_id
            )

        if parallelism == 1:
            return [run(job) for job in jobs]
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(run, jobs))


def mock_transport(script: Sequence[str | Exception]) -> Callable[[dict], dict]:
    """Transport replaying a script: a str yields that completion, an
    Exception instance is raised. Repeats the last entry when exhausted."""
    state = {"i": 0}

    def post(payload: dict) -> dict:
        idx = min(state["i"], len(script) - 1)
        state["i"] += 1
        entry = script[idx]
        if isinstance(entry, Exception):
            raise entry
        return {"choices": [{"message": {"content": entry}}]}

    return post
