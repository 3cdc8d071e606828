"""Minimal chat-completions HTTP client with retry and backoff.

Requests serialize with a stable field order so identical inputs produce
bit-identical bodies (and therefore stable cache keys). The API key comes
from the SCURANK_API_KEY environment variable unless given explicitly.
"""

from __future__ import annotations

import json
import os
import random
import time
from dataclasses import dataclass
from typing import Callable

import requests

API_KEY_ENV = "SCURANK_API_KEY"


class ChatError(RuntimeError):
    """Endpoint failure that survived all retry attempts."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0

    def body(self) -> dict:
        return {
            "model": self.model_id,
            "temperature": self.temperature,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
        }

    def canonical_json(self) -> str:
        return json.dumps(self.body(), ensure_ascii=False, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str = ""
    usage: dict | None = None


def _completions_url(base_url: str) -> str:
    stripped = base_url.rstrip("/")
    if stripped.endswith("/chat/completions"):
        return stripped
    return stripped + "/chat/completions"


class ChatClient:
    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        timeout: float = 120.0,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
        post: Callable | None = None,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.url = _completions_url(base_url)
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._post = post or requests.post

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                response = self._post(
                    self.url,
                    data=request.canonical_json().encode("utf-8"),
                    headers=headers,
                    timeout=self.timeout,
                )
                response.raise_for_status()
                return self._parse(response.json())
            except Exception as exc:  # noqa: BLE001 - every transport failure retries
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    delay = self.backoff_base * (2**attempt)
                    self._sleep(delay * (0.5 + self._rng.random() / 2))
        raise ChatError(
            f"chat endpoint failed after {self.max_attempts} attempts: {last_error}"
        ) from last_error

    @staticmethod
    def _parse(payload: dict) -> ChatResponse:
        try:
            choice = payload["choices"][0]
            content = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ChatError(f"malformed chat response: {payload!r}") from exc
        return ChatResponse(
            content=content,
            finish_reason=choice.get("finish_reason", ""),
            usage=payload.get("usage"),
        )


def messages(*pairs: tuple[str, str]) -> tuple[ChatMessage, ...]:
    return tuple(ChatMessage(role=r, content=c) for r, c in pairs)
