"""Minimal chat-completion client plus a scripted mock for tests.

The wire format is the common one: POST JSON with ``model``, ``messages``
(system + user), ``temperature``; the reply carries
``choices[0].message.content``. The API key is read from the environment so
it never lands in config files.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import requests

logger = logging.getLogger(__name__)

API_KEY_ENV = "ULTIMA_LLM_API_KEY"


class TransportError(RuntimeError):
    """Endpoint unreachable or kept failing after retries."""


class BadReplyError(RuntimeError):
    """Reply arrived but was not usable; carries the raw text."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


@dataclass
class ChatConfig:
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    model: str = "gpt-4o"
    temperature: float = 1.0
    timeout: float = 60.0
    max_retries: int = 3
    retry_wait: float = 1.0


class ChatClient:
    """Thin synchronous client with bounded retries on transport failures."""

    def __init__(self, config: Optional[ChatConfig] = None,
                 session: Optional[requests.Session] = None):
        self.config = config or ChatConfig()
        self.session = session or requests.Session()

    def complete(self, system: str, user: str) -> str:
        return self.complete_messages([
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ])

    def complete_messages(self, messages: list) -> str:
        payload = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        last_error = None
        for attempt in range(self.config.max_retries):
            try:
                resp = self.session.post(self.config.endpoint, json=payload,
                                         headers=headers, timeout=self.config.timeout)
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("chat endpoint unreachable (attempt %d): %s", attempt + 1, exc)
                time.sleep(self.config.retry_wait * (attempt + 1))
                continue
            if resp.status_code >= 500:
                last_error = RuntimeError(f"server error {resp.status_code}: {resp.text[:500]}")
                time.sleep(self.config.retry_wait * (attempt + 1))
                continue
            if resp.status_code != 200:
                raise TransportError(f"chat endpoint returned {resp.status_code}: {resp.text[:500]}")
            try:
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BadReplyError(f"malformed chat response: {exc}", raw=resp.text[:2000])
        raise TransportError(f"chat endpoint failed after {self.config.max_retries} attempts: {last_error}")


class MockChatClient:
    """Deterministic stand-in: replays scripted replies and records calls.

    ``replies`` may be a list (consumed in order, last one repeating) or a
    callable (system, user) -> str.
    """

    def __init__(self, replies):
        if callable(replies):
            self._fn = replies
            self._list = None
        else:
            self._fn = None
            self._list = list(replies)
            if not self._list:
                raise ValueError("need at least one scripted reply")
        self.calls: list[tuple[str, str]] = []

    def complete(self, system: str, user: str) -> str:
        self.calls.append((system, user))
        if self._fn is not None:
            return self._fn(system, user)
        i = min(len(self.calls) - 1, len(self._list) - 1)
        return self._list[i]
