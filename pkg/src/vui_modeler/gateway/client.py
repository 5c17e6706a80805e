from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import httpx

from vui_modeler.gateway.backends import (
    BackendUnavailable,
    ChatMessage,
    ContextOverflow,
    NoisyBackend,
    OracleRequest,
    PerfectBackend,
    RateLimiter,
    RemoteBackend,
)
from vui_modeler.gateway.prompts import TemplateSet

BACKENDS = ("perfect", "noisy", "remote")


@dataclass
class GatewayConfig:
    backend: str = "perfect"
    endpoint: str | None = None
    model_name: str = "gpt-4"
    temperature: float = 0.0
    seed: int = 0
    error_rate: float = 0.0
    max_feedback_rounds: int = 3
    context_limit: int | None = None
    history_window: int = 8
    requests_per_minute: float | None = None
    timeout_s: float = 60.0
    retry_backoff_s: float = 1.0
    template_dir: str | None = None

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if not 0.0 <= self.error_rate <= 1.0:
            raise ValueError("error_rate must lie in [0, 1]")
        if self.max_feedback_rounds < 1:
            raise ValueError("max_feedback_rounds must be >= 1")
        if self.backend == "remote" and not self.endpoint:
            raise ValueError("remote backend needs an endpoint")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GatewaySession:
    """Chat history for one phase of one app session."""

    phase: str
    key: str
    backend: object
    history_window: int
    transcript: list[ChatMessage] = field(default_factory=list)
    calls: int = 0
    _anchor: int = 0

    @property
    def started(self) -> bool:
        return self.calls > 0

    def context(self, delta: Sequence[ChatMessage]) -> list[ChatMessage]:
        # First exchange (carrying the long prompt) plus a sliding tail.
        head = self.transcript[: self._anchor]
        tail = self.transcript[self._anchor:]
        if self.history_window >= 0:
            tail = tail[len(tail) - min(len(tail), self.history_window):]
        return head + tail + list(delta)

    def append(self, delta: Sequence[ChatMessage], reply: ChatMessage) -> None:
        self.transcript.extend(delta)
        self.transcript.append(reply)
        self.calls += 1
        if self.calls == 1:
            self._anchor = len(self.transcript)


class Gateway:
    """Dispatches phase prompts to the configured backend.

    ``truth`` maps normalized app-output text to a ground-truth state key and
    is only consulted by the oracle backends.
    """

    def __init__(self, config: GatewayConfig | None = None, truth: Mapping[str, str] | None = None,
                 templates: TemplateSet | None = None,
                 transport: httpx.BaseTransport | None = None) -> None:
        self.config = config or GatewayConfig()
        self.truth = dict(truth or {})
        self.templates = templates or TemplateSet.load(self.config.template_dir)
        self.transport = transport
        self._limiter = RateLimiter(self.config.requests_per_minute)
        self._remote: RemoteBackend | None = None

    def with_truth(self, truth: Mapping[str, str] | None) -> "Gateway":
        return Gateway(self.config, truth, self.templates, self.transport)

    def _session_seed(self, phase: str, key: str) -> int:
        return zlib.crc32(f"{self.config.seed}:{key}:{phase}".encode())

    def _backend(self, phase: str, key: str):
        cfg = self.config
        if cfg.backend == "perfect":
            return PerfectBackend(self.truth, self._session_seed(phase, key))
        if cfg.backend == "noisy":
            return NoisyBackend(self.truth, self._session_seed(phase, key), cfg.error_rate)
        if self._remote is None:
            self._remote = RemoteBackend(
                cfg.endpoint or "",
                cfg.model_name,
                cfg.temperature,
                timeout_s=cfg.timeout_s,
                backoff_s=cfg.retry_backoff_s,
                limiter=self._limiter,
                transport=self.transport,
            )
        return self._remote

    def open_session(self, phase: str, key: str = "0") -> GatewaySession:
        return GatewaySession(phase, key, self._backend(phase, key), self.config.history_window)

    def complete(self, session: GatewaySession, messages_delta: Sequence[ChatMessage],
                 request: OracleRequest | None = None) -> str:
        if not messages_delta:
            raise ValueError("nothing to send")
        context = session.context(messages_delta)
        limit = self.config.context_limit
        if limit is not None and sum(len(m.text) for m in context) > limit:
            raise ContextOverflow(f"{session.phase} context exceeds {limit} characters")
        reply = session.backend.reply(context, request)
        if not reply or not reply.strip():
            reply = "(empty)"
        session.append(messages_delta, ChatMessage("assistant", reply))
        return reply


__all__ = [
    "BackendUnavailable",
    "ChatMessage",
    "ContextOverflow",
    "Gateway",
    "GatewayConfig",
    "GatewaySession",
    "OracleRequest",
]
