"""Reply producers behind the gateway.

``PerfectBackend`` answers from ground truth and the rule-based policies, so
a run with it is a deterministic upper bound.  ``NoisyBackend`` wraps it and,
with probability ``error_rate`` per reply, injects one fault from a catalog
chosen so that every checker branch can be exercised.  ``RemoteBackend``
talks to a chat-completion endpoint.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import httpx

from vui_modeler.model import InputEventRecord, normalize
from vui_modeler.questions import jaccard, rule_based_inputs


class BackendUnavailable(Exception):
    pass


class ContextOverflow(Exception):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    text: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad role {self.role!r}")
        if not self.text:
            raise ValueError("chat message text must be non-empty")

    def to_wire(self) -> dict[str, str]:
        return {"role": self.role, "content": self.text}


@dataclass
class OracleRequest:
    """Structured view of a prompt, readable only by the oracle backends."""

    phase: str
    app_output: str = ""
    state_set: list[str] = field(default_factory=list)
    sigma: list[InputEventRecord] = field(default_factory=list)
    hints: dict[str, Any] = field(default_factory=dict)


FAULTS = {
    "extraction": ("out_of_set_state", "wrong_merge", "raw_echo"),
    "generation": ("empty_list", "overlong_items"),
    "exploration": ("out_of_set_input", "suboptimal_input"),
}

_CHATBOT_WRAPPERS = (
    "{x}",
    "{x}",
    "I'd like {x}, please.",
    "Hmm, let me think. I will go with {x}!",
    "Sure! {x} sounds like a great choice to me.",
)


def format_list(items: Sequence[str]) -> str:
    return "Output: " + json.dumps(list(items), ensure_ascii=False)


def format_choice(choice: str, steps: Sequence[str] = ("", "", "")) -> str:
    s1, s2, s3 = steps
    return f"step1: {s1}\nstep2: {s2}\nstep3: {s3}\nOutput: {choice}"


class PerfectBackend:
    def __init__(self, truth: Mapping[str, str] | None = None, seed: int = 0) -> None:
        self.truth = dict(truth or {})
        self.rng = random.Random(seed)

    def _truth(self, text: str) -> str | None:
        return self.truth.get(normalize(text))

    def correct_state(self, req: OracleRequest) -> str:
        t = self._truth(req.app_output)
        if t is not None:
            for label in req.state_set:
                if self._truth(label) == t:
                    return label
        return req.app_output

    def reply(self, messages: Sequence[ChatMessage], req: OracleRequest | None) -> str:
        if req is None:
            raise BackendUnavailable("oracle backends need a structured request")
        if req.phase == "extraction":
            return "Output: " + self.correct_state(req)
        if req.phase == "generation":
            return format_list(rule_based_inputs(req.app_output))
        if req.phase == "exploration":
            from vui_modeler.exploration import fallback_select_records

            choice = fallback_select_records(req.sigma)
            return format_choice(
                choice,
                (
                    "drop inputs marked Invalid",
                    "prefer inputs never sent",
                    f"'{choice}' is the least-sent usable input",
                ),
            )
        if req.phase == "chatbot":
            x = self.rng.choice(rule_based_inputs(req.app_output))
            return self.rng.choice(_CHATBOT_WRAPPERS).format(x=x)
        raise BackendUnavailable(f"unknown phase {req.phase!r}")


class NoisyBackend(PerfectBackend):
    def __init__(self, truth: Mapping[str, str] | None = None, seed: int = 0,
                 error_rate: float = 0.1) -> None:
        super().__init__(truth, seed)
        self.error_rate = error_rate
        self.faults: list[str] = []

    def applicable_faults(self, req: OracleRequest) -> list[str]:
        if req.phase == "extraction":
            out = ["out_of_set_state"]
            if self._wrong_merge_targets(req):
                out.append("wrong_merge")
            if req.hints.get("prev_targets") and self.correct_state(req) != req.app_output:
                out.append("raw_echo")
            return out
        if req.phase == "generation":
            return list(FAULTS["generation"])
        if req.phase == "exploration":
            from vui_modeler.exploration import dominated

            out = ["out_of_set_input"]
            if any(dominated(r.phrase, req.sigma) for r in req.sigma):
                out.append("suboptimal_input")
            return out
        return []

    def _wrong_merge_targets(self, req: OracleRequest) -> list[str]:
        cand = req.hints.get("candidate_inputs", [])
        inputs = req.hints.get("state_inputs", {})
        threshold = req.hints.get("threshold", 0.5)
        return [
            lbl for lbl in req.state_set
            if lbl in inputs and jaccard(inputs[lbl], cand) < threshold
        ]

    def reply(self, messages: Sequence[ChatMessage], req: OracleRequest | None) -> str:
        if req is None or self.rng.random() >= self.error_rate:
            return super().reply(messages, req)
        faults = self.applicable_faults(req)
        if not faults:
            return super().reply(messages, req)
        fault = self.rng.choice(faults)
        self.faults.append(fault)
        return self._inject(fault, req)

    def _inject(self, fault: str, req: OracleRequest) -> str:
        rng = self.rng
        if fault == "out_of_set_state":
            taken = {normalize(s) for s in req.state_set} | {normalize(req.app_output)}
            while True:
                label = f"State {rng.randint(100, 999)}"
                if normalize(label) not in taken:
                    return "Output: " + label
        if fault == "wrong_merge":
            return "Output: " + rng.choice(self._wrong_merge_targets(req))
        if fault == "raw_echo":
            return "Output: " + req.app_output
        if fault == "empty_list":
            return "Output: []"
        if fault == "overlong_items":
            base = rule_based_inputs(req.app_output)
            return format_list(
                [f"i would really like to choose the option called {x} right now" for x in base]
            )
        if fault == "out_of_set_input":
            known = {r.phrase for r in req.sigma}
            n = 0
            while f"something else {n}" in known:
                n += 1
            return format_choice(f"something else {n}", ("none", "none", "guess"))
        if fault == "suboptimal_input":
            from vui_modeler.exploration import dominated

            bad = [r.phrase for r in req.sigma if dominated(r.phrase, req.sigma)]
            return format_choice(rng.choice(bad), ("none", "none", "pick a familiar one"))
        raise ValueError(fault)


class RateLimiter:
    """Spaces calls at least 60/rpm seconds apart across all threads."""

    def __init__(self, requests_per_minute: float | None) -> None:
        self.interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self._lock = threading.Lock()
        self._next = 0.0

    def acquire(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            wait = self._next - now
            self._next = max(now, self._next) + self.interval
        if wait > 0:
            time.sleep(wait)


class RemoteBackend:
    def __init__(self, endpoint: str, model_name: str, temperature: float = 0.0,
                 timeout_s: float = 60.0, attempts: int = 3, backoff_s: float = 1.0,
                 limiter: RateLimiter | None = None,
                 transport: httpx.BaseTransport | None = None) -> None:
        if not endpoint:
            raise ValueError("remote backend needs an endpoint")
        self.endpoint = endpoint
        self.model_name = model_name
        self.temperature = temperature
        self.timeout_s = timeout_s
        self.attempts = attempts
        self.backoff_s = backoff_s
        self.limiter = limiter or RateLimiter(None)
        self.transport = transport

    def payload(self, messages: Sequence[ChatMessage]) -> dict:
        return {
            "model": self.model_name,
            "messages": [m.to_wire() for m in messages],
            "temperature": self.temperature,
        }

    def reply(self, messages: Sequence[ChatMessage], req: OracleRequest | None = None) -> str:
        headers = {}
        key = os.environ.get("ELEVATE_API_KEY")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            self.limiter.acquire()
            try:
                with httpx.Client(timeout=self.timeout_s, transport=self.transport) as client:
                    resp = client.post(self.endpoint, json=self.payload(messages), headers=headers)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = BackendUnavailable(f"HTTP {resp.status_code}")
                    continue
                resp.raise_for_status()
                return str(resp.json()["choices"][0]["message"]["content"])
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last = exc
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise BackendUnavailable(f"unexpected reply shape: {exc!r}") from exc
        raise BackendUnavailable(f"{self.endpoint} unreachable after {self.attempts} attempts: {last}")
