"""Scripted conversational apps used as local test targets.

A skill is a small state machine whose states speak one of several
paraphrases and move on when the user's (normalized) input exactly matches
a transition pattern.  Anything else triggers the state's fallback, which
always contains a confusion phrase.  Ground-truth bookkeeping travels in
``AppOutput.eval_meta`` and is never handed to the tester.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any

from vui_modeler.model import LAUNCH, BehaviorModel, Origin, normalize
from vui_modeler.questions import is_confusion


class SchemaError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


class SessionEnded(RuntimeError):
    pass


@dataclass
class Transition:
    patterns: list[str]
    to: str


@dataclass
class Fallback:
    utterances: list[str]
    to: str


@dataclass
class SpecState:
    id: str
    utterances: list[str]
    transitions: list[Transition] = field(default_factory=list)
    fallback: Fallback | None = None
    is_final: bool = False


@dataclass
class SkillSpec:
    name: str
    invocation: str
    initial: str
    states: list[SpecState]

    def state(self, sid: str) -> SpecState:
        for s in self.states:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def to_dict(self) -> dict:
        out_states = []
        for s in self.states:
            d: dict[str, Any] = {
                "id": s.id,
                "utterances": list(s.utterances),
                "transitions": [{"patterns": list(t.patterns), "to": t.to} for t in s.transitions],
            }
            if s.fallback is not None:
                d["fallback"] = {"utterances": list(s.fallback.utterances), "to": s.fallback.to}
            d["is_final"] = s.is_final
            out_states.append(d)
        return {"name": self.name, "invocation": self.invocation, "initial": self.initial,
                "states": out_states}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


def _need(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise SchemaError(path, message)


def _str_list(value: Any, path: str) -> list[str]:
    _need(isinstance(value, list) and value, path, "must be a non-empty list")
    for i, v in enumerate(value):
        _need(isinstance(v, str) and v.strip(), f"{path}[{i}]", "must be a non-empty string")
    return list(value)


def load_spec(document: str | bytes | dict) -> SkillSpec:
    """Parse and validate a skill document (JSON text or already-decoded dict)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"invalid JSON: {exc}") from exc
    doc = document
    _need(isinstance(doc, dict), "$", "must be an object")
    for key in ("name", "invocation", "initial"):
        _need(isinstance(doc.get(key), str) and doc[key], f"$.{key}", "must be a non-empty string")
    raw_states = doc.get("states")
    _need(isinstance(raw_states, list) and raw_states, "$.states", "must be a non-empty list")

    states: list[SpecState] = []
    for i, rs in enumerate(raw_states):
        p = f"$.states[{i}]"
        _need(isinstance(rs, dict), p, "must be an object")
        _need(isinstance(rs.get("id"), str) and rs["id"], f"{p}.id", "must be a non-empty string")
        is_final = rs.get("is_final", False)
        _need(isinstance(is_final, bool), f"{p}.is_final", "must be a boolean")
        transitions = []
        raw_t = rs.get("transitions", [])
        _need(isinstance(raw_t, list), f"{p}.transitions", "must be a list")
        for j, rt in enumerate(raw_t):
            tp = f"{p}.transitions[{j}]"
            _need(isinstance(rt, dict), tp, "must be an object")
            _need(isinstance(rt.get("to"), str), f"{tp}.to", "must be a state id")
            transitions.append(Transition(_str_list(rt.get("patterns"), f"{tp}.patterns"), rt["to"]))
        fallback = None
        if rs.get("fallback") is not None:
            fp = f"{p}.fallback"
            rf = rs["fallback"]
            _need(isinstance(rf, dict), fp, "must be an object")
            _need(isinstance(rf.get("to"), str), f"{fp}.to", "must be a state id")
            utts = _str_list(rf.get("utterances"), f"{fp}.utterances")
            for k, u in enumerate(utts):
                _need(is_confusion(u), f"{fp}.utterances[{k}]", "must contain a confusion phrase")
            fallback = Fallback(utts, rf["to"])
        else:
            _need(is_final, f"{p}.fallback", "required for non-final states")
        states.append(SpecState(rs["id"], _str_list(rs.get("utterances"), f"{p}.utterances"),
                                transitions, fallback, is_final))

    ids = [s.id for s in states]
    for i, s in enumerate(states):
        _need(s.id not in ids[:i], f"$.states[{i}].id", f"duplicate id {s.id!r}")
    _need(doc["initial"] in ids, "$.initial", f"unknown state {doc['initial']!r}")
    owner: dict[str, int] = {}
    for i, s in enumerate(states):
        for j, t in enumerate(s.transitions):
            _need(t.to in ids, f"$.states[{i}].transitions[{j}].to", f"unknown state {t.to!r}")
        if s.fallback is not None:
            _need(s.fallback.to in ids, f"$.states[{i}].fallback.to", f"unknown state {s.fallback.to!r}")
        for k, u in enumerate(s.utterances):
            key = normalize(u)
            _need(owner.get(key, i) == i, f"$.states[{i}].utterances[{k}]",
                  "utterance already used by another state")
            owner[key] = i

    spec = SkillSpec(doc["name"], doc["invocation"], doc["initial"], states)
    _need(bool(reachable(spec) & {s.id for s in states if s.is_final}), "$.states",
          "no final state is reachable from the initial state")
    return spec


def reachable(spec: SkillSpec) -> set[str]:
    seen = {spec.initial}
    queue = deque([spec.initial])
    while queue:
        s = spec.state(queue.popleft())
        nxt = [t.to for t in s.transitions] + ([s.fallback.to] if s.fallback else [])
        for n in nxt:
            if n not in seen:
                seen.add(n)
                queue.append(n)
    return seen


@dataclass
class AppOutput:
    text: str
    ended: bool
    eval_meta: dict[str, Any]


@dataclass
class Session:
    spec: SkillSpec
    current: str
    rng: random.Random
    rounds: int = 0
    ended: bool = False


def _emit(session: Session, target: str, fallback_text: list[str] | None = None) -> AppOutput:
    state = session.spec.state(target)
    pool = fallback_text if fallback_text is not None else state.utterances
    text = session.rng.choice(pool)
    session.current = target
    session.ended = state.is_final
    return AppOutput(text, session.ended, {"truth_state": target,
                                           "was_fallback": fallback_text is not None})


def launch(spec: SkillSpec, seed: int = 0) -> tuple[Session, AppOutput]:
    session = Session(spec, spec.initial, random.Random(seed))
    return session, _emit(session, spec.initial)


def respond(session: Session, user_input: str) -> AppOutput:
    if session.ended:
        raise SessionEnded("the skill has already ended")
    session.rounds += 1
    said = normalize(user_input)
    state = session.spec.state(session.current)
    for t in state.transitions:
        if any(normalize(p) == said for p in t.patterns):
            return _emit(session, t.to)
    assert state.fallback is not None  # guaranteed for non-final states by load_spec
    return _emit(session, state.fallback.to, state.fallback.utterances)


def variant_truth(spec: SkillSpec) -> dict[str, str]:
    """Normalized utterance text -> owning spec state id (fallback lines excluded)."""
    return {normalize(u): s.id for s in spec.states for u in s.utterances}


def ground_truth(spec: SkillSpec) -> BehaviorModel:
    """The hidden behavior model: one semantic state per spec state, all variants attached."""
    m = BehaviorModel()
    ids = {}
    for s in spec.states:
        sid = m.ensure_state(s.utterances[0])
        for u in s.utterances[1:]:
            m.merge_output(u, sid)
        if s.is_final:
            m.mark_final(sid)
        ids[s.id] = sid
    m.add_inputs(m.initial, [LAUNCH], Origin.FALLBACK)
    m.record_interaction(m.initial, LAUNCH, spec.state(spec.initial).utterances[0], ids[spec.initial])
    for s in spec.states:
        for t in s.transitions:
            phrase = normalize(t.patterns[0])
            if phrase in m.phrases(ids[s.id]):
                continue
            m.add_inputs(ids[s.id], [phrase])
            m.record_interaction(ids[s.id], phrase, spec.state(t.to).utterances[0], ids[t.to])
    return m
