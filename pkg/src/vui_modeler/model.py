"""Finite-state behavior model built on the fly while talking to an app.

The model is the five-tuple (Q, inputs-per-state, transitions, initial, finals)
plus per-input bookkeeping (how often each phrase was sent and whether it
led anywhere useful).  Every mutation is appended to ``journal`` so a test
transcript doubles as an event log that can be replayed with :func:`replay`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

START = "<START>"
LAUNCH = "<LAUNCH>"
CONFUSED = "<CONFUSED>"


class ModelError(Exception):
    pass


class EmptyLabel(ModelError):
    pass


class UnknownState(ModelError):
    pass


class UnknownInput(ModelError):
    pass


class ParseError(ModelError):
    pass


class Validity(str, Enum):
    UNKNOWN = "Unknown"
    VALID = "Valid"
    INVALID = "Invalid"


class Origin(str, Enum):
    GATEWAY = "gateway"
    FALLBACK = "fallback"


def normalize(text: str) -> str:
    """Whitespace-collapsed, case-folded form used for exact-text matching."""
    return re.sub(r"\s+", " ", text).strip().casefold()


@dataclass
class State:
    id: int
    label: str
    variants: list[str] = field(default_factory=list)
    is_final: bool = False
    is_confusion: bool = False


@dataclass
class InputEventRecord:
    phrase: str
    invocation_count: int = 0
    validity: Validity = Validity.UNKNOWN
    origin: Origin = Origin.GATEWAY


@dataclass
class Transition:
    src: int
    input: str
    dst: int
    count: int = 1


class BehaviorModel:
    def __init__(self) -> None:
        self._states: dict[int, State] = {}
        self._inputs: dict[int, list[InputEventRecord]] = {}
        self._transitions: list[Transition] = []
        self._by_text: dict[str, int] = {}
        self._next_id = 0
        self.journal: list[list[Any]] = []
        self.initial = self._create(START, variants=[])
        self.journal.clear()

    # -- queries ---------------------------------------------------------

    @property
    def states(self) -> list[State]:
        return list(self._states.values())

    @property
    def transitions(self) -> list[Transition]:
        return list(self._transitions)

    @property
    def finals(self) -> set[int]:
        return {s.id for s in self._states.values() if s.is_final}

    def state(self, sid: int) -> State:
        try:
            return self._states[sid]
        except KeyError:
            raise UnknownState(sid) from None

    def __contains__(self, sid: object) -> bool:
        return sid in self._states

    def lookup(self, text: str) -> int | None:
        """Id of the state owning ``text`` as a label or variant, if any."""
        return self._by_text.get(normalize(text))

    def label(self, sid: int) -> str:
        return self.state(sid).label

    def sigma(self, sid: int) -> list[InputEventRecord]:
        self.state(sid)
        return [
            InputEventRecord(r.phrase, r.invocation_count, r.validity, r.origin)
            for r in self._inputs.get(sid, [])
        ]

    def phrases(self, sid: int) -> list[str]:
        self.state(sid)
        return [r.phrase for r in self._inputs.get(sid, [])]

    def delta_from(self, sid: int) -> list[Transition]:
        self.state(sid)
        return [
            Transition(t.src, t.input, t.dst, t.count)
            for t in self._transitions
            if t.src == sid
        ]

    def targets(self, sid: int, phrase: str) -> list[int]:
        """States reached so far from ``sid`` via ``phrase``, most observed first."""
        hits = [t for t in self._transitions if t.src == sid and t.input == phrase]
        hits.sort(key=lambda t: -t.count)
        return [t.dst for t in hits]

    def record(self, sid: int, phrase: str) -> InputEventRecord:
        self.state(sid)
        for rec in self._inputs.get(sid, []):
            if rec.phrase == phrase:
                return rec
        raise UnknownInput((sid, phrase))

    # -- mutations -------------------------------------------------------

    def _create(self, label: str, variants: list[str], is_confusion: bool = False) -> int:
        sid = self._next_id
        self._next_id += 1
        self._states[sid] = State(sid, label, list(variants), is_confusion=is_confusion)
        self._by_text.setdefault(normalize(label), sid)
        for v in variants:
            self._by_text.setdefault(normalize(v), sid)
        return sid

    def ensure_state(self, label: str, is_confusion: bool = False) -> int:
        if not label or not label.strip():
            raise EmptyLabel("state label must be non-empty")
        sid = self.lookup(label)
        if sid is not None:
            return sid
        self.journal.append(["ensure_state", label, is_confusion])
        return self._create(label, [label], is_confusion=is_confusion)

    def merge_output(self, raw_output: str, into: int) -> None:
        state = self.state(into)
        key = normalize(raw_output)
        if any(normalize(v) == key for v in state.variants):
            return
        if into == self.initial:
            raise ModelError("<START> has no output variants")
        owner = self._by_text.get(key)
        if owner is not None and owner != into:
            raise ModelError(f"{raw_output!r} already belongs to state {owner}")
        self.journal.append(["merge_output", raw_output, into])
        state.variants.append(raw_output)
        self._by_text.setdefault(key, into)

    def add_inputs(self, sid: int, phrases: Iterable[str], origin: Origin = Origin.GATEWAY) -> list[str]:
        """Append unseen phrases to the state's input set; returns the ones added."""
        self.state(sid)
        records = self._inputs.get(sid, [])
        known = {r.phrase for r in records}
        added = []
        for p in phrases:
            if p and p not in known:
                known.add(p)
                added.append(p)
                records.append(InputEventRecord(p, origin=Origin(origin)))
        if added:
            self._inputs[sid] = records
            self.journal.append(["add_inputs", sid, added, Origin(origin).value])
        return added

    def record_interaction(self, src: int, phrase: str, raw_output: str, resolved_to: int) -> None:
        rec = self.record(src, phrase)
        target = self.state(resolved_to)
        self.journal.append(["record_interaction", src, phrase, raw_output, resolved_to])
        rec.invocation_count += 1
        for t in self._transitions:
            if t.src == src and t.input == phrase and t.dst == resolved_to:
                t.count += 1
                break
        else:
            self._transitions.append(Transition(src, phrase, resolved_to, 1))
        # Latest outcome decides validity; Invalid persists until a distinct,
        # non-confusion state is reached through this input.
        if resolved_to != src and not target.is_confusion:
            rec.validity = Validity.VALID
        else:
            rec.validity = Validity.INVALID

    def set_validity(self, sid: int, phrase: str, validity: Validity) -> None:
        rec = self.record(sid, phrase)
        validity = Validity(validity)
        if validity is Validity.UNKNOWN and rec.invocation_count:
            raise ModelError("an invoked input cannot go back to Unknown")
        if validity is not Validity.UNKNOWN and not rec.invocation_count:
            raise ModelError("validity of a never-invoked input stays Unknown")
        self.journal.append(["set_validity", sid, phrase, validity.value])
        rec.validity = validity

    def mark_final(self, sid: int) -> None:
        state = self.state(sid)
        if not state.is_final:
            self.journal.append(["mark_final", sid])
            state.is_final = True

    # -- integrity -------------------------------------------------------

    def validate(self) -> None:
        """Raise ModelError if any structural invariant is broken."""
        if self.initial not in self._states or self._states[self.initial].label != START:
            raise ModelError("initial state missing")
        if not self.finals <= set(self._states):
            raise ModelError("final state outside Q")
        for sid, st in self._states.items():
            if not st.label:
                raise ModelError(f"state {sid} has an empty label")
            if sid != self.initial and not st.variants:
                raise ModelError(f"state {sid} has no variants")
            for v in st.variants:
                if self._by_text.get(normalize(v)) != sid:
                    raise ModelError(f"variant {v!r} of state {sid} resolves elsewhere")
        for sid, records in self._inputs.items():
            if sid not in self._states:
                raise ModelError(f"inputs keyed by unknown state {sid}")
            for r in records:
                if (r.validity is Validity.UNKNOWN) != (r.invocation_count == 0):
                    raise ModelError(f"validity/count mismatch for {r.phrase!r} at {sid}")
        sent: dict[tuple[int, str], int] = {}
        for t in self._transitions:
            if t.src not in self._states or t.dst not in self._states:
                raise ModelError(f"transition endpoint outside Q: {t}")
            if t.count < 1:
                raise ModelError(f"non-positive transition count: {t}")
            self.record(t.src, t.input)
            sent[(t.src, t.input)] = sent.get((t.src, t.input), 0) + t.count
        for sid, records in self._inputs.items():
            for r in records:
                if sent.get((sid, r.phrase), 0) != r.invocation_count:
                    raise ModelError(f"invocation count drift for {r.phrase!r} at {sid}")

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "states": [
                {
                    "id": s.id,
                    "label": s.label,
                    "variants": list(s.variants),
                    "is_final": s.is_final,
                    "is_confusion": s.is_confusion,
                }
                for s in self._states.values()
            ],
            "inputs": {
                str(sid): [
                    {
                        "phrase": r.phrase,
                        "count": r.invocation_count,
                        "validity": r.validity.value,
                        "origin": r.origin.value,
                    }
                    for r in records
                ]
                for sid, records in self._inputs.items()
            },
            "transitions": [
                {"from": t.src, "input": t.input, "to": t.dst, "count": t.count}
                for t in self._transitions
            ],
            "initial": self.initial,
            "finals": sorted(self.finals),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BehaviorModel":
        try:
            m = cls.__new__(cls)
            m._states, m._inputs, m._transitions, m._by_text = {}, {}, [], {}
            m.journal = []
            for s in doc["states"]:
                sid = int(s["id"])
                m._states[sid] = State(
                    sid,
                    str(s["label"]),
                    [str(v) for v in s["variants"]],
                    bool(s["is_final"]),
                    bool(s["is_confusion"]),
                )
                m._by_text.setdefault(normalize(s["label"]), sid)
                for v in s["variants"]:
                    m._by_text.setdefault(normalize(v), sid)
            for key, records in doc["inputs"].items():
                m._inputs[int(key)] = [
                    InputEventRecord(
                        str(r["phrase"]),
                        int(r["count"]),
                        Validity(r["validity"]),
                        Origin(r["origin"]),
                    )
                    for r in records
                ]
            for t in doc["transitions"]:
                m._transitions.append(
                    Transition(int(t["from"]), str(t["input"]), int(t["to"]), int(t["count"]))
                )
            m.initial = int(doc["initial"])
            finals = {int(f) for f in doc["finals"]}
            for f in finals:
                if f not in m._states:
                    raise ParseError(f"final {f} is not a state")
            if {s.id for s in m._states.values() if s.is_final} != finals:
                raise ParseError("'finals' disagrees with per-state is_final flags")
            m._next_id = max(m._states, default=-1) + 1
            m.validate()
        except ParseError:
            raise
        except (KeyError, TypeError, ValueError, ModelError) as exc:
            raise ParseError(f"malformed model document: {exc!r}") from exc
        return m

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BehaviorModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return (
            f"BehaviorModel(|Q|={len(self._states)}, |delta|={len(self._transitions)}, "
            f"finals={sorted(self.finals)})"
        )

    def export(self, fmt: str = "json") -> str:
        if fmt == "json":
            return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)
        if fmt == "dot":
            return to_dot(self)
        raise ValueError(f"unknown export format {fmt!r}")


def new_model() -> BehaviorModel:
    return BehaviorModel()


def import_json(text: str) -> BehaviorModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc)) from exc
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    return BehaviorModel.from_dict(doc)


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def to_dot(model: BehaviorModel) -> str:
    lines = ["digraph behavior {", "  rankdir=LR;"]
    for s in model.states:
        shape = "doublecircle" if s.is_final else "circle"
        lines.append(f"  s{s.id} [label={_dot_quote(s.label)}, shape={shape}];")
    for t in model.transitions:
        lines.append(f"  s{t.src} -> s{t.dst} [label={_dot_quote(f'{t.input} ×{t.count}')}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def replay(ops: Iterable[list[Any]]) -> BehaviorModel:
    """Rebuild a model from journal entries, in order."""
    m = BehaviorModel()
    for op in ops:
        name, args = op[0], op[1:]
        if name == "ensure_state":
            m.ensure_state(args[0], is_confusion=bool(args[1]))
        elif name == "merge_output":
            m.merge_output(args[0], int(args[1]))
        elif name == "add_inputs":
            m.add_inputs(int(args[0]), args[1], Origin(args[2]))
        elif name == "record_interaction":
            m.record_interaction(int(args[0]), args[1], args[2], int(args[3]))
        elif name == "set_validity":
            m.set_validity(int(args[0]), args[1], Validity(args[2]))
        elif name == "mark_final":
            m.mark_final(int(args[0]))
        else:
            raise ParseError(f"unknown journal op {name!r}")
    return m
