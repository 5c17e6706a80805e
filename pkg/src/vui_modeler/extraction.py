"""Mapping app outputs onto semantic states.

The gateway proposes either an existing state label or the output itself
(meaning "new state"); the state filter accepts or rejects that proposal
and rejected proposals go back to the gateway as feedback.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

from vui_modeler.gateway import ChatMessage, ContextOverflow, Gateway, GatewaySession, OracleRequest
from vui_modeler.model import BehaviorModel, normalize
from vui_modeler.questions import jaccard
from vui_modeler.verdicts import ACCEPT, Verdict

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class MergedInto:
    state: int
    label: str

    def to_dict(self) -> dict:
        return {"kind": "MergedInto", "state": self.state, "label": self.label}


@dataclass(frozen=True)
class NewState:
    label: str

    def to_dict(self) -> dict:
        return {"kind": "NewState", "label": self.label}


StateDecision = Union[MergedInto, NewState]


@dataclass
class Extraction:
    decision: StateDecision
    verdicts: list[Verdict] = field(default_factory=list)
    feedback_rounds: int = 0
    fallback: bool = False


def mergeable_states(model: BehaviorModel) -> list[int]:
    """States an output may be merged into: everything but the start and confusion states."""
    return [s.id for s in model.states if s.id != model.initial and not s.is_confusion]


def _find_label(model: BehaviorModel, text: str) -> int | None:
    key = normalize(text)
    for sid in mergeable_states(model):
        if normalize(model.label(sid)) == key:
            return sid
    return None


def state_filter(candidate: str, raw_output: str, model: BehaviorModel,
                 prev_state: int | None, prev_input: str | None,
                 candidate_inputs: Sequence[str], threshold: float = DEFAULT_THRESHOLD) -> Verdict:
    sid = _find_label(model, candidate)
    is_raw = normalize(candidate) == normalize(raw_output)
    if sid is None and is_raw:
        known = model.lookup(raw_output)
        if known is not None and known in mergeable_states(model):
            sid = known
    if sid is None and not is_raw:
        return Verdict("NoStateError", candidate)
    if sid is not None:
        if jaccard(model.phrases(sid), candidate_inputs) < threshold:
            return Verdict("NotMergeSuggestion", model.label(sid))
        return ACCEPT
    if prev_state is not None and prev_input is not None and prev_state in model:
        for target in model.targets(prev_state, prev_input):
            if target in mergeable_states(model):
                return Verdict("ShouldMergeSuggestion", model.label(target))
    return ACCEPT


def parse_state(reply: str) -> str:
    lines = [ln.strip() for ln in reply.splitlines() if ln.strip()]
    for ln in reversed(lines):
        if ln.lower().startswith("output:"):
            return ln[len("output:"):].strip().strip("\"'`")
    return (lines[-1] if lines else "").strip().strip("\"'`")


def _decide(candidate: str, raw_output: str, model: BehaviorModel) -> StateDecision:
    sid = _find_label(model, candidate)
    if sid is None:
        known = model.lookup(raw_output)
        if known is not None and known in mergeable_states(model):
            sid = known
    if sid is not None:
        return MergedInto(sid, model.label(sid))
    return NewState(raw_output)


def extract_state(raw_output: str, model: BehaviorModel, gateway: Gateway, session: GatewaySession,
                  prev_state: int | None, prev_input: str | None,
                  candidate_inputs: Sequence[str],
                  threshold: float = DEFAULT_THRESHOLD) -> Extraction:
    if not raw_output:
        raise ValueError("raw_output must be non-empty")
    state_ids = mergeable_states(model)
    labels = [model.label(s) for s in state_ids]
    prev_targets = []
    if prev_state is not None and prev_input is not None and prev_state in model:
        prev_targets = [model.label(t) for t in model.targets(prev_state, prev_input)
                        if t in state_ids]
    request = OracleRequest(
        "extraction",
        raw_output,
        state_set=labels,
        hints={
            "candidate_inputs": list(candidate_inputs),
            "state_inputs": {model.label(s): model.phrases(s) for s in state_ids},
            "threshold": threshold,
            "prev_targets": prev_targets,
        },
    )
    slots = {"app_output": raw_output, "state_set": labels}
    result = Extraction(NewState(raw_output))

    kind = "short" if session.started else "long"
    prompt = gateway.templates.render("extraction", kind, slots)
    shown = list(labels)
    while True:
        try:
            reply = gateway.complete(session, [ChatMessage("user", prompt)], request)
            break
        except ContextOverflow:
            # Oldest states go first until the prompt fits.
            if not shown:
                result.fallback = True
                return result
            shown = shown[1:]
            request.state_set = shown
            slots = {**slots, "state_set": shown}
            prompt = gateway.templates.render("extraction", "short", slots)

    limit = gateway.config.max_feedback_rounds
    while True:
        candidate = parse_state(reply)
        verdict = state_filter(candidate, raw_output, model, prev_state, prev_input,
                               candidate_inputs, threshold)
        result.verdicts.append(verdict)
        if verdict.accepted:
            result.decision = _decide(candidate, raw_output, model)
            return result
        if result.feedback_rounds == limit:
            break
        result.feedback_rounds += 1
        label = {
            "NoStateError": "no_state_error",
            "NotMergeSuggestion": "not_merge_suggestion",
            "ShouldMergeSuggestion": "should_merge_suggestion",
        }[verdict.kind]
        fb = gateway.templates.render(
            "extraction", "feedback",
            {**slots, "bad_state": candidate, "state": verdict.ref or candidate}, label,
        )
        reply = gateway.complete(session, [ChatMessage("user", fb)], request)
    result.decision = NewState(raw_output)
    result.fallback = True
    return result
