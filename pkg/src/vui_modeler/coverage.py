"""Semantic-state coverage over time, and cross-tester comparison tables."""

from __future__ import annotations

import csv
import io
from typing import Iterable, Mapping, Sequence

from vui_modeler.extraction import MergedInto, extract_state
from vui_modeler.gateway import Gateway, GatewayConfig
from vui_modeler.model import BehaviorModel, normalize
from vui_modeler.questions import is_confusion, rule_based_inputs
from vui_modeler.runner import CoveragePoint, TestReport


def canonical_map(sentences: Iterable[str], gateway: Gateway | None = None) -> dict[str, str]:
    """Fold sentence states through state extraction; normalized text -> semantic label.

    Confusion replies are skipped: they signal a failed input, not a state.
    """
    gateway = gateway or Gateway(GatewayConfig())
    model = BehaviorModel()
    session = gateway.open_session("extraction", "canonicalize")
    out: dict[str, str] = {}
    for text in sentences:
        if not text or not text.strip() or is_confusion(text):
            continue
        key = normalize(text)
        if key in out:
            continue
        inputs = rule_based_inputs(text)
        ext = extract_state(text, model, gateway, session, None, None, inputs)
        if isinstance(ext.decision, MergedInto):
            sid = ext.decision.state
            model.merge_output(text, sid)
        else:
            sid = model.ensure_state(text)
        model.add_inputs(sid, inputs)
        out[key] = model.label(sid)
    return out


def canonicalize(sentence_states: Iterable[str], gateway: Gateway | None = None) -> set[str]:
    return set(canonical_map(sentence_states, gateway).values())


def _timeline(outputs: Sequence[str | None], key_of) -> list[tuple[int, int]]:
    seen: set = set()
    points = []
    for i, raw in enumerate(outputs, start=1):
        if raw is not None:
            k = key_of(raw)
            if k is not None:
                seen.add(k)
        points.append((i, len(seen) + 1))  # + <START>
    return points


def coverage_timeline(report: TestReport, truth: BehaviorModel | int,
                      labels: Mapping[str, str] | None = None) -> list[CoveragePoint]:
    """Covered semantic states after each round.

    With a ground-truth model, an output counts towards the truth state that
    owns its text.  With an integer ``truth`` (the union total), ``labels``
    must map normalized output text to canonical labels.
    """
    outputs = report.raw_outputs()
    if isinstance(truth, BehaviorModel):
        total = len(truth.states)

        def key_of(raw: str):
            sid = truth.lookup(raw)
            return None if sid is None or sid == truth.initial else sid
    else:
        if labels is None:
            raise ValueError("a union total needs the canonical label map")
        total = int(truth)

        def key_of(raw: str):
            return labels.get(normalize(raw))
    return [CoveragePoint(r, min(c, total), total) for r, c in _timeline(outputs, key_of)]


def union_timelines(reports: Mapping[str, TestReport],
                    gateway: Gateway | None = None) -> dict[str, list[CoveragePoint]]:
    """Timelines when no ground truth exists: total = union of canonical states (+ START)."""
    texts: list[str] = []
    for rep in reports.values():
        texts.extend(r for r in rep.raw_outputs() if r is not None)
    labels = canonical_map(texts, gateway)
    total = len(set(labels.values())) + 1
    return {name: coverage_timeline(rep, total, labels) for name, rep in reports.items()}


def rate_at(points: Sequence[CoveragePoint], round_no: int) -> float:
    """Coverage rate at a round; past the end of a run the last value holds."""
    if not points:
        return 0.0
    best = None
    for p in points:
        if p.round <= round_no:
            best = p
    if best is None:
        return 1 / points[0].total if points[0].total else 0.0
    return best.rate


def mean_rates(timelines: Sequence[Sequence[CoveragePoint]], rounds: int) -> list[float]:
    if not timelines:
        return [0.0] * rounds
    return [sum(rate_at(t, r) for t in timelines) / len(timelines) for r in range(1, rounds + 1)]


def compare(runs: Mapping[str, Sequence[Sequence[CoveragePoint]]], rounds: int | None = None) -> str:
    """CSV of round x tester mean coverage rate.

    ``runs`` maps tester name to the per-skill timelines of that tester.
    """
    if rounds is None:
        rounds = max((p.round for ts in runs.values() for t in ts for p in t), default=0)
    names = list(runs)
    cols = {n: mean_rates(runs[n], rounds) for n in names}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", *names])
    for r in range(rounds):
        w.writerow([r + 1, *(f"{cols[n][r]:.4f}" for n in names)])
    return buf.getvalue()
