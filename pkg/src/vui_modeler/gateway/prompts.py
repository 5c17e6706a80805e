"""Prompt templates: loading, validation and slot rendering."""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

PHASES = ("extraction", "generation", "exploration")
KINDS = ("long", "short", "feedback")
PLACEHOLDERS = frozenset(
    {
        "app_output",
        "state_set",
        "inputs",
        "state",
        "delta",
        "sigma",
        "bad_state",
        "bad_input",
        "better_input",
        "few_shots",
    }
)

_FORMATTER = string.Formatter()


class TemplateError(Exception):
    pass


class MissingSlot(KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing slot {self.name!r}"


def placeholders(body: str) -> list[str]:
    names = []
    for _, field_name, _, _ in _FORMATTER.parse(body):
        if field_name is not None and field_name not in names:
            names.append(field_name)
    return names


@dataclass(frozen=True)
class PromptTemplate:
    phase: str
    kind: str
    body: str
    label: str | None = None

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise TemplateError(f"unknown phase {self.phase!r}")
        if self.kind not in KINDS:
            raise TemplateError(f"unknown kind {self.kind!r}")
        unknown = [p for p in placeholders(self.body) if p not in PLACEHOLDERS]
        if unknown:
            raise TemplateError(f"unknown placeholders {unknown} in {self.phase}/{self.kind}")
        if self.kind == "long" and "few_shots" not in placeholders(self.body):
            raise TemplateError(f"long template {self.phase} lacks {{few_shots}}")
        if self.kind == "feedback" and not self.label:
            raise TemplateError("feedback templates need a label")


def _serialize(name: str, value: Any) -> str:
    if name in ("state_set", "inputs"):
        return json.dumps([str(v) for v in value], ensure_ascii=False)
    if name == "delta":
        if isinstance(value, str):
            return value
        return "\n".join(f"delta({s}, {i}) = {n}" for s, i, n in value)
    if name == "sigma":
        if isinstance(value, str):
            return value
        lines = []
        for rec in value:
            if isinstance(rec, (tuple, list)):
                phrase, count, validity = rec
            else:
                phrase, count, validity = rec.phrase, rec.invocation_count, rec.validity
            lines.append(f"{phrase} (invoked {count} times, {getattr(validity, 'value', validity)})")
        return "\n".join(lines)
    return str(value)


def render(template: PromptTemplate, slots: Mapping[str, Any]) -> str:
    out = []
    for literal, field_name, _, _ in _FORMATTER.parse(template.body):
        out.append(literal)
        if field_name is None:
            continue
        if field_name not in slots:
            raise MissingSlot(field_name)
        out.append(_serialize(field_name, slots[field_name]))
    return "".join(out).strip()


_SECTION = re.compile(r"^\[([a-z_]+)\]\s*$", re.MULTILINE)


def _parse_feedback(phase: str, text: str) -> dict[str, PromptTemplate]:
    parts = _SECTION.split(text)
    out = {}
    for label, body in zip(parts[1::2], parts[2::2]):
        out[label] = PromptTemplate(phase, "feedback", body.strip(), label=label)
    return out


class TemplateSet:
    """Per-(phase, kind) templates plus few-shot blocks, read from a directory."""

    def __init__(self, templates: dict[tuple[str, str, str | None], PromptTemplate],
                 few_shots: dict[str, str]) -> None:
        self._templates = templates
        self.few_shots = few_shots

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "TemplateSet":
        root = Path(directory) if directory else Path(
            str(resources.files("vui_modeler.gateway") / "templates")
        )
        templates: dict[tuple[str, str, str | None], PromptTemplate] = {}
        few_shots = {}
        for phase in PHASES:
            for kind in ("long", "short"):
                body = (root / f"{phase}_{kind}.txt").read_text(encoding="utf-8")
                templates[(phase, kind, None)] = PromptTemplate(phase, kind, body.strip())
            fb = (root / f"{phase}_feedback.txt").read_text(encoding="utf-8")
            for label, tpl in _parse_feedback(phase, fb).items():
                templates[(phase, "feedback", label)] = tpl
            shots = root / f"{phase}_few_shots.txt"
            few_shots[phase] = shots.read_text(encoding="utf-8").strip() if shots.exists() else ""
        few_shots["generation"] = _generation_shots(few_shots["generation"].splitlines())
        return cls(templates, few_shots)

    def get(self, phase: str, kind: str, label: str | None = None) -> PromptTemplate:
        try:
            return self._templates[(phase, kind, label)]
        except KeyError:
            raise TemplateError(f"no template for {phase}/{kind}/{label}") from None

    def render(self, phase: str, kind: str, slots: Mapping[str, Any], label: str | None = None) -> str:
        slots = dict(slots)
        slots.setdefault("few_shots", self.few_shots.get(phase, ""))
        return render(self.get(phase, kind, label), slots)


def _generation_shots(lines: Iterable[str]) -> str:
    # Expected outputs come from the rule table so the examples never drift from it.
    from vui_modeler.questions import rule_based_inputs

    blocks = []
    for ln in lines:
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        answer = json.dumps(rule_based_inputs(ln), ensure_ascii=False)
        blocks.append(f'Input: "{ln}"\nOutput: {answer}')
    return "\n\n".join(blocks)
