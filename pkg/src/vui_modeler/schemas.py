"""Request/response models shared by the HTTP service and the CLI."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

Backend = Literal["perfect", "noisy", "remote"]
Mode = Literal["elevate", "chatbot", "random", "weighted"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GatewayOptions(_Strict):
    backend: Backend = "perfect"
    seed: int = 0
    error_rate: float = Field(0.3, ge=0.0, le=1.0)
    endpoint: Optional[str] = None
    model_name: str = "gpt-4"
    temperature: float = 0.0
    max_feedback_rounds: int = Field(3, ge=1)
    context_limit: Optional[int] = Field(None, gt=0)
    history_window: int = 8
    requests_per_minute: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _remote_needs_endpoint(self) -> "GatewayOptions":
        if self.backend == "remote" and not self.endpoint:
            raise ValueError("the remote backend needs an endpoint")
        return self


class TestRequest(_Strict):
    __test__ = False

    target: Optional[str] = Field(None, description="spec path, target_config path, or URL")
    spec: Optional[dict[str, Any]] = Field(None, description="inline skill spec")
    mode: Mode = "elevate"
    gateway: GatewayOptions = Field(default_factory=GatewayOptions)
    seed: int = 0
    max_rounds: Optional[int] = Field(None, ge=0)
    time_limit: Optional[float] = Field(None, gt=0)
    target_timeout_s: float = Field(15.0, gt=0)
    relaunch_cap: int = Field(10, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "TestRequest":
        if (self.target is None) == (self.spec is None):
            raise ValueError("give exactly one of target or spec")
        if self.max_rounds is None and self.time_limit is None:
            raise ValueError("give max_rounds or time_limit")
        return self


class ReportSummary(_Strict):
    tester: str
    rounds: int
    states: int
    transitions: int
    relaunches: int
    coverage: Optional[float] = None


class TestResponse(_Strict):
    __test__ = False

    summary: ReportSummary
    report: dict[str, Any]


class CompareRequest(_Strict):
    corpus: Optional[str] = Field(None, description="directory of skill spec JSON files")
    specs: Optional[list[dict[str, Any]]] = None
    modes: list[Mode] = Field(default_factory=lambda: ["elevate", "chatbot", "random", "weighted"],
                              min_length=1)
    gateway: GatewayOptions = Field(default_factory=GatewayOptions)
    seed: int = 0
    max_rounds: int = Field(20, ge=1)
    rounds_match: bool = False
    union: bool = False
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "CompareRequest":
        if (self.corpus is None) == (self.specs is None):
            raise ValueError("give exactly one of corpus or specs")
        if self.rounds_match and "elevate" not in self.modes:
            raise ValueError("rounds matching needs the elevate mode")
        return self


class CompareResponse(_Strict):
    csv: str
    final: dict[str, float]
    rounds: int
    skills: int


class GenCorpusRequest(_Strict):
    seed: int = 0
    count: int = Field(10, ge=0)
    sizes: tuple[int, int] = (5, 15)
    variants: tuple[int, int] = (2, 4)
    branching: tuple[int, int] = (2, 4)


class GenCorpusResponse(_Strict):
    specs: list[dict[str, Any]]


class ExportRequest(_Strict):
    report: dict[str, Any]
    format: Literal["dot", "json"] = "dot"


class ExportResponse(_Strict):
    text: str


class SkillUpload(_Strict):
    spec: dict[str, Any]
    seed: int = 0


class SkillHandle(_Strict):
    skill_id: str


class Converse(_Strict):
    session: str
    input: Optional[str] = None


class Utterance(_Strict):
    output: str
    ended: bool
    eval: Optional[dict[str, Any]] = None


class ErrorBody(_Strict):
    error: str
    kind: Literal["config", "target", "internal"]
