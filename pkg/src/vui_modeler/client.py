"""Typed HTTP client for the vui-modeler service."""

from __future__ import annotations

from typing import TypeVar

import httpx
from pydantic import BaseModel

from vui_modeler.schemas import (
    CompareRequest,
    CompareResponse,
    ExportRequest,
    ExportResponse,
    GenCorpusRequest,
    GenCorpusResponse,
    TestRequest,
    TestResponse,
)
from vui_modeler.service import ConfigError, TargetFailure

R = TypeVar("R", bound=BaseModel)


class ServiceClient:
    def __init__(self, base_url: str, timeout_s: float = 600.0,
                 transport: httpx.BaseTransport | None = None) -> None:
        self._http = httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout_s, transport=transport)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _post(self, path: str, req: BaseModel, out: type[R]) -> R:
        try:
            resp = self._http.post(path, json=req.model_dump(mode="json"))
        except httpx.HTTPError as exc:
            raise TargetFailure(f"service unreachable: {exc}") from exc
        if resp.status_code in (400, 422):
            raise ConfigError(_detail(resp))
        if resp.status_code >= 400:
            raise TargetFailure(_detail(resp))
        return out.model_validate(resp.json())

    def test(self, req: TestRequest) -> TestResponse:
        return self._post("/test", req, TestResponse)

    def compare(self, req: CompareRequest) -> CompareResponse:
        return self._post("/compare", req, CompareResponse)

    def gen_corpus(self, req: GenCorpusRequest) -> GenCorpusResponse:
        return self._post("/gen-corpus", req, GenCorpusResponse)

    def export(self, req: ExportRequest) -> ExportResponse:
        return self._post("/export", req, ExportResponse)


def _detail(resp: httpx.Response) -> str:
    try:
        body = resp.json()
    except ValueError:
        return f"HTTP {resp.status_code}: {resp.text[:300]}"
    if isinstance(body, dict):
        return str(body.get("error") or body.get("detail") or body)
    return str(body)
