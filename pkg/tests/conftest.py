from __future__ import annotations

import json
import socket
import threading
import time
from pathlib import Path

import pytest

from vui_modeler.gateway import Gateway, GatewayConfig
from vui_modeler.simulator import SkillSpec, load_spec, variant_truth

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


def load_fixture(name: str) -> SkillSpec:
    return load_spec((FIXTURES / f"{name}.json").read_text(encoding="utf-8"))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def pet_spec() -> SkillSpec:
    return load_fixture("pet_walker")


@pytest.fixture
def linear_spec() -> SkillSpec:
    return load_fixture("linear5")


@pytest.fixture
def minimal_doc() -> dict:
    return json.loads((FIXTURES / "minimal.json").read_text(encoding="utf-8"))


def oracle(spec: SkillSpec | None = None, **kw) -> Gateway:
    truth = variant_truth(spec) if spec is not None else None
    return Gateway(GatewayConfig(**kw), truth=truth)


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def live_service():
    """The FastAPI app served by uvicorn on a background thread."""
    import uvicorn

    from vui_modeler.service import create_app

    port = free_port()
    server = uvicorn.Server(uvicorn.Config(create_app(), host="127.0.0.1", port=port,
                                           log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("service did not start")
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class ScriptedBackend:
    """Replies from a fixed list, recording every context it was shown."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.seen = []

    def reply(self, messages, req):
        self.seen.append(list(messages))
        if not self.replies:
            raise AssertionError("scripted backend ran out of replies")
        return self.replies.pop(0)


class ScriptedGateway(Gateway):
    def __init__(self, replies, **cfg):
        super().__init__(GatewayConfig(**cfg))
        self.backend = ScriptedBackend(replies)

    def _backend(self, phase, key):
        return self.backend


class _Criterion:
    def __init__(self, config, number: int, title: str) -> None:
        self.config, self.number, self.title = config, number, title
        self.detail = ""

    def __enter__(self) -> "_Criterion":
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        verdict = "PASS" if exc_type is None else "FAIL"
        line = f"criterion {self.number} {verdict}: {self.title}"
        if self.detail:
            line += f" ({self.detail})"
        self.config._acceptance_lines.append((self.number, line))
        print(line)
        return False


@pytest.fixture
def criterion(request):
    """Context manager recording one PASS/FAIL line per acceptance criterion."""
    if not hasattr(request.config, "_acceptance_lines"):
        request.config._acceptance_lines = []
    return lambda number, title: _Criterion(request.config, number, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
