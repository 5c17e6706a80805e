"""Uniform access to conversation targets.

A target is either a local skill spec driven through the simulator, or a
remote endpoint speaking a tiny JSON protocol:

* HTTP: ``POST url`` with ``{"session": id, "input": text | null}`` and a
  ``{"output": text, "ended": bool}`` reply.  ``input: null`` opens the
  dialogue and returns the welcome output.
* TCP (``tcp://host:port``): the same objects, one JSON document per line.

Evaluation metadata (the simulator's ground-truth state, or an optional
``eval`` object in remote replies) is kept on ``TargetHandle.eval_log`` and
never returned from :func:`send`.
"""

from __future__ import annotations

import json
import socket
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any
from urllib.parse import urlparse

import httpx

from vui_modeler.simulator import SessionEnded, SkillSpec, launch, load_spec, respond

DEFAULT_TIMEOUT_S = 15.0


class TargetError(Exception):
    pass


class TargetUnavailable(TargetError):
    """The target could not be opened."""


class TargetTimeout(TargetError):
    """The target did not answer in time; the dialogue is treated as ended."""


class ProtocolError(TargetError):
    """A remote target replied with something other than ``{output, ended}``."""


@dataclass
class TargetConfig:
    kind: str
    location: str = ""
    timeout_s: float = DEFAULT_TIMEOUT_S
    spec: SkillSpec | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("local", "remote"):
            raise ValueError(f"target kind must be local or remote, got {self.kind!r}")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.kind == "remote" and not self.location:
            raise ValueError("remote targets need a URL")
        if self.kind == "local" and self.spec is None:
            if not self.location:
                raise ValueError("local targets need a spec or a spec path")
            self.spec = load_spec(Path(self.location).read_text(encoding="utf-8"))

    @classmethod
    def from_spec(cls, spec: SkillSpec) -> "TargetConfig":
        return cls("local", spec.name, spec=spec)

    @classmethod
    def from_dict(cls, doc: dict) -> "TargetConfig":
        """Parse a target_config file: ``{kind, path | url, timeout_s}``."""
        kind = doc.get("kind")
        location = doc.get("path") or doc.get("url") or doc.get("location") or ""
        return cls(kind, location, float(doc.get("timeout_s", DEFAULT_TIMEOUT_S)))

    @classmethod
    def parse(cls, target: str, timeout_s: float = DEFAULT_TIMEOUT_S) -> "TargetConfig":
        """Interpret a CLI ``--target``: a URL, a target_config JSON, or a skill spec JSON."""
        if target.startswith(("http://", "https://", "tcp://")):
            return cls("remote", target, timeout_s)
        text = Path(target).read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            doc = None
        if isinstance(doc, dict) and "kind" in doc and "states" not in doc:
            doc = dict(doc)
            if doc.get("kind") == "local" and doc.get("path") and not Path(doc["path"]).is_absolute():
                doc["path"] = str(Path(target).parent / doc["path"])
            return cls.from_dict(doc)
        return cls("local", target, timeout_s, spec=load_spec(text))


@dataclass
class TargetHandle:
    kind: str
    session_id: str
    rounds: int = 0
    ended: bool = False
    timed_out: bool = False
    eval_log: list[dict[str, Any]] = field(default_factory=list)
    _impl: Any = None
    _closed: bool = False


def _record_eval(handle: TargetHandle, meta: dict | None, keep_eval: bool) -> None:
    if keep_eval and meta is not None:
        handle.eval_log.append(dict(meta))


def open(config: TargetConfig, seed: int = 0, session_id: str | None = None,
         keep_eval: bool = True) -> tuple[TargetHandle, str]:  # noqa: A001 - mirrors file-like API
    sid = session_id or uuid.uuid4().hex
    if config.kind == "local":
        assert config.spec is not None
        session, out = launch(config.spec, seed)
        handle = TargetHandle("local", sid, ended=out.ended, _impl=session)
        _record_eval(handle, out.eval_meta, keep_eval)
        return handle, out.text
    impl: _Remote = _TcpRemote(config) if config.location.startswith("tcp://") else _HttpRemote(config)
    handle = TargetHandle("remote", sid, _impl=impl)
    try:
        text, ended, meta = impl.exchange(sid, None)
    except (TargetTimeout, ProtocolError):
        impl.close()
        raise
    except OSError as exc:
        impl.close()
        raise TargetUnavailable(f"cannot open {config.location}: {exc}") from exc
    handle.ended = ended
    _record_eval(handle, meta, keep_eval)
    return handle, text


def send(handle: TargetHandle, user_input: str, keep_eval: bool = True) -> tuple[str, bool]:
    if handle._closed:
        raise TargetError("handle is closed")
    if handle.ended:
        raise SessionEnded("the dialogue has already ended")
    if handle.kind == "local":
        out = respond(handle._impl, user_input)
        text, ended, meta = out.text, out.ended, out.eval_meta
    else:
        try:
            text, ended, meta = handle._impl.exchange(handle.session_id, user_input)
        except TargetTimeout:
            handle.ended = True
            handle.timed_out = True
            raise
        except OSError as exc:
            handle.ended = True
            raise TargetError(f"target connection failed: {exc}") from exc
    handle.rounds += 1
    handle.ended = ended
    _record_eval(handle, meta, keep_eval)
    return text, ended


def close(handle: TargetHandle) -> None:
    if handle._closed:
        return
    handle._closed = True
    if handle.kind == "remote":
        handle._impl.close()


def _decode(doc: Any) -> tuple[str, bool, dict | None]:
    if not isinstance(doc, dict):
        raise ProtocolError("reply is not a JSON object")
    output, ended = doc.get("output"), doc.get("ended")
    if not isinstance(output, str) or not output.strip() or not isinstance(ended, bool):
        raise ProtocolError(f"reply must carry a non-empty 'output' and boolean 'ended': {doc!r}")
    meta = doc.get("eval")
    return output, ended, meta if isinstance(meta, dict) else None


class _Remote:
    def exchange(self, session: str, user_input: str | None) -> tuple[str, bool, dict | None]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class _HttpRemote(_Remote):
    def __init__(self, config: TargetConfig) -> None:
        self.url = config.location
        self.client = httpx.Client(timeout=config.timeout_s)

    def exchange(self, session, user_input):
        try:
            resp = self.client.post(self.url, json={"session": session, "input": user_input})
        except httpx.TimeoutException as exc:
            raise TargetTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise OSError(str(exc)) from exc
        if resp.status_code >= 400:
            raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            doc = resp.json()
        except ValueError as exc:
            raise ProtocolError("reply is not JSON") from exc
        return _decode(doc)

    def close(self) -> None:
        self.client.close()


class _TcpRemote(_Remote):
    def __init__(self, config: TargetConfig) -> None:
        parsed = urlparse(config.location)
        if not parsed.hostname or not parsed.port:
            raise ValueError(f"bad tcp target {config.location!r}")
        self.addr = (parsed.hostname, parsed.port)
        self.timeout = config.timeout_s
        self.sock: socket.socket | None = None
        self.reader = None

    def exchange(self, session, user_input):
        try:
            if self.sock is None:
                self.sock = socket.create_connection(self.addr, timeout=self.timeout)
                self.reader = self.sock.makefile("r", encoding="utf-8")
            line = json.dumps({"session": session, "input": user_input}) + "\n"
            self.sock.sendall(line.encode("utf-8"))
            reply = self.reader.readline()
        except socket.timeout as exc:
            raise TargetTimeout("no reply within the timeout") from exc
        if not reply:
            raise ProtocolError("connection closed without a reply")
        try:
            doc = json.loads(reply)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed reply line: {reply[:200]!r}") from exc
        return _decode(doc)

    def close(self) -> None:
        if self.reader is not None:
            self.reader.close()
        if self.sock is not None:
            self.sock.close()
