"""Running a probe over an established connection."""
from __future__ import annotations

import socket
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol as Proto

from ..catalog import Protocol
from . import CODECS
from .base import ProbeMessage, Reason, ValidationVerdict, bad

MAX_REPLY = 64 * 1024


class Conn(Proto):
    def send(self, data: bytes) -> None: ...
    def recv(self, timeout: float) -> bytes: ...
    def close(self) -> None: ...


@dataclass
class AppExchange:
    verdict: ValidationVerdict
    sent: list[bytes] = field(default_factory=list)
    received: list[bytes] = field(default_factory=list)
    # extra verdicts, e.g. the RegisterSession step of EtherNet/IP
    steps: dict[str, ValidationVerdict] = field(default_factory=dict)
    dialect: str | None = None

    def to_json(self) -> dict:
        return {"verdict": self.verdict.to_json(), "sent": [b.hex() for b in self.sent],
                "received": [b.hex() for b in self.received], "dialect": self.dialect,
                "steps": {k: v.to_json() for k, v in self.steps.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "AppExchange":
        return cls(ValidationVerdict.from_json(obj["verdict"]), [bytes.fromhex(b) for b in obj["sent"]],
                   [bytes.fromhex(b) for b in obj["received"]],
                   {k: ValidationVerdict.from_json(v) for k, v in obj.get("steps", {}).items()},
                   obj.get("dialect"))


def read_reply(conn: Conn, frame_length: Callable, timeout: float) -> bytes:
    """Read until one frame is complete, the peer closes, or time runs out."""
    buf = b""
    deadline = time.monotonic() + timeout
    while len(buf) < MAX_REPLY:
        need = frame_length(buf) if buf else None
        if need is not None and len(buf) >= need:
            break
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            break
        try:
            chunk = conn.recv(remaining)
        except (socket.timeout, TimeoutError, ConnectionError, OSError):
            break
        if not chunk:
            break
        buf += chunk
    return buf


def _one(conn: Conn, probe: ProbeMessage, timeout: float, ex: AppExchange) -> ValidationVerdict:
    codec = CODECS[probe.protocol]
    try:
        conn.send(probe.payload)
    except OSError as exc:
        return bad(Reason.EMPTY, f"send failed: {exc}")
    ex.sent.append(probe.payload)
    reply = read_reply(conn, codec.frame_length, timeout)
    ex.received.append(reply)
    return codec.validate(reply, probe)


def exchange(protocol: Protocol, conn: Conn, reconnect: Callable[[], Conn] | None = None,
             timeout: float = 5.0, **probe_opts) -> AppExchange:
    """Send the canonical probe and validate the reply.

    ``reconnect`` opens a fresh connection; AMQP needs one to retry with the
    1.0 header after a 0-9-1 mismatch.
    """
    codec = CODECS[protocol]
    probe = codec.build_probe(**probe_opts)
    ex = AppExchange(bad(Reason.EMPTY))
    ex.verdict = _one(conn, probe, timeout, ex)
    if protocol is Protocol.AMQP:
        ex.dialect = "0-9-1"
        mismatch = ex.received[-1].startswith(b"AMQP")
        if mismatch and reconnect is not None:
            conn.close()
            try:
                conn = reconnect()
            except OSError:
                return ex
            ex.dialect = "1.0"
            ex.verdict = _one(conn, codec.build_probe("1.0"), timeout, ex)
    elif protocol is Protocol.ETHERNETIP and ex.verdict.valid:
        ex.steps["register_session"] = _one(conn, codec.follow_up(), timeout, ex)
    conn.close()
    return ex
