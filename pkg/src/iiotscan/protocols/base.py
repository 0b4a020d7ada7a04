from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

from ..catalog import Protocol


class Reason(str, Enum):
    OK = "ok"
    UNPARSABLE = "unparsable"
    BAD_LENGTH_FIELD = "bad_length_field"
    BAD_MAGIC = "bad_magic"
    ERROR_RESPONSE = "error_response"
    EMPTY = "empty"


@dataclass(frozen=True)
class ValidationVerdict:
    valid: bool
    reason: Reason
    # protocol-level status carried by a valid reply, e.g. a CONNACK return code
    code: str | None = None
    detail: str | None = None

    def __post_init__(self):
        if self.valid != (self.reason is Reason.OK):
            raise ValueError("valid verdicts carry reason ok and only they do")

    def to_json(self) -> dict:
        return {"valid": self.valid, "reason": self.reason.value, "code": self.code, "detail": self.detail}

    @classmethod
    def from_json(cls, obj: dict) -> "ValidationVerdict":
        return cls(obj["valid"], Reason(obj["reason"]), obj.get("code"), obj.get("detail"))


def ok(code: str | None = None, detail: str | None = None) -> ValidationVerdict:
    return ValidationVerdict(True, Reason.OK, code, detail)


def bad(reason: Reason, detail: str | None = None) -> ValidationVerdict:
    return ValidationVerdict(False, reason, None, detail)


@dataclass(frozen=True)
class ProbeMessage:
    protocol: Protocol
    payload: bytes
    expects_reply: bool = True
    # values the reply must echo (transaction ids, tokens, ...)
    context: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.payload:
            raise ValueError("probe payload must be non-empty")


class Truncated(Exception):
    """A field extends past the end of the buffer."""


class Malformed(Exception):
    """A field holds a value the grammar does not allow."""


class Cursor:
    """Bounds-checked reader.  Every access is checked before it happens."""

    def __init__(self, data, start: int = 0, end: int | None = None):
        self.data = data
        self.pos = start
        self.end = len(data) if end is None else end
        if self.end > len(data):
            raise Truncated("window exceeds buffer")

    def remaining(self) -> int:
        return self.end - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or n > self.end - self.pos:
            raise Truncated(f"need {n} bytes at offset {self.pos}, have {self.end - self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(out)

    def u8(self) -> int:
        return self.take(1)[0]

    def u16be(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u16le(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32be(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u32le(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i32le(self) -> int:
        return struct.unpack("<i", self.take(4))[0]

    def sub(self, n: int) -> "Cursor":
        if n < 0 or n > self.end - self.pos:
            raise Truncated(f"sub-window of {n} bytes at offset {self.pos} exceeds buffer")
        c = Cursor(self.data, self.pos, self.pos + n)
        self.pos += n
        return c

    def done(self) -> bool:
        return self.pos == self.end


class Codec:
    """Request builder and reply validator for one application protocol."""

    protocol: Protocol
    # request kinds this codec may ever emit; all are read-only or session setup
    read_only_kinds: frozenset[str] = frozenset()

    def build_probe(self, **opts) -> ProbeMessage:
        raise NotImplementedError

    def encode_request(self, **fields) -> bytes:
        raise NotImplementedError

    def decode_request(self, payload: bytes) -> dict:
        raise NotImplementedError

    def request_kind(self, payload: bytes) -> str:
        raise NotImplementedError

    def frame_length(self, buf: bytes) -> int | None:
        """Total length of the first reply frame once its header is in, else None."""
        raise NotImplementedError

    def validate(self, data, probe: ProbeMessage | None = None) -> ValidationVerdict:
        if len(data) == 0:
            return bad(Reason.EMPTY)
        probe = probe or self.build_probe()
        try:
            return self._validate(data, probe)
        except Truncated as exc:
            return bad(Reason.BAD_LENGTH_FIELD, str(exc))
        except Malformed as exc:
            return bad(Reason.UNPARSABLE, str(exc))

    def _validate(self, data, probe: ProbeMessage) -> ValidationVerdict:
        raise NotImplementedError

    # lab side: reply to a request under a harness behaviour
    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        raise NotImplementedError
