"""Niagara Fox text protocol: hello exchange."""
from __future__ import annotations

import re

from ..catalog import Protocol
from .base import Codec, Malformed, ProbeMessage, Reason, bad, ok

TERMINATOR = b"};;\n"
HEADER = re.compile(r"^fox ([a-z]) (-?\d+) (-?\d+) fox ([a-z]+)$")
FIELD = re.compile(r"^([A-Za-z0-9_.]+)=([a-z]):(.*)$")


def encode_frame(command: str, fields: dict[str, tuple[str, str]], seq: int = 1, reply_to: int = -1) -> bytes:
    lines = [f"fox a {seq} {reply_to} fox {command}", "{"]
    lines += [f"{k}={t}:{v}" for k, (t, v) in fields.items()]
    return ("\n".join(lines) + "\n};;\n").encode()


def parse_frame(data) -> dict:
    """Parse one frame; raises ValueError when the bytes are not a fox frame."""
    raw = bytes(data)
    if not raw.startswith(b"fox "):
        raise ValueError("no fox preamble")
    end = raw.find(TERMINATOR)
    if end < 0:
        raise Malformed("frame terminator missing")
    try:
        text = raw[:end].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise Malformed("frame is not UTF-8") from exc
    if not text.endswith("\n"):
        raise Malformed("terminator not on its own line")
    lines = text[:-1].split("\n")
    m = HEADER.match(lines[0])
    if not m or len(lines) < 2 or lines[1] != "{":
        raise Malformed("bad frame header")
    fields = {}
    for line in lines[2:]:
        f = FIELD.match(line)
        if not f:
            raise Malformed(f"bad field line {line[:40]!r}")
        fields[f.group(1)] = (f.group(2), f.group(3))
    return {"seq": int(m.group(2)), "reply_to": int(m.group(3)), "command": m.group(4),
            "fields": fields, "length": end + len(TERMINATOR)}


HELLO_FIELDS = {"fox.version": ("s", "1.0"), "id": ("i", "1")}


class FoxCodec(Codec):
    protocol = Protocol.TRIDIUM_FOX
    read_only_kinds = frozenset({"HELLO"})

    def encode_request(self, fields: dict | None = None, seq: int = 1) -> bytes:
        return encode_frame("hello", fields or HELLO_FIELDS, seq=seq)

    def decode_request(self, payload: bytes) -> dict:
        frame = parse_frame(payload)
        if frame["command"] != "hello" or frame["length"] != len(payload):
            raise Malformed("not a hello frame")
        return {"fields": frame["fields"], "seq": frame["seq"]}

    def build_probe(self, **_) -> ProbeMessage:
        return ProbeMessage(self.protocol, self.encode_request())

    def request_kind(self, payload: bytes) -> str:
        try:
            return parse_frame(payload)["command"].upper()
        except Exception:
            return "UNPARSABLE"

    def frame_length(self, buf) -> int | None:
        end = bytes(buf).find(TERMINATOR)
        return None if end < 0 else end + len(TERMINATOR)

    def _validate(self, data, probe):
        try:
            frame = parse_frame(data)
        except ValueError as exc:
            return bad(Reason.BAD_MAGIC, str(exc))
        return ok(code=frame["command"])

    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        if behavior == "silent":
            return None
        if behavior == "error_response":
            return encode_frame("rejected", {"reason": ("s", "not allowed")}, seq=0, reply_to=1)
        reply = encode_frame("hello", {"fox.version": ("s", "1.0"), "id": ("i", "1"),
                                       "hostName": ("s", "lab-station"), "app.name": ("s", "Station"),
                                       "app.version": ("s", "4.10.0")}, seq=0)
        if behavior == "malformed_length":
            reply = reply[:-len(TERMINATOR)]
        return reply
