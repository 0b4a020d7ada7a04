"""OPC UA binary: Hello / Acknowledge exchange."""
from __future__ import annotations

import struct

from ..catalog import Protocol
from .base import Codec, Cursor, Malformed, ProbeMessage, Reason, bad, ok

MESSAGE_TYPES = {b"HEL": "HEL", b"ACK": "ACK", b"ERR": "ERR", b"RHE": "RHE",
                 b"OPN": "OPN", b"MSG": "MSG", b"CLO": "CLO"}
BAD_TCP_ENDPOINT_URL_INVALID = 0x80830000


def _string(value: str | None) -> bytes:
    if value is None:
        return struct.pack("<i", -1)
    b = value.encode()
    return struct.pack("<i", len(b)) + b


def _read_string(cur: Cursor) -> str | None:
    n = cur.i32le()
    if n == -1:
        return None
    if n < -1:
        raise Malformed("negative string length")
    return cur.take(n).decode("utf-8", "replace")


def message(kind: bytes, body: bytes) -> bytes:
    return kind + b"F" + struct.pack("<I", len(body) + 8) + body


def acknowledge(version: int = 0, receive: int = 65536, send: int = 65536, max_message: int = 0,
                max_chunks: int = 0) -> bytes:
    return message(b"ACK", struct.pack("<IIIII", version, receive, send, max_message, max_chunks))


def error(code: int, reason: str | None = None) -> bytes:
    return message(b"ERR", struct.pack("<I", code) + _string(reason))


class OpcUaCodec(Codec):
    protocol = Protocol.OPCUA
    read_only_kinds = frozenset({"HEL", "CLO"})

    def encode_request(self, endpoint_url: str = "opc.tcp://localhost:4840/", version: int = 0,
                       receive: int = 65536, send: int = 65536, max_message: int = 0,
                       max_chunks: int = 0) -> bytes:
        return message(b"HEL", struct.pack("<IIIII", version, receive, send, max_message, max_chunks)
                       + _string(endpoint_url))

    def decode_request(self, payload: bytes) -> dict:
        cur = Cursor(payload)
        if cur.take(4) != b"HELF":
            raise Malformed("not a Hello message")
        body = cur.sub(cur.u32le() - 8)
        out = {k: body.u32le() for k in ("version", "receive", "send", "max_message", "max_chunks")}
        out["endpoint_url"] = _read_string(body)
        if not body.done() or not cur.done():
            raise Malformed("trailing bytes")
        return out

    def build_probe(self, endpoint_url: str = "opc.tcp://localhost:4840/", **_) -> ProbeMessage:
        return ProbeMessage(self.protocol, self.encode_request(endpoint_url))

    def request_kind(self, payload: bytes) -> str:
        return MESSAGE_TYPES.get(bytes(payload[:3]), "UNKNOWN")

    def frame_length(self, buf) -> int | None:
        return None if len(buf) < 8 else struct.unpack("<I", bytes(buf[4:8]))[0]

    def _validate(self, data, probe):
        cur = Cursor(data)
        kind = cur.take(3)
        if kind not in MESSAGE_TYPES:
            return bad(Reason.BAD_MAGIC, f"message type {kind!r}")
        if cur.u8() != ord("F"):
            raise Malformed("connection messages are always final chunks")
        size = cur.u32le()
        if size < 8:
            return bad(Reason.BAD_LENGTH_FIELD, f"message size {size}")
        body = cur.sub(size - 8)
        if kind == b"ACK":
            if size != 28:
                return bad(Reason.BAD_LENGTH_FIELD, f"Acknowledge of {size} bytes")
            body.take(20)
            return ok(code="ACK")
        if kind == b"ERR":
            code = body.u32le()
            reason = _read_string(body)
            if not body.done():
                raise Malformed("trailing bytes in Error message")
            return ok(code=f"{code:#010x}", detail=reason)
        return bad(Reason.ERROR_RESPONSE, f"{kind.decode()} in reply to Hello")

    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        if behavior == "silent" or self.request_kind(request) != "HEL":
            return None
        if behavior == "error_response":
            return error(BAD_TCP_ENDPOINT_URL_INVALID, "endpoint not served")
        reply = acknowledge()
        if behavior == "malformed_length":
            reply = reply[:4] + struct.pack("<I", 0x100) + reply[8:]
        return reply
