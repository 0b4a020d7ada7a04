"""AMQP probes for both wire dialects.

0-9-1 opens with the protocol header and expects Connection.Start; a broker
that only speaks 1.0 answers the header with its own and closes, after
which the 1.0 header plus an open performative is tried.
"""
from __future__ import annotations

import struct

from ..catalog import Protocol
from .base import Codec, Cursor, Malformed, ProbeMessage, Reason, bad, ok

HEADER_091 = b"AMQP\x00\x00\x09\x01"
HEADER_10 = b"AMQP\x00\x01\x00\x00"
HEADER_10_SASL = b"AMQP\x03\x01\x00\x00"
DIALECTS = ("0-9-1", "1.0")
FRAME_END = 0xCE
METHOD, HEADER_FRAME, BODY, HEARTBEAT = 1, 2, 3, 8

CONNECTION = 10
METHODS = {
    (10, 10): "connection.start", (10, 11): "connection.start-ok", (10, 20): "connection.secure",
    (10, 21): "connection.secure-ok", (10, 30): "connection.tune", (10, 31): "connection.tune-ok",
    (10, 40): "connection.open", (10, 41): "connection.open-ok", (10, 50): "connection.close",
    (10, 51): "connection.close-ok", (20, 10): "channel.open", (60, 40): "basic.publish",
}
# broker default account shipped by the most common broker implementation
DEFAULT_CREDENTIALS = ("guest", "guest")
ACCESS_REFUSED = 403


def shortstr(value: str | bytes) -> bytes:
    b = value.encode() if isinstance(value, str) else value
    return bytes([len(b)]) + b


def longstr(value: str | bytes) -> bytes:
    b = value.encode() if isinstance(value, str) else value
    return struct.pack(">I", len(b)) + b


def table(entries: dict[str, str]) -> bytes:
    body = b"".join(shortstr(k) + b"S" + longstr(v) for k, v in entries.items())
    return longstr(body)


def method_frame(class_id: int, method_id: int, args: bytes = b"", channel: int = 0) -> bytes:
    payload = struct.pack(">HH", class_id, method_id) + args
    return struct.pack(">BHI", METHOD, channel, len(payload)) + payload + bytes([FRAME_END])


def connection_start(mechanisms: str = "PLAIN AMQPLAIN", product: str = "LabBroker") -> bytes:
    args = bytes([0, 9]) + table({"product": product, "version": "3.12"}) + longstr(mechanisms) + longstr("en_US")
    return method_frame(10, 10, args)


def start_ok(username: str, password: str, mechanism: str = "PLAIN") -> bytes:
    response = b"\x00" + username.encode() + b"\x00" + password.encode()
    args = table({"product": "iiotscan"}) + shortstr(mechanism) + longstr(response) + shortstr("en_US")
    return method_frame(10, 11, args)


def tune(channel_max: int = 2047, frame_max: int = 131072, heartbeat: int = 60) -> bytes:
    return method_frame(10, 30, struct.pack(">HIH", channel_max, frame_max, heartbeat))


def connection_close(code: int, text: str, class_id: int = 0, method_id: int = 0) -> bytes:
    return method_frame(10, 50, struct.pack(">H", code) + shortstr(text) + struct.pack(">HH", class_id, method_id))


def read_frame(cur: Cursor) -> tuple[int, int, Cursor]:
    """(type, channel, payload cursor) of one 0-9-1 frame."""
    ftype, channel, size = cur.u8(), cur.u16be(), cur.u32be()
    payload = cur.sub(size)
    if cur.u8() != FRAME_END:
        raise Malformed("frame-end octet missing")
    return ftype, channel, payload


def parse_method(data) -> tuple[str, Cursor]:
    ftype, _channel, payload = read_frame(Cursor(data))
    if ftype != METHOD:
        raise Malformed(f"frame type {ftype}")
    key = (payload.u16be(), payload.u16be())
    return METHODS.get(key, f"{key[0]}.{key[1]}"), payload


def _skip_table(cur: Cursor) -> None:
    cur.take(cur.u32be())


def open_performative(container_id: str = "iiotscan") -> bytes:
    cid = container_id.encode()
    fields = b"\xa1" + bytes([len(cid)]) + cid
    body = b"\x00\x53\x10" + b"\xc0" + bytes([len(fields) + 1, 1]) + fields
    return struct.pack(">IBBH", len(body) + 8, 2, 0, 0) + body


def frame10_length(buf, offset: int) -> int | None:
    if len(buf) < offset + 4:
        return None
    return offset + struct.unpack(">I", bytes(buf[offset:offset + 4]))[0]


class AmqpCodec(Codec):
    protocol = Protocol.AMQP
    read_only_kinds = frozenset({"PROTOCOL_HEADER", "OPEN", "connection.start-ok", "connection.close",
                                 "connection.close-ok"})

    def encode_request(self, dialect: str = "0-9-1", container_id: str = "iiotscan") -> bytes:
        if dialect == "0-9-1":
            return HEADER_091
        if dialect == "1.0":
            return HEADER_10 + open_performative(container_id)
        raise ValueError(f"unknown AMQP dialect {dialect}")

    def decode_request(self, payload: bytes) -> dict:
        cur = Cursor(payload)
        header = cur.take(8)
        if header == HEADER_091 and cur.done():
            return {"dialect": "0-9-1"}
        if header != HEADER_10:
            raise Malformed("unknown protocol header")
        size, doff, ftype, _ = struct.unpack(">IBBH", cur.take(8))
        body = cur.sub(size - 8)
        if doff != 2 or ftype != 0 or body.take(4) != b"\x00\x53\x10\xc0":
            raise Malformed("not an open performative")
        body.take(2)
        if body.u8() != 0xA1:
            raise Malformed("container id is not a str8")
        return {"dialect": "1.0", "container_id": body.take(body.u8()).decode()}

    def build_probe(self, dialect: str = "0-9-1", **_) -> ProbeMessage:
        return ProbeMessage(self.protocol, self.encode_request(dialect), context={"dialect": dialect})

    def request_kind(self, payload: bytes) -> str:
        if payload.startswith(b"AMQP"):
            return "PROTOCOL_HEADER"
        if len(payload) >= 8 and payload[4] >= 2 and payload[5] == 0:
            return "OPEN" if payload[8:11] == b"\x00\x53\x10" else "PERFORMATIVE"
        try:
            return parse_method(payload)[0]
        except Exception:
            return "UNPARSABLE"

    def frame_length(self, buf) -> int | None:
        if len(buf) < 7:
            return None
        if bytes(buf[:4]) == b"AMQP":
            if len(buf) < 8:
                return None
            if bytes(buf[:8]) in (HEADER_10, HEADER_10_SASL):
                return frame10_length(buf, 8)
            return 8
        return 8 + struct.unpack(">I", bytes(buf[3:7]))[0]

    def _validate(self, data, probe):
        if probe.context.get("dialect") == "1.0":
            return self._validate_10(data)
        cur = Cursor(data)
        if bytes(data[:4]) == b"AMQP":
            header = cur.take(8)
            return bad(Reason.ERROR_RESPONSE, f"protocol header mismatch {header[4:].hex()}")
        ftype = cur.u8()
        if ftype not in (METHOD, HEADER_FRAME, BODY, HEARTBEAT):
            return bad(Reason.BAD_MAGIC, f"frame type {ftype}")
        channel, size = cur.u16be(), cur.u32be()
        payload = cur.sub(size)
        if cur.u8() != FRAME_END:
            raise Malformed("frame-end octet missing")
        if ftype != METHOD or channel != 0:
            return bad(Reason.ERROR_RESPONSE, "expected a method frame on channel 0")
        key = (payload.u16be(), payload.u16be())
        if key == (10, 10):
            major, minor = payload.u8(), payload.u8()
            _skip_table(payload)
            mechanisms = payload.take(payload.u32be())
            payload.take(payload.u32be())
            if not payload.done():
                raise Malformed("trailing bytes in connection.start")
            return ok(code=f"start:{major}-{minor}", detail=mechanisms.decode("latin-1"))
        if key == (10, 50):
            code = payload.u16be()
            payload.take(payload.u8())
            payload.take(4)
            return ok(code=f"close:{code}")
        return bad(Reason.ERROR_RESPONSE, f"{METHODS.get(key, key)} in reply to protocol header")

    def _validate_10(self, data):
        cur = Cursor(data)
        if bytes(data[:4]) != b"AMQP":
            return bad(Reason.BAD_MAGIC, "reply is not a protocol header")
        header = cur.take(8)
        if header not in (HEADER_10, HEADER_10_SASL):
            return bad(Reason.ERROR_RESPONSE, f"protocol header mismatch {header[4:].hex()}")
        if not cur.done():
            size = cur.u32be()
            if size < 8:
                return bad(Reason.BAD_LENGTH_FIELD, f"frame size {size}")
            frame = cur.sub(size - 4)
            doff, ftype = frame.u8(), frame.u8()
            if doff < 2 or ftype not in (0, 1):
                raise Malformed("bad 1.0 frame header")
        return ok(code="1.0-sasl" if header == HEADER_10_SASL else "1.0")

    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        return broker_reply(request, behavior, "0-9-1")


def broker_reply(request: bytes, behavior: str = "compliant", dialect: str = "0-9-1") -> bytes | None:
    """First reply of a harness broker speaking ``dialect``."""
    if behavior == "silent":
        return None
    header = request[:8]
    if dialect == "1.0":
        if header != HEADER_10:
            return HEADER_10
        return HEADER_10 + open_performative("lab-broker")
    if header != HEADER_091:
        return HEADER_091
    if behavior == "error_response":
        return connection_close(540, "NOT_IMPLEMENTED")
    reply = connection_start()
    if behavior == "malformed_length":
        reply = reply[:3] + struct.pack(">I", len(reply) + 64) + reply[7:]
    return reply
