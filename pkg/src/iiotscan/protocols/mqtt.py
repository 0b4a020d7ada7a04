"""MQTT 3.1.1 CONNECT probe and CONNACK validation."""
from __future__ import annotations

import os
import struct

from ..catalog import Protocol
from .base import Codec, Cursor, Malformed, ProbeMessage, Reason, bad, ok

PACKET_TYPES = {
    1: "CONNECT", 2: "CONNACK", 3: "PUBLISH", 4: "PUBACK", 5: "PUBREC", 6: "PUBREL", 7: "PUBCOMP",
    8: "SUBSCRIBE", 9: "SUBACK", 10: "UNSUBSCRIBE", 11: "UNSUBACK", 12: "PINGREQ", 13: "PINGRESP",
    14: "DISCONNECT",
}
CONNACK_CODES = {
    0: "accepted", 1: "unacceptable protocol version", 2: "identifier rejected",
    3: "server unavailable", 4: "bad user name or password", 5: "not authorized",
}


def encode_varint(n: int) -> bytes:
    if not 0 <= n <= 268_435_455:
        raise ValueError("remaining length out of range")
    out = bytearray()
    while True:
        byte, n = n % 128, n // 128
        out.append(byte | (0x80 if n else 0))
        if not n:
            return bytes(out)


def read_varint(cur: Cursor) -> int:
    value, mult = 0, 1
    for _ in range(4):
        byte = cur.u8()
        value += (byte & 0x7F) * mult
        if not byte & 0x80:
            return value
        mult *= 128
    raise Malformed("remaining length longer than four bytes")


def _string(s: str | bytes) -> bytes:
    b = s.encode() if isinstance(s, str) else s
    return struct.pack(">H", len(b)) + b


def _read_string(cur: Cursor) -> bytes:
    return cur.take(cur.u16be())


def fixed_header_length(buf) -> int | None:
    """Total packet length, or None while the header is incomplete."""
    if len(buf) < 2:
        return None
    value, mult = 0, 1
    for i in range(1, min(len(buf), 5)):
        byte = buf[i]
        value += (byte & 0x7F) * mult
        if not byte & 0x80:
            return i + 1 + value
        mult *= 128
    return None if len(buf) < 5 else 5


def encode_subscribe(packet_id: int, topic: str, qos: int = 0) -> bytes:
    body = struct.pack(">H", packet_id) + _string(topic) + bytes([qos])
    return b"\x82" + encode_varint(len(body)) + body


def encode_disconnect() -> bytes:
    return b"\xe0\x00"


def decode_packet(data: bytes) -> tuple[int, int, bytes]:
    """(type, flags, body) of one complete packet."""
    cur = Cursor(data)
    first = cur.u8()
    length = read_varint(cur)
    return first >> 4, first & 0x0F, cur.take(length)


def decode_publish(flags: int, body: bytes) -> tuple[str, bytes]:
    cur = Cursor(body)
    topic = _read_string(cur).decode("utf-8", "replace")
    if (flags >> 1) & 0x3:
        cur.take(2)
    return topic, cur.take(cur.remaining())


class MqttCodec(Codec):
    protocol = Protocol.MQTT
    read_only_kinds = frozenset({"CONNECT", "SUBSCRIBE", "PINGREQ", "DISCONNECT"})

    def encode_request(self, client_id: str = "iiotscan", keepalive: int = 60, clean_session: bool = True,
                       username: str | None = None, password: str | None = None, level: int = 4) -> bytes:
        flags = (0x02 if clean_session else 0) | (0x80 if username is not None else 0) \
            | (0x40 if password is not None else 0)
        var = _string("MQTT") + bytes([level, flags]) + struct.pack(">H", keepalive)
        payload = _string(client_id)
        if username is not None:
            payload += _string(username)
        if password is not None:
            payload += _string(password)
        return b"\x10" + encode_varint(len(var) + len(payload)) + var + payload

    def decode_request(self, payload: bytes) -> dict:
        ptype, flags, body = decode_packet(payload)
        if ptype != 1 or flags:
            raise Malformed("not a CONNECT packet")
        cur = Cursor(body)
        if _read_string(cur) != b"MQTT":
            raise Malformed("protocol name is not MQTT")
        level, cflags, keepalive = cur.u8(), cur.u8(), cur.u16be()
        out = {"client_id": _read_string(cur).decode(), "keepalive": keepalive,
               "clean_session": bool(cflags & 0x02), "username": None, "password": None, "level": level}
        if cflags & 0x80:
            out["username"] = _read_string(cur).decode()
        if cflags & 0x40:
            out["password"] = _read_string(cur).decode()
        return out

    def build_probe(self, client_id: str | None = None, **_) -> ProbeMessage:
        client_id = client_id or "iiotscan-" + os.urandom(4).hex()
        return ProbeMessage(self.protocol, self.encode_request(client_id=client_id))

    def request_kind(self, payload: bytes) -> str:
        return PACKET_TYPES.get(payload[0] >> 4, "RESERVED") if payload else "EMPTY"

    def frame_length(self, buf) -> int | None:
        return fixed_header_length(buf)

    def _validate(self, data, probe):
        cur = Cursor(data)
        first = cur.u8()
        ptype, flags = first >> 4, first & 0x0F
        length = read_varint(cur)
        if ptype != 2:
            if ptype in PACKET_TYPES:
                cur.take(length)
                return bad(Reason.ERROR_RESPONSE, f"{PACKET_TYPES[ptype]} instead of CONNACK")
            raise Malformed(f"reserved packet type {ptype}")
        if flags:
            raise Malformed("CONNACK with non-zero header flags")
        body = cur.sub(length)
        if length != 2:
            return bad(Reason.BAD_LENGTH_FIELD, f"CONNACK remaining length {length}")
        ack_flags, rc = body.u8(), body.u8()
        if ack_flags & 0xFE:
            raise Malformed("reserved CONNACK flag bits set")
        if rc not in CONNACK_CODES:
            raise Malformed(f"CONNACK return code {rc}")
        return ok(code=str(rc), detail=CONNACK_CODES[rc])

    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        if behavior == "silent":
            return None
        if behavior == "malformed_length":
            return b"\x20\x7f\x00\x00"
        if behavior == "error_response":
            return b"\x20\x02\x00\x05"
        return b"\x20\x02\x00\x00"

