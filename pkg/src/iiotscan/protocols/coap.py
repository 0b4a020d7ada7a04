"""CoAP confirmable GET of /.well-known/core."""
from __future__ import annotations

import struct

from ..catalog import Protocol
from .base import Codec, Cursor, Malformed, ProbeMessage, Reason, bad, ok

CON, NON, ACK, RST = 0, 1, 2, 3
TYPES = {CON: "CON", NON: "NON", ACK: "ACK", RST: "RST"}
METHODS = {0: "EMPTY", 1: "GET", 2: "POST", 3: "PUT", 4: "DELETE", 5: "FETCH", 6: "PATCH", 7: "IPATCH"}
URI_PATH, CONTENT_FORMAT = 11, 12
LINK_FORMAT = 40
DEFAULT_TOKEN = bytes.fromhex("49494f54")
DEFAULT_MID = 0x1D0C


def _nibble(value: int) -> tuple[int, bytes]:
    if value < 13:
        return value, b""
    if value < 269:
        return 13, bytes([value - 13])
    return 14, struct.pack(">H", value - 269)


def encode_options(options: list[tuple[int, bytes]]) -> bytes:
    out, last = b"", 0
    for number, value in sorted(options, key=lambda o: o[0]):
        d, dext = _nibble(number - last)
        l, lext = _nibble(len(value))
        out += bytes([(d << 4) | l]) + dext + lext + value
        last = number
    return out


def _ext(cur: Cursor, nibble: int) -> int:
    if nibble == 13:
        return cur.u8() + 13
    if nibble == 14:
        return cur.u16be() + 269
    if nibble == 15:
        raise Malformed("reserved option nibble 15")
    return nibble


def parse_message(data) -> dict:
    cur = Cursor(data)
    first = cur.u8()
    if first >> 6 != 1:
        raise ValueError(f"CoAP version {first >> 6}")
    mtype, tkl = (first >> 4) & 3, first & 0x0F
    if tkl > 8:
        raise Malformed("token length above 8")
    code, mid = cur.u8(), cur.u16be()
    token = cur.take(tkl)
    options, number, payload = [], 0, b""
    while not cur.done():
        byte = cur.u8()
        if byte == 0xFF:
            if cur.done():
                raise Malformed("payload marker without payload")
            payload = cur.take(cur.remaining())
            break
        number += _ext(cur, byte >> 4)
        options.append((number, cur.take(_ext(cur, byte & 0x0F))))
    return {"type": mtype, "code": code, "mid": mid, "token": token, "options": options, "payload": payload}


def message(mtype: int, code: int, mid: int, token: bytes = b"", options=(), payload: bytes = b"") -> bytes:
    out = bytes([0x40 | (mtype << 4) | len(token), code]) + struct.pack(">H", mid) + token
    out += encode_options(list(options))
    if payload:
        out += b"\xff" + payload
    return out


def code_str(code: int) -> str:
    return f"{code >> 5}.{code & 0x1F:02d}"


class CoapCodec(Codec):
    protocol = Protocol.COAP
    read_only_kinds = frozenset({"GET", "EMPTY", "FETCH"})

    def encode_request(self, message_id: int = DEFAULT_MID, token: bytes = DEFAULT_TOKEN,
                       path: tuple[str, ...] = (".well-known", "core"), confirmable: bool = True) -> bytes:
        options = [(URI_PATH, seg.encode()) for seg in path]
        return message(CON if confirmable else NON, 1, message_id, token, options)

    def decode_request(self, payload: bytes) -> dict:
        msg = parse_message(payload)
        if msg["code"] != 1 or msg["type"] not in (CON, NON) or msg["payload"]:
            raise Malformed("not a GET request")
        path = tuple(v.decode() for n, v in msg["options"] if n == URI_PATH)
        if len(path) != len(msg["options"]):
            raise Malformed("unexpected options")
        return {"message_id": msg["mid"], "token": msg["token"], "path": path,
                "confirmable": msg["type"] == CON}

    def build_probe(self, message_id: int = DEFAULT_MID, token: bytes = DEFAULT_TOKEN, **_) -> ProbeMessage:
        return ProbeMessage(self.protocol, self.encode_request(message_id, token),
                            context={"message_id": message_id, "token": token})

    def request_kind(self, payload: bytes) -> str:
        if len(payload) < 2:
            return "UNPARSABLE"
        code = payload[1]
        if code >> 5:
            return "RESPONSE"
        return METHODS.get(code, f"METHOD_{code}")

    def frame_length(self, buf) -> int | None:
        # one datagram is one message
        return len(buf) or None

    def _validate(self, data, probe):
        try:
            msg = parse_message(data)
        except ValueError as exc:
            return bad(Reason.BAD_MAGIC, str(exc))
        mtype, code = msg["type"], msg["code"]
        klass = code >> 5
        mid = probe.context.get("message_id", DEFAULT_MID)
        token = probe.context.get("token", DEFAULT_TOKEN)
        if klass in (1, 6, 7):
            raise Malformed(f"reserved code class {klass}")
        if mtype == RST:
            if code or msg["token"] or msg["options"] or msg["payload"]:
                raise Malformed("RST must be empty")
            if msg["mid"] != mid:
                return bad(Reason.ERROR_RESPONSE, "RST for another message id")
            return ok(code="RST")
        if mtype == ACK and msg["mid"] != mid:
            return bad(Reason.ERROR_RESPONSE, "ACK for another message id")
        if code == 0:
            if mtype != ACK or msg["token"] or msg["options"] or msg["payload"]:
                raise Malformed("empty message that is not an empty ACK")
            return ok(code="0.00")
        if klass == 0:
            return bad(Reason.ERROR_RESPONSE, f"request {METHODS.get(code, code)} in reply")
        if msg["token"] != token:
            return bad(Reason.ERROR_RESPONSE, "token mismatch")
        return ok(code=code_str(code))

    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        if behavior == "silent":
            return None
        try:
            req = parse_message(request)
        except Exception:
            return None
        if behavior == "error_response":
            return message(ACK, 0x84, req["mid"], req["token"])
        reply = message(ACK, 0x45, req["mid"], req["token"], [(CONTENT_FORMAT, bytes([LINK_FORMAT]))],
                        b'</sensors/temp>;rt="temperature";if="sensor"')
        if behavior == "malformed_length":
            # option length nibble 13 promises more bytes than remain
            head = bytes([0x40 | (ACK << 4) | len(req["token"]), 0x45]) + struct.pack(">H", req["mid"])
            reply = head + req["token"] + bytes([0xCD, 0xF0]) + b"abc"
        return reply
