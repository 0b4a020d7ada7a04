"""S7comm transport setup: COTP Connection Request inside a TPKT."""
from __future__ import annotations

import struct

from ..catalog import Protocol
from .base import Codec, Cursor, Malformed, ProbeMessage, Reason, bad, ok

COTP_TYPES = {0xE0: "CR", 0xD0: "CC", 0x80: "DR", 0xC0: "DC", 0xF0: "DT", 0x70: "ER"}


def tpkt(payload: bytes) -> bytes:
    return struct.pack(">BBH", 3, 0, len(payload) + 4) + payload


def _params(tpdu_size: int, src_tsap: int, dst_tsap: int) -> bytes:
    return (bytes([0xC0, 1, tpdu_size]) + bytes([0xC1, 2]) + struct.pack(">H", src_tsap)
            + bytes([0xC2, 2]) + struct.pack(">H", dst_tsap))


def cotp(pdu_type: int, dst_ref: int, src_ref: int, params: bytes, klass: int = 0) -> bytes:
    body = bytes([pdu_type]) + struct.pack(">HH", dst_ref, src_ref) + bytes([klass]) + params
    return bytes([len(body)]) + body


def parse_cotp(cur: Cursor) -> dict:
    li = cur.u8()
    body = cur.sub(li)
    pdu_type = body.u8() & 0xF0 if li else None
    out: dict = {"type": COTP_TYPES.get(pdu_type, f"{pdu_type}"), "params": {}}
    if pdu_type in (0xE0, 0xD0):
        out["dst_ref"], out["src_ref"], out["class"] = body.u16be(), body.u16be(), body.u8()
        while not body.done():
            code, plen = body.u8(), body.u8()
            out["params"][code] = body.take(plen)
    elif pdu_type == 0x80:
        out["dst_ref"], out["src_ref"], out["reason"] = body.u16be(), body.u16be(), body.u8()
        body.take(body.remaining())
    elif pdu_type == 0x70:
        out["dst_ref"], out["cause"] = body.u16be(), body.u8()
        body.take(body.remaining())
    return out


class S7Codec(Codec):
    protocol = Protocol.S7
    read_only_kinds = frozenset({"COTP_CR"})

    def encode_request(self, src_ref: int = 1, tpdu_size: int = 0x0A, src_tsap: int = 0x0100,
                       dst_tsap: int = 0x0102) -> bytes:
        return tpkt(cotp(0xE0, 0, src_ref, _params(tpdu_size, src_tsap, dst_tsap)))

    def decode_request(self, payload: bytes) -> dict:
        cur = Cursor(payload)
        if cur.u8() != 3 or cur.u8() != 0:
            raise Malformed("bad TPKT header")
        length = cur.u16be()
        frame = parse_cotp(cur.sub(length - 4))
        if frame["type"] != "CR" or not cur.done():
            raise Malformed("not a COTP connection request")
        p = frame["params"]
        return {"src_ref": frame["src_ref"], "tpdu_size": p[0xC0][0],
                "src_tsap": struct.unpack(">H", p[0xC1])[0], "dst_tsap": struct.unpack(">H", p[0xC2])[0]}

    def build_probe(self, **_) -> ProbeMessage:
        return ProbeMessage(self.protocol, self.encode_request())

    def request_kind(self, payload: bytes) -> str:
        try:
            cur = Cursor(payload)
            cur.take(4)
            kind = parse_cotp(cur)["type"]
        except Exception:
            return "UNPARSABLE"
        return "COTP_" + kind if kind != "DT" else "S7_DATA"

    def frame_length(self, buf) -> int | None:
        return None if len(buf) < 4 else struct.unpack(">H", bytes(buf[2:4]))[0]

    def _validate(self, data, probe):
        cur = Cursor(data)
        if cur.u8() != 3 or cur.u8() != 0:
            return bad(Reason.BAD_MAGIC, "not a TPKT header")
        length = cur.u16be()
        if length < 7:
            return bad(Reason.BAD_LENGTH_FIELD, f"TPKT length {length}")
        frame = parse_cotp(cur.sub(length - 4))
        kind = frame["type"]
        if kind == "CC":
            return ok(code="CC")
        if kind in ("DR", "ER"):
            return ok(code=kind)
        if kind in COTP_TYPES.values():
            return bad(Reason.ERROR_RESPONSE, f"COTP {kind} in reply to CR")
        raise Malformed(f"COTP PDU type {kind}")

    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        if behavior == "silent":
            return None
        try:
            req = self.decode_request(request)
        except Exception:
            return None
        if behavior == "error_response":
            return tpkt(bytes([6, 0x80]) + struct.pack(">HH", req["src_ref"], 0x0005) + b"\x80")
        reply = tpkt(cotp(0xD0, req["src_ref"], 0x0005,
                          _params(req["tpdu_size"], req["src_tsap"], req["dst_tsap"])))
        if behavior == "malformed_length":
            reply = reply[:2] + struct.pack(">H", len(reply) + 32) + reply[4:]
        return reply
