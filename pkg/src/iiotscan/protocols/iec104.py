"""IEC 60870-5-104 STARTDT activation probe.

Only U-format APDUs are ever sent; they control data transfer and carry no
ASDU, so they cannot issue commands to the outstation.
"""
from __future__ import annotations

from ..catalog import Protocol
from .base import Codec, Cursor, Malformed, ProbeMessage, Reason, bad, ok

START = 0x68
U_FUNCTIONS = {
    0x07: "STARTDT_ACT", 0x0B: "STARTDT_CON", 0x13: "STOPDT_ACT", 0x23: "STOPDT_CON",
    0x43: "TESTFR_ACT", 0x83: "TESTFR_CON",
}
U_CODES = {v: k for k, v in U_FUNCTIONS.items()}


def u_frame(kind: str) -> bytes:
    return bytes([START, 4, U_CODES[kind], 0, 0, 0])


def parse_apdu(cur: Cursor) -> tuple[str, bytes]:
    """(format, APCI control + ASDU bytes) of the next APDU."""
    if cur.u8() != START:
        raise ValueError("bad start byte")
    length = cur.u8()
    if not 4 <= length <= 253:
        raise OverflowError(length)
    body = cur.take(length)
    c1 = body[0]
    if c1 & 0x01 == 0:
        return "I", body
    if c1 & 0x03 == 0x01:
        if length != 4 or c1 != 0x01 or body[1] != 0:
            raise Malformed("bad S-format control field")
        return "S", body
    if length != 4 or body[1:] != b"\x00\x00\x00" or c1 not in U_FUNCTIONS:
        raise Malformed("bad U-format control field")
    return U_FUNCTIONS[c1], body


class Iec104Codec(Codec):
    protocol = Protocol.IEC104
    read_only_kinds = frozenset({"STARTDT_ACT", "STOPDT_ACT", "TESTFR_ACT"})

    def encode_request(self, kind: str = "STARTDT_ACT") -> bytes:
        return u_frame(kind)

    def decode_request(self, payload: bytes) -> dict:
        kind, _ = parse_apdu(Cursor(payload))
        return {"kind": kind}

    def build_probe(self, **_) -> ProbeMessage:
        return ProbeMessage(self.protocol, self.encode_request())

    def request_kind(self, payload: bytes) -> str:
        try:
            return parse_apdu(Cursor(payload))[0]
        except Exception:
            return "UNPARSABLE"

    def frame_length(self, buf) -> int | None:
        return None if len(buf) < 2 else 2 + buf[1]

    def _validate(self, data, probe):
        cur = Cursor(data)
        try:
            kind, _ = parse_apdu(cur)
        except ValueError:
            return bad(Reason.BAD_MAGIC, "APDU does not start with 0x68")
        except OverflowError as exc:
            return bad(Reason.BAD_LENGTH_FIELD, f"APDU length {exc.args[0]}")
        if kind == "STARTDT_CON":
            return ok(code=kind)
        return bad(Reason.ERROR_RESPONSE, f"{kind} in reply to STARTDT act")

    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        kind = self.request_kind(request)
        if behavior == "silent":
            return None
        if behavior == "malformed_length":
            return bytes([START, 0x0E, 0x0B, 0, 0, 0])
        if behavior == "error_response":
            # no negative confirmation exists for U-frames; stop instead
            return u_frame("STOPDT_CON")
        if kind.endswith("_ACT"):
            return u_frame(kind[:-4] + "_CON")
        return None
