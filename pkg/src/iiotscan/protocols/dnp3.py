"""DNP3 link-layer Request Link Status probe."""
from __future__ import annotations

import struct

from ..catalog import Protocol
from .base import Codec, Cursor, Malformed, ProbeMessage, Reason, bad, ok

PRIMARY_FUNCTIONS = {0: "RESET_LINK_STATES", 2: "TEST_LINK_STATES", 3: "CONFIRMED_USER_DATA",
                     4: "UNCONFIRMED_USER_DATA", 9: "REQUEST_LINK_STATUS"}
SECONDARY_FUNCTIONS = {0: "ACK", 1: "NACK", 11: "LINK_STATUS", 15: "NOT_SUPPORTED"}


def crc16_dnp(data: bytes) -> int:
    crc = 0
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ 0xA6BC if crc & 1 else crc >> 1
    return ~crc & 0xFFFF


def link_frame(control: int, destination: int, source: int, user_data: bytes = b"") -> bytes:
    header = struct.pack("<BBBBHH", 0x05, 0x64, 5 + len(user_data), control, destination, source)
    out = header + struct.pack("<H", crc16_dnp(header))
    for i in range(0, len(user_data), 16):
        block = user_data[i:i + 16]
        out += block + struct.pack("<H", crc16_dnp(block))
    return out


def frame_size(length_field: int) -> int:
    user = max(length_field - 5, 0)
    return 10 + user + 2 * ((user + 15) // 16)


def parse_frame(cur: Cursor) -> dict:
    start = cur.take(2)
    if start != b"\x05\x64":
        raise ValueError("bad start bytes")
    length = cur.u8()
    if length < 5:
        raise OverflowError(length)
    control = cur.u8()
    dest, src = cur.u16le(), cur.u16le()
    header = start + bytes([length, control]) + struct.pack("<HH", dest, src)
    if cur.u16le() != crc16_dnp(header):
        raise Malformed("header CRC mismatch")
    user = length - 5
    data = b""
    while user > 0:
        block = cur.take(min(16, user))
        if cur.u16le() != crc16_dnp(block):
            raise Malformed("data block CRC mismatch")
        data += block
        user -= len(block)
    return {"control": control, "destination": dest, "source": src, "data": data,
            "primary": bool(control & 0x40), "function": control & 0x0F}


class Dnp3Codec(Codec):
    protocol = Protocol.DNP3
    read_only_kinds = frozenset({"REQUEST_LINK_STATUS"})

    def encode_request(self, destination: int = 1, source: int = 3) -> bytes:
        # DIR=1 (from master), PRM=1, function 9
        return link_frame(0xC9, destination, source)

    def decode_request(self, payload: bytes) -> dict:
        frame = parse_frame(Cursor(payload))
        if not frame["primary"] or frame["function"] != 9 or frame["data"]:
            raise Malformed("not a Request Link Status frame")
        return {"destination": frame["destination"], "source": frame["source"]}

    def build_probe(self, destination: int = 1, source: int = 3, **_) -> ProbeMessage:
        return ProbeMessage(self.protocol, self.encode_request(destination, source),
                            context={"source": source})

    def request_kind(self, payload: bytes) -> str:
        try:
            frame = parse_frame(Cursor(payload))
        except Exception:
            return "UNPARSABLE"
        if not frame["primary"]:
            return "SECONDARY"
        if frame["data"]:
            return "USER_DATA"
        return PRIMARY_FUNCTIONS.get(frame["function"], f"FUNCTION_{frame['function']}")

    def frame_length(self, buf) -> int | None:
        return None if len(buf) < 3 else frame_size(buf[2])

    def _validate(self, data, probe):
        try:
            frame = parse_frame(Cursor(data))
        except ValueError:
            return bad(Reason.BAD_MAGIC, "frame does not start with 05 64")
        except OverflowError as exc:
            return bad(Reason.BAD_LENGTH_FIELD, f"link length {exc.args[0]}")
        if frame["primary"]:
            return bad(Reason.ERROR_RESPONSE, "primary frame in reply to a link status request")
        if frame["function"] not in SECONDARY_FUNCTIONS or frame["data"]:
            raise Malformed(f"secondary function {frame['function']}")
        if frame["destination"] != probe.context.get("source", frame["destination"]):
            return bad(Reason.ERROR_RESPONSE, "reply addressed to another master")
        return ok(code=SECONDARY_FUNCTIONS[frame["function"]])

    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        if behavior == "silent":
            return None
        try:
            req = parse_frame(Cursor(request))
        except Exception:
            return None
        dest, src = req["source"], req["destination"]
        if behavior == "malformed_length":
            header = struct.pack("<BBBBHH", 0x05, 0x64, 0x20, 0x0B, dest, src)
            return header + struct.pack("<H", crc16_dnp(header))
        function = 15 if behavior == "error_response" else 11
        return link_frame(function, dest, src)
