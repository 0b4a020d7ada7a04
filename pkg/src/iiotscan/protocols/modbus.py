"""Modbus/TCP Read Device Identification (function 0x2B, MEI type 0x0E)."""
from __future__ import annotations

import struct

from ..catalog import Protocol
from .base import Codec, Cursor, Malformed, ProbeMessage, Reason, bad, ok

FUNCTIONS = {
    0x01: "READ_COILS", 0x02: "READ_DISCRETE_INPUTS", 0x03: "READ_HOLDING_REGISTERS",
    0x04: "READ_INPUT_REGISTERS", 0x05: "WRITE_SINGLE_COIL", 0x06: "WRITE_SINGLE_REGISTER",
    0x07: "READ_EXCEPTION_STATUS", 0x08: "DIAGNOSTICS", 0x0F: "WRITE_MULTIPLE_COILS",
    0x10: "WRITE_MULTIPLE_REGISTERS", 0x11: "REPORT_SERVER_ID", 0x16: "MASK_WRITE_REGISTER",
    0x17: "READ_WRITE_MULTIPLE_REGISTERS", 0x2B: "ENCAPSULATED_INTERFACE",
}
MEI_READ_DEVICE_ID = 0x0E
DEFAULT_OBJECTS = {0x00: b"Lab Automation", 0x01: b"LA-100", 0x02: b"1.0"}


def mbap(transaction_id: int, unit_id: int, pdu: bytes) -> bytes:
    return struct.pack(">HHHB", transaction_id, 0, len(pdu) + 1, unit_id) + pdu


class ModbusCodec(Codec):
    protocol = Protocol.MODBUS
    read_only_kinds = frozenset({"READ_DEVICE_ID"})

    def encode_request(self, transaction_id: int = 0x4949, unit_id: int = 0, read_code: int = 1,
                       object_id: int = 0) -> bytes:
        return mbap(transaction_id, unit_id, bytes([0x2B, MEI_READ_DEVICE_ID, read_code, object_id]))

    def decode_request(self, payload: bytes) -> dict:
        cur = Cursor(payload)
        tid, pid, length, unit = cur.u16be(), cur.u16be(), cur.u16be(), cur.u8()
        pdu = cur.sub(length - 1)
        if pid != 0 or not cur.done():
            raise Malformed("bad MBAP header")
        if pdu.u8() != 0x2B or pdu.u8() != MEI_READ_DEVICE_ID:
            raise Malformed("not a Read Device Identification request")
        out = {"transaction_id": tid, "unit_id": unit, "read_code": pdu.u8(), "object_id": pdu.u8()}
        if not pdu.done():
            raise Malformed("trailing bytes")
        return out

    def build_probe(self, transaction_id: int = 0x4949, unit_id: int = 0, **_) -> ProbeMessage:
        return ProbeMessage(self.protocol, self.encode_request(transaction_id, unit_id),
                            context={"transaction_id": transaction_id})

    def request_kind(self, payload: bytes) -> str:
        if len(payload) < 8:
            return "UNPARSABLE"
        fc = payload[7]
        if fc == 0x2B and len(payload) > 8 and payload[8] == MEI_READ_DEVICE_ID:
            return "READ_DEVICE_ID"
        return FUNCTIONS.get(fc, f"FUNCTION_{fc:#04x}")

    def frame_length(self, buf) -> int | None:
        return None if len(buf) < 6 else 6 + struct.unpack(">H", bytes(buf[4:6]))[0]

    def _validate(self, data, probe):
        cur = Cursor(data)
        tid, pid, length = cur.u16be(), cur.u16be(), cur.u16be()
        if pid != 0:
            return bad(Reason.BAD_MAGIC, f"protocol id {pid}")
        if not 2 <= length <= 254:
            return bad(Reason.BAD_LENGTH_FIELD, f"MBAP length {length}")
        body = cur.sub(length)
        body.u8()  # unit id
        fc = body.u8()
        if tid != probe.context.get("transaction_id", tid):
            return bad(Reason.ERROR_RESPONSE, "transaction id mismatch")
        if fc == 0xAB:
            code = body.u8()
            if not body.done() or not 1 <= code <= 0x0B:
                raise Malformed("bad exception response")
            return ok(code=f"exception:{code}")
        if fc != 0x2B:
            return bad(Reason.ERROR_RESPONSE, f"function {fc:#04x} in reply")
        if body.u8() != MEI_READ_DEVICE_ID:
            raise Malformed("wrong MEI type")
        read_code, conformity, more, _next, count = body.u8(), body.u8(), body.u8(), body.u8(), body.u8()
        if read_code not in (1, 2, 3, 4) or conformity & 0x7F not in (1, 2, 3) or more not in (0, 0xFF):
            raise Malformed("bad device identification header")
        for _ in range(count):
            body.u8()
            body.take(body.u8())
        if not body.done():
            raise Malformed("object list does not fill the PDU")
        return ok(code=f"objects:{count}")

    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        if behavior == "silent" or len(request) < 7:
            return None
        tid, _, _, unit = struct.unpack(">HHHB", request[:7])
        if behavior == "error_response":
            return mbap(tid, unit, b"\xab\x01")
        objects = b"".join(bytes([k, len(v)]) + v for k, v in DEFAULT_OBJECTS.items())
        pdu = bytes([0x2B, MEI_READ_DEVICE_ID, 1, 0x01, 0x00, 0x00, len(DEFAULT_OBJECTS)]) + objects
        reply = mbap(tid, unit, pdu)
        if behavior == "malformed_length":
            reply = reply[:4] + struct.pack(">H", len(pdu) + 40) + reply[6:]
        return reply
