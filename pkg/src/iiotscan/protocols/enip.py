"""EtherNet/IP encapsulation: ListIdentity, then RegisterSession."""
from __future__ import annotations

import socket
import struct

from ..catalog import Protocol
from .base import Codec, Cursor, Malformed, ProbeMessage, Reason, bad, ok

COMMANDS = {
    0x0000: "NOP", 0x0004: "LIST_SERVICES", 0x0063: "LIST_IDENTITY", 0x0064: "LIST_INTERFACES",
    0x0065: "REGISTER_SESSION", 0x0066: "UNREGISTER_SESSION", 0x006F: "SEND_RR_DATA",
    0x0070: "SEND_UNIT_DATA",
}
LIST_IDENTITY, REGISTER_SESSION = 0x0063, 0x0065
SENDER_CONTEXT = b"iiotscan"
HEADER = struct.Struct("<HHII8sI")


def encapsulate(command: int, data: bytes = b"", session: int = 0, status: int = 0,
                context: bytes = SENDER_CONTEXT) -> bytes:
    return HEADER.pack(command, len(data), session, status, context, 0) + data


def identity_item(vendor: int = 1, device_type: int = 0x0C, product_code: int = 0x41,
                  revision: tuple[int, int] = (1, 2), serial: int = 0x4C414230,
                  name: bytes = b"Lab ENIP Adapter") -> bytes:
    sockaddr = struct.pack(">hH4s8s", socket.AF_INET, 44818, bytes(4), bytes(8))
    body = (struct.pack("<H", 1) + sockaddr
            + struct.pack("<HHHBBHI", vendor, device_type, product_code, revision[0], revision[1], 0, serial)
            + bytes([len(name)]) + name + b"\x03")
    return struct.pack("<HHH", 1, 0x000C, len(body)) + body


class EnipCodec(Codec):
    protocol = Protocol.ETHERNETIP
    read_only_kinds = frozenset({"LIST_IDENTITY", "REGISTER_SESSION", "UNREGISTER_SESSION"})

    def encode_request(self, command: str = "LIST_IDENTITY") -> bytes:
        if command == "LIST_IDENTITY":
            return encapsulate(LIST_IDENTITY)
        if command == "REGISTER_SESSION":
            return encapsulate(REGISTER_SESSION, struct.pack("<HH", 1, 0))
        raise ValueError(f"{command} is not a probe request")

    def decode_request(self, payload: bytes) -> dict:
        cur = Cursor(payload)
        command, length, session, status, context, options = HEADER.unpack(cur.take(HEADER.size))
        data = cur.take(length)
        if not cur.done() or command not in (LIST_IDENTITY, REGISTER_SESSION):
            raise Malformed("not a probe request")
        if command == REGISTER_SESSION and data != struct.pack("<HH", 1, 0):
            raise Malformed("bad RegisterSession data")
        return {"command": COMMANDS[command]}

    def build_probe(self, command: str = "LIST_IDENTITY", **_) -> ProbeMessage:
        return ProbeMessage(self.protocol, self.encode_request(command), context={"command": command})

    def follow_up(self) -> ProbeMessage:
        return self.build_probe("REGISTER_SESSION")

    def request_kind(self, payload: bytes) -> str:
        if len(payload) < 2:
            return "UNPARSABLE"
        command = struct.unpack("<H", payload[:2])[0]
        return COMMANDS.get(command, f"COMMAND_{command:#06x}")

    def frame_length(self, buf) -> int | None:
        return None if len(buf) < 4 else HEADER.size + struct.unpack("<H", bytes(buf[2:4]))[0]

    def _validate(self, data, probe):
        cur = Cursor(data)
        command, length, session, status, context, _options = HEADER.unpack(cur.take(HEADER.size))
        expected = REGISTER_SESSION if probe.context.get("command") == "REGISTER_SESSION" else LIST_IDENTITY
        if command not in COMMANDS:
            return bad(Reason.BAD_MAGIC, f"unknown encapsulation command {command:#06x}")
        body = cur.sub(length)
        if command != expected:
            return bad(Reason.ERROR_RESPONSE, f"{COMMANDS[command]} in reply")
        if status != 0:
            return ok(code=f"status:{status:#x}")
        if command == REGISTER_SESSION:
            if length != 4 or session == 0 or body.u16le() != 1:
                raise Malformed("bad RegisterSession reply")
            body.u16le()
            return ok(code="session")
        count = body.u16le()
        if count < 1:
            raise Malformed("ListIdentity reply without items")
        for _ in range(count):
            item_type, item_len = body.u16le(), body.u16le()
            item = body.sub(item_len)
            if item_type == 0x000C:
                item.u16le()
                item.take(16)
                item.take(14)
                item.take(item.u8())
                item.u8()
                if not item.done():
                    raise Malformed("identity item longer than its fields")
        if not body.done():
            raise Malformed("trailing bytes after CPF items")
        return ok(code="identity")

    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        if behavior == "silent" or len(request) < HEADER.size:
            return None
        command = struct.unpack("<H", request[:2])[0]
        context = request[12:20]
        if behavior == "error_response":
            return encapsulate(command, b"", status=0x0001, context=context)
        if command == LIST_IDENTITY:
            reply = encapsulate(LIST_IDENTITY, identity_item(), context=context)
        elif command == REGISTER_SESSION:
            reply = encapsulate(REGISTER_SESSION, struct.pack("<HH", 1, 0), session=0x1A2B3C4D, context=context)
        else:
            return None
        if behavior == "malformed_length":
            reply = reply[:2] + struct.pack("<H", len(reply)) + reply[4:]
        return reply
