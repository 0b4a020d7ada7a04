"""Application-layer behaviour of harness servers."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable

from ..catalog import Protocol
from ..protocols import CODECS
from ..protocols import amqp, coap, mqtt

BEHAVIORS = ("compliant", "silent", "malformed_length", "error_response")
ACCESS_MODES = ("open", "credentials", "default_credentials")

CONTACT_PAYLOAD = b'{"line": 1, "temp": 21.5, "maintainer": "plant-ops@lab-operator.example"}'
DASHBOARD = b"<html><title>Station Overview</title><body><table id='points'></table></body></html>"
LOGIN_FORM = (b"<html><title>Login</title><body><form method='post' action='/login'>"
              b"<input type='text' name='user'><input type=\"password\" name='pass'></form></body></html>")


@dataclass(frozen=True)
class AppConfig:
    protocol: Protocol
    behavior: str = "compliant"
    access: str = "open"
    amqp_dialect: str = "0-9-1"
    username: str = "operator"
    password: str = "s3cret-lab"
    # bytes of PUBLISH traffic streamed after a root subscription
    flood_bytes: int = 0


class AppSession:
    """Per-connection state.  ``on_data`` returns replies to send in order;
    None asks the server to close the connection."""

    def __init__(self, cfg: AppConfig):
        self.cfg = cfg
        self.codec = CODECS[cfg.protocol]

    def on_data(self, data: bytes) -> Iterable[bytes] | None:
        reply = self.codec.respond(data, self.cfg.behavior)
        return [] if reply is None else [reply]


class MqttSession(AppSession):
    def __init__(self, cfg):
        super().__init__(cfg)
        self.buf = b""
        self.connected = False

    def on_data(self, data):
        self.buf += data
        out: list = []
        while True:
            need = mqtt.fixed_header_length(self.buf)
            if need is None or len(self.buf) < need:
                return out
            packet, self.buf = self.buf[:need], self.buf[need:]
            ptype = packet[0] >> 4
            if ptype == 1:
                if self.cfg.behavior != "compliant":
                    reply = self.codec.respond(packet, self.cfg.behavior)
                    if reply is not None:
                        out.append(reply)
                    continue
                try:
                    req = self.codec.decode_request(packet)
                except Exception:
                    return None
                allowed = self.cfg.access != "credentials" or (
                    req["username"] == self.cfg.username and req["password"] == self.cfg.password)
                self.connected = allowed
                out.append(b"\x20\x02\x00" + (b"\x00" if allowed else b"\x05"))
            elif ptype == 8 and self.connected:
                packet_id = packet[2:4] if packet[1] < 0x80 else packet[3:5]
                out.append(b"\x90\x03" + packet_id + b"\x00")
                out.append(_publish("plant/line1/status", CONTACT_PAYLOAD))
                if self.cfg.flood_bytes:
                    out.append(_flood(self.cfg.flood_bytes))
            elif ptype == 12:
                out.append(b"\xd0\x00")
            elif ptype == 14:
                return None


def _publish(topic: str, payload: bytes) -> bytes:
    body = struct.pack(">H", len(topic)) + topic.encode() + payload
    return b"\x30" + mqtt.encode_varint(len(body)) + body


class _Flood:
    """Marker: stream PUBLISH packets until ``total`` bytes are sent or the peer leaves."""

    def __init__(self, total: int, chunk: int = 32 * 1024):
        self.total, self.chunk = total, chunk

    def packets(self):
        sent = 0
        seq = 0
        while sent < self.total:
            payload = bytes([0x41 + seq % 26]) * min(self.chunk, self.total - sent)
            packet = _publish(f"plant/bulk/{seq}", payload)
            sent += len(packet)
            seq += 1
            yield packet


def _flood(total: int) -> _Flood:
    return _Flood(total)


class AmqpSession(AppSession):
    def __init__(self, cfg):
        super().__init__(cfg)
        self.started = False

    def on_data(self, data):
        if data.startswith(b"AMQP"):
            reply = amqp.broker_reply(data, self.cfg.behavior, self.cfg.amqp_dialect)
            if reply is None:
                return []
            self.started = reply.startswith(b"\x01")
            return [reply] if not reply.startswith(b"AMQP") or len(reply) > 8 else [reply, None]
        if not self.started:
            return None
        try:
            name, args = amqp.parse_method(data)
        except Exception:
            return None
        if name == "connection.start-ok":
            args.take(args.u32be())
            args.take(args.u8())
            response = args.take(args.u32be()).split(b"\x00")
            user, password = (response[1].decode(), response[2].decode()) if len(response) == 3 else ("", "")
            if self._login_ok(user, password):
                return [amqp.tune()]
            return [amqp.connection_close(amqp.ACCESS_REFUSED, "ACCESS_REFUSED - Login was refused", 10, 11), None]
        if name == "connection.tune-ok":
            return []
        if name == "connection.open":
            return [amqp.method_frame(10, 41, b"\x00")]
        if name == "connection.close":
            return [amqp.method_frame(10, 51), None]
        return [amqp.connection_close(540, "NOT_IMPLEMENTED"), None]

    def _login_ok(self, user: str, password: str) -> bool:
        if self.cfg.access == "open":
            return True
        if self.cfg.access == "default_credentials":
            return (user, password) == amqp.DEFAULT_CREDENTIALS
        return (user, password) == (self.cfg.username, self.cfg.password)


class HttpSession(AppSession):
    def on_data(self, data):
        if self.cfg.behavior != "compliant":
            return super().on_data(data)
        if not data.startswith(b"GET "):
            return [b"HTTP/1.1 405 Method Not Allowed\r\nContent-Length: 0\r\n\r\n", None]
        body = LOGIN_FORM if self.cfg.access == "credentials" else DASHBOARD
        head = (f"HTTP/1.1 200 OK\r\nServer: Niagara Web Server/4.10\r\nContent-Type: text/html\r\n"
                f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n").encode()
        return [head + body, None]


class CoapSession(AppSession):
    def on_data(self, data):
        try:
            msg = coap.parse_message(data)
        except Exception:
            return []
        if msg["code"] == 0 and msg["type"] == coap.CON:
            # ping
            return [coap.message(coap.RST, 0, msg["mid"])]
        return super().on_data(data)


def session_for(cfg: AppConfig) -> AppSession:
    kinds = {Protocol.MQTT: MqttSession, Protocol.AMQP: AmqpSession, Protocol.FOX_PLATFORM: HttpSession,
             Protocol.COAP: CoapSession}
    return kinds.get(cfg.protocol, AppSession)(cfg)


def expand(replies) -> Iterable[bytes | None]:
    """Flatten replies, turning flood markers into their packet stream."""
    for r in replies:
        if isinstance(r, _Flood):
            yield from r.packets()
        else:
            yield r


