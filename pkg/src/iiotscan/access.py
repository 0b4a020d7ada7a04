"""Application-layer access checks for AMQP, MQTT and the Fox platform web server.

Every message sent here is a read: protocol headers, CONNECT, SUBSCRIBE,
DISCONNECT, AMQP start-ok, HTTP GET.  Nothing is ever published.
"""
from __future__ import annotations

import logging
import re
import socket
import time
from dataclasses import dataclass, field
from typing import Callable

import dns.exception
import dns.resolver

from .catalog import Protocol
from .pipeline import Deployment, ProbeRecord, Stage
from .prober.identity import ClientIdentity
from .prober.probe import PlainDatagram, PlainStream, ProbeConfig, handshake, open_tcp, open_udp
from .protocols import CODECS, amqp, mqtt
from .protocols.base import Malformed, Truncated
from .protocols.http import parse_head

log = logging.getLogger(__name__)

STATUSES = ("open", "default_credentials", "protected", "indeterminate")
# decimal megabytes: the stricter reading of a "10 MB" cap
MB = 1000 * 1000
DEFAULT_BYTE_LIMIT = 10 * MB
DEFAULT_TIME_LIMIT = 30 * 60.0
# protocols without a check: Tridium Fox has no known default password, CoAP would need URL guessing
CHECKED = (Protocol.AMQP, Protocol.MQTT, Protocol.FOX_PLATFORM)


@dataclass
class Contact:
    address: str
    source_host: str = ""
    # True: the domain has MX records; None: the lookup failed, kept unverified
    mx_verified: bool | None = True

    def to_row(self) -> dict:
        return {"address": self.address, "source_host": self.source_host,
                "mx_verified": {True: "yes", None: "unverified"}.get(self.mx_verified, "no")}


@dataclass
class AccessVerdict:
    status: str
    evidence: dict[str, object] = field(default_factory=dict)
    payload_bytes_read: int = 0
    protocol: str = ""
    contacts: list[Contact] = field(default_factory=list)
    # request kinds sent, for the read-only audit
    sent: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown access status {self.status}")

    def evidence_text(self) -> str:
        return ";".join(f"{k}={v}" for k, v in self.evidence.items()) or "checked=1"

    def to_json(self) -> dict:
        return {"status": self.status, "protocol": self.protocol, "evidence": self.evidence,
                "payload_bytes_read": self.payload_bytes_read, "sent": self.sent,
                "contacts": [c.to_row() for c in self.contacts]}

    @classmethod
    def from_json(cls, obj: dict) -> "AccessVerdict":
        flags = {"yes": True, "unverified": None, "no": False}
        contacts = [Contact(c["address"], c.get("source_host", ""), flags.get(c.get("mx_verified"), None))
                    for c in obj.get("contacts", [])]
        return cls(obj["status"], dict(obj.get("evidence", {})), int(obj.get("payload_bytes_read", 0)),
                   obj.get("protocol", ""), contacts, list(obj.get("sent", [])))


@dataclass
class AccessLimits:
    byte_limit: int = DEFAULT_BYTE_LIMIT
    time_limit: float = DEFAULT_TIME_LIMIT
    subscribe_root: bool = False
    read_timeout: float = 5.0
    # end a root subscription after this long without data; None waits for the time limit
    idle_timeout: float | None = None


class _Audited:
    """Connection wrapper that records what was sent and how much was read."""

    def __init__(self, conn, protocol: Protocol):
        self.conn = conn
        self.codec = CODECS[protocol]
        self.sent: list[str] = []
        self.bytes_read = 0
        self.closed_by_peer = False

    def send(self, data: bytes) -> None:
        self.sent.append(self.codec.request_kind(data))
        self.conn.send(data)

    def recv(self, timeout: float, limit: int = 65536) -> bytes:
        """At most ``limit`` bytes.  Plain sockets never read past it; decrypted
        records are cut and the excess dropped unseen."""
        if limit <= 0:
            return b""
        if isinstance(self.conn, PlainStream) and not isinstance(self.conn, PlainDatagram):
            self.conn.sock.settimeout(timeout)
            data = self.conn.sock.recv(min(limit, 65536))
        else:
            data = self.conn.recv(timeout)[:limit]
        if not data:
            self.closed_by_peer = True
        self.bytes_read += len(data)
        return data

    def close(self) -> None:
        self.conn.close()


def _read_frame(conn: _Audited, frame_length: Callable, timeout: float, limit: int = 1 << 20) -> bytes:
    buf = b""
    deadline = time.monotonic() + timeout
    while len(buf) < limit:
        need = frame_length(buf) if buf else None
        if need is not None and len(buf) >= need:
            break
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            break
        try:
            chunk = conn.recv(remaining, (need or limit) - len(buf) if need else 65536)
        except (socket.timeout, TimeoutError):
            break
        except OSError:
            conn.closed_by_peer = True
            break
        if not chunk:
            break
        buf += chunk
    return buf


# --- AMQP ------------------------------------------------------------------------------

def _amqp_frame_length(buf) -> int | None:
    return CODECS[Protocol.AMQP].frame_length(buf)


def amqp_default_credentials(conn, timeout: float = 5.0) -> AccessVerdict:
    """Log in with the broker's shipped default account; close right after the answer."""
    c = _Audited(conn, Protocol.AMQP)
    v = AccessVerdict("indeterminate", protocol=Protocol.AMQP.value)
    try:
        c.send(amqp.HEADER_091)
        reply = _read_frame(c, _amqp_frame_length, timeout)
        if not reply:
            v.evidence = {"stage": "header", "reply": "none"}
            return v
        if reply.startswith(b"AMQP"):
            v.evidence = {"stage": "header", "server_header": reply[4:8].hex()}
            return v
        try:
            name, args = amqp.parse_method(reply)
            if name != "connection.start":
                v.evidence = {"stage": "header", "method": name}
                return v
            args.take(2)
            args.take(args.u32be())
            mechanisms = args.take(args.u32be()).decode("latin-1").split()
        except (Malformed, Truncated) as exc:
            v.evidence = {"stage": "header", "error": str(exc)}
            return v
        if "PLAIN" not in mechanisms:
            v.evidence = {"stage": "start", "mechanisms": "+".join(mechanisms) or "none"}
            return v
        user, password = amqp.DEFAULT_CREDENTIALS
        c.send(amqp.start_ok(user, password))
        answer = _read_frame(c, _amqp_frame_length, timeout)
        if not answer:
            if c.closed_by_peer:
                v.status, v.evidence = "protected", {"stage": "login", "answer": "connection_closed"}
            else:
                v.evidence = {"stage": "login", "answer": "timeout"}
            return v
        try:
            name, args = amqp.parse_method(answer)
        except (Malformed, Truncated) as exc:
            v.evidence = {"stage": "login", "error": str(exc)}
            return v
        if name == "connection.tune":
            v.status, v.evidence = "default_credentials", {"stage": "login", "answer": "connection.tune"}
        elif name == "connection.close":
            code = args.u16be()
            v.status, v.evidence = "protected", {"stage": "login", "answer": "connection.close", "code": code}
        elif name == "connection.secure":
            v.status, v.evidence = "protected", {"stage": "login", "answer": "connection.secure"}
        else:
            v.evidence = {"stage": "login", "answer": name}
        return v
    except OSError as exc:
        v.evidence = {"error": type(exc).__name__}
        return v
    finally:
        # no channel is ever opened; the TCP/TLS session just ends
        c.close()
        v.sent = c.sent
        v.payload_bytes_read = c.bytes_read


# --- MQTT -------------------------------------------------------------------------------

def mqtt_open_access(conn, limits: AccessLimits | None = None, *, source_host: str = "",
                     resolver=None) -> AccessVerdict:
    """Anonymous CONNECT; with ``subscribe_root`` also listen on '#' under the caps.

    Received payloads are only scanned for contact addresses in memory and
    then dropped.
    """
    limits = limits or AccessLimits()
    c = _Audited(conn, Protocol.MQTT)
    v = AccessVerdict("indeterminate", protocol=Protocol.MQTT.value)
    codec = CODECS[Protocol.MQTT]
    try:
        c.send(codec.encode_request(client_id="iiotscan-access"))
        reply = _read_frame(c, mqtt.fixed_header_length, limits.read_timeout)
        if not reply:
            v.evidence = {"connack": "none", "peer_closed": int(c.closed_by_peer)}
            return v
        verdict = codec.validate(reply)
        if not verdict.valid:
            v.evidence = {"connack": "invalid", "reason": verdict.reason.value if verdict.reason else "?"}
            return v
        rc = int(verdict.code)
        v.evidence = {"connack": rc}
        if rc != 0:
            v.status = "protected"
            return v
        v.status = "open"
        if limits.subscribe_root:
            emails = _listen_root(c, limits, v)
            v.contacts = extract_contacts(" ".join(emails), resolver=resolver, source_host=source_host)
        try:
            c.send(mqtt.encode_disconnect())
        except OSError:
            pass
        return v
    except OSError as exc:
        v.evidence.setdefault("error", type(exc).__name__)
        return v
    finally:
        c.close()
        v.sent = c.sent
        v.payload_bytes_read = c.bytes_read


def _listen_root(c: _Audited, limits: AccessLimits, v: AccessVerdict) -> list[str]:
    c.send(mqtt.encode_subscribe(1, "#"))
    start = time.monotonic()
    buf = b""
    messages, topics, emails = 0, set(), []
    stop = "time_limit"
    last_data = start
    while True:
        now = time.monotonic()
        left_time = limits.time_limit - (now - start)
        left_bytes = limits.byte_limit - c.bytes_read
        if left_bytes <= 0:
            stop = "byte_limit"
            break
        if left_time <= 0:
            break
        wait = min(left_time, limits.read_timeout)
        if limits.idle_timeout is not None:
            idle_left = limits.idle_timeout - (now - last_data)
            if idle_left <= 0:
                stop = "idle"
                break
            wait = min(wait, idle_left)
        try:
            chunk = c.recv(wait, left_bytes)
        except (socket.timeout, TimeoutError):
            continue
        except OSError:
            stop = "peer_closed"
            break
        if not chunk:
            stop = "peer_closed"
            break
        last_data = time.monotonic()
        buf += chunk
        while True:
            need = mqtt.fixed_header_length(buf)
            if need is None or len(buf) < need:
                break
            packet, buf = buf[:need], buf[need:]
            try:
                ptype, flags, body = mqtt.decode_packet(packet)
            except (Malformed, Truncated):
                continue
            if ptype == 3:
                try:
                    topic, payload = mqtt.decode_publish(flags, body)
                except (Malformed, Truncated):
                    continue
                messages += 1
                topics.add(topic)
                emails.extend(find_emails(payload.decode("utf-8", "replace")))
        # partial packets are never buffered beyond what the byte cap allows
    v.evidence.update({"subscribed": "#", "messages": messages, "topics": len(topics), "stop": stop,
                       "seconds": round(time.monotonic() - start, 3)})
    return emails


# --- HTTP -----------------------------------------------------------------------------------

_PASSWORD_FIELD = re.compile(rb"""type\s*=\s*["']?password""", re.IGNORECASE)


def http_login_check(conn, host: str = "localhost", timeout: float = 5.0) -> AccessVerdict:
    """GET / and judge whether the landing page demands credentials."""
    c = _Audited(conn, Protocol.FOX_PLATFORM)
    v = AccessVerdict("indeterminate", protocol=Protocol.FOX_PLATFORM.value)
    codec = CODECS[Protocol.FOX_PLATFORM]
    try:
        c.send(codec.encode_request(host))
        raw = _read_frame(c, codec.frame_length, timeout, limit=1 << 20)
        try:
            status, _reason, headers, offset = parse_head(raw)
        except (ValueError, Malformed) as exc:
            v.evidence = {"error": str(exc) or "no reply"}
            return v
        body = raw[offset:]
        v.evidence = {"status": status, "body_bytes": len(body)}
        if 400 <= status < 500:
            v.status = "protected"
        elif 300 <= status < 400:
            if "login" in headers.get("location", "").lower():
                v.status = "protected"
                v.evidence["location"] = "login"
        elif 200 <= status < 300:
            if not body.strip():
                v.status = "protected"
            elif _PASSWORD_FIELD.search(body):
                v.status = "protected"
                v.evidence["password_field"] = 1
            else:
                v.status = "open"
        return v
    except OSError as exc:
        v.evidence = {"error": type(exc).__name__}
        return v
    finally:
        c.close()
        v.sent = c.sent
        v.payload_bytes_read = c.bytes_read


# --- contacts ------------------------------------------------------------------------------

EMAIL = re.compile(r"(?<![A-Za-z0-9.!#$%&'*+/=?^_`{|}~-])"
                   r"([A-Za-z0-9!#$%&'*+/=?^_`{|}~-]+(?:\.[A-Za-z0-9!#$%&'*+/=?^_`{|}~-]+)*"
                   r"@(?:[A-Za-z0-9](?:[A-Za-z0-9-]{0,61}[A-Za-z0-9])?\.)+[A-Za-z]{2,63})(?![A-Za-z0-9-])")


def find_emails(text: str) -> list[str]:
    return EMAIL.findall(text)


def has_mx(domain: str, resolver=None) -> bool | None:
    """True / False from DNS; None when DNS itself failed."""
    resolver = resolver or dns.resolver.Resolver()
    try:
        answer = resolver.resolve(domain, "MX")
        return len(answer) > 0
    except (dns.resolver.NXDOMAIN, dns.resolver.NoAnswer):
        return False
    except dns.exception.DNSException:
        return None


def extract_contacts(text: str, resolver=None, source_host: str = "") -> list[Contact]:
    """Distinct addresses whose domain has an MX record; DNS failures keep the address as unverified."""
    out, seen = [], set()
    cache: dict[str, bool | None] = {}
    for addr in find_emails(text):
        key = addr.lower()
        if key in seen:
            continue
        seen.add(key)
        domain = key.rsplit("@", 1)[1]
        if domain not in cache:
            cache[domain] = has_mx(domain, resolver)
        if cache[domain] is False:
            continue
        out.append(Contact(addr, source_host, cache[domain]))
    return out


# --- dispatch -------------------------------------------------------------------------------

def _access_record(d: Deployment) -> ProbeRecord | None:
    rec = d.primary_tls
    if rec is not None and rec.stage >= Stage.TLS_SUCCESS:
        return rec
    return next((r for r in d.records if not r.is_tls and r.stage is Stage.VALID), None)


def connector(record: ProbeRecord, identity: ClientIdentity | None, cfg: ProbeConfig,
              on_handshake: Callable | None = None) -> Callable:
    """Opens a fresh connection the way the probe reached the application."""
    ep = record.endpoint
    if record.is_tls:
        first = record.battery.first_completed()

        def connect():
            result, channel = handshake(ep, first.suite_set, identity, cfg, keep_open=True)
            if on_handshake is not None:
                on_handshake(result)
            if channel is None:
                raise ConnectionError(f"handshake {result.outcome.value}")
            return channel
        return connect

    def connect_plain():
        if ep.udp:
            return PlainDatagram(open_udp(ep), cfg.udp_retransmits)
        return PlainStream(open_tcp(ep, cfg))
    return connect_plain


def check_access(d: Deployment, limits: AccessLimits, identity: ClientIdentity | None = None,
                 cfg: ProbeConfig | None = None, resolver=None, *, pace: Callable | None = None,
                 on_handshake: Callable | None = None, mark: Callable | None = None) -> AccessVerdict | None:
    """Verdict for one valid deployment; None for protocols without a check.

    ``pace`` runs before the connection is opened; ``on_handshake`` sees the
    TLS handshake, ``mark`` is called for plaintext connections instead.
    """
    if d.protocol not in CHECKED or not d.valid:
        return None
    rec = _access_record(d)
    if rec is None:
        return None
    cfg = cfg or ProbeConfig(read_timeout=limits.read_timeout)
    if d.protocol is Protocol.AMQP:
        dialect = rec.app.dialect if rec.app else None
        if dialect == "1.0":
            return AccessVerdict("indeterminate", {"dialect": "1.0", "reason": "no_plain_login_path"},
                                 protocol=d.protocol.value)
    if pace is not None:
        pace()
    if not rec.is_tls and mark is not None:
        mark()
    try:
        conn = connector(rec, identity, cfg, on_handshake)()
    except (OSError, ConnectionError) as exc:
        return AccessVerdict("indeterminate", {"connect": type(exc).__name__}, protocol=d.protocol.value)
    if d.protocol is Protocol.AMQP:
        return amqp_default_credentials(conn, limits.read_timeout)
    if d.protocol is Protocol.MQTT:
        return mqtt_open_access(conn, limits, source_host=d.host, resolver=resolver)
    return http_login_check(conn, d.host, limits.read_timeout)
