"""Transport checks, the four-handshake battery and the application probe."""
from __future__ import annotations

import errno
import logging
import os
import socket
import struct
import time
from dataclasses import dataclass, field
from typing import Callable

from ..protocols.session import AppExchange, exchange
from ..targets import Endpoint
from . import wire
from .cipher import DTLS12
from .engine import DatagramChannel, DtlsTimers, RecordChannel, StreamChannel, client_handshake
from .identity import ClientIdentity
from .results import ClientAuth, HandshakeResult, Outcome, SuiteBattery, TransportResult
from .suites import BATTERY_ORDER, SuiteSetName, suite_set

log = logging.getLogger(__name__)


@dataclass
class ProbeConfig:
    connect_timeout: float = 10.0
    read_timeout: float = 5.0
    udp_retransmits: int = 3
    dtls_timers: DtlsTimers = field(default_factory=DtlsTimers)
    # how long a fresh TCP connection must survive to count as alive
    linger_check: float = 0.3
    offer_tls13: bool = False
    server_name: str | None = None


# --- plain connections --------------------------------------------------------

class PlainStream:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.bytes_sent = 0
        self.bytes_received = 0

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)
        self.bytes_sent += len(data)

    def recv(self, timeout: float | None = None) -> bytes:
        self.sock.settimeout(timeout)
        data = self.sock.recv(65536)
        self.bytes_received += len(data)
        return data

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class PlainDatagram(PlainStream):
    """Connected UDP socket that resends the last datagram while waiting."""

    def __init__(self, sock: socket.socket, retransmits: int = 3):
        super().__init__(sock)
        self.retransmits = retransmits
        self._last = b""

    def send(self, data: bytes) -> None:
        self._last = data
        self.sock.send(data)
        self.bytes_sent += len(data)

    def recv(self, timeout: float | None = None) -> bytes:
        timeout = 5.0 if timeout is None else timeout
        per_try = timeout / (self.retransmits + 1)
        for attempt in range(self.retransmits + 1):
            self.sock.settimeout(max(per_try, 0.01))
            try:
                data = self.sock.recv(65536)
                self.bytes_received += len(data)
                return data
            except socket.timeout:
                if attempt < self.retransmits and self._last:
                    self.sock.send(self._last)
        raise socket.timeout("no datagram")


def _family(address: str) -> int:
    return socket.AF_INET6 if ":" in address else socket.AF_INET


def open_tcp(ep: Endpoint, cfg: ProbeConfig) -> socket.socket:
    sock = socket.create_connection((ep.address, ep.port), timeout=cfg.connect_timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


def open_udp(ep: Endpoint) -> socket.socket:
    sock = socket.socket(_family(ep.address), socket.SOCK_DGRAM)
    sock.connect((ep.address, ep.port))
    return sock


# --- transport ---------------------------------------------------------------

def _udp_liveness_payload(ep: Endpoint) -> bytes:
    if ep.secure:
        # a ClientHello offering every battery suite; any answer proves a listener
        codes = sorted({c for n in BATTERY_ORDER for c in suite_set(n).code_points()})
        body = wire.build_client_hello_body(DTLS12, os.urandom(32), codes, cookie=b"")
        hs = wire.dtls_handshake_header(wire.CLIENT_HELLO, body, 0)
        return struct.pack("!BHHIH", wire.HANDSHAKE, 0xFEFF, 0, 0, 0) + wire.u16(len(hs)) + hs
    # CoAP ping: empty confirmable message
    return bytes([0x40, 0x00]) + os.urandom(2)


def probe_transport(ep: Endpoint, cfg: ProbeConfig | None = None) -> TransportResult:
    cfg = cfg or ProbeConfig()
    if ep.udp:
        try:
            conn = PlainDatagram(open_udp(ep), cfg.udp_retransmits)
        except OSError:
            return TransportResult.DEAD
        try:
            conn.send(_udp_liveness_payload(ep))
            conn.recv(cfg.read_timeout)
            return TransportResult.ALIVE
        except (socket.timeout, OSError):
            return TransportResult.DEAD
        finally:
            conn.close()
    try:
        sock = open_tcp(ep, cfg)
    except ConnectionRefusedError:
        return TransportResult.RESET
    except (socket.timeout, TimeoutError):
        return TransportResult.DEAD
    except OSError as exc:
        return TransportResult.RESET if exc.errno == errno.ECONNRESET else TransportResult.DEAD
    try:
        sock.settimeout(cfg.linger_check)
        if sock.recv(1, socket.MSG_PEEK) == b"":
            return TransportResult.RESET
        return TransportResult.ALIVE
    except (socket.timeout, TimeoutError):
        return TransportResult.ALIVE
    except (ConnectionResetError, ConnectionAbortedError):
        return TransportResult.RESET
    except OSError:
        return TransportResult.DEAD
    finally:
        sock.close()


# --- handshakes ----------------------------------------------------------------

def open_channel(ep: Endpoint, cfg: ProbeConfig) -> RecordChannel:
    if ep.udp:
        return DatagramChannel(open_udp(ep), cfg.read_timeout, cfg.dtls_timers)
    return StreamChannel(open_tcp(ep, cfg), cfg.read_timeout)


def handshake(ep: Endpoint, name: SuiteSetName | str, identity: ClientIdentity | None,
              cfg: ProbeConfig | None = None, *, keep_open: bool = False,
              offer_tls13: bool = False) -> tuple[HandshakeResult, RecordChannel | None]:
    """One handshake offering one suite set.

    With ``keep_open`` a completed channel is returned for application data;
    otherwise it is closed and None is returned.
    """
    cfg = cfg or ProbeConfig()
    name = SuiteSetName(name) if name is not None else None
    suites = suite_set(name if name is not None else SuiteSetName.REC).suites
    try:
        channel = open_channel(ep, cfg)
    except (socket.timeout, TimeoutError):
        return HandshakeResult(name, Outcome.TIMEOUT, error="connect timeout", dtls=ep.udp,
                               started_at=time.time()), None
    except OSError as exc:
        return HandshakeResult(name, Outcome.DENIED, error=f"connect: {exc}", dtls=ep.udp,
                               started_at=time.time()), None
    result = client_handshake(channel, suites, identity, suite_set=name, server_name=cfg.server_name,
                              offer_tls13=offer_tls13)
    if keep_open and result.completed:
        return result, channel
    channel.close()
    return result, None


def probe_tls13(ep: Endpoint, identity: ClientIdentity | None = None,
                cfg: ProbeConfig | None = None) -> HandshakeResult:
    """Optional fifth handshake with a direct TLS 1.3 offer (TCP only)."""
    result, _ = handshake(ep, None, identity, cfg, offer_tls13=True)
    return result


def run_battery(ep: Endpoint, identity: ClientIdentity | None, cfg: ProbeConfig | None = None, *,
                app_probe: bool = True, pace: Callable[[int], None] | None = None,
                on_handshake: Callable[[HandshakeResult], None] | None = None,
                ) -> tuple[SuiteBattery, AppExchange | None]:
    """REC, noPFS, COMP, INS in order; never stops early.

    The application probe runs over the first handshake that completes.
    ``pace(i)`` is called before handshake ``i`` so the caller can enforce
    per-host spacing.
    """
    cfg = cfg or ProbeConfig()
    results: dict[SuiteSetName, HandshakeResult] = {}
    app: AppExchange | None = None
    for i, name in enumerate(BATTERY_ORDER):
        if pace is not None:
            pace(i)
        want_app = app_probe and app is None
        result, channel = handshake(ep, name, identity, cfg, keep_open=want_app)
        results[name] = result
        if on_handshake is not None:
            on_handshake(result)
        if channel is not None:
            app = exchange(ep.protocol, channel, reconnect=_reconnector(ep, name, identity, cfg),
                           timeout=cfg.read_timeout, **_probe_opts(ep))
    return SuiteBattery(results), app


def _reconnector(ep, name, identity, cfg):
    def reconnect():
        result, channel = handshake(ep, name, identity, cfg, keep_open=True)
        if channel is None:
            raise ConnectionError(f"re-handshake failed: {result.outcome.value}")
        return channel
    return reconnect


def _probe_opts(ep: Endpoint) -> dict:
    from ..catalog import Protocol
    if ep.protocol is Protocol.OPCUA:
        return {"endpoint_url": f"opc.tcp://{ep.address}:{ep.port}/"}
    if ep.protocol is Protocol.FOX_PLATFORM:
        return {"host": ep.address}
    return {}


def probe_plaintext(ep: Endpoint, cfg: ProbeConfig | None = None) -> AppExchange:
    """Application probe without TLS (standard-variant endpoints)."""
    cfg = cfg or ProbeConfig()

    def connect():
        if ep.udp:
            return PlainDatagram(open_udp(ep), cfg.udp_retransmits)
        return PlainStream(open_tcp(ep, cfg))

    from ..protocols.base import Reason, bad
    try:
        conn = connect()
    except OSError as exc:
        return AppExchange(bad(Reason.EMPTY, f"connect: {exc}"))
    return exchange(ep.protocol, conn, reconnect=connect, timeout=cfg.read_timeout, **_probe_opts(ep))


def classify_client_auth(battery: SuiteBattery) -> ClientAuth:
    requesting = [h for h in battery if h.client_cert_requested]
    if not requesting:
        return ClientAuth.NOT_REQUESTED
    if any(h.completed for h in requesting):
        return ClientAuth.REQUESTED_AND_ACCEPTED
    # requested but never completed with our certificate: treated as refusal
    return ClientAuth.REQUESTED_AND_REJECTED


def handshake_record(ep: Endpoint, result: HandshakeResult) -> dict:
    """One JSONL line per handshake."""
    return {"endpoint": ep.to_json(), **result.to_json()}
