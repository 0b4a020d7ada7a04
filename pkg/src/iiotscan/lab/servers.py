"""Loopback TCP/UDP servers: plaintext, OpenSSL-backed TLS/DTLS, legacy TLS."""
from __future__ import annotations

import hmac
import logging
import os
import socket
import struct
import threading
from dataclasses import dataclass, field
from typing import Callable

from cryptography import x509
from OpenSSL import SSL, crypto

from ..prober.cipher import TLS10, TLS12
from .apps import AppConfig, expand, session_for
from .legacy import HandshakeAbort, server_handshake
from .pki import IssuedCert

log = logging.getLogger(__name__)

TLS_VERSIONS = {"TLSv1.0": SSL.TLS1_VERSION, "TLSv1.1": SSL.TLS1_1_VERSION,
                "TLSv1.2": SSL.TLS1_2_VERSION, "TLSv1.3": SSL.TLS1_3_VERSION}
DTLS_VERSIONS = {"TLSv1.0": 0xFEFF, "TLSv1.1": 0xFEFF, "TLSv1.2": 0xFEFD, "TLSv1.3": 0xFEFD}
LEGACY_VERSIONS = {"TLSv1.0": TLS10, "TLSv1.1": 0x0302, "TLSv1.2": TLS12, "TLSv1.3": TLS12}
CLIENT_AUTH_MODES = ("off", "request_accept_any", "require_known_ca")


@dataclass(frozen=True)
class SuitePolicy:
    backend: str  # openssl | legacy
    ciphers: str = ""
    legacy_suites: tuple[str, ...] = ()
    server_preference: bool = False
    floor: str = "TLSv1.0"


SUITE_POLICIES: dict[str, SuitePolicy] = {
    "rec_only": SuitePolicy("openssl", "ECDHE+AESGCM:ECDHE+AESCCM"),
    "broad": SuitePolicy("openssl", "DEFAULT"),
    "ins_accepting": SuitePolicy("openssl", "ALL:eNULL"),
    "weak_mac": SuitePolicy("openssl", "ECDHE-RSA-AES128-SHA:ECDHE-ECDSA-AES128-SHA:ECDHE+AESGCM",
                            server_preference=True),
    "weak_cipher": SuitePolicy("legacy", legacy_suites=(
        "ECDHE_RSA_WITH_3DES_EDE_CBC_SHA", "RSA_WITH_RC4_128_SHA", "ECDHE_RSA_WITH_AES_128_GCM_SHA256",
        "ECDHE_RSA_WITH_AES_256_GCM_SHA384")),
    "no_rec": SuitePolicy("legacy", legacy_suites=("ECDH_ECDSA_WITH_AES_128_GCM_SHA256",)),
    "tls13_only": SuitePolicy("openssl", "DEFAULT", floor="TLSv1.3"),
}


@dataclass
class TlsConfig:
    cert: IssuedCert
    policy: str = "broad"
    ceiling: str = "TLSv1.3"
    client_auth: str = "off"
    trusted_client_ca: bytes | None = None  # DER of the CA required in require_known_ca

    @property
    def suite_policy(self) -> SuitePolicy:
        return SUITE_POLICIES[self.policy]


def openssl_context(cfg: TlsConfig, dtls: bool = False) -> SSL.Context:
    pol = cfg.suite_policy
    ctx = SSL.Context(SSL.DTLS_METHOD if dtls else SSL.TLS_METHOD)
    versions = DTLS_VERSIONS if dtls else TLS_VERSIONS
    ctx.set_min_proto_version(versions[pol.floor])
    ctx.set_max_proto_version(versions[cfg.ceiling])
    ctx.set_cipher_list((pol.ciphers + ":@SECLEVEL=0").encode())
    if pol.server_preference:
        ctx.set_options(SSL.OP_CIPHER_SERVER_PREFERENCE)
    ctx.use_certificate(x509.load_der_x509_certificate(cfg.cert.cert_der))
    ctx.use_privatekey(cfg.cert.key)
    for extra in cfg.cert.chain[1:]:
        ctx.add_extra_chain_cert(x509.load_der_x509_certificate(extra))
    if cfg.client_auth == "request_accept_any":
        ctx.set_verify(SSL.VERIFY_PEER, lambda *_: True)
    elif cfg.client_auth == "require_known_ca":
        ctx.set_verify(SSL.VERIFY_PEER | SSL.VERIFY_FAIL_IF_NO_PEER_CERT, lambda c, x, e, d, ok: bool(ok))
        if cfg.trusted_client_ca:
            ctx.get_cert_store().add_cert(
                crypto.X509.from_cryptography(x509.load_der_x509_certificate(cfg.trusted_client_ca)))
    elif cfg.client_auth != "off":
        raise ValueError(f"unknown client auth mode {cfg.client_auth}")
    if dtls:
        ctx.set_options(SSL.OP_NO_QUERY_MTU | SSL.OP_COOKIE_EXCHANGE)
        secret = os.urandom(16)
        ctx.set_cookie_generate_callback(lambda conn: hmac.new(secret, b"cookie", "sha256").digest())
        ctx.set_cookie_verify_callback(
            lambda conn, cookie: hmac.compare_digest(cookie, hmac.new(secret, b"cookie", "sha256").digest()))
    return ctx


# --- stream adapters ------------------------------------------------------------

class _PlainConn:
    def __init__(self, sock):
        self.sock = sock

    def recv(self) -> bytes:
        return self.sock.recv(65536)

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)

    def close(self) -> None:
        self.sock.close()


class _OpenSSLConn:
    def __init__(self, conn: SSL.Connection, sock):
        self.conn, self.sock = conn, sock

    def recv(self) -> bytes:
        try:
            return self.conn.recv(65536)
        except (SSL.ZeroReturnError, SSL.SysCallError):
            return b""

    def send(self, data: bytes) -> None:
        self.conn.sendall(data)

    def close(self) -> None:
        try:
            self.conn.shutdown()
        except SSL.Error:
            pass
        self.sock.close()


class _LegacyConn:
    def __init__(self, channel):
        self.ch = channel

    def recv(self) -> bytes:
        return self.ch.recv(30.0)

    def send(self, data: bytes) -> None:
        self.ch.send(data)

    def close(self) -> None:
        self.ch.close()


def serve_stream(conn, app: AppConfig, counters: "Counters") -> None:
    session = session_for(app)
    try:
        while True:
            data = conn.recv()
            if not data:
                break
            counters.add_in(len(data))
            replies = session.on_data(data)
            if replies is None:
                break
            closing = False
            for reply in expand(replies):
                if reply is None:
                    closing = True
                    break
                conn.send(reply)
                counters.add_out(len(reply))
            if closing:
                break
    except (OSError, SSL.Error) as exc:
        log.debug("session ended: %s", exc)
    except Exception:
        log.exception("lab session crashed")
    finally:
        try:
            conn.close()
        except (OSError, SSL.Error):
            pass


@dataclass
class Counters:
    connections: int = 0
    bytes_in: int = 0
    bytes_out: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add_in(self, n):
        with self.lock:
            self.bytes_in += n

    def add_out(self, n):
        with self.lock:
            self.bytes_out += n


# --- listeners --------------------------------------------------------------------

class Listener:
    """A server bound to a loopback address; ``port`` is the bound port."""

    def __init__(self, address: str, udp: bool):
        if not address.startswith("127."):
            raise ValueError("harness servers bind loopback addresses only")
        family = socket.AF_INET
        self.sock = socket.socket(family, socket.SOCK_DGRAM if udp else socket.SOCK_STREAM)
        if not udp:
            self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((address, 0))
        self.address, self.port = self.sock.getsockname()
        self.counters = Counters()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._children: list[socket.socket] = []

    def start(self) -> "Listener":
        self._thread = threading.Thread(target=self._run, daemon=True, name=f"lab-{self.address}:{self.port}")
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        for s in [self.sock, *self._children]:
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()
        if self._thread is not None:
            self._thread.join(timeout=2)

    def _run(self) -> None:
        raise NotImplementedError


class TcpListener(Listener):
    def __init__(self, address: str, handler: Callable[[socket.socket, Counters], None],
                 accept_close: bool = False):
        super().__init__(address, udp=False)
        self.handler = handler
        self.accept_close = accept_close
        self.sock.listen(64)

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                child, _ = self.sock.accept()
            except OSError:
                return
            self.counters.connections += 1
            if self.accept_close:
                child.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, struct.pack("ii", 1, 0))
                child.close()
                continue
            self._children.append(child)
            threading.Thread(target=self.handler, args=(child, self.counters), daemon=True).start()


def plain_handler(app: AppConfig):
    def handle(sock, counters):
        serve_stream(_PlainConn(sock), app, counters)
    return handle


def openssl_handler(tls: TlsConfig, app: AppConfig):
    ctx = openssl_context(tls)

    def handle(sock, counters):
        conn = SSL.Connection(ctx, sock)
        conn.set_accept_state()
        try:
            conn.do_handshake()
        except (SSL.Error, OSError) as exc:
            log.debug("TLS handshake failed: %s", exc)
            sock.close()
            return
        serve_stream(_OpenSSLConn(conn, sock), app, counters)
    return handle


def legacy_handler(tls: TlsConfig, app: AppConfig):
    pol = tls.suite_policy
    if tls.client_auth != "off":
        raise ValueError("the legacy server does not implement client authentication")

    def handle(sock, counters):
        try:
            ch = server_handshake(sock, tls.cert, list(pol.legacy_suites),
                                  min_version=LEGACY_VERSIONS[pol.floor],
                                  max_version=LEGACY_VERSIONS[tls.ceiling],
                                  tls13_capable=tls.ceiling == "TLSv1.3")
        except (HandshakeAbort, OSError, Exception) as exc:
            log.debug("legacy handshake failed: %s", exc)
            sock.close()
            return
        serve_stream(_LegacyConn(ch), app, counters)
    return handle


class UdpListener(Listener):
    """Plain CoAP, or DTLS via OpenSSL memory BIOs, one state per client address."""

    def __init__(self, address: str, app: AppConfig, tls: TlsConfig | None = None):
        super().__init__(address, udp=True)
        self.app = app
        self.ctx = openssl_context(tls, dtls=True) if tls is not None else None
        self.sock.settimeout(0.2)
        self.peers: dict = {}

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                data, addr = self.sock.recvfrom(65535)
            except socket.timeout:
                continue
            except OSError:
                return
            self.counters.add_in(len(data))
            try:
                if self.ctx is None:
                    self._plain(data, addr)
                else:
                    self._dtls(data, addr)
            except OSError:
                return
            except Exception:
                log.exception("UDP lab server error")

    def _send(self, data: bytes, addr) -> None:
        self.sock.sendto(data, addr)
        self.counters.add_out(len(data))

    def _plain(self, data, addr) -> None:
        session = self.peers.setdefault(addr, session_for(self.app))
        for reply in expand(session.on_data(data) or []):
            if reply is not None:
                self._send(reply, addr)

    def _dtls(self, data, addr) -> None:
        state = self.peers.get(addr)
        if state is None:
            conn = SSL.Connection(self.ctx, None)
            conn.set_accept_state()
            conn.set_ciphertext_mtu(1400)
            state = self.peers[addr] = [conn, session_for(self.app), False]
        conn, session = state[0], state[1]
        conn.bio_write(data)
        try:
            if not state[2]:
                conn.do_handshake()
                state[2] = True
            while True:
                try:
                    request = conn.recv(65535)
                except SSL.WantReadError:
                    break
                for reply in expand(session.on_data(request) or []):
                    if reply is not None:
                        conn.send(reply)
        except SSL.WantReadError:
            pass
        except SSL.Error as exc:
            log.debug("DTLS error: %s", exc)
            self._pump(conn, addr)
            self.peers.pop(addr, None)
            return
        self._pump(conn, addr)

    def _pump(self, conn, addr) -> None:
        while True:
            try:
                out = conn.bio_read(65535)
            except SSL.WantReadError:
                return
            if not out:
                return
            self._send(out, addr)


def free_port(address: str, udp: bool = False) -> int:
    """A port with nothing listening on it (for closed-port scenarios)."""
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM if udp else socket.SOCK_STREAM)
    s.bind((address, 0))
    port = s.getsockname()[1]
    s.close()
    return port
