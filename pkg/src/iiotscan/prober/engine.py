"""Client handshake engine for TLS 1.0-1.2 over TCP and DTLS 1.0/1.2 over UDP.

The engine is deliberately small: one full handshake, then a single
application-layer exchange.  It exists because a measurement client must
offer arbitrary suite lists (including ones modern libraries refuse) and
must be able to tell where in the handshake a server gave up.
"""
from __future__ import annotations

import hashlib
import os
import socket
import struct
import time
from dataclasses import dataclass
from typing import Callable, Sequence

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey

from . import wire
from .cipher import (DTLS10, DTLS12, TLS10, TLS12, BadRecordMac, RecordProtection, UnsupportedSuite,
                     check_supported, derive_protections, finished_verify_data, master_secret,
                     tls_equivalent)
from .identity import ClientIdentity
from .results import HandshakeResult, Outcome
from .suites import CODE_POINTS, NAMES_BY_CODE, SuiteSetName, parse_suite
from .wire import DecodeError

MAX_RECORD = 2 ** 14 + 2048
MAX_HANDSHAKE_MESSAGE = 2 ** 17
# AES_128_GCM_SHA256, AES_256_GCM_SHA384, CHACHA20_POLY1305_SHA256
TLS13_SUITES = (0x1301, 0x1302, 0x1303)
DOWNGRADE_TLS12 = bytes.fromhex("444F574E47524401")


class AlertReceived(Exception):
    def __init__(self, level: int, description: int):
        super().__init__(wire.ALERT_NAMES.get(description, str(description)))
        self.level = level
        self.description = description


class PeerClosed(Exception):
    pass


@dataclass(frozen=True)
class DtlsTimers:
    initial: float = 2.0
    retransmits: int = 3


# --- record channels ---------------------------------------------------------

class RecordChannel:
    """Record layer shared by the handshake and the application exchange."""

    dtls = False
    offer_version = TLS12

    def __init__(self, sock: socket.socket, timeout: float):
        self.sock = sock
        self.timeout = timeout
        self.transcript = bytearray()
        self.version: int | None = None
        self.write_prot: RecordProtection | None = None
        self.read_prot: RecordProtection | None = None
        self.bytes_sent = 0
        self.bytes_received = 0

    def set_version(self, version: int) -> None:
        self.version = version

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class StreamChannel(RecordChannel):
    def __init__(self, sock: socket.socket, timeout: float = 5.0):
        super().__init__(sock, timeout)
        self._rbuf = bytearray()
        self._hbuf = bytearray()
        self._pending: list[bytes] = []
        self._write_seq = 0
        self._read_seq = 0

    # raw I/O
    def _recv_exact(self, n: int) -> bytes:
        self.sock.settimeout(self.timeout)
        while len(self._rbuf) < n:
            chunk = self.sock.recv(max(4096, n - len(self._rbuf)))
            if not chunk:
                raise PeerClosed("connection closed by peer")
            self.bytes_received += len(chunk)
            self._rbuf += chunk
        out = bytes(self._rbuf[:n])
        del self._rbuf[:n]
        return out

    def _write_record(self, ctype: int, payload: bytes) -> None:
        version = self.version or TLS10
        for i in range(0, max(len(payload), 1), 2 ** 14):
            chunk = payload[i:i + 2 ** 14]
            if self.write_prot is not None:
                chunk = self.write_prot.encrypt(struct.pack("!Q", self._write_seq), ctype, chunk)
                self._write_seq += 1
            self._pending.append(struct.pack("!BHH", ctype, version, len(chunk)) + chunk)

    def flush(self) -> None:
        data = b"".join(self._pending)
        self._pending.clear()
        if data:
            self.sock.sendall(data)
            self.bytes_sent += len(data)

    def _read_record(self) -> tuple[int, bytes]:
        header = self._recv_exact(5)
        ctype, version, length = struct.unpack("!BHH", header)
        if ctype not in (wire.CHANGE_CIPHER_SPEC, wire.ALERT, wire.HANDSHAKE, wire.APPLICATION_DATA):
            raise DecodeError(f"not a TLS record (first byte 0x{ctype:02x})")
        if version >> 8 != 3 or length > MAX_RECORD:
            raise DecodeError("bad record header")
        fragment = self._recv_exact(length)
        if self.read_prot is not None:
            fragment = self.read_prot.decrypt(struct.pack("!Q", self._read_seq), ctype, fragment)
            self._read_seq += 1
        return ctype, fragment

    # handshake layer
    def begin(self, build_client_hello: Callable[[bytes | None], bytes]) -> None:
        self.send_handshake(wire.CLIENT_HELLO, build_client_hello(None))
        self.flush()

    def send_handshake(self, msg_type: int, body: bytes) -> None:
        msg = wire.handshake_header(msg_type, body)
        self.transcript += msg
        self._write_record(wire.HANDSHAKE, msg)

    def send_ccs(self, write_prot: RecordProtection) -> None:
        self._write_record(wire.CHANGE_CIPHER_SPEC, b"\x01")
        self.write_prot = write_prot
        self._write_seq = 0

    def set_read(self, read_prot: RecordProtection) -> None:
        self.read_prot = read_prot
        self._read_seq = 0

    def recv_event(self) -> tuple:
        """Next handshake message as ("hs", type, body) or ("ccs",)."""
        while True:
            if len(self._hbuf) >= 4:
                length = int.from_bytes(self._hbuf[1:4], "big")
                if length > MAX_HANDSHAKE_MESSAGE:
                    raise DecodeError("handshake message too large")
                if len(self._hbuf) >= 4 + length:
                    msg = bytes(self._hbuf[:4 + length])
                    del self._hbuf[:4 + length]
                    if msg[0] == wire.HELLO_REQUEST:
                        continue
                    self.transcript += msg
                    return ("hs", msg[0], msg[4:])
            ctype, payload = self._read_record()
            if ctype == wire.HANDSHAKE:
                self._hbuf += payload
            elif ctype == wire.ALERT:
                _raise_alert(payload)
            elif ctype == wire.CHANGE_CIPHER_SPEC:
                if payload != b"\x01" or self._hbuf:
                    raise DecodeError("bad ChangeCipherSpec")
                return ("ccs",)
            else:
                raise DecodeError("application data during handshake")

    # application layer
    def send(self, data: bytes) -> None:
        self._write_record(wire.APPLICATION_DATA, data)
        self.flush()

    def recv(self, timeout: float | None = None) -> bytes:
        """Next chunk of application data; b"" once the peer has closed."""
        saved = self.timeout
        if timeout is not None:
            self.timeout = timeout
        try:
            while True:
                try:
                    ctype, payload = self._read_record()
                except PeerClosed:
                    return b""
                if ctype == wire.APPLICATION_DATA:
                    if payload:
                        return payload
                elif ctype == wire.ALERT:
                    # close_notify or any fatal alert ends the exchange
                    if len(payload) != 2 or payload[1] == 0 or payload[0] == 2:
                        return b""
                elif ctype == wire.HANDSHAKE:
                    continue
                else:
                    raise DecodeError("unexpected record after handshake")
        finally:
            self.timeout = saved

    def close(self) -> None:
        if self.write_prot is not None:
            try:
                self._write_record(wire.ALERT, b"\x01\x00")
                self.flush()
            except OSError:
                pass
        super().close()


class DatagramChannel(RecordChannel):
    offer_version = DTLS12
    dtls = True

    def __init__(self, sock: socket.socket, timeout: float = 5.0, timers: DtlsTimers = DtlsTimers()):
        super().__init__(sock, timeout)
        self.timers = timers
        self._epoch = 0
        self._write_seq = {0: 0, 1: 0}
        self._read_seq = 0
        self._message_seq = 0
        self._next_receive: int | None = None
        self._fragments: dict[int, tuple[int, int, bytearray, bytearray]] = {}
        self._flight: list[tuple[int, int, bytes]] = []
        self._flight_sent = True
        self._records: list[tuple[int, int, int, bytes]] = []
        self._early_epoch1: list[tuple[int, int, int, bytes]] = []
        self._events: list[tuple] = []
        self._build_client_hello: Callable[[bytes | None], bytes] | None = None
        self._cookie_rounds = 0

    def _record(self, ctype: int, epoch: int, payload: bytes) -> bytes:
        seq = self._write_seq[epoch]
        self._write_seq[epoch] = seq + 1
        seq8 = struct.pack("!H", epoch) + seq.to_bytes(6, "big")
        if epoch == 1:
            payload = self.write_prot.encrypt(seq8, ctype, payload)
        version = self.version or DTLS10
        return struct.pack("!BH", ctype, version) + seq8 + struct.pack("!H", len(payload)) + payload

    def flush(self) -> None:
        """Transmit the buffered flight (also used for retransmission)."""
        datagram = b""
        for ctype, epoch, payload in self._flight:
            rec = self._record(ctype, epoch, payload)
            if datagram and len(datagram) + len(rec) > 1400:
                self._send_datagram(datagram)
                datagram = b""
            datagram += rec
        if datagram:
            self._send_datagram(datagram)
        self._flight_sent = True

    def _send_datagram(self, data: bytes) -> None:
        self.sock.send(data)
        self.bytes_sent += len(data)

    def _new_flight(self) -> None:
        if self._flight_sent:
            self._flight = []
            self._flight_sent = False

    def begin(self, build_client_hello: Callable[[bytes | None], bytes]) -> None:
        self._build_client_hello = build_client_hello
        self.send_handshake(wire.CLIENT_HELLO, build_client_hello(b""))
        self.flush()

    def send_handshake(self, msg_type: int, body: bytes) -> None:
        self._new_flight()
        msg = wire.dtls_handshake_header(msg_type, body, self._message_seq)
        self._message_seq += 1
        self.transcript += msg
        self._flight.append((wire.HANDSHAKE, self._epoch, msg))

    def send_ccs(self, write_prot: RecordProtection) -> None:
        self._new_flight()
        self._flight.append((wire.CHANGE_CIPHER_SPEC, self._epoch, b"\x01"))
        self.write_prot = write_prot
        self._epoch = 1

    def set_read(self, read_prot: RecordProtection) -> None:
        self.read_prot = read_prot
        pending, self._early_epoch1 = self._early_epoch1, []
        self._records[:0] = pending

    def _recv_datagram(self, timeout: float) -> None:
        self.sock.settimeout(timeout)
        try:
            data = self.sock.recv(65535)
        except ConnectionRefusedError:
            raise PeerClosed("ICMP port unreachable") from None
        self.bytes_received += len(data)
        r = wire.Reader(data)
        parsed = []
        try:
            while not r.done():
                ctype = r.u8()
                version = r.u16()
                epoch = r.u16()
                seq = int.from_bytes(r.take(6), "big")
                fragment = r.vec16()
                if version >> 8 != 0xFE:
                    raise DecodeError("not a DTLS record")
                parsed.append((ctype, epoch, seq, fragment))
        except DecodeError:
            # trailing garbage is dropped; a reply with no DTLS at all is fatal
            if not parsed and self.version is None:
                raise DecodeError("datagram is not DTLS") from None
        self._records.extend(parsed)

    def _process_record(self) -> None:
        ctype, epoch, seq, fragment = self._records.pop(0)
        if epoch == 1:
            if self.read_prot is None:
                self._early_epoch1.append((ctype, epoch, seq, fragment))
                return
            seq8 = struct.pack("!H", epoch) + seq.to_bytes(6, "big")
            try:
                fragment = self.read_prot.decrypt(seq8, ctype, fragment)
            except BadRecordMac:
                return  # DTLS silently drops records that fail authentication
        elif epoch != 0:
            return
        if ctype == wire.ALERT:
            _raise_alert(fragment)
        elif ctype == wire.CHANGE_CIPHER_SPEC:
            if epoch == 0 and fragment == b"\x01":
                self._events.append(("ccs",))
        elif ctype == wire.HANDSHAKE:
            self._handle_handshake_fragments(fragment)
        elif ctype == wire.APPLICATION_DATA and epoch == 1:
            self._events.append(("app", fragment))

    def _handle_handshake_fragments(self, data: bytes) -> None:
        r = wire.Reader(data)
        while not r.done():
            msg_type = r.u8()
            length = r.u24()
            message_seq = r.u16()
            frag_off = r.u24()
            frag = r.vec24()
            if length > MAX_HANDSHAKE_MESSAGE or frag_off + len(frag) > length:
                raise DecodeError("bad DTLS handshake fragment")
            if self._next_receive is None:
                if msg_type not in (wire.SERVER_HELLO, wire.HELLO_VERIFY_REQUEST):
                    continue
                self._next_receive = message_seq
            if message_seq < self._next_receive:
                continue
            entry = self._fragments.get(message_seq)
            if entry is None:
                entry = (msg_type, length, bytearray(length), bytearray(length))
                self._fragments[message_seq] = entry
            if entry[0] != msg_type or entry[1] != length:
                raise DecodeError("inconsistent DTLS fragments")
            entry[2][frag_off:frag_off + len(frag)] = frag
            entry[3][frag_off:frag_off + len(frag)] = b"\x01" * len(frag)
            self._drain_messages()

    def _drain_messages(self) -> None:
        while self._next_receive in self._fragments:
            msg_type, length, body, mask = self._fragments[self._next_receive]
            if length and not all(mask):
                return
            seq = self._next_receive
            del self._fragments[seq]
            self._next_receive += 1
            body = bytes(body)
            if msg_type == wire.HELLO_VERIFY_REQUEST:
                self._handle_hvr(body)
                continue
            self.transcript += wire.dtls_handshake_header(msg_type, body, seq)
            self._events.append(("hs", msg_type, body))

    def _handle_hvr(self, body: bytes) -> None:
        cookie = wire.parse_hello_verify_request(body)
        self._cookie_rounds += 1
        if self._cookie_rounds > 2 or self._build_client_hello is None:
            raise DecodeError("repeated HelloVerifyRequest")
        # The cookie exchange is excluded from the handshake transcript.
        self.transcript = bytearray()
        self._next_receive = None
        self._flight_sent = True
        self.send_handshake(wire.CLIENT_HELLO, self._build_client_hello(cookie))
        self.flush()

    def _next_event(self, allow_app: bool = False) -> tuple:
        timer = self.timers.initial
        retransmits = 0
        deadline = time.monotonic() + timer
        while True:
            while self._records and not self._events:
                self._process_record()
            if self._events:
                ev = self._events.pop(0)
                if ev[0] == "app" and not allow_app:
                    raise DecodeError("application data during handshake")
                return ev
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                if retransmits >= self.timers.retransmits:
                    raise socket.timeout("DTLS retransmissions exhausted")
                retransmits += 1
                timer *= 2
                deadline = time.monotonic() + timer
                if not allow_app:
                    self.flush()
                continue
            try:
                self._recv_datagram(remaining)
            except socket.timeout:
                continue

    def recv_event(self) -> tuple:
        return self._next_event()

    def send(self, data: bytes) -> None:
        self._flight = [(wire.APPLICATION_DATA, 1, data)]
        self._flight_sent = False
        self.flush()

    def recv(self, timeout: float | None = None) -> bytes:
        deadline = time.monotonic() + (self.timeout if timeout is None else timeout)
        while True:
            while self._records:
                try:
                    self._process_record()
                except AlertReceived:
                    return b""
            for i, ev in enumerate(self._events):
                if ev[0] == "app":
                    del self._events[i]
                    return ev[1]
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise socket.timeout("no DTLS application data")
            self._recv_datagram(remaining)

    def close(self) -> None:
        if self.write_prot is not None:
            try:
                self._send_datagram(self._record(wire.ALERT, 1, b"\x01\x00"))
            except OSError:
                pass
        super().close()


def _raise_alert(payload: bytes) -> None:
    if len(payload) != 2:
        raise DecodeError("malformed alert")
    level, desc = payload
    if desc == 0:
        raise PeerClosed("close_notify")
    raise AlertReceived(level, desc)


# --- key exchange ------------------------------------------------------------

_CURVES = {wire.SECP256R1: ec.SECP256R1, wire.SECP384R1: ec.SECP384R1, wire.SECP521R1: ec.SECP521R1}


def _int_bytes(n: int) -> bytes:
    return n.to_bytes(max(1, (n.bit_length() + 7) // 8), "big")


def _ec_point(key: ec.EllipticCurvePublicKey) -> bytes:
    return key.public_bytes(serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint)


def _ecdh_named(group: int, peer: bytes) -> tuple[bytes, bytes]:
    try:
        if group == wire.X25519:
            priv = X25519PrivateKey.generate()
            shared = priv.exchange(X25519PublicKey.from_public_bytes(peer))
            return priv.public_key().public_bytes_raw(), shared
        if group in _CURVES:
            curve = _CURVES[group]()
            peer_key = ec.EllipticCurvePublicKey.from_encoded_point(curve, peer)
            priv = ec.generate_private_key(curve)
            return _ec_point(priv.public_key()), priv.exchange(ec.ECDH(), peer_key)
    except ValueError as exc:
        raise DecodeError(f"bad ECDH share: {exc}") from None
    raise DecodeError(f"server chose unoffered group 0x{group:04x}")


def client_key_exchange(kex: str, offered_version: int, ske: wire.ServerKeyExchange | None,
                        chain: list[bytes]) -> tuple[bytes, bytes]:
    """Return (ClientKeyExchange body, pre-master secret)."""
    if kex == "RSA":
        if not chain:
            raise DecodeError("RSA key exchange without certificate")
        pub = x509.load_der_x509_certificate(chain[0]).public_key()
        if not isinstance(pub, rsa.RSAPublicKey):
            raise DecodeError("RSA key exchange with non-RSA certificate")
        pms = struct.pack("!H", offered_version) + os.urandom(46)
        return wire.vec16(pub.encrypt(pms, padding.PKCS1v15())), pms
    if kex in ("ECDHE_RSA", "ECDHE_ECDSA", "ECDH_ANON"):
        ours, shared = _ecdh_named(ske.group, ske.point)
        return wire.vec8(ours), shared
    if kex in ("ECDH_RSA", "ECDH_ECDSA"):
        if not chain:
            raise DecodeError("static ECDH without certificate")
        pub = x509.load_der_x509_certificate(chain[0]).public_key()
        if not isinstance(pub, ec.EllipticCurvePublicKey):
            raise DecodeError("static ECDH with non-EC certificate")
        priv = ec.generate_private_key(pub.curve)
        return wire.vec8(_ec_point(priv.public_key())), priv.exchange(ec.ECDH(), pub)
    if kex in ("DHE_RSA", "DHE_DSS", "DH_ANON"):
        p, g, ys = ske.dh_p, ske.dh_g, ske.dh_ys
        if p < 2 ** 255 or not 1 < ys < p - 1 or not 1 < g < p - 1:
            raise DecodeError("bad DH parameters")
        x = int.from_bytes(os.urandom((p.bit_length() + 7) // 8), "big") % (p - 3) + 2
        return wire.vec16(_int_bytes(pow(g, x, p))), _int_bytes(pow(ys, x, p))
    raise UnsupportedSuite(f"key exchange {kex}")


_SIGALG_HASHES = {0x0401: hashes.SHA256, 0x0501: hashes.SHA384, 0x0601: hashes.SHA512, 0x0201: hashes.SHA1}


def _rsa_sign_md5sha1(key: rsa.RSAPrivateKey, digest: bytes) -> bytes:
    # PKCS#1 v1.5 type 1 without DigestInfo, as TLS < 1.2 requires.
    nums = key.private_numbers()
    n = nums.public_numbers.n
    k = (n.bit_length() + 7) // 8
    em = b"\x00\x01" + b"\xff" * (k - 3 - len(digest)) + b"\x00" + digest
    return pow(int.from_bytes(em, "big"), nums.d, n).to_bytes(k, "big")


def certificate_verify(version: int, key: rsa.RSAPrivateKey, transcript: bytes,
                       requested_sigalgs: Sequence[int]) -> bytes:
    if tls_equivalent(version) >= TLS12:
        alg = next((a for a in requested_sigalgs if a in _SIGALG_HASHES), 0x0401)
        sig = key.sign(transcript, padding.PKCS1v15(), _SIGALG_HASHES[alg]())
        return struct.pack("!H", alg) + wire.vec16(sig)
    digest = hashlib.md5(transcript).digest() + hashlib.sha1(transcript).digest()
    return wire.vec16(_rsa_sign_md5sha1(key, digest))


# --- the handshake -----------------------------------------------------------

_FLIGHT_ORDER = {wire.CERTIFICATE: 1, wire.SERVER_KEY_EXCHANGE: 2,
                 wire.CERTIFICATE_REQUEST: 3, wire.SERVER_HELLO_DONE: 4}


def detect_downgrade_sentinel(server_random: bytes) -> bool:
    """True iff the random ends in the TLS 1.3 server's fallback-to-1.2 marker."""
    if len(server_random) != 32:
        raise ValueError(f"server random must be 32 bytes, got {len(server_random)}")
    return server_random[-8:] == DOWNGRADE_TLS12


def _acceptable_version(channel: RecordChannel, version: int) -> bool:
    if channel.dtls:
        return version in (DTLS10, DTLS12)
    return 0x0300 <= version <= channel.offer_version


class _Handshake:
    def __init__(self, channel: RecordChannel, suites: Sequence[str], identity: ClientIdentity | None,
                 suite_set: SuiteSetName | None, server_name: str | None, offer_tls13: bool):
        self.ch = channel
        self.offered = [s for s in suites if s in CODE_POINTS]
        self.codes = [CODE_POINTS[s] for s in self.offered]
        self.identity = identity
        self.server_name = server_name
        self.offer_tls13 = offer_tls13 and not channel.dtls
        self.client_random = struct.pack("!I", int(time.time()) & 0xFFFFFFFF) + os.urandom(28)
        self.res = HandshakeResult(suite_set=suite_set, outcome=Outcome.TIMEOUT, dtls=channel.dtls,
                                   started_at=time.time())
        self.phase = "hello"
        self.cert_sent = False

    def _client_hello(self, cookie: bytes | None) -> bytes:
        codes = self.codes + list(TLS13_SUITES) if self.offer_tls13 else self.codes
        return wire.build_client_hello_body(self.ch.offer_version, self.client_random, codes,
                                            cookie=cookie, server_name=self.server_name,
                                            tls13=self.offer_tls13)

    def _expect_hs(self) -> tuple[int, bytes]:
        ev = self.ch.recv_event()
        if ev[0] != "hs":
            raise DecodeError("unexpected ChangeCipherSpec")
        return ev[1], ev[2]

    def run(self) -> HandshakeResult:
        res = self.res
        try:
            self._run()
        except (socket.timeout, TimeoutError) as exc:
            if self.phase == "hello":
                res.outcome = Outcome.TIMEOUT
            else:
                self._fail(Outcome.GENERIC_ERROR, f"timeout: {exc}")
        except AlertReceived as exc:
            res.alert = str(exc)
            if self.phase == "hello":
                res.outcome = Outcome.DENIED
            elif self.phase == "finish" and self.cert_sent and exc.description in wire.CLIENT_CERT_ALERTS:
                self._reject_client_cert()
            else:
                self._fail(Outcome.GENERIC_ERROR, f"alert {exc}")
        except (PeerClosed, ConnectionResetError, ConnectionAbortedError, BrokenPipeError) as exc:
            if self.phase == "hello":
                res.outcome = Outcome.DENIED
                res.error = str(exc) or type(exc).__name__
            elif self.phase == "finish" and self.cert_sent:
                self._reject_client_cert()
            else:
                self._fail(Outcome.GENERIC_ERROR, f"closed: {exc or type(exc).__name__}")
        except (DecodeError, BadRecordMac, ValueError) as exc:
            self._fail(Outcome.GENERIC_ERROR, f"{type(exc).__name__}: {exc}")
        except UnsupportedSuite as exc:
            res.error = f"completion unsupported: {exc}"
        except OSError as exc:
            self._fail(Outcome.GENERIC_ERROR if self.phase != "hello" else Outcome.DENIED, str(exc))
        return res

    def _fail(self, outcome: Outcome, error: str) -> None:
        self.res.outcome = outcome
        self.res.error = error

    def _reject_client_cert(self) -> None:
        self.res.outcome = Outcome.DENIED
        self.res.rejected_after_client_cert = True

    def _run(self) -> None:
        res, ch = self.res, self.ch
        ch.begin(self._client_hello)
        msg_type, body = self._expect_hs()
        if msg_type != wire.SERVER_HELLO:
            raise DecodeError(f"expected ServerHello, got handshake type {msg_type}")
        sh = wire.parse_server_hello(body)
        res.server_random = sh.random
        version = sh.selected_version
        if version == 0x0304 and self.offer_tls13:
            res.negotiated_version = "TLSv1.3"
            res.negotiated_suite = f"0x{sh.cipher_suite:04x}"
            res.server_hello_valid = True
            res.outcome = Outcome.ACCEPTED
            raise UnsupportedSuite("TLS 1.3 is probed for support only")
        if not _acceptable_version(ch, version):
            raise DecodeError(f"server selected unoffered version 0x{version:04x}")
        if sh.cipher_suite not in self.codes:
            raise DecodeError(f"server selected unoffered suite 0x{sh.cipher_suite:04x}")
        if sh.compression != 0:
            raise DecodeError("server selected compression")
        suite = NAMES_BY_CODE[sh.cipher_suite]
        res.negotiated_version = wire.VERSION_NAMES[version]
        res.negotiated_suite = suite
        res.server_hello_valid = True
        res.outcome = Outcome.ACCEPTED
        if version == TLS12:
            res.downgrade_sentinel = detect_downgrade_sentinel(sh.random)
        ch.set_version(version)
        self.phase = "flight"

        parts = parse_suite(suite)
        unsupported = None
        try:
            check_supported(suite)
            if version == 0x0300:
                raise UnsupportedSuite("SSLv3")
        except UnsupportedSuite as exc:
            unsupported = exc
        tls12 = tls_equivalent(version) >= TLS12

        ske = None
        creq = None
        last = 0
        while True:
            msg_type, body = self._expect_hs()
            order = _FLIGHT_ORDER.get(msg_type)
            if order is None or order <= last:
                raise DecodeError(f"unexpected handshake type {msg_type} in server flight")
            last = order
            if msg_type == wire.CERTIFICATE:
                res.chain = wire.parse_certificate(body)
            elif msg_type == wire.SERVER_KEY_EXCHANGE:
                if unsupported is None:
                    ske = wire.parse_server_key_exchange(body, parts.key_exchange, tls12)
            elif msg_type == wire.CERTIFICATE_REQUEST:
                res.client_cert_requested = True
                creq = wire.parse_certificate_request(body, tls12)
            else:
                if body:
                    raise DecodeError("non-empty ServerHelloDone")
                break
        if unsupported is not None:
            raise unsupported
        if not parts.anonymous and not res.chain:
            raise DecodeError("server sent no certificate for an authenticated suite")
        if parts.key_exchange.startswith(("ECDHE", "DHE", "DH_ANON", "ECDH_ANON")) and ske is None:
            raise DecodeError("missing ServerKeyExchange")

        self.phase = "finish"
        if creq is not None:
            chain = [self.identity.cert_der] if self.identity else []
            ch.send_handshake(wire.CERTIFICATE, wire.encode_certificate(chain))
            self.cert_sent = True
        cke, pms = client_key_exchange(parts.key_exchange, ch.offer_version, ske, res.chain)
        ch.send_handshake(wire.CLIENT_KEY_EXCHANGE, cke)
        if creq is not None and self.identity is not None:
            ch.send_handshake(wire.CERTIFICATE_VERIFY,
                              certificate_verify(version, self.identity.key, bytes(ch.transcript), creq.sig_algs))
        master = master_secret(version, parts, pms, self.client_random, sh.random)
        write, read = derive_protections(version, suite, master, self.client_random, sh.random)
        ch.send_ccs(write)
        ch.send_handshake(wire.FINISHED, finished_verify_data(version, parts, master, b"client finished",
                                                              bytes(ch.transcript)))
        ch.flush()
        expected = finished_verify_data(version, parts, master, b"server finished", bytes(ch.transcript))
        if ch.recv_event()[0] != "ccs":
            raise DecodeError("expected ChangeCipherSpec")
        ch.set_read(read)
        msg_type, body = self._expect_hs()
        if msg_type != wire.FINISHED or body != expected:
            raise DecodeError("server Finished does not verify")
        res.completed = True


def client_handshake(channel: RecordChannel, suites: Sequence[str], identity: ClientIdentity | None = None,
                     *, suite_set: SuiteSetName | None = None, server_name: str | None = None,
                     offer_tls13: bool = False) -> HandshakeResult:
    """Run one handshake over ``channel`` offering ``suites`` (registry names).

    Never raises for network or protocol failures; they are folded into the
    returned result.  On ``completed`` the channel carries application data.
    """
    return _Handshake(channel, suites, identity, suite_set, server_name, offer_tls13).run()
