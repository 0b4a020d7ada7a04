"""TLS/DTLS handshake message encoding and parsing."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

# Record content types
CHANGE_CIPHER_SPEC = 20
ALERT = 21
HANDSHAKE = 22
APPLICATION_DATA = 23

# Handshake types
HELLO_REQUEST = 0
CLIENT_HELLO = 1
SERVER_HELLO = 2
HELLO_VERIFY_REQUEST = 3
CERTIFICATE = 11
SERVER_KEY_EXCHANGE = 12
CERTIFICATE_REQUEST = 13
SERVER_HELLO_DONE = 14
CERTIFICATE_VERIFY = 15
CLIENT_KEY_EXCHANGE = 16
FINISHED = 20

# Alerts that a server raises when it refuses the client certificate.
CLIENT_CERT_ALERTS = {40, 42, 43, 44, 45, 46, 48, 49}

ALERT_NAMES = {
    0: "close_notify", 10: "unexpected_message", 20: "bad_record_mac", 22: "record_overflow",
    40: "handshake_failure", 42: "bad_certificate", 43: "unsupported_certificate",
    44: "certificate_revoked", 45: "certificate_expired", 46: "certificate_unknown",
    47: "illegal_parameter", 48: "unknown_ca", 49: "access_denied", 50: "decode_error",
    51: "decrypt_error", 70: "protocol_version", 71: "insufficient_security",
    80: "internal_error", 86: "inappropriate_fallback", 90: "user_canceled",
    109: "missing_extension", 112: "unrecognized_name", 116: "certificate_required",
}

VERSION_NAMES = {
    0x0300: "SSLv3", 0x0301: "TLSv1.0", 0x0302: "TLSv1.1", 0x0303: "TLSv1.2", 0x0304: "TLSv1.3",
    0xFEFF: "DTLSv1.0", 0xFEFD: "DTLSv1.2", 0xFEFC: "DTLSv1.3",
}
VERSIONS_BY_NAME = {v: k for k, v in VERSION_NAMES.items()}

# Named groups offered for (EC)DHE.
X25519, SECP256R1, SECP384R1, SECP521R1 = 0x001D, 0x0017, 0x0018, 0x0019
OFFERED_GROUPS = (X25519, SECP256R1, SECP384R1, SECP521R1)

# Signature algorithms offered (TLS 1.2): rsa_pkcs1 and ecdsa with sha256/384/512/sha1, dsa.
OFFERED_SIGALGS = (0x0401, 0x0501, 0x0601, 0x0403, 0x0503, 0x0603, 0x0804, 0x0805, 0x0806,
                   0x0201, 0x0203, 0x0402, 0x0202)

EXT_SERVER_NAME = 0x0000
EXT_SUPPORTED_GROUPS = 0x000A
EXT_EC_POINT_FORMATS = 0x000B
EXT_SIGNATURE_ALGORITHMS = 0x000D
EXT_SUPPORTED_VERSIONS = 0x002B
EXT_KEY_SHARE = 0x0033
EXT_RENEGOTIATION_INFO = 0xFF01


class DecodeError(ValueError):
    """Server flight is not a well-formed TLS message sequence."""


def u8(n: int) -> bytes:
    return struct.pack("!B", n)


def u16(n: int) -> bytes:
    return struct.pack("!H", n)


def u24(n: int) -> bytes:
    return struct.pack("!I", n)[1:]


def vec8(b: bytes) -> bytes:
    return u8(len(b)) + b


def vec16(b: bytes) -> bytes:
    return u16(len(b)) + b


def vec24(b: bytes) -> bytes:
    return u24(len(b)) + b


class Reader:
    """Bounds-checked cursor over a byte string."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise DecodeError(f"need {n} bytes, have {self.remaining()}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("!H", self.take(2))[0]

    def u24(self) -> int:
        return int.from_bytes(self.take(3), "big")

    def vec8(self) -> bytes:
        return self.take(self.u8())

    def vec16(self) -> bytes:
        return self.take(self.u16())

    def vec24(self) -> bytes:
        return self.take(self.u24())

    def done(self) -> bool:
        return self.pos == len(self.data)


def handshake_header(msg_type: int, body: bytes) -> bytes:
    return u8(msg_type) + vec24(body)


def dtls_handshake_header(msg_type: int, body: bytes, message_seq: int) -> bytes:
    return u8(msg_type) + u24(len(body)) + u16(message_seq) + u24(0) + u24(len(body)) + body


def build_client_hello_body(version: int, client_random: bytes, suites: list[int], *,
                            cookie: bytes | None = None, server_name: str | None = None,
                            tls13: bool = False) -> bytes:
    """ClientHello body.  ``cookie`` is given (possibly empty) for DTLS."""
    exts = b""
    if server_name:
        name = server_name.encode("idna")
        exts += u16(EXT_SERVER_NAME) + vec16(vec16(b"\x00" + vec16(name)))
    exts += u16(EXT_SUPPORTED_GROUPS) + vec16(vec16(b"".join(u16(g) for g in OFFERED_GROUPS)))
    exts += u16(EXT_EC_POINT_FORMATS) + vec16(vec8(b"\x00"))
    exts += u16(EXT_SIGNATURE_ALGORITHMS) + vec16(vec16(b"".join(u16(s) for s in OFFERED_SIGALGS)))
    exts += u16(EXT_RENEGOTIATION_INFO) + vec16(b"\x00")
    if tls13:
        exts += u16(EXT_SUPPORTED_VERSIONS) + vec16(vec8(u16(0x0304) + u16(0x0303)))
        share = os.urandom(32)
        exts += u16(EXT_KEY_SHARE) + vec16(vec16(u16(X25519) + vec16(share)))
    body = u16(version) + client_random + vec8(b"")
    if cookie is not None:
        body += vec8(cookie)
    body += vec16(b"".join(u16(s) for s in suites))
    body += vec8(b"\x00")
    body += vec16(exts)
    return body


@dataclass
class ServerHello:
    version: int
    random: bytes
    session_id: bytes
    cipher_suite: int
    compression: int
    extensions: dict[int, bytes] = field(default_factory=dict)

    @property
    def selected_version(self) -> int:
        """Honours supported_versions (TLS 1.3 ServerHello)."""
        ext = self.extensions.get(EXT_SUPPORTED_VERSIONS)
        if ext is not None and len(ext) == 2:
            return struct.unpack("!H", ext)[0]
        return self.version


def parse_server_hello(body: bytes) -> ServerHello:
    r = Reader(body)
    version = r.u16()
    random = r.take(32)
    session_id = r.vec8()
    if len(session_id) > 32:
        raise DecodeError("session id too long")
    suite = r.u16()
    compression = r.u8()
    extensions: dict[int, bytes] = {}
    if not r.done():
        ext_reader = Reader(r.vec16())
        while not ext_reader.done():
            etype = ext_reader.u16()
            extensions[etype] = ext_reader.vec16()
    if not r.done():
        raise DecodeError("trailing bytes in ServerHello")
    return ServerHello(version, random, session_id, suite, compression, extensions)


def parse_hello_verify_request(body: bytes) -> bytes:
    r = Reader(body)
    r.u16()
    cookie = r.vec8()
    if not r.done():
        raise DecodeError("trailing bytes in HelloVerifyRequest")
    return cookie


def parse_certificate(body: bytes) -> list[bytes]:
    r = Reader(body)
    chain_reader = Reader(r.vec24())
    if not r.done():
        raise DecodeError("trailing bytes in Certificate")
    chain = []
    while not chain_reader.done():
        chain.append(chain_reader.vec24())
    return chain


def encode_certificate(chain: list[bytes]) -> bytes:
    return vec24(b"".join(vec24(c) for c in chain))


@dataclass
class CertificateRequest:
    cert_types: bytes
    sig_algs: list[int]
    authorities: list[bytes]


def parse_certificate_request(body: bytes, tls12: bool) -> CertificateRequest:
    r = Reader(body)
    types = r.vec8()
    sig_algs = []
    if tls12:
        sr = Reader(r.vec16())
        while not sr.done():
            sig_algs.append(sr.u16())
    authorities = []
    ar = Reader(r.vec16())
    while not ar.done():
        authorities.append(ar.vec16())
    if not r.done():
        raise DecodeError("trailing bytes in CertificateRequest")
    return CertificateRequest(types, sig_algs, authorities)


@dataclass
class ServerKeyExchange:
    kind: str  # "ecdhe" | "dhe"
    group: int | None = None
    point: bytes = b""
    dh_p: int = 0
    dh_g: int = 0
    dh_ys: int = 0
    params: bytes = b""
    sig_alg: int | None = None
    signature: bytes = b""


def parse_server_key_exchange(body: bytes, kex: str, tls12: bool) -> ServerKeyExchange:
    r = Reader(body)
    if kex.startswith("ECDH"):
        if r.u8() != 3:
            raise DecodeError("only named curves are supported")
        group = r.u16()
        point = r.vec8()
        ske = ServerKeyExchange("ecdhe", group=group, point=point)
    else:
        p, g, ys = r.vec16(), r.vec16(), r.vec16()
        ske = ServerKeyExchange("dhe", dh_p=int.from_bytes(p, "big"), dh_g=int.from_bytes(g, "big"),
                                dh_ys=int.from_bytes(ys, "big"))
    ske.params = body[:r.pos]
    if not kex.endswith("_ANON"):
        if tls12:
            ske.sig_alg = r.u16()
        ske.signature = r.vec16()
    if not r.done():
        raise DecodeError("trailing bytes in ServerKeyExchange")
    return ske


@dataclass
class ClientHello:
    version: int
    random: bytes
    session_id: bytes
    cookie: bytes | None
    cipher_suites: list[int]
    compression: bytes
    extensions: dict[int, bytes] = field(default_factory=dict)

    def groups(self) -> list[int]:
        ext = self.extensions.get(EXT_SUPPORTED_GROUPS)
        if not ext:
            return []
        r = Reader(Reader(ext).vec16())
        return [r.u16() for _ in range(r.remaining() // 2)]


def parse_client_hello(body: bytes, dtls: bool = False) -> ClientHello:
    """Server-side parse, used by the lab servers."""
    r = Reader(body)
    version = r.u16()
    random = r.take(32)
    session_id = r.vec8()
    cookie = r.vec8() if dtls else None
    sr = Reader(r.vec16())
    suites = [sr.u16() for _ in range(sr.remaining() // 2)]
    compression = r.vec8()
    extensions: dict[int, bytes] = {}
    if not r.done():
        er = Reader(r.vec16())
        while not er.done():
            etype = er.u16()
            extensions[etype] = er.vec16()
    if not r.done():
        raise DecodeError("trailing bytes in ClientHello")
    return ClientHello(version, random, session_id, cookie, suites, compression, extensions)


def build_server_hello_body(version: int, server_random: bytes, suite: int,
                            extensions: dict[int, bytes] | None = None) -> bytes:
    body = u16(version) + server_random + vec8(b"") + u16(suite) + u8(0)
    if extensions:
        body += vec16(b"".join(u16(k) + vec16(v) for k, v in extensions.items()))
    return body
