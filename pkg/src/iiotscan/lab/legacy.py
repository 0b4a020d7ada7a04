"""A small TLS server for suites the system OpenSSL no longer offers.

It reuses the scanner's record layer and key schedule with the roles
reversed, and supports RSA, ECDHE and static ECDH key exchange with RC4,
3DES, AES-CBC and AES-GCM bulk ciphers.
"""
from __future__ import annotations

import hashlib
import os
import socket
import struct

from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey

from ..prober import wire
from ..prober.cipher import TLS10, TLS12, derive_protections, finished_verify_data, master_secret
from ..prober.engine import DOWNGRADE_TLS12, StreamChannel, _rsa_sign_md5sha1
from ..prober.suites import CODE_POINTS, parse_suite
from .pki import IssuedCert

HANDSHAKE_FAILURE, PROTOCOL_VERSION, DECODE_ERROR, DECRYPT_ERROR = 40, 70, 50, 51
SUPPORTED_KEX = {"RSA", "ECDHE_RSA", "ECDHE_ECDSA", "ECDH_ECDSA", "ECDH_RSA"}


class HandshakeAbort(Exception):
    def __init__(self, alert: int, message: str):
        super().__init__(message)
        self.alert = alert


def _send_alert(ch: StreamChannel, description: int) -> None:
    try:
        ch._write_record(wire.ALERT, bytes([2, description]))
        ch.flush()
    except OSError:
        pass


def _point(key: ec.EllipticCurvePrivateKey) -> bytes:
    return key.public_key().public_bytes(serialization.Encoding.X962,
                                         serialization.PublicFormat.UncompressedPoint)


def _sign_params(key, version: int, data: bytes) -> bytes:
    if version >= TLS12:
        if isinstance(key, rsa.RSAPrivateKey):
            return struct.pack("!H", 0x0401) + wire.vec16(key.sign(data, padding.PKCS1v15(), hashes.SHA256()))
        return struct.pack("!H", 0x0403) + wire.vec16(key.sign(data, ec.ECDSA(hashes.SHA256())))
    if isinstance(key, rsa.RSAPrivateKey):
        digest = hashlib.md5(data).digest() + hashlib.sha1(data).digest()
        return wire.vec16(_rsa_sign_md5sha1(key, digest))
    return wire.vec16(key.sign(data, ec.ECDSA(hashes.SHA1())))


def server_handshake(sock: socket.socket, cert: IssuedCert, suites: list[str], *,
                     min_version: int = TLS10, max_version: int = TLS12, tls13_capable: bool = False,
                     timeout: float = 5.0) -> StreamChannel:
    """Serve one handshake; returns the channel ready for application data.

    Raises HandshakeAbort after sending the fatal alert when the client's
    offer cannot be satisfied.
    """
    ch = StreamChannel(sock, timeout)
    try:
        return _serve(ch, cert, suites, min_version, max_version, tls13_capable)
    except HandshakeAbort as exc:
        _send_alert(ch, exc.alert)
        raise
    except wire.DecodeError as exc:
        _send_alert(ch, DECODE_ERROR)
        raise HandshakeAbort(DECODE_ERROR, str(exc)) from None


def _serve(ch, cert, suites, min_version, max_version, tls13_capable) -> StreamChannel:
    ev = ch.recv_event()
    if ev[0] != "hs" or ev[1] != wire.CLIENT_HELLO:
        raise HandshakeAbort(DECODE_ERROR, "expected ClientHello")
    hello = wire.parse_client_hello(ev[2])
    version = min(hello.version, max_version)
    if version < min_version:
        raise HandshakeAbort(PROTOCOL_VERSION, f"client offers at most 0x{hello.version:04x}")
    suite = next((s for s in suites if CODE_POINTS.get(s) in hello.cipher_suites), None)
    if suite is None:
        raise HandshakeAbort(HANDSHAKE_FAILURE, "no shared cipher suite")
    parts = parse_suite(suite)
    if parts.key_exchange not in SUPPORTED_KEX:
        raise ValueError(f"legacy server cannot serve {suite}")
    ch.set_version(version)
    server_random = os.urandom(32)
    if tls13_capable and version == TLS12:
        server_random = server_random[:24] + DOWNGRADE_TLS12
    exts = {}
    if wire.EXT_RENEGOTIATION_INFO in hello.extensions:
        exts[wire.EXT_RENEGOTIATION_INFO] = b"\x00"
    if parts.key_exchange.startswith("EC"):
        exts[wire.EXT_EC_POINT_FORMATS] = wire.vec8(b"\x00")
    ch.send_handshake(wire.SERVER_HELLO, wire.build_server_hello_body(version, server_random,
                                                                      CODE_POINTS[suite], exts))
    ch.send_handshake(wire.CERTIFICATE, wire.encode_certificate(cert.chain))

    ephemeral = None
    if parts.key_exchange.startswith("ECDHE"):
        if wire.X25519 in hello.groups() or not hello.groups():
            ephemeral, group = X25519PrivateKey.generate(), wire.X25519
            share = ephemeral.public_key().public_bytes_raw()
        else:
            ephemeral, group = ec.generate_private_key(ec.SECP256R1()), wire.SECP256R1
            share = _point(ephemeral)
        params = b"\x03" + wire.u16(group) + wire.vec8(share)
        signed = _sign_params(cert.key, version, hello.random + server_random + params)
        ch.send_handshake(wire.SERVER_KEY_EXCHANGE, params + signed)
    ch.send_handshake(wire.SERVER_HELLO_DONE, b"")
    ch.flush()

    ev = ch.recv_event()
    if ev[0] != "hs" or ev[1] != wire.CLIENT_KEY_EXCHANGE:
        raise HandshakeAbort(DECODE_ERROR, "expected ClientKeyExchange")
    r = wire.Reader(ev[2])
    if parts.key_exchange == "RSA":
        encrypted = r.vec16()
        try:
            pms = cert.key.decrypt(encrypted, padding.PKCS1v15())
        except ValueError:
            pms = os.urandom(48)
    elif isinstance(ephemeral, X25519PrivateKey):
        pms = ephemeral.exchange(X25519PublicKey.from_public_bytes(r.vec8()))
    else:
        key = ephemeral if ephemeral is not None else cert.key
        peer = ec.EllipticCurvePublicKey.from_encoded_point(key.curve, r.vec8())
        pms = key.exchange(ec.ECDH(), peer)
    master = master_secret(version, parts, pms, hello.random, server_random)
    write, read = derive_protections(version, suite, master, hello.random, server_random, client_side=False)
    if ch.recv_event()[0] != "ccs":
        raise HandshakeAbort(DECODE_ERROR, "expected ChangeCipherSpec")
    ch.set_read(read)
    expected = finished_verify_data(version, parts, master, b"client finished", bytes(ch.transcript))
    ev = ch.recv_event()
    if ev[0] != "hs" or ev[1] != wire.FINISHED or ev[2] != expected:
        raise HandshakeAbort(DECRYPT_ERROR, "client Finished does not verify")
    ch.send_ccs(write)
    ch.send_handshake(wire.FINISHED, finished_verify_data(version, parts, master, b"server finished",
                                                         bytes(ch.transcript)))
    ch.flush()
    return ch

