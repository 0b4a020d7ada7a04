"""Key schedule and record protection for TLS 1.0-1.2 and DTLS 1.0/1.2.

Only the client needs this, and only to finish handshakes and carry one
application-layer exchange, so renegotiation and compression are absent.
"""
from __future__ import annotations

import hashlib
import hmac
import os
import struct
import warnings

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESCCM, AESGCM

from .suites import SuiteParts, parse_suite

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from cryptography.hazmat.decrepit.ciphers.algorithms import ARC4, TripleDES

TLS10, TLS11, TLS12 = 0x0301, 0x0302, 0x0303
DTLS10, DTLS12 = 0xFEFF, 0xFEFD

_HASHES = {"MD5": hashlib.md5, "SHA": hashlib.sha1, "SHA256": hashlib.sha256, "SHA384": hashlib.sha384}


class UnsupportedSuite(Exception):
    """The negotiated suite cannot be completed by this client."""


class BadRecordMac(Exception):
    pass


def tls_equivalent(version: int) -> int:
    """Map DTLS versions onto the TLS version whose crypto they reuse."""
    return {DTLS10: TLS11, DTLS12: TLS12}.get(version, version)


def _p_hash(hash_name: str, secret: bytes, seed: bytes, length: int) -> bytes:
    digest = _HASHES[hash_name]
    out, a = b"", seed
    while len(out) < length:
        a = hmac.new(secret, a, digest).digest()
        out += hmac.new(secret, a + seed, digest).digest()
    return out[:length]


def prf(version: int, prf_hash: str, secret: bytes, label: bytes, seed: bytes, length: int) -> bytes:
    if tls_equivalent(version) >= TLS12:
        return _p_hash(prf_hash, secret, label + seed, length)
    half = (len(secret) + 1) // 2
    md5 = _p_hash("MD5", secret[:half], label + seed, length)
    sha = _p_hash("SHA", secret[len(secret) - half:], label + seed, length)
    return bytes(x ^ y for x, y in zip(md5, sha))


def transcript_hash(version: int, prf_hash: str, messages: bytes) -> bytes:
    if tls_equivalent(version) >= TLS12:
        return _HASHES[prf_hash](messages).digest()
    return hashlib.md5(messages).digest() + hashlib.sha1(messages).digest()


def master_secret(version: int, parts: SuiteParts, pre_master: bytes,
                  client_random: bytes, server_random: bytes) -> bytes:
    return prf(version, parts.prf_hash, pre_master, b"master secret",
               client_random + server_random, 48)


def finished_verify_data(version: int, parts: SuiteParts, master: bytes,
                         label: bytes, messages: bytes) -> bytes:
    return prf(version, parts.prf_hash, master, label,
               transcript_hash(version, parts.prf_hash, messages), 12)


# --- bulk cipher parameters --------------------------------------------------

def _bulk_params(bulk: str) -> tuple[str, int, int]:
    """(kind, key length, block or fixed-IV length)."""
    table = {
        "NULL": ("null", 0, 0),
        "RC4_128": ("rc4", 16, 0),
        "3DES_EDE_CBC": ("3des", 24, 8),
        "DES_CBC": ("des", 8, 8),
        "AES_128_CBC": ("aes", 16, 16),
        "AES_256_CBC": ("aes", 32, 16),
        "AES_128_GCM": ("gcm", 16, 4),
        "AES_256_GCM": ("gcm", 32, 4),
        "AES_128_CCM": ("ccm", 16, 4),
        "AES_256_CCM": ("ccm", 32, 4),
        "AES_128_CCM_8": ("ccm8", 16, 4),
        "AES_256_CCM_8": ("ccm8", 32, 4),
    }
    try:
        return table[bulk]
    except KeyError:
        raise UnsupportedSuite(f"bulk cipher {bulk}") from None


def check_supported(suite: str) -> SuiteParts:
    parts = parse_suite(suite)
    if parts.export or suite == "NULL_WITH_NULL_NULL":
        raise UnsupportedSuite(suite)
    _bulk_params(parts.bulk)
    if not parts.aead and parts.mac not in _HASHES:
        raise UnsupportedSuite(suite)
    if parts.key_exchange not in SUPPORTED_KEY_EXCHANGES:
        raise UnsupportedSuite(f"key exchange {parts.key_exchange}")
    return parts


SUPPORTED_KEY_EXCHANGES = {
    "RSA", "ECDHE_RSA", "ECDHE_ECDSA", "DHE_RSA", "DHE_DSS",
    "ECDH_RSA", "ECDH_ECDSA", "DH_ANON", "ECDH_ANON",
}


class RecordProtection:
    """One direction of record protection for an established cipher state."""

    def __init__(self, version: int, parts: SuiteParts, mac_key: bytes, key: bytes, iv: bytes):
        self.version = version
        self.tls_version = tls_equivalent(version)
        self.parts = parts
        self.mac_key = mac_key
        self.kind, _, self.block = _bulk_params(parts.bulk)
        self.key = key
        self.iv = iv
        self._digest = None if parts.aead else _HASHES[parts.mac]
        if self.kind == "rc4":
            self._stream_enc = Cipher(ARC4(key), None).encryptor()
            self._stream_dec = Cipher(ARC4(key), None).decryptor()
        if self.kind == "gcm":
            self._aead = AESGCM(key)
        elif self.kind == "ccm":
            self._aead = AESCCM(key, tag_length=16)
        elif self.kind == "ccm8":
            self._aead = AESCCM(key, tag_length=8)

    @property
    def mac_len(self) -> int:
        return 0 if self._digest is None else self._digest().digest_size

    def _mac(self, seq: bytes, content_type: int, payload: bytes) -> bytes:
        header = seq + struct.pack("!BHH", content_type, self.version, len(payload))
        return hmac.new(self.mac_key, header + payload, self._digest).digest()

    def _block_cipher(self, iv: bytes):
        if self.kind == "aes":
            algo = algorithms.AES(self.key)
        else:
            algo = TripleDES(self.key)
        return Cipher(algo, modes.CBC(iv))

    def encrypt(self, seq: bytes, content_type: int, plaintext: bytes) -> bytes:
        if self.kind in ("gcm", "ccm", "ccm8"):
            explicit = seq
            aad = seq + struct.pack("!BHH", content_type, self.version, len(plaintext))
            return explicit + self._aead.encrypt(self.iv + explicit, plaintext, aad)
        mac = self._mac(seq, content_type, plaintext)
        if self.kind == "null":
            return plaintext + mac
        if self.kind == "rc4":
            return self._stream_enc.update(plaintext + mac)
        body = plaintext + mac
        pad = self.block - (len(body) + 1) % self.block
        if pad == self.block:
            pad = 0
        body += bytes([pad]) * (pad + 1)
        if self.tls_version >= TLS11:
            iv = os.urandom(self.block)
            enc = self._block_cipher(iv).encryptor()
            return iv + enc.update(body) + enc.finalize()
        enc = self._block_cipher(self.iv).encryptor()
        out = enc.update(body) + enc.finalize()
        self.iv = out[-self.block:]
        return out

    def decrypt(self, seq: bytes, content_type: int, fragment: bytes) -> bytes:
        if self.kind in ("gcm", "ccm", "ccm8"):
            if len(fragment) < 8:
                raise BadRecordMac("short AEAD record")
            explicit, body = fragment[:8], fragment[8:]
            tag_len = 8 if self.kind == "ccm8" else 16
            length = len(body) - tag_len
            if length < 0:
                raise BadRecordMac("short AEAD record")
            aad = seq + struct.pack("!BHH", content_type, self.version, length)
            try:
                return self._aead.decrypt(self.iv + explicit, body, aad)
            except Exception as exc:
                raise BadRecordMac(str(exc)) from None
        if self.kind == "null":
            data = fragment
        elif self.kind == "rc4":
            data = self._stream_dec.update(fragment)
        else:
            if self.tls_version >= TLS11:
                if len(fragment) < 2 * self.block or len(fragment) % self.block:
                    raise BadRecordMac("bad CBC record length")
                iv, fragment = fragment[:self.block], fragment[self.block:]
            else:
                if not fragment or len(fragment) % self.block:
                    raise BadRecordMac("bad CBC record length")
                iv = self.iv
                self.iv = fragment[-self.block:]
            dec = self._block_cipher(iv).decryptor()
            data = dec.update(fragment) + dec.finalize()
            pad = data[-1]
            if pad + 1 > len(data) or data[-pad - 1:] != bytes([pad]) * (pad + 1):
                raise BadRecordMac("bad padding")
            data = data[:-pad - 1]
        n = self.mac_len
        if len(data) < n:
            raise BadRecordMac("record shorter than MAC")
        payload, mac = data[:len(data) - n], data[len(data) - n:]
        if not hmac.compare_digest(mac, self._mac(seq, content_type, payload)):
            raise BadRecordMac("MAC mismatch")
        return payload


def derive_protections(version: int, suite: str, master: bytes, client_random: bytes,
                       server_random: bytes, *, client_side: bool = True):
    """Return (write, read) protections for the given side."""
    parts = check_supported(suite)
    kind, key_len, iv_len = _bulk_params(parts.bulk)
    mac_len = 0 if parts.aead else _HASHES[parts.mac]().digest_size
    total = 2 * (mac_len + key_len + iv_len)
    block = prf(version, parts.prf_hash, master, b"key expansion", server_random + client_random, total)
    chunks = []
    pos = 0
    for size in (mac_len, mac_len, key_len, key_len, iv_len, iv_len):
        chunks.append(block[pos:pos + size])
        pos += size
    cmac, smac, ckey, skey, civ, siv = chunks
    client = RecordProtection(version, parts, cmac, ckey, civ)
    server = RecordProtection(version, parts, smac, skey, siv)
    return (client, server) if client_side else (server, client)
