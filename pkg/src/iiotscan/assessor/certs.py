"""Parsed certificates, trust stores and trust-anchor classification."""
from __future__ import annotations

import datetime as dt
import hashlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives.asymmetric import dsa, ec, ed448, ed25519, rsa
from cryptography.x509.oid import NameOID

# named slots for the usual platform stores; any other *.pem file is loaded too
STORE_SLOTS = ("apple", "microsoft", "android", "openjdk", "mozilla_nss", "oracle_jdk")

_SIG_OIDS = {
    "1.2.840.113549.1.1.4": "MD5",
    "1.2.840.113549.1.1.5": "SHA1",
    "1.2.840.113549.1.1.11": "SHA256",
    "1.2.840.113549.1.1.12": "SHA384",
    "1.2.840.113549.1.1.13": "SHA512",
    "1.2.840.10045.4.1": "SHA1",
    "1.2.840.10045.4.3.2": "SHA256",
    "1.2.840.10045.4.3.3": "SHA384",
    "1.2.840.10045.4.3.4": "SHA512",
    "1.2.840.10040.4.3": "SHA1",
    "2.16.840.1.101.3.4.3.2": "SHA256",
}
SIG_HASHES = ("MD5", "SHA1", "SHA256", "SHA384", "SHA512", "other")
_KEY_USAGE_FLAGS = ("digital_signature", "content_commitment", "key_encipherment", "data_encipherment",
                    "key_agreement", "key_cert_sign", "crl_sign")


class TrustAnchor(str, Enum):
    PUBLIC_CA = "public_ca"
    PRIVATE_CA = "private_ca"
    SELF_SIGNED = "self_signed"


@dataclass
class CertificateRecord:
    fingerprint: str
    subject: str
    issuer: str
    not_before: dt.datetime
    not_after: dt.datetime
    key_type: str  # RSA | ECDSA | other
    key_bits: int
    sig_hash: str
    chain_validates_public: bool = False
    trust_anchor: TrustAnchor | None = None
    common_name: str | None = None
    organization: str | None = None
    sig_algorithm: str = ""
    key_usage: tuple[str, ...] = ()
    der: bytes = field(default=b"", repr=False)

    def __post_init__(self):
        if not self.not_before < self.not_after:
            raise ValueError("not_before must precede not_after")
        if self.key_type == "RSA" and self.key_bits <= 0:
            raise ValueError("RSA key without a size")
        if self.sig_hash not in SIG_HASHES:
            raise ValueError(f"unknown signature hash {self.sig_hash}")

    @property
    def lifetime(self) -> dt.timedelta:
        return self.not_after - self.not_before

    def to_json(self) -> dict:
        return {
            "fingerprint": self.fingerprint, "subject": self.subject, "issuer": self.issuer,
            "not_before": self.not_before.isoformat(), "not_after": self.not_after.isoformat(),
            "key_type": self.key_type, "key_bits": self.key_bits, "sig_hash": self.sig_hash,
            "sig_algorithm": self.sig_algorithm, "key_usage": list(self.key_usage),
            "chain_validates_public": self.chain_validates_public,
            "trust_anchor": self.trust_anchor.value if self.trust_anchor else None,
            "common_name": self.common_name, "organization": self.organization,
        }


def _attr(name: x509.Name, oid) -> str | None:
    values = name.get_attributes_for_oid(oid)
    return str(values[0].value) if values else None


def _key_info(key) -> tuple[str, int]:
    if isinstance(key, rsa.RSAPublicKey):
        return "RSA", key.key_size
    if isinstance(key, ec.EllipticCurvePublicKey):
        return "ECDSA", key.curve.key_size
    if isinstance(key, dsa.DSAPublicKey):
        return "other", key.key_size
    if isinstance(key, (ed25519.Ed25519PublicKey, ed448.Ed448PublicKey)):
        return "other", 256 if isinstance(key, ed25519.Ed25519PublicKey) else 456
    return "other", 0


def _sig_hash(cert: x509.Certificate) -> str:
    name = _SIG_OIDS.get(cert.signature_algorithm_oid.dotted_string)
    if name:
        return name
    try:
        algo = cert.signature_hash_algorithm
    except Exception:
        return "other"
    if algo is None:
        return "other"
    name = algo.name.upper().replace("-", "")
    return name if name in SIG_HASHES else "other"


def _key_usage(cert: x509.Certificate) -> tuple[str, ...]:
    try:
        ku = cert.extensions.get_extension_for_class(x509.KeyUsage).value
    except x509.ExtensionNotFound:
        return ()
    flags = []
    for flag in _KEY_USAGE_FLAGS:
        try:
            if getattr(ku, flag):
                flags.append(flag)
        except ValueError:
            pass
    return tuple(flags)


def parse_certificate(der: bytes) -> CertificateRecord:
    cert = x509.load_der_x509_certificate(der)
    key_type, bits = _key_info(cert.public_key())
    return CertificateRecord(
        fingerprint=hashlib.sha256(der).hexdigest(),
        subject=cert.subject.rfc4514_string(),
        issuer=cert.issuer.rfc4514_string(),
        not_before=cert.not_valid_before_utc,
        not_after=cert.not_valid_after_utc,
        key_type=key_type,
        key_bits=bits,
        sig_hash=_sig_hash(cert),
        common_name=_attr(cert.subject, NameOID.COMMON_NAME),
        organization=_attr(cert.subject, NameOID.ORGANIZATION_NAME),
        sig_algorithm=cert.signature_algorithm_oid._name,
        key_usage=_key_usage(cert),
        der=der,
    )


# --- trust stores --------------------------------------------------------------------

@dataclass
class TrustStores:
    stores: dict[str, list[x509.Certificate]] = field(default_factory=dict)

    def roots(self):
        for name, certs in self.stores.items():
            for c in certs:
                yield name, c

    def __bool__(self) -> bool:
        return any(self.stores.values())


def load_trust_stores(directory: str | Path | None) -> TrustStores:
    """One PEM bundle per store: ``<slot>.pem``."""
    stores: dict[str, list[x509.Certificate]] = {}
    if directory is None:
        return TrustStores(stores)
    for path in sorted(Path(directory).glob("*.pem")):
        stores[path.stem] = x509.load_pem_x509_certificates(path.read_bytes())
    return TrustStores(stores)


def _issued_by(cert: x509.Certificate, issuer: x509.Certificate) -> bool:
    if cert.issuer != issuer.subject:
        return False
    try:
        cert.verify_directly_issued_by(issuer)
        return True
    except Exception:
        return False


def chain_validates(chain: list[bytes], stores: TrustStores, max_depth: int = 8) -> str | None:
    """Name of a store whose root anchors the chain, else None.

    Path building follows issuer names through the served intermediates and
    checks each signature.  Validity dates are not part of the decision, so
    expired certificates from public CAs still classify as public.
    """
    if not chain or not stores:
        return None
    certs = [x509.load_der_x509_certificate(c) for c in chain]
    current = certs[0]
    pool = certs[1:]
    for _ in range(max_depth):
        for name, root in stores.roots():
            if current == root or _issued_by(current, root):
                return name
        nxt = next((c for c in pool if c is not current and _issued_by(current, c)), None)
        if nxt is None:
            return None
        pool = [c for c in pool if c is not nxt]
        current = nxt
    return None


def classify_trust_anchor(chain: list[bytes], stores: TrustStores) -> TrustAnchor:
    if not chain:
        raise ValueError("empty certificate chain")
    if chain_validates(chain, stores) is not None:
        return TrustAnchor.PUBLIC_CA
    leaf = x509.load_der_x509_certificate(chain[0])
    if leaf.issuer == leaf.subject:
        return TrustAnchor.SELF_SIGNED
    return TrustAnchor.PRIVATE_CA
