"""The scanner's own client certificate.

Servers that request a client certificate get this one: a 2048-bit RSA
self-signed certificate whose common name carries a contact URL so that
operators can find out who is probing them.  It is created once per install
and reused for every scan.
"""
from __future__ import annotations

import datetime
import os
from dataclasses import dataclass
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import rsa
from cryptography.x509.oid import NameOID

DEFAULT_CONTACT = "https://scan-info.invalid/iiot-research"


@dataclass
class ClientIdentity:
    cert_der: bytes
    key: rsa.RSAPrivateKey

    @property
    def certificate(self) -> x509.Certificate:
        return x509.load_der_x509_certificate(self.cert_der)

    @classmethod
    def generate(cls, contact: str = DEFAULT_CONTACT) -> "ClientIdentity":
        key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
        name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, contact[:64])])
        now = datetime.datetime.now(datetime.timezone.utc)
        cert = (
            x509.CertificateBuilder()
            .subject_name(name)
            .issuer_name(name)
            .public_key(key.public_key())
            .serial_number(x509.random_serial_number())
            .not_valid_before(now - datetime.timedelta(days=1))
            .not_valid_after(now + datetime.timedelta(days=365))
            .sign(key, hashes.SHA256())
        )
        return cls(cert.public_bytes(serialization.Encoding.DER), key)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pem = self.key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        ) + self.certificate.public_bytes(serialization.Encoding.PEM)
        path.write_bytes(pem)
        os.chmod(path, 0o600)

    @classmethod
    def load(cls, path: str | Path) -> "ClientIdentity":
        data = Path(path).read_bytes()
        key = serialization.load_pem_private_key(data, password=None)
        cert = x509.load_pem_x509_certificate(data[data.index(b"-----BEGIN CERTIFICATE-----"):])
        return cls(cert.public_bytes(serialization.Encoding.DER), key)

    @classmethod
    def load_or_create(cls, path: str | Path | None = None, contact: str = DEFAULT_CONTACT) -> "ClientIdentity":
        if path is None:
            base = os.environ.get("XDG_CONFIG_HOME") or os.path.join(os.path.expanduser("~"), ".config")
            path = Path(base) / "iiotscan" / "client-identity.pem"
        path = Path(path)
        if path.exists():
            return cls.load(path)
        ident = cls.generate(contact)
        ident.save(path)
        return ident
