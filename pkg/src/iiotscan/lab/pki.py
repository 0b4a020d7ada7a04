"""Certificates for harness servers.

Certificates are assembled with asn1crypto and signed with the raw key so
that MD5 and SHA-1 signatures (which `cryptography`'s builder refuses) are
available for misconfiguration scenarios.
"""
from __future__ import annotations

import datetime as dt
import functools
import hashlib
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from asn1crypto import keys as akeys
from asn1crypto import x509 as ax
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa

UTC = dt.timezone.utc

_HASHES = {"MD5": hashes.MD5, "SHA1": hashes.SHA1, "SHA256": hashes.SHA256,
           "SHA384": hashes.SHA384, "SHA512": hashes.SHA512}
_CURVES = {256: ec.SECP256R1, 384: ec.SECP384R1, 521: ec.SECP521R1}

PrivateKey = rsa.RSAPrivateKey | ec.EllipticCurvePrivateKey


@dataclass(frozen=True)
class CertSpec:
    key_type: str = "RSA"  # RSA | ECDSA
    key_bits: int = 2048  # modulus size, or curve size for ECDSA
    sig_hash: str = "SHA256"
    not_before: str = "now-30d"  # ISO timestamp or now±Nd
    lifetime_days: float = 365
    issuer: str = "self"  # self | private_ca | public_ca
    common_name: str = "device.lab.invalid"
    organization: str | None = None
    key_usage: tuple[str, ...] = ("digital_signature", "key_encipherment")
    key_seed: str | None = field(default=None, compare=False)

    def not_before_dt(self) -> dt.datetime:
        m = re.fullmatch(r"now([+-]\d+)d", self.not_before)
        if m:
            # relative to today's UTC midnight, so a scenario is stable within a day
            today = dt.datetime.now(UTC).replace(hour=0, minute=0, second=0, microsecond=0)
            return today + dt.timedelta(days=int(m.group(1)))
        value = dt.datetime.fromisoformat(self.not_before)
        return value if value.tzinfo else value.replace(tzinfo=UTC)

    def not_after_dt(self) -> dt.datetime:
        return self.not_before_dt() + dt.timedelta(days=self.lifetime_days)

    def to_json(self) -> dict:
        out = asdict(self)
        out["key_usage"] = list(self.key_usage)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "CertSpec":
        obj = dict(obj)
        if "key_usage" in obj:
            obj["key_usage"] = tuple(obj["key_usage"])
        return cls(**obj)


@functools.lru_cache(maxsize=None)
def generate_key(key_type: str, key_bits: int, seed: str | None = None) -> PrivateKey:
    """Fresh key; calls with the same (type, bits, seed) share one key per process."""
    if key_type == "RSA":
        return rsa.generate_private_key(public_exponent=65537, key_size=key_bits)
    if key_type == "ECDSA":
        return ec.generate_private_key(_CURVES[key_bits]())
    raise ValueError(f"unknown key type {key_type}")


def key_pem(key: PrivateKey) -> bytes:
    return key.private_bytes(serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8,
                             serialization.NoEncryption())


def _name(cn: str, org: str | None) -> ax.Name:
    attrs = {"common_name": cn}
    if org:
        attrs["organization_name"] = org
    return ax.Name.build(attrs)


def _time(value: dt.datetime) -> ax.Time:
    if 1950 <= value.year < 2050:
        return ax.Time(name="utc_time", value=value)
    return ax.Time(name="general_time", value=value)


def _sig_algorithm(issuer_key: PrivateKey, sig_hash: str) -> str:
    kind = "rsa" if isinstance(issuer_key, rsa.RSAPrivateKey) else "ecdsa"
    return f"{sig_hash.lower()}_{kind}"


def _sign(issuer_key: PrivateKey, data: bytes, sig_hash: str) -> bytes:
    h = _HASHES[sig_hash]()
    if isinstance(issuer_key, rsa.RSAPrivateKey):
        return issuer_key.sign(data, padding.PKCS1v15(), h)
    return issuer_key.sign(data, ec.ECDSA(h))


def build_certificate(*, subject: ax.Name, issuer: ax.Name, public_key: bytes, issuer_key: PrivateKey,
                      sig_hash: str, not_before: dt.datetime, not_after: dt.datetime, serial: int,
                      ca: bool = False, key_usage: tuple[str, ...] = ()) -> bytes:
    extensions = [{"extn_id": "basic_constraints", "critical": True, "extn_value": {"ca": ca}}]
    if key_usage:
        extensions.append({"extn_id": "key_usage", "critical": True, "extn_value": set(key_usage)})
    tbs = ax.TbsCertificate({
        "version": "v3",
        "serial_number": serial,
        "signature": {"algorithm": _sig_algorithm(issuer_key, sig_hash)},
        "issuer": issuer,
        "validity": {"not_before": _time(not_before), "not_after": _time(not_after)},
        "subject": subject,
        "subject_public_key_info": akeys.PublicKeyInfo.load(public_key),
        "extensions": extensions,
    })
    cert = ax.Certificate({
        "tbs_certificate": tbs,
        "signature_algorithm": {"algorithm": _sig_algorithm(issuer_key, sig_hash)},
        "signature_value": _sign(issuer_key, tbs.dump(), sig_hash),
    })
    return cert.dump()


def _spki(key: PrivateKey) -> bytes:
    return key.public_key().public_bytes(serialization.Encoding.DER,
                                         serialization.PublicFormat.SubjectPublicKeyInfo)


@dataclass
class Authority:
    name: str
    key: PrivateKey
    cert_der: bytes

    @property
    def subject(self) -> ax.Name:
        return ax.Certificate.load(self.cert_der).subject

    def pem(self) -> bytes:
        from cryptography import x509
        return x509.load_der_x509_certificate(self.cert_der).public_bytes(serialization.Encoding.PEM)


@dataclass
class IssuedCert:
    spec: CertSpec
    key: PrivateKey
    cert_der: bytes
    chain: list[bytes]  # leaf first, as a server would send it

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.cert_der).hexdigest()

    def cert_pem(self) -> bytes:
        from cryptography import x509
        return x509.load_der_x509_certificate(self.cert_der).public_bytes(serialization.Encoding.PEM)


class HarnessPKI:
    """A private CA and a stand-in "public" CA, created once per directory.

    The public CA's root is written into a trust-store slot so that chains
    it issues validate as publicly trusted during lab runs.
    """

    STORE_SLOT = "harness"

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.private_ca = self._load_or_create("private_ca", "Harness Private Device CA", "Lab Plant Operator")
        self.public_ca = self._load_or_create("public_ca", "Harness Public Root CA", "Harness Trust Services")
        store_dir = self.trust_store_dir
        store_dir.mkdir(exist_ok=True)
        (store_dir / f"{self.STORE_SLOT}.pem").write_bytes(self.public_ca.pem())

    @property
    def trust_store_dir(self) -> Path:
        return self.directory / "stores"

    def _load_or_create(self, slot: str, cn: str, org: str) -> Authority:
        key_path = self.directory / f"{slot}.key.pem"
        cert_path = self.directory / f"{slot}.der"
        if key_path.exists() and cert_path.exists():
            key = serialization.load_pem_private_key(key_path.read_bytes(), password=None)
            return Authority(slot, key, cert_path.read_bytes())
        key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
        name = _name(cn, org)
        now = dt.datetime.now(UTC).replace(microsecond=0)
        der = build_certificate(subject=name, issuer=name, public_key=_spki(key), issuer_key=key,
                                sig_hash="SHA256", not_before=now - dt.timedelta(days=1),
                                not_after=now + dt.timedelta(days=3650), serial=1, ca=True,
                                key_usage=("key_cert_sign", "crl_sign"))
        key_path.write_bytes(key_pem(key))
        os.chmod(key_path, 0o600)
        cert_path.write_bytes(der)
        return Authority(slot, key, der)

    def issue(self, spec: CertSpec) -> IssuedCert:
        key = generate_key(spec.key_type, spec.key_bits, spec.key_seed)
        subject = _name(spec.common_name, spec.organization)
        if spec.issuer == "self":
            issuer_name, issuer_key, chain_tail = subject, key, []
        elif spec.issuer in ("private_ca", "public_ca"):
            authority = self.private_ca if spec.issuer == "private_ca" else self.public_ca
            issuer_name, issuer_key, chain_tail = authority.subject, authority.key, []
        else:
            raise ValueError(f"unknown issuer mode {spec.issuer}")
        serial = int.from_bytes(hashlib.sha256(repr(spec).encode() + _spki(key)).digest()[:8], "big") | 1
        der = build_certificate(subject=subject, issuer=issuer_name, public_key=_spki(key),
                                issuer_key=issuer_key, sig_hash=spec.sig_hash,
                                not_before=spec.not_before_dt(), not_after=spec.not_after_dt(),
                                serial=serial, key_usage=spec.key_usage)
        return IssuedCert(spec, key, der, [der] + chain_tail)
