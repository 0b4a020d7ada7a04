"""Per-deployment rules: versions, suites, lifetime, primitives, reuse."""
from __future__ import annotations

import calendar
import datetime as dt
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from ..prober.engine import detect_downgrade_sentinel
from ..prober.results import Outcome, SuiteBattery
from ..prober.suites import BATTERY_ORDER, SuiteSetName, is_weak_cipher, is_weak_mac
from .certs import CertificateRecord

UTC = dt.timezone.utc


class Check(str, Enum):
    DEPRECATED_VERSION = "deprecated_version"
    NO_REC_SUITE = "no_rec_suite"
    WEAK_CIPHER_ACCEPTED = "weak_cipher_accepted"
    WEAK_MAC_ACCEPTED = "weak_mac_accepted"
    INSECURE_SUITE_ACCEPTED = "insecure_suite_accepted"
    EXPIRED_CERT = "expired_cert"
    OVER_LONG_LIFETIME = "over_long_lifetime"
    SHORT_KEY = "short_key"
    WEAK_SIG_HASH = "weak_sig_hash"
    CERT_REUSE_INTRA_AS = "cert_reuse_intra_as"
    CERT_REUSE_INTER_AS = "cert_reuse_inter_as"
    NO_ACCESS_CONTROL = "no_access_control"
    DEFAULT_CREDENTIALS = "default_credentials"


SEVERITY = {
    Check.DEPRECATED_VERSION: "warn",
    Check.NO_REC_SUITE: "warn",
    Check.WEAK_CIPHER_ACCEPTED: "warn",
    Check.WEAK_MAC_ACCEPTED: "warn",
    Check.INSECURE_SUITE_ACCEPTED: "critical",
    Check.EXPIRED_CERT: "warn",
    Check.OVER_LONG_LIFETIME: "info",
    Check.SHORT_KEY: "warn",
    Check.WEAK_SIG_HASH: "warn",
    Check.CERT_REUSE_INTRA_AS: "warn",
    Check.CERT_REUSE_INTER_AS: "critical",
    Check.NO_ACCESS_CONTROL: "critical",
    Check.DEFAULT_CREDENTIALS: "critical",
}


@dataclass(frozen=True)
class Finding:
    deployment_id: str
    check: Check
    evidence: str
    severity: str = ""

    def __post_init__(self):
        object.__setattr__(self, "check", Check(self.check))
        if not self.severity:
            object.__setattr__(self, "severity", SEVERITY[self.check])
        if "=" not in self.evidence:
            raise ValueError("evidence must carry key=value fields")

    def to_row(self) -> dict:
        return {"deployment_id": self.deployment_id, "check": self.check.value, "severity": self.severity,
                "evidence": self.evidence}


def _evidence(**fields) -> str:
    return ";".join(f"{k}={v}" for k, v in fields.items())


# --- versions ------------------------------------------------------------------------

# DTLS 1.0 sits at TLS 1.1, DTLS 1.2 at TLS 1.2
_VERSION_RANK = {"SSLv3": 0, "TLSv1.0": 1, "TLSv1.1": 2, "DTLSv1.0": 2, "TLSv1.2": 3, "DTLSv1.2": 3,
                 "TLSv1.3": 4, "DTLSv1.3": 4}
TLS12_RANK = 3


def version_rank(name: str) -> int:
    return _VERSION_RANK[name]


def max_version(battery: SuiteBattery) -> str | None:
    seen = [h.negotiated_version for h in battery if h.server_hello_valid and h.negotiated_version]
    return max(seen, key=version_rank) if seen else None


def tls13_capable(battery: SuiteBattery) -> bool:
    """Some TLS 1.2 ServerHello carried the downgrade sentinel."""
    return any(h.server_random and h.negotiated_version in ("TLSv1.2", "DTLSv1.2")
               and detect_downgrade_sentinel(h.server_random) for h in battery)


def check_version(battery: SuiteBattery, deployment_id: str = "") -> Finding | None:
    best = max_version(battery)
    if best is None:
        raise ValueError("no handshake negotiated a version")
    if version_rank(best) < TLS12_RANK:
        return Finding(deployment_id, Check.DEPRECATED_VERSION, _evidence(max_negotiated_version=best))
    return None


# --- cipher suites ---------------------------------------------------------------------

def comp_weakness(battery: SuiteBattery) -> tuple[bool, bool]:
    """(weak cipher, weak MAC) of the suite chosen under COMP."""
    h = battery[SuiteSetName.COMP]
    if h.outcome is not Outcome.ACCEPTED or not h.negotiated_suite:
        return False, False
    return is_weak_cipher(h.negotiated_suite), is_weak_mac(h.negotiated_suite)


def weakness_label(battery: SuiteBattery) -> str | None:
    cipher, mac = comp_weakness(battery)
    return {(True, True): "W(B)", (True, False): "W(C)", (False, True): "W(M)"}.get((cipher, mac))


def check_ciphers(battery: SuiteBattery, deployment_id: str = "") -> list[Finding]:
    if set(battery.results) != set(BATTERY_ORDER):
        raise ValueError("incomplete battery")
    out = []
    rec = battery[SuiteSetName.REC]
    if rec.outcome is not Outcome.ACCEPTED:
        out.append(Finding(deployment_id, Check.NO_REC_SUITE, _evidence(rec_outcome=rec.outcome.value)))
    comp = battery[SuiteSetName.COMP]
    cipher, mac = comp_weakness(battery)
    label = weakness_label(battery)
    if cipher:
        out.append(Finding(deployment_id, Check.WEAK_CIPHER_ACCEPTED,
                           _evidence(comp_suite=comp.negotiated_suite, category=label)))
    if mac:
        out.append(Finding(deployment_id, Check.WEAK_MAC_ACCEPTED,
                           _evidence(comp_suite=comp.negotiated_suite, category=label)))
    ins = battery[SuiteSetName.INS]
    if ins.outcome is Outcome.ACCEPTED:
        out.append(Finding(deployment_id, Check.INSECURE_SUITE_ACCEPTED,
                           _evidence(ins_suite=ins.negotiated_suite)))
    return out


FIGURE1_CLASSES = ("secure", "denies_harmless", "insecure_accepting")


def figure1_class(battery: SuiteBattery) -> str:
    """Host behaviour across the battery.

    insecure_accepting: INS accepted, or COMP answered with a weak suite.
    secure: REC accepted and nothing insecure accepted.
    denies_harmless: everything else (REC refused, but nothing weak taken).
    """
    if battery.accepted(SuiteSetName.INS) or any(comp_weakness(battery)):
        return "insecure_accepting"
    if battery.accepted(SuiteSetName.REC):
        return "secure"
    return "denies_harmless"


# --- lifetime ---------------------------------------------------------------------------

def add_months(when: dt.datetime, months: int) -> dt.datetime:
    month0 = when.month - 1 + months
    year, month = when.year + month0 // 12, month0 % 12 + 1
    day = min(when.day, calendar.monthrange(year, month)[1])
    return when.replace(year=year, month=month, day=day)


ERAS = (
    (dt.datetime(2020, 9, 1, tzinfo=UTC), "398d"),
    (dt.datetime(2018, 2, 1, tzinfo=UTC), "825d"),
    (dt.datetime(2016, 6, 1, tzinfo=UTC), "39mo"),
)


def lifetime_cap(not_before: dt.datetime) -> str | None:
    nb = not_before if not_before.tzinfo else not_before.replace(tzinfo=UTC)
    for start, cap in ERAS:
        if nb >= start:
            return cap
    return None


def latest_allowed_not_after(not_before: dt.datetime) -> dt.datetime | None:
    cap = lifetime_cap(not_before)
    if cap is None:
        return None
    if cap.endswith("mo"):
        return add_months(not_before, int(cap[:-2]))
    return not_before + dt.timedelta(days=int(cap[:-1]))


def check_lifetime(cert: CertificateRecord, now: dt.datetime, deployment_id: str = "") -> list[Finding]:
    out = []
    limit = latest_allowed_not_after(cert.not_before)
    if limit is not None and cert.not_after > limit:
        out.append(Finding(deployment_id, Check.OVER_LONG_LIFETIME, _evidence(
            not_before=cert.not_before.isoformat(), not_after=cert.not_after.isoformat(),
            lifetime_days=round(cert.lifetime.total_seconds() / 86400, 3), cap=lifetime_cap(cert.not_before))))
    now = now if now.tzinfo else now.replace(tzinfo=UTC)
    if now > cert.not_after:
        out.append(Finding(deployment_id, Check.EXPIRED_CERT,
                           _evidence(not_after=cert.not_after.isoformat(), checked_at=now.isoformat())))
    return out


# --- primitives ------------------------------------------------------------------------

MIN_RSA_BITS = 2000
WEAK_SIG_HASHES = ("MD5", "SHA1")


def check_primitives(cert: CertificateRecord, deployment_id: str = "") -> list[Finding]:
    out = []
    if cert.key_type == "RSA" and cert.key_bits < MIN_RSA_BITS:
        out.append(Finding(deployment_id, Check.SHORT_KEY, _evidence(key_type="RSA", key_bits=cert.key_bits)))
    if cert.sig_hash in WEAK_SIG_HASHES:
        out.append(Finding(deployment_id, Check.WEAK_SIG_HASH, _evidence(sig_hash=cert.sig_hash)))
    return out


# --- reuse -------------------------------------------------------------------------------

class Reuse(str, Enum):
    NOT_REUSED = "not_reused"
    INTRA_AS = "intra_as"
    INTER_AS = "inter_as"


def classify_reuse(usage: Iterable[tuple[str, int | None]]) -> Reuse:
    """Reuse class of one certificate from the (IP, ASN) pairs serving it.

    Up to two addresses never count as reuse, whatever their ASes; beyond
    that, one AS is intra-AS reuse and several are inter-AS reuse.  An
    unknown ASN counts as its own AS.
    """
    usage = set(usage)
    if not usage:
        raise ValueError("empty usage set")
    ips = {ip for ip, _ in usage}
    ases = {asn for _, asn in usage}
    if len(ips) <= 2:
        return Reuse.NOT_REUSED
    return Reuse.INTRA_AS if len(ases) == 1 else Reuse.INTER_AS


def reuse_finding(reuse: Reuse, fingerprint: str, usage, deployment_id: str = "") -> Finding | None:
    if reuse is Reuse.NOT_REUSED:
        return None
    check = Check.CERT_REUSE_INTRA_AS if reuse is Reuse.INTRA_AS else Check.CERT_REUSE_INTER_AS
    usage = set(usage)
    return Finding(deployment_id, check, _evidence(
        fingerprint=fingerprint, hosts=len({ip for ip, _ in usage}), ases=len({a for _, a in usage})))

