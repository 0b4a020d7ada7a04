"""Funnel staging, deduplication into deployments, per-protocol aggregation."""
from __future__ import annotations

import hashlib
import ipaddress
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum

from cryptography import x509
from cryptography.x509.oid import NameOID

from .asmap import AsMap
from .catalog import Protocol
from .prober.results import HandshakeResult, SuiteBattery, TransportResult
from .protocols.base import ValidationVerdict
from .protocols.session import AppExchange
from .targets import Endpoint


class Stage(str, Enum):
    NONE = "none"
    TRANSPORT = "transport"
    TLS_VALID = "tls_valid"
    AUTH_OK = "auth_ok"
    TLS_SUCCESS = "tls_success"
    VALID = "valid"

    @property
    def rank(self) -> int:
        return STAGES.index(self)

    def __ge__(self, other):
        return self.rank >= Stage(other).rank

    def __gt__(self, other):
        return self.rank > Stage(other).rank

    def __le__(self, other):
        return self.rank <= Stage(other).rank

    def __lt__(self, other):
        return self.rank < Stage(other).rank


STAGES = list(Stage)
FUNNEL = STAGES[1:]


class Adoption(str, Enum):
    PLAINTEXT_ONLY = "plaintext_only"
    TLS_ONLY = "tls_only"
    OPTIONAL_TLS = "optional_tls"


@dataclass
class ProbeRecord:
    endpoint: Endpoint
    transport: TransportResult
    battery: SuiteBattery | None = None
    app: AppExchange | None = None
    stage: Stage = Stage.NONE
    # the battery ran because the plaintext probe on a standard port failed
    fallback: bool = False
    plaintext_app: AppExchange | None = None
    tls13: HandshakeResult | None = None
    probed_at: float | None = None

    @property
    def app_verdict(self) -> ValidationVerdict | None:
        return self.app.verdict if self.app else None

    @property
    def is_tls(self) -> bool:
        return self.battery is not None

    @property
    def leaf_fingerprint(self) -> str | None:
        leaf = self.battery.leaf() if self.battery else None
        return hashlib.sha256(leaf).hexdigest() if leaf else None

    def config_key(self) -> tuple:
        """Leaf fingerprint plus battery outcome vector."""
        if self.battery is None:
            return ("plaintext",)
        return (self.leaf_fingerprint, self.battery.outcome_vector())

    def to_json(self) -> dict:
        return {
            "endpoint": self.endpoint.to_json(),
            "transport": self.transport.value,
            "battery": self.battery.to_json() if self.battery else None,
            "app": self.app.to_json() if self.app else None,
            "app_verdict": self.app_verdict.to_json() if self.app_verdict else None,
            "stage": self.stage.value,
            "fallback": self.fallback,
            "plaintext_app": self.plaintext_app.to_json() if self.plaintext_app else None,
            "tls13": self.tls13.to_json() if self.tls13 else None,
            "probed_at": self.probed_at,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ProbeRecord":
        return cls(
            Endpoint.from_json(obj["endpoint"]), TransportResult(obj["transport"]),
            SuiteBattery.from_json(obj["battery"]) if obj.get("battery") else None,
            AppExchange.from_json(obj["app"]) if obj.get("app") else None,
            Stage(obj.get("stage", "none")), obj.get("fallback", False),
            AppExchange.from_json(obj["plaintext_app"]) if obj.get("plaintext_app") else None,
            HandshakeResult.from_json(obj["tls13"]) if obj.get("tls13") else None,
            obj.get("probed_at"),
        )


def classify_stage(record: ProbeRecord) -> Stage:
    """Greatest funnel stage whose predicate holds; predicates are nested."""
    if record.transport is not TransportResult.ALIVE:
        return Stage.NONE
    app_ok = record.app_verdict is not None and record.app_verdict.valid
    if record.battery is None:
        return Stage.VALID if app_ok else Stage.TRANSPORT
    hellos = [h for h in record.battery if h.server_hello_valid]
    if not hellos:
        return Stage.TRANSPORT
    authed = [h for h in hellos if not h.rejected_after_client_cert]
    if not authed:
        return Stage.TLS_VALID
    if not any(h.completed and h.error is None for h in authed):
        return Stage.AUTH_OK
    if not app_ok:
        return Stage.TLS_SUCCESS
    return Stage.VALID


def stage_records(records: list[ProbeRecord]) -> list[ProbeRecord]:
    for r in records:
        r.stage = classify_stage(r)
    return records


# --- deployments --------------------------------------------------------------------

@dataclass
class Deployment:
    id: str
    host: str
    protocol: Protocol
    adoption: Adoption
    records: list[ProbeRecord]
    asn: int | None = None
    cert_fingerprints: set[str] = field(default_factory=set)
    # at least one contributing record reached the final stage
    valid: bool = True

    @property
    def tls_records(self) -> list[ProbeRecord]:
        return [r for r in self.records if r.is_tls]

    @property
    def primary_tls(self) -> ProbeRecord | None:
        """The record whose battery describes this deployment's TLS configuration."""
        tls = self.tls_records
        valid = [r for r in tls if r.stage is Stage.VALID]
        pool = valid or tls
        return min(pool, key=lambda r: (r.endpoint.variant.value != "secure", r.endpoint.port)) if pool else None

    @property
    def is_tls(self) -> bool:
        return self.adoption is not Adoption.PLAINTEXT_ONLY

    def to_json(self) -> dict:
        return {
            "id": self.id, "host": self.host, "protocol": self.protocol.value, "adoption": self.adoption.value,
            "asn": self.asn, "valid": self.valid, "cert_fingerprints": sorted(self.cert_fingerprints),
            "endpoints": [r.endpoint.to_json() for r in self.records],
            "stages": [r.stage.value for r in self.records],
        }


def _valid(r: ProbeRecord) -> bool:
    return r.stage is Stage.VALID


def dedup(records: list[ProbeRecord], as_map: AsMap | None = None) -> list[Deployment]:
    """Merge records per host and protocol.

    TLS records with the same configuration (leaf fingerprint and outcome
    vector) form one deployment; distinct valid configurations stay
    separate.  A valid plaintext record next to a valid TLS one makes the
    host optional-TLS.  Every record lands in exactly one deployment.
    """
    groups: dict[tuple[str, Protocol], list[ProbeRecord]] = defaultdict(list)
    for r in records:
        groups[(r.endpoint.address, r.endpoint.protocol)].append(r)

    out: list[Deployment] = []
    for (host, protocol), recs in sorted(groups.items(), key=lambda kv: (kv[0][1].value, _ip_key(kv[0][0]))):
        recs = sorted(recs, key=lambda r: (r.endpoint.port, r.endpoint.variant.value))
        tls = [r for r in recs if r.is_tls]
        plain = [r for r in recs if not r.is_tls]
        valid_tls_keys: list[tuple] = []
        for r in tls:
            if _valid(r) and r.config_key() not in valid_tls_keys:
                valid_tls_keys.append(r.config_key())
        has_valid_plain = any(_valid(r) for r in plain)
        asn = as_map.lookup(host) if as_map else None
        made: list[Deployment] = []

        if valid_tls_keys:
            adoption = Adoption.OPTIONAL_TLS if has_valid_plain else Adoption.TLS_ONLY
            buckets: dict[tuple, list[ProbeRecord]] = {k: [] for k in valid_tls_keys}
            first = valid_tls_keys[0]
            for r in tls:
                buckets[r.config_key() if r.config_key() in buckets else first].append(r)
            buckets[first].extend(plain)
            for key in valid_tls_keys:
                made.append(Deployment("", host, protocol, adoption, buckets[key], asn))
        elif has_valid_plain:
            made.append(Deployment("", host, protocol, Adoption.PLAINTEXT_ONLY, recs, asn))
        else:
            adoption = Adoption.TLS_ONLY if tls else Adoption.PLAINTEXT_ONLY
            made.append(Deployment("", host, protocol, adoption, recs, asn, valid=False))

        for i, d in enumerate(made):
            d.id = f"{protocol.value}:{host}:{i}"
            d.cert_fingerprints = {r.leaf_fingerprint for r in d.tls_records if r.leaf_fingerprint}
            d.records.sort(key=lambda r: (r.endpoint.port, r.endpoint.variant.value))
        out.extend(made)
    return out


def _ip_key(address: str):
    ip = ipaddress.ip_address(address)
    return (ip.version, int(ip))


# --- aggregation ---------------------------------------------------------------------

SUMMARY_COLUMNS = ["protocol", "transport", "tls_valid", "auth_ok", "tls_success", "valid", "valid_plaintext",
                   "deployments", "tls_deployments", "pct_tls", "ases", "common_names"]


def leaf_common_name(der: bytes) -> str | None:
    try:
        cert = x509.load_der_x509_certificate(der)
        attrs = cert.subject.get_attributes_for_oid(NameOID.COMMON_NAME)
    except Exception:
        return None
    return str(attrs[0].value) if attrs else None


def funnel_counts(records: list[ProbeRecord]) -> dict[str, int]:
    """|stage ≥ k| over TLS records, plus valid plaintext records.

    Endpoints that never reached the battery count at the transport stage
    only when they were TLS targets (secure variant or a fallback).
    """
    counts = {s.value: 0 for s in FUNNEL}
    for r in records:
        if r.is_tls or r.endpoint.secure:
            for s in FUNNEL:
                if r.stage >= s:
                    counts[s.value] += 1
    counts["valid_plaintext"] = sum(1 for r in records if not r.is_tls and not r.endpoint.secure and _valid(r))
    return counts


def aggregate(deployments: list[Deployment], as_map: AsMap | None = None) -> dict[Protocol, dict]:
    """Per-protocol summary rows (only protocols that have records)."""
    rows: dict[Protocol, dict] = {}
    by_proto: dict[Protocol, list[Deployment]] = defaultdict(list)
    for d in deployments:
        by_proto[d.protocol].append(d)
    for protocol in Protocol:
        deps = by_proto.get(protocol, [])
        if not deps:
            continue
        records = [r for d in deps for r in d.records]
        valid = [d for d in deps if d.valid]
        tls = [d for d in valid if d.is_tls]
        ases = {(as_map.lookup(d.host) if as_map else d.asn) for d in tls}
        ases.discard(None)
        names = set()
        for d in tls:
            rec = d.primary_tls
            leaf = rec.battery.leaf() if rec and rec.battery else None
            cn = leaf_common_name(leaf) if leaf else None
            if cn is not None:
                names.add(cn)
        row = {"protocol": protocol.value, **funnel_counts(records), "deployments": len(valid),
               "tls_deployments": len(tls),
               "pct_tls": round(100.0 * len(tls) / len(valid), 2) if valid else 0.0,
               "ases": len(ases), "common_names": len(names)}
        rows[protocol] = row
    return rows
