"""Grading of deployments."""
from __future__ import annotations

import datetime as dt
import re
from collections import defaultdict
from dataclasses import dataclass, field

from ..pipeline import Deployment
from ..prober.probe import classify_client_auth
from .certs import (CertificateRecord, TrustAnchor, TrustStores, chain_validates, classify_trust_anchor,
                    parse_certificate)
from .checks import (Check, Finding, Reuse, check_ciphers, check_lifetime, check_primitives, check_version,
                     classify_reuse, figure1_class, max_version, reuse_finding, tls13_capable, weakness_label)
from .stats import mann_whitney_u

__all__ = ["Assessment", "LoadBalancerAllowlist", "assess", "Check", "Finding", "Reuse", "TrustAnchor",
           "CertificateRecord", "mann_whitney_u", "parse_certificate", "classify_trust_anchor", "classify_reuse"]


@dataclass
class LoadBalancerAllowlist:
    """(common name, organization) regex pairs of known load-balanced services."""

    patterns: list[tuple[str, str]] = field(default_factory=list)

    def matches(self, cert: CertificateRecord) -> bool:
        cn, org = cert.common_name or "", cert.organization or ""
        return any(re.fullmatch(p_cn, cn) and re.fullmatch(p_org, org) for p_cn, p_org in self.patterns)

    @classmethod
    def from_json(cls, rows) -> "LoadBalancerAllowlist":
        return cls([(r["common_name"], r.get("organization", ".*")) for r in rows or []])


@dataclass
class Assessment:
    deployment: Deployment
    findings: list[Finding] = field(default_factory=list)
    certificate: CertificateRecord | None = None
    trust_anchor: TrustAnchor | None = None
    trust_store: str | None = None
    figure1: str | None = None
    weakness: str | None = None
    max_version: str | None = None
    tls13_capable: bool = False
    client_auth: str | None = None
    reuse: Reuse | None = None
    load_balancer: bool = False
    access: object | None = None  # AccessVerdict
    note: str | None = None

    @property
    def checks(self) -> set[str]:
        return {f.check.value for f in self.findings}

    def to_json(self) -> dict:
        return {
            "deployment": self.deployment.to_json(),
            "findings": [f.to_row() for f in self.findings],
            "certificate": self.certificate.to_json() if self.certificate else None,
            "trust_anchor": self.trust_anchor.value if self.trust_anchor else None,
            "trust_store": self.trust_store,
            "figure1_class": self.figure1, "comp_weakness": self.weakness, "max_version": self.max_version,
            "tls13_capable": self.tls13_capable, "client_auth": self.client_auth,
            "reuse": self.reuse.value if self.reuse else None, "load_balancer": self.load_balancer,
            "access": self.access.to_json() if self.access is not None else None,
            "note": self.note,
        }


def _usage_index(deployments: list[Deployment]) -> dict[str, set[tuple[str, int | None]]]:
    index: dict[str, set] = defaultdict(set)
    for d in deployments:
        if d.valid and d.is_tls:
            for fp in d.cert_fingerprints:
                index[fp].add((d.host, d.asn))
    return index


def assess(deployments: list[Deployment], *, trust_stores: TrustStores | None = None,
           now: dt.datetime | None = None, allowlist: LoadBalancerAllowlist | None = None,
           access: dict | None = None) -> list[Assessment]:
    """Findings for every valid deployment; invalid ones get an empty assessment."""
    now = now or dt.datetime.now(dt.timezone.utc)
    trust_stores = trust_stores or TrustStores()
    allowlist = allowlist or LoadBalancerAllowlist()
    access = access or {}
    usage = _usage_index(deployments)
    out = []
    for d in deployments:
        a = Assessment(d)
        out.append(a)
        if not d.valid:
            a.note = "not assessed: no record reached the valid stage"
            continue
        verdict = access.get(d.id)
        if verdict is not None:
            a.access = verdict
            if verdict.status == "open":
                a.findings.append(Finding(d.id, Check.NO_ACCESS_CONTROL, f"status=open;{verdict.evidence_text()}"))
            elif verdict.status == "default_credentials":
                a.findings.append(Finding(d.id, Check.DEFAULT_CREDENTIALS,
                                          f"status=default_credentials;{verdict.evidence_text()}"))
        rec = d.primary_tls
        if rec is None or rec.battery is None:
            continue
        battery = rec.battery
        a.figure1 = figure1_class(battery)
        a.weakness = weakness_label(battery)
        a.max_version = max_version(battery)
        a.tls13_capable = tls13_capable(battery)
        a.client_auth = classify_client_auth(battery).value
        tls_findings: list[Finding] = []
        if a.max_version is not None:
            f = check_version(battery, d.id)
            if f:
                tls_findings.append(f)
        tls_findings += check_ciphers(battery, d.id)
        chain = next((h.chain for h in battery if h.chain), [])
        if chain:
            try:
                cert = parse_certificate(chain[0])
            except ValueError as exc:
                a.note = f"leaf certificate unusable: {exc}"
                cert = None
            if cert is not None:
                a.trust_store = chain_validates(chain, trust_stores)
                a.trust_anchor = classify_trust_anchor(chain, trust_stores)
                cert.trust_anchor = a.trust_anchor
                cert.chain_validates_public = a.trust_anchor is TrustAnchor.PUBLIC_CA
                a.certificate = cert
                tls_findings += check_lifetime(cert, now, d.id)
                tls_findings += check_primitives(cert, d.id)
                users = usage.get(cert.fingerprint) or {(d.host, d.asn)}
                a.reuse = classify_reuse(users)
                a.load_balancer = a.reuse is not Reuse.NOT_REUSED and allowlist.matches(cert)
                if not a.load_balancer:
                    f = reuse_finding(a.reuse, cert.fingerprint, users, d.id)
                    if f:
                        tls_findings.append(f)
        order = list(Check)
        a.findings = sorted(a.findings + tls_findings, key=lambda f: order.index(f.check))
    return out
