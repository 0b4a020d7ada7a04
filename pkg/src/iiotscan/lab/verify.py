"""Compare a scan of the harness against each scenario's written expectations."""
from __future__ import annotations

from dataclasses import dataclass, field

from .scenarios import Lab, ServerHandle


@dataclass
class ScenarioCheck:
    name: str
    mismatches: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        detail = "" if self.passed else " -- " + "; ".join(self.mismatches)
        return f"{status} {self.name}{detail}"


def _compare(check: ScenarioCheck, what: str, expected, actual) -> None:
    if expected != actual:
        check.mismatches.append(f"{what}: expected {expected!r}, got {actual!r}")


def check_scenario(handle: ServerHandle, result) -> ScenarioCheck:
    sc = handle.scenario
    check = ScenarioCheck(sc.name)
    addresses = set(handle.addresses)
    records = [r for r in result.records if r.endpoint.address in addresses]
    if sc.blocklisted:
        _compare(check, "records for blocklisted hosts", 0, len(records))
        contacted = [h for h in result.handshakes if h["endpoint"]["address"] in addresses]
        _compare(check, "handshakes to blocklisted hosts", 0, len(contacted))
        return check
    by_ep = {r.endpoint: r for r in records}
    for host in handle.hosts:
        for kind, expected in sc.expect_stage.items():
            rec = by_ep.get(host.endpoints[kind])
            _compare(check, f"stage[{kind}]@{host.address}", expected, rec.stage.value if rec else None)
    assessments = [a for a in result.assessments if a.deployment.host in addresses and a.deployment.valid]
    if not any(v == "valid" for v in sc.expect_stage.values()):
        _compare(check, "valid deployments", 0, len(assessments))
        return check
    if len(assessments) != sc.hosts:
        check.mismatches.append(f"deployments: expected {sc.hosts}, got {len(assessments)}")
    for a in assessments:
        host = a.deployment.host
        _compare(check, f"findings@{host}", sorted(sc.expect_findings), sorted(a.checks))
        if sc.expect_class is not None:
            _compare(check, f"class@{host}", sc.expect_class, a.figure1)
        if sc.expect_access is not None:
            _compare(check, f"access@{host}", sc.expect_access, a.access.status if a.access else None)
        if sc.expect_adoption is not None:
            _compare(check, f"adoption@{host}", sc.expect_adoption, a.deployment.adoption.value)
        if sc.expect_trust is not None:
            _compare(check, f"trust@{host}", sc.expect_trust, a.trust_anchor.value if a.trust_anchor else None)
        if a.deployment.is_tls:
            _compare(check, f"tls13_capable@{host}", sc.expect_tls13_capable, a.tls13_capable)
    return check


def check_lab(lab: Lab, result) -> list[ScenarioCheck]:
    return [check_scenario(h, result) for h in lab.handles]
