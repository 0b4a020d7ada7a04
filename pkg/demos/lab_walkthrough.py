"""Scan a handful of loopback servers and walk through what comes back.

Starts five harness servers (one of them blocklisted), runs the full scan
without pacing, then prints the funnel, each deployment's verdicts and the
report directory.  Takes a few seconds; needs nothing beyond the package.

    python3 demos/lab_walkthrough.py [report-dir]
"""
import sys
import tempfile
from pathlib import Path

from iiotscan.catalog import Protocol
from iiotscan.lab.pki import CertSpec
from iiotscan.lab.scenarios import Scenario, start_lab
from iiotscan.orchestrator import ScanPolicy, apply_blocklist, emit_report, parse_blocklist, run

scenarios = [
    Scenario("broker", Protocol.MQTT, listeners=("plain", "tls"), access="open"),
    Scenario("old_plc", Protocol.MODBUS, tls_version_ceiling="TLSv1.0",
             cert=CertSpec(key_bits=1024, sig_hash="MD5")),
    Scenario("substation", Protocol.IEC104, suite_policy="ins_accepting"),
    Scenario("sensor", Protocol.COAP),
    Scenario("opted_out", Protocol.MQTT, blocklisted=True),
]

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="walkthrough-"))

with start_lab(scenarios, out / "lab") as lab:
    names = {a: h.scenario.name for h in lab.handles for a in h.addresses}
    policy = ScanPolicy(lab_mode=True, subscribe_root=True, idle_timeout=1.0, read_timeout=2.0,
                        connect_timeout=2.0, trust_store_dir=str(lab.pki.trust_store_dir),
                        blocklist=parse_blocklist(lab.blocklist))
    targets = apply_blocklist(lab.endpoints, policy)
    print(f"{len(lab.endpoints)} endpoints in the lab, {len(targets)} left after the blocklist\n")
    result = run(targets, policy)

print("funnel, per probed endpoint:")
for r in sorted(result.records, key=lambda r: names[r.endpoint.address]):
    print(f"  {names[r.endpoint.address]:<11} {r.endpoint.variant.value:<8} port {r.endpoint.port:<5} -> {r.stage.value}")

print("\ndeployments:")
for a in result.assessments:
    d = a.deployment
    if not d.valid:
        continue
    print(f"  {names[d.host]:<11} {d.protocol.value:<7} adoption={d.adoption.value}")
    if d.is_tls:
        print(f"      class={a.figure1}  max_version={a.max_version}  trust={a.trust_anchor.value}")
    if a.access is not None:
        print(f"      access={a.access.status}  read {a.access.payload_bytes_read} bytes")
    for f in a.findings:
        print(f"      finding {f.check.value} ({f.severity})")

emit_report(result, out / "report")
print(f"\nreport files in {out / 'report'}; summarize again with: audit report --in {out / 'report'}")
