"""The ten end-to-end acceptance checks, one test each.

Every test records a one-line verdict; the lines are printed together at the
end of the session (see ``pytest_terminal_summary`` in conftest).  Run this
file directly for just the acceptance block.
"""
import math
import random
import time
from contextlib import contextmanager

import pytest

from iiotscan.assessor.checks import check_lifetime, check_primitives, classify_reuse
from iiotscan.assessor.stats import mann_whitney_u, u_statistic
from iiotscan.catalog import Protocol
from iiotscan.clustering import NOISE, dbscan, entropy_analysis, similarity_graph, vectorize
from iiotscan.lab.capture import PacketCapture, capture_available
from iiotscan.lab.scenarios import Scenario, canonical_suite, start_lab
from iiotscan.lab.verify import check_lab
from iiotscan.orchestrator import ScanPolicy, apply_blocklist, parse_blocklist, run
from iiotscan.prober.engine import detect_downgrade_sentinel
from iiotscan.prober.suites import BATTERY_ORDER, suite_set
from iiotscan.protocols import CODECS, codec

from test_assessor import CASES, NOW, all_usage_sets, cert, written_rule
from test_clustering import reference_dbscan, synthetic_corpus
from test_codecs import FUZZ_TRIALS, default_probe, golden
from test_stats import enumerated, pairwise_u
from test_suites import MANUAL_COUNTS, TLS11_MARKER, TLS12_MARKER, grid_sets, sentinel_fixtures

VERDICTS: dict[int, str] = {}


@contextmanager
def criterion(number: int, title: str):
    notes: list[str] = []
    try:
        yield notes
    except pytest.skip.Exception as exc:
        VERDICTS[number] = f"SKIP criterion {number:2d} {title} -- {exc}"
        raise
    except BaseException as exc:
        reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        VERDICTS[number] = f"FAIL criterion {number:2d} {title} -- {reason[:160]}"
        raise
    detail = f" ({'; '.join(notes)})" if notes else ""
    VERDICTS[number] = f"PASS criterion {number:2d} {title}{detail}"


def lab_policy(lab, **kw) -> ScanPolicy:
    base = dict(lab_mode=True, subscribe_root=True, idle_timeout=1.0, read_timeout=2.0, connect_timeout=2.0,
                trust_store_dir=str(lab.pki.trust_store_dir), blocklist=parse_blocklist(lab.blocklist))
    base.update(kw)
    return ScanPolicy(**base)


@pytest.fixture(scope="module")
def canonical_run(tmp_path_factory):
    scenarios = canonical_suite()
    t0 = time.monotonic()
    with start_lab(scenarios, tmp_path_factory.mktemp("lab")) as lab:
        policy = lab_policy(lab)
        result = run(apply_blocklist(lab.endpoints, policy), policy)
        checks = {c.name: c for c in check_lab(lab, result)}
        elapsed = time.monotonic() - t0
        hosts = {h.scenario.name: set(h.addresses) for h in lab.handles}
    return scenarios, result, checks, elapsed, hosts


@pytest.mark.lab
def test_criterion_01_funnel(canonical_run):
    with criterion(1, "funnel stages on the harness matrix") as notes:
        scenarios, result, checks, elapsed, _ = canonical_run
        assert len(scenarios) >= 14
        staged = [s for s in scenarios if s.expect_stage]
        stage_misses = [m for c in checks.values() for m in c.mismatches if m.startswith("stage")]
        assert not stage_misses, stage_misses
        expected = sum(len(s.expect_stage) * s.hosts for s in staged)
        assert len(result.records) == expected
        assert elapsed < 120, f"{elapsed:.1f}s"
        notes.append(f"{len(staged)} scenarios, {len(result.records)} records, {elapsed:.1f}s")


@pytest.mark.lab
def test_criterion_02_battery_classes(canonical_run):
    with criterion(2, "suite battery outcome classes") as notes:
        _, result, _, _, hosts = canonical_run
        expected = {
            "dnp3_rec_only": ("secure", set()),
            "mqtt_broad": ("secure", set()),
            "iec104_ins_accepting": ("insecure_accepting", {"insecure_suite_accepted"}),
            "s7_no_rec": ("denies_harmless", {"no_rec_suite"}),
        }
        for name, (cls, must) in expected.items():
            (a,) = [a for a in result.assessments if a.deployment.host in hosts[name]]
            assert a.figure1 == cls, (name, a.figure1)
            assert must <= set(a.checks), (name, a.checks)
            if name != "iec104_ins_accepting":
                assert "insecure_suite_accepted" not in a.checks, name
            if name != "s7_no_rec":
                assert "no_rec_suite" not in a.checks, name
        notes.append("REC-only and broad secure, INS-accepting insecure, no-REC denies harmless")


def test_criterion_03_suite_sets():
    with criterion(3, "cipher-suite sets match the transcribed grid") as notes:
        grid = grid_sets()
        for name in BATTERY_ORDER:
            assert list(suite_set(name).suites) == grid[name.value], name
            assert len(suite_set(name)) == MANUAL_COUNTS[name.value]
        rec, nopfs, ins = (set(suite_set(n).suites) for n in ("REC", "noPFS", "INS"))
        assert not rec & ins and not rec & nopfs
        notes.append(", ".join(f"{n.value} {len(suite_set(n))}" for n in BATTERY_ORDER))


def test_criterion_04_certificate_rules():
    with criterion(4, "certificate rule table") as notes:
        deviations = []
        for label, nb, na, key_type, bits, sig, expected in CASES:
            c = cert(nb, na, key_type, bits, sig)
            found = {f.check.value for f in check_lifetime(c, NOW) + check_primitives(c)}
            if found != expected:
                deviations.append(label)
        assert len(CASES) == 25
        assert not deviations, deviations
        notes.append("25 cases, 0 deviations")


def test_criterion_05_reuse():
    with criterion(5, "reuse classifier, exhaustive") as notes:
        n = 0
        for usage in all_usage_sets():
            assert classify_reuse(usage) is written_rule(usage), usage
            n += 1
        notes.append(f"{n} usage sets")


def test_criterion_06_clustering():
    with criterion(6, "template clustering and entropy") as notes:
        subjects, truth = synthetic_corpus()
        labels = dbscan(similarity_graph(vectorize(subjects)))
        assert labels == reference_dbscan(subjects)
        members: dict[int, set] = {}
        for lab, t in zip(labels, truth):
            if lab != NOISE:
                members.setdefault(lab, set()).add(t)
        assert sorted(members) == [0, 1, 2, 3]
        assert all(len(ts) == 1 and None not in ts for ts in members.values())
        table = entropy_analysis({"days": [1, 2, 3, 1, 1, 2, 2, 9]}, [0, 0, 0, 1, 1, 1, 1, NOISE])
        assert abs(table["days"].global_entropy - 1.8112781244591330) < 1e-9
        assert abs(table["days"].weighted_cluster_entropy - (3 / 7 + 4 / 7 * 0.5)) < 1e-9
        assert abs(table["days"].normalized_global_entropy - 1.8112781244591330 / math.log2(8)) < 1e-9
        notes.append(f"{len(subjects)} subjects, 4 clusters, {labels.count(NOISE)} noise")


def test_criterion_07_mann_whitney():
    with criterion(7, "Mann-Whitney against exact enumeration") as notes:
        rng = random.Random(17)
        pairs = 0
        for n in range(1, 7):
            for m in range(1, 7):
                for _ in range(3):
                    a = [rng.randint(0, 9) for _ in range(n)]
                    b = [rng.randint(0, 9) for _ in range(m)]
                    u, p = mann_whitney_u(a, b)
                    u_ref, p_ref = enumerated(a, b)
                    assert u == float(u_ref) and abs(p - float(p_ref)) < 1e-12, (a, b)
                    pairs += 1
        for _ in range(1000):
            a = [rng.random() for _ in range(rng.randint(1, 30))]
            b = [rng.choice([rng.random(), *a]) for _ in range(rng.randint(1, 30))]
            ua, ub = u_statistic(a, b)
            assert ua + ub == len(a) * len(b) and ua == float(pairwise_u(a, b))
        notes.append(f"{pairs} enumerated pairs, 1000 identity fixtures")


def test_criterion_08_codecs():
    with criterion(8, "codec golden vectors and fuzz") as notes:
        worst = 1.0
        for protocol in CODECS:
            c = codec(protocol)
            request, reply = golden(protocol, "request"), golden(protocol, "reply")
            probe = default_probe(protocol)
            assert probe.payload == request
            assert c.encode_request(**c.decode_request(request)) == request
            assert c.validate(reply, probe).valid
            rng = random.Random(f"accept-{protocol.value}")
            invalid = sum(not c.validate(rng.randbytes(rng.randint(1, 96)), probe).valid
                          for _ in range(FUZZ_TRIALS))
            worst = min(worst, invalid / FUZZ_TRIALS)
            assert invalid / FUZZ_TRIALS >= 0.99, protocol
        notes.append(f"{len(CODECS)} codecs, worst invalid share {worst:.4f}")


@pytest.mark.lab
def test_criterion_09_ethics_controls(tmp_path):
    with criterion(9, "pacing, MQTT caps and blocklist under capture") as notes:
        if not capture_available():
            pytest.skip("no AF_PACKET capture on lo (needs CAP_NET_RAW)")
        interval = 0.3
        scenarios = [
            Scenario("paced_pair", Protocol.MQTT, listeners=("plain", "tls")),
            Scenario("flooding_broker", Protocol.MQTT, access="open", flood_bytes=12_000_000),
            Scenario("amqp", Protocol.AMQP, access="default_credentials"),
            Scenario("opted_out", Protocol.MQTT, blocklisted=True),
        ]
        with start_lab(scenarios, tmp_path / "lab") as lab, PacketCapture() as cap:
            policy = lab_policy(lab, lab_mode=False, per_host_interval=interval)
            assert policy.per_host_byte_limit == 10_000_000 and policy.per_host_time_limit == 1800
            result = run(list(lab.endpoints), policy)
            time.sleep(0.2)
        min_gap = math.inf
        for h in lab.handles:
            if h.scenario.blocklisted:
                continue
            hellos = cap.client_hellos(h.addresses[0])
            assert len(hellos) >= 4, h.scenario.name
            gaps = [b.ts - a.ts for a, b in zip(hellos, hellos[1:])]
            min_gap = min(min_gap, *gaps)
        assert min_gap >= interval, f"{min_gap:.3f}s"
        flood = next(v for v in result.access.values() if v.evidence.get("stop") == "byte_limit")
        assert flood.payload_bytes_read <= 10_000_000
        assert flood.evidence["seconds"] <= 1800
        blocked = lab.handles[-1].addresses[0]
        assert cap.to(blocked) == []

        # the wall-clock cap, shortened so it fires in the test
        with start_lab([Scenario("quiet_broker", Protocol.MQTT, access="open")], tmp_path / "lab2") as lab2:
            short = lab_policy(lab2, per_host_time_limit=1.0, idle_timeout=None)
            (quiet,) = run(list(lab2.endpoints), short).access.values()
        assert quiet.evidence["stop"] == "time_limit" and quiet.evidence["seconds"] <= 1.0 + 0.5
        notes.append(f"min ClientHello gap {min_gap:.3f}s, MQTT read {flood.payload_bytes_read} bytes, "
                     f"{len(cap.packets)} packets captured, 0 to the blocklisted host")


def test_criterion_10_downgrade_sentinel():
    with criterion(10, "downgrade sentinel") as notes:
        assert TLS12_MARKER == bytes.fromhex("444f574e47524401")
        assert TLS11_MARKER == bytes.fromhex("444f574e47524400")
        cases = sentinel_fixtures()
        agree = sum(detect_downgrade_sentinel(r) is expected for r, expected in cases)
        assert agree == len(cases)
        positives = sum(expected for _, expected in cases)
        notes.append(f"{positives} positive, {len(cases) - positives} negative fixtures")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
