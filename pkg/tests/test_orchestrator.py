import ipaddress
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iiotscan.catalog import Protocol, UnknownProtocolError, Variant
from iiotscan.orchestrator import (BLOCKLIST_ENV, FINDING_COLUMNS, REPORT_FILES, BlocklistError, HostPacer,
                                   PolicyError, ReportError, ScanPolicy, analyze, apply_blocklist,
                                   blocklist_from_env, emit_report, is_blocked, load_policy, load_report,
                                   load_targets, parse_blocklist, parse_duration, parse_size, schedule)
from iiotscan.pipeline import SUMMARY_COLUMNS
from iiotscan.targets import Endpoint

from factories import battery, record


@pytest.mark.parametrize("text, seconds", [
    (900, 900.0), ("900", 900.0), ("900s", 900.0), ("15m", 900.0), ("15 min", 900.0),
    ("1.5h", 5400.0), ("250ms", 0.25), ("1d", 86400.0), (0, 0.0),
])
def test_parse_duration(text, seconds):
    assert parse_duration(text) == pytest.approx(seconds)


@pytest.mark.parametrize("text, size", [
    (1024, 1024), ("10MB", 10_000_000), ("10 mb", 10_000_000), ("10MiB", 10 * 2**20),
    ("1.5kb", 1500), ("2GiB", 2 * 2**30), ("77", 77),
])
def test_parse_size(text, size):
    assert parse_size(text) == size


@pytest.mark.parametrize("bad", ["", "fast", "-5", "5 weeks", "1e3s", True])
def test_bad_durations(bad):
    with pytest.raises(PolicyError):
        parse_duration(bad)


@pytest.mark.parametrize("bad", ["", "lots", "-1", "10TB", -3])
def test_bad_sizes(bad):
    with pytest.raises(PolicyError):
        parse_size(bad)


def test_negative_numeric_duration():
    with pytest.raises(PolicyError):
        parse_duration(-1.0)


# --- targets ------------------------------------------------------------------------------

def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_csv_with_header_and_explicit_port(tmp_path):
    path = write(tmp_path, "t.csv", "address,protocol,variant,port\n192.0.2.7,MQTT,secure,18883\n")
    (ep,) = load_targets(path)
    assert ep == Endpoint.make("192.0.2.7", "MQTT", "secure", 18883)


def test_csv_without_header_defaults_to_secure(tmp_path):
    path = write(tmp_path, "t.csv", "# comment\n192.0.2.7,Modbus\n\n192.0.2.8,modbus,standard\n")
    eps = load_targets(path)
    assert [(e.address, e.port, e.variant) for e in eps] == [
        ("192.0.2.7", 802, Variant.SECURE), ("192.0.2.8", 502, Variant.STANDARD)]


def test_missing_port_probes_every_catalog_port(tmp_path):
    path = write(tmp_path, "t.csv", "192.0.2.9,FoxPlatform,secure\n192.0.2.9,TridiumFox,standard\n")
    ports = sorted((e.protocol.value, e.port) for e in load_targets(path))
    assert ports == [("FoxPlatform", 4911), ("FoxPlatform", 5011), ("TridiumFox", 1911), ("TridiumFox", 3011)]


def test_jsonl_targets(tmp_path):
    rows = [{"address": "2001:db8::1", "protocol": "CoAP", "variant": "secure"},
            {"address": "192.0.2.1", "protocol": "OPC UA", "port": 14843}]
    path = write(tmp_path, "t.jsonl", "".join(json.dumps(r) + "\n" for r in rows))
    eps = load_targets(path)
    assert [(e.address, e.protocol, e.port, e.transport.value) for e in eps] == [
        ("2001:db8::1", Protocol.COAP, 5684, "UDP"), ("192.0.2.1", Protocol.OPCUA, 14843, "TCP")]


def test_port_overrides(tmp_path):
    path = write(tmp_path, "t.csv", "192.0.2.1,MQTT,secure\n192.0.2.1,MQTT,standard\n192.0.2.1,AMQP,secure\n")
    eps = load_targets(path, {"MQTT/secure": 18883, Protocol.AMQP: 15671})
    assert sorted((e.protocol.value, e.variant.value, e.port) for e in eps) == [
        ("AMQP", "secure", 15671), ("MQTT", "secure", 18883), ("MQTT", "standard", 1883)]


def test_duplicates_dropped(tmp_path):
    path = write(tmp_path, "t.csv", "192.0.2.1,MQTT\n192.0.2.1,mqtt,secure,8883\n192.0.2.1,MQTT,secure\n")
    assert len(load_targets(path)) == 1


def test_row_errors_are_collected(tmp_path):
    text = ("address,protocol,variant,port\n192.0.2.1,MQTT,secure,abc\nnot-an-ip,MQTT\n"
            "192.0.2.2,MQTT,sometimes\n,MQTT\n192.0.2.3,MQTT,secure,1,extra\n192.0.2.4,MQTT\n")
    targets = load_targets(write(tmp_path, "t.csv", text))
    assert [e.address for e in targets] == ["192.0.2.4"]
    assert [err.line for err in targets.errors] == [2, 3, 4, 5, 6]


def test_jsonl_row_errors(tmp_path):
    text = '{"address": "192.0.2.1", "protocol": "MQTT"}\n{oops\n[1, 2]\n'
    targets = load_targets(write(tmp_path, "t.jsonl", text))
    assert len(targets) == 1
    assert [err.line for err in targets.errors] == [2, 3]


@pytest.mark.parametrize("name", ["PROFINET", "BACnet", "Gopher"])
def test_unknown_protocol_aborts(tmp_path, name):
    with pytest.raises(UnknownProtocolError):
        load_targets(write(tmp_path, "t.csv", f"192.0.2.1,{name}\n"))


def test_cidr_rows_only_in_lab_mode(tmp_path):
    path = write(tmp_path, "t.csv", "127.77.9.0/30,MQTT,secure,8883\n")
    refused = load_targets(path)
    assert len(refused) == 0 and "lab mode" in refused.errors[0].message
    swept = load_targets(path, lab_mode=True)
    assert [e.address for e in swept] == ["127.77.9.1", "127.77.9.2"]


def test_oversized_sweep_refused(tmp_path):
    targets = load_targets(write(tmp_path, "t.csv", "10.0.0.0/15,MQTT\n"), lab_mode=True)
    assert len(targets) == 0 and targets.errors


# --- blocklist ----------------------------------------------------------------------------

def test_blocklist_from_env_file(tmp_path):
    path = write(tmp_path, "block.txt", "# operators who opted out\n198.51.100.0/24\n\n2001:db8::/32  # v6\n")
    nets = blocklist_from_env({BLOCKLIST_ENV: str(path)})
    assert [str(n) for n in nets] == ["198.51.100.0/24", "2001:db8::/32"]
    assert blocklist_from_env({}) == []


def test_malformed_blocklist_is_fatal(tmp_path):
    path = write(tmp_path, "block.txt", "198.51.100.0/24\n198.51.100.300/24\n")
    with pytest.raises(BlocklistError, match=":2:"):
        blocklist_from_env({BLOCKLIST_ENV: str(path)})
    with pytest.raises(BlocklistError):
        blocklist_from_env({BLOCKLIST_ENV: str(tmp_path / "missing.txt")})


def masked(address: int, prefix: int) -> int:
    return address >> (32 - prefix) if prefix else 0


@settings(max_examples=300)
@given(st.lists(st.tuples(st.integers(0, 2**32 - 1), st.integers(0, 32)), max_size=6),
       st.integers(0, 2**32 - 1))
def test_is_blocked_matches_bit_prefix_comparison(nets, address):
    blocklist = parse_blocklist(f"{ipaddress.IPv4Address(a)}/{p}" for a, p in nets)
    expected = any(masked(address, p) == masked(a, p) for a, p in nets)
    assert is_blocked(str(ipaddress.IPv4Address(address)), blocklist) == expected


def test_v4_and_v6_do_not_mix():
    assert not is_blocked("::ffff:192.0.2.1", parse_blocklist(["192.0.2.0/24"]))
    assert not is_blocked("192.0.2.1", parse_blocklist(["::/0"]))


addresses = st.integers(0, 255).map(lambda i: f"198.51.100.{i}")


@given(hosts=st.lists(addresses, max_size=20), policy_hosts=st.lists(st.integers(0, 255), max_size=5),
       env_host=st.integers(0, 255))
def test_apply_blocklist_removes_every_blocked_endpoint(tmp_path_factory, hosts, policy_hosts, env_host):
    path = tmp_path_factory.getbasetemp() / "block.txt"
    path.write_text(f"198.51.100.{env_host}\n")
    policy = ScanPolicy(blocklist=parse_blocklist(f"198.51.100.{i}/32" for i in policy_hosts))
    eps = [Endpoint.make(h, "MQTT") for h in hosts]
    kept = apply_blocklist(eps, policy, {BLOCKLIST_ENV: str(path)})
    blocked = {f"198.51.100.{i}" for i in [*policy_hosts, env_host]}
    assert kept == [e for e in eps if e.address not in blocked]


# --- policy -------------------------------------------------------------------------------

def test_policy_defaults():
    p = ScanPolicy()
    assert p.per_host_interval == 900 and p.per_host_time_limit == 1800
    assert p.per_host_byte_limit == 10_000_000
    assert p.interval == 900 and ScanPolicy(lab_mode=True).interval == 0


def test_policy_json_round_trip(tmp_path):
    raw = {"per_host_interval": "20m", "per_host_byte_limit": "5MB", "blocklist": ["203.0.113.0/24"],
           "idle_timeout": "30s", "trust_store_dir": "stores", "workers": 4}
    path = write(tmp_path, "policy.json", json.dumps(raw))
    p = load_policy(path)
    assert p.per_host_interval == 1200 and p.per_host_byte_limit == 5_000_000 and p.idle_timeout == 30
    assert p.trust_store_dir == str(tmp_path / "stores")
    assert ScanPolicy.from_json(p.to_json()) == p


@pytest.mark.parametrize("raw", [{"interval": 5}, {"per_host_interval": "-1"}, {"workers": 0},
                                 {"blocklist": ["nonsense"]}])
def test_policy_rejects(raw):
    with pytest.raises((PolicyError, BlocklistError)):
        ScanPolicy.from_json(raw)


def test_policy_file_must_be_json(tmp_path):
    with pytest.raises(PolicyError):
        load_policy(write(tmp_path, "p.json", "interval: 5"))


def test_root_subscription_on_public_targets_needs_ack():
    p = ScanPolicy(subscribe_root=True)
    assert p.access_limits(targets_public=False).subscribe_root
    assert not p.access_limits(targets_public=True).subscribe_root
    assert ScanPolicy(subscribe_root=True, public_ack=True).access_limits(True).subscribe_root
    assert not ScanPolicy().access_limits(False).subscribe_root


# --- pacing -------------------------------------------------------------------------------

endpoint_sets = st.lists(
    st.tuples(st.integers(1, 4), st.sampled_from(list(Protocol)), st.sampled_from(list(Variant))),
    min_size=1, max_size=12)


@given(endpoint_sets, st.floats(0.5, 1000))
def test_schedule_spaces_each_host(rows, interval):
    eps = list({Endpoint.make(f"192.0.2.{h}", p, v) for h, p, v in rows})
    jobs = schedule(eps, ScanPolicy(per_host_interval=interval))
    secure = sum(e.secure for e in eps)
    assert len(jobs) == 4 * secure + (len(eps) - secure)
    by_host = {}
    for j in jobs:
        by_host.setdefault(j.host, []).append(j.at)
    for times in by_host.values():
        times.sort()
        assert times[0] == 0
        assert all(b - a >= interval - 1e-9 for a, b in zip(times, times[1:]))


def test_schedule_steps_and_lab_mode():
    eps = [Endpoint.make("192.0.2.1", "MQTT", "secure"), Endpoint.make("192.0.2.1", "MQTT", "standard"),
           Endpoint.make("192.0.2.2", "CoAP", "secure")]
    jobs = schedule(eps, ScanPolicy(lab_mode=True))
    assert {j.at for j in jobs} == {0.0}
    assert sorted(j.step for j in jobs if j.host == "192.0.2.1") == sorted(
        ["REC", "noPFS", "COMP", "INS", "plaintext"])


class FakeClock:
    def __init__(self):
        self.now = 100.0
        self.sleeps = []

    def __call__(self):
        return self.now

    def sleep(self, s):
        self.sleeps.append(s)
        self.now += s


def test_host_pacer_waits_from_previous_start():
    clock = FakeClock()
    pacer = HostPacer(10.0, clock, clock.sleep, margin=0.5)
    pacer.wait()
    assert clock.sleeps == []
    pacer.mark()
    clock.now += 3
    pacer.wait()
    assert clock.sleeps == [pytest.approx(7.5)]
    pacer.mark()
    pacer.mark(clock.now - 50)  # an older timestamp never moves the mark back
    pacer.wait()
    assert clock.now == pytest.approx(100 + 10.5 + 10.5)


def test_host_pacer_without_interval_never_sleeps():
    clock = FakeClock()
    pacer = HostPacer(0.0, clock, clock.sleep)
    for _ in range(5):
        pacer.wait()
        pacer.mark()
    assert clock.sleeps == []


# --- report files -------------------------------------------------------------------------

def test_empty_result_writes_header_only_files(tmp_path):
    out = emit_report(analyze([]), tmp_path / "r")
    assert {p.name for p in out.iterdir()} == set(REPORT_FILES)
    assert (out / "findings.csv").read_text().strip() == ",".join(FINDING_COLUMNS)
    assert (out / "summary.csv").read_text().strip() == ",".join(SUMMARY_COLUMNS)
    assert (out / "records.jsonl").read_text() == ""


def test_report_round_trip(tmp_path):
    recs = [record("192.0.2.1", bat=battery(accepted=("REC", "INS"), leaf=b"one")),
            record("192.0.2.2", bat=battery(leaf=b"two")),
            record("192.0.2.3", variant="standard", app_ok=True, tls=False)]
    first = analyze(recs)
    first.metadata = {"assessed_at": "2023-01-01T00:00:00+00:00"}
    out = emit_report(first, tmp_path / "r")
    again = load_report(out)
    assert [r.to_json() for r in again.records] == [r.to_json() for r in first.records]
    assert [f.to_row() for f in again.findings] == [f.to_row() for f in first.findings]
    assert again.summary == first.summary
    assert any(f.check.value == "insecure_suite_accepted" for f in again.findings)


def test_unwritable_report_dir(tmp_path):
    blocker = write(tmp_path, "file", "")
    with pytest.raises(ReportError):
        emit_report(analyze([]), blocker / "sub")


def test_report_needs_records(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_report(tmp_path)
