import ipaddress

from hypothesis import given, settings, strategies as st

from iiotscan.asmap import AsMap
from iiotscan.catalog import Protocol, Variant
from iiotscan.pipeline import (FUNNEL, STAGES, Adoption, ProbeRecord, Stage, aggregate, classify_stage, dedup,
                               funnel_counts, stage_records)
from iiotscan.prober.results import HandshakeResult, Outcome, SuiteBattery, TransportResult
from iiotscan.prober.suites import BATTERY_ORDER
from iiotscan.protocols.session import AppExchange
from iiotscan.targets import Endpoint

from factories import BAD, GOOD, battery, record

# --- an independent statement of the stage predicates ----------------------------

def _predicates(r: ProbeRecord):
    alive = r.transport is TransportResult.ALIVE
    hs = list(r.battery) if r.battery else []
    app = r.app is not None and r.app.verdict.valid
    if r.battery is None:
        # plaintext endpoints skip the three TLS steps
        return [alive, alive and app, alive and app, alive and app, alive and app]
    hello = alive and any(h.server_hello_valid for h in hs)
    auth = hello and any(h.server_hello_valid and not h.rejected_after_client_cert for h in hs)
    done = auth and any(h.server_hello_valid and not h.rejected_after_client_cert and h.completed
                        and h.error is None for h in hs)
    return [alive, hello, auth, done, done and app]


def oracle_stage(r: ProbeRecord) -> Stage:
    stage = Stage.NONE
    for ok, s in zip(_predicates(r), FUNNEL):
        if not ok:
            break
        stage = s
    return stage


@st.composite
def handshakes(draw, name):
    hello = draw(st.booleans())
    rejected = hello and draw(st.booleans())
    completed = hello and not rejected and draw(st.booleans())
    error = draw(st.sampled_from([None, None, "app data failed"])) if completed else None
    outcome = Outcome.ACCEPTED if completed else draw(st.sampled_from(list(Outcome)[1:]))
    return HandshakeResult(name, outcome, "TLSv1.2" if hello else None, None, None,
                           [draw(st.sampled_from([b"a", b"b"]))] if hello else [],
                           client_cert_requested=rejected, rejected_after_client_cert=rejected,
                           server_hello_valid=hello, completed=completed, error=error)


hosts = st.sampled_from(["192.0.2.1", "192.0.2.2", "198.51.100.7"])


@st.composite
def records(draw):
    protocol = draw(st.sampled_from(["MQTT", "AMQP", "Modbus", "CoAP"]))
    tls = draw(st.booleans())
    variant = Variant.SECURE if tls else draw(st.sampled_from(list(Variant)))
    ep = Endpoint.make(draw(hosts), protocol, variant)
    bat = SuiteBattery({n: draw(handshakes(n)) for n in BATTERY_ORDER}) if tls else None
    alive = draw(st.sampled_from(list(TransportResult)))
    app = AppExchange(draw(st.sampled_from([GOOD, BAD]))) if draw(st.booleans()) else None
    return ProbeRecord(ep, alive, bat, app)


@settings(max_examples=400, deadline=None)
@given(records())
def test_stage_is_greatest_label_with_nested_predicates(r):
    assert classify_stage(r) == oracle_stage(r)


@settings(max_examples=200, deadline=None)
@given(st.lists(records(), max_size=25))
def test_funnel_is_monotone(recs):
    stage_records(recs)
    counts = funnel_counts(recs)
    values = [counts[s.value] for s in FUNNEL]
    assert values == sorted(values, reverse=True)
    for row in aggregate(dedup(recs)).values():
        values = [row[s.value] for s in FUNNEL]
        assert values == sorted(values, reverse=True)


def _unique_endpoints(recs):
    seen, out = set(), []
    for r in recs:
        if r.endpoint not in seen:
            seen.add(r.endpoint)
            out.append(r)
    return out


@settings(max_examples=200, deadline=None)
@given(st.lists(records(), max_size=25))
def test_every_record_in_exactly_one_deployment(recs):
    recs = stage_records(_unique_endpoints(recs))
    deps = dedup(recs)
    placed = [id(r) for d in deps for r in d.records]
    assert sorted(placed) == sorted(id(r) for r in recs)


@settings(max_examples=200, deadline=None)
@given(st.lists(records(), max_size=25))
def test_dedup_is_idempotent(recs):
    recs = stage_records(_unique_endpoints(recs))
    first = dedup(recs)
    again = dedup([r for d in first for r in d.records])
    shape = lambda deps: [(d.id, d.adoption, d.valid, [r.endpoint for r in d.records]) for d in deps]
    assert shape(first) == shape(again)


@settings(max_examples=200, deadline=None)
@given(st.lists(records(), max_size=25))
def test_optional_tls_needs_both_kinds_valid(recs):
    for d in dedup(stage_records(_unique_endpoints(recs))):
        if d.adoption is Adoption.OPTIONAL_TLS:
            assert any(r.stage is Stage.VALID and r.is_tls for r in d.records)
            assert any(r.stage is Stage.VALID and not r.is_tls for r in d.records)


def test_stage_examples():
    assert record(alive=False).stage is Stage.NONE
    assert record().stage is Stage.VALID
    assert record(app_ok=False).stage is Stage.TLS_SUCCESS
    assert record(bat=battery(accepted=())).stage is Stage.TRANSPORT
    assert record(tls=False, variant="standard").stage is Stage.VALID
    assert record(tls=False, variant="standard", app_ok=False).stage is Stage.TRANSPORT


def test_rejected_client_cert_stops_at_tls_valid():
    bat = battery()
    for h in bat:
        h.rejected_after_client_cert = h.client_cert_requested = True
        h.completed = False
    assert record(bat=bat).stage is Stage.TLS_VALID


def test_same_configuration_on_two_ports_merges():
    a = record(port=8883)
    b = record(port=18883)
    deps = dedup([a, b])
    assert len(deps) == 1 and deps[0].adoption is Adoption.TLS_ONLY


def test_different_leaves_split():
    a = record(port=8883, bat=battery(leaf=b"one"))
    b = record(port=18883, bat=battery(leaf=b"two"))
    assert len(dedup([a, b])) == 2


def test_optional_tls_and_plaintext_only():
    plain = record(tls=False, variant="standard")
    tls = record()
    assert dedup([plain, tls])[0].adoption is Adoption.OPTIONAL_TLS
    assert dedup([plain])[0].adoption is Adoption.PLAINTEXT_ONLY


def test_invalid_host_becomes_invalid_deployment():
    d = dedup([record(alive=False)])[0]
    assert not d.valid


def test_adoption_percentage_on_a_synthetic_fixture():
    # 13 TLS-only hosts among 200 valid ones is 6.5 %
    recs = []
    for i in range(200):
        addr = str(ipaddress.ip_address("10.0.0.0") + i)
        recs.append(record(addr, tls=i < 13, variant="secure" if i < 13 else "standard"))
    row = aggregate(dedup(recs))[Protocol.MQTT]
    assert row["deployments"] == 200 and row["tls_deployments"] == 13
    assert row["pct_tls"] == 6.5


def test_aggregate_counts_ases_over_tls_deployments():
    as_map = AsMap([(ipaddress.ip_network("192.0.2.0/25"), 64500), (ipaddress.ip_network("192.0.2.128/25"), 64501)])
    recs = [record("192.0.2.1"), record("192.0.2.200"), record("192.0.2.201", tls=False, variant="standard")]
    row = aggregate(dedup(recs, as_map), as_map)[Protocol.MQTT]
    assert row["ases"] == 2 and row["deployments"] == 3


def test_record_json_round_trip():
    r = record()
    back = ProbeRecord.from_json(r.to_json())
    assert back.to_json() == r.to_json()
    assert back.config_key() == r.config_key()
