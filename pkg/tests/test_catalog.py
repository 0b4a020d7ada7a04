import json

import pytest

from iiotscan.catalog import (Protocol, ProtocolEntry, Transport, UnknownProtocolError, Variant, classify_adoption_group,
                              default_catalog, load_catalog, lookup)
from iiotscan.protocols import CODECS


def test_shipped_file_round_trips_bit_exact(tmp_path):
    cat = default_catalog()
    path = tmp_path / "catalog.json"
    path.write_text(cat.dumps())
    again = load_catalog(path)
    assert again == cat
    assert again.dumps() == cat.dumps()


def test_closed_world():
    cat = default_catalog()
    assert set(cat.entries) == set(Protocol)
    assert set(CODECS) == set(Protocol)
    assert len(Protocol) == 11


def test_ports_distinct_within_each_entry():
    for e in default_catalog().entries.values():
        assert e.standard_port != e.secure_port
        assert len(set(e.ports(Variant.SECURE))) == len(e.ports(Variant.SECURE))


def test_primary_ports_are_unique_across_protocols():
    primary = [(e.transport, p) for e in default_catalog().entries.values()
               for p in (e.standard_port, e.secure_port)]
    assert len(primary) == len(set(primary))


def test_dtls_only_for_coap():
    for p, e in default_catalog().entries.items():
        assert e.dtls == (p is Protocol.COAP) == (e.transport is Transport.UDP)


@pytest.mark.parametrize("name, expected", [
    ("mqtt", Protocol.MQTT), ("OPC UA", Protocol.OPCUA), ("opc-ua", Protocol.OPCUA),
    ("EtherNet/IP", Protocol.ETHERNETIP), ("iec104", Protocol.IEC104), ("Tridium Fox", Protocol.TRIDIUM_FOX),
    ("coap", Protocol.COAP), ("fox_platform", Protocol.FOX_PLATFORM),
])
def test_name_parsing(name, expected):
    assert lookup(name).protocol is expected


@pytest.mark.parametrize("name", ["PROFINET", "bacnet", "HART-IP"])
def test_protocols_without_tls_variant_are_rejected(name):
    with pytest.raises(UnknownProtocolError, match="without a"):
        lookup(name)


def test_unknown_names():
    with pytest.raises(UnknownProtocolError):
        lookup("SMTP")


def test_incomplete_catalog_refused(tmp_path):
    raw = default_catalog().to_json()
    raw["protocols"] = raw["protocols"][:-1]
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(ValueError, match="CoAP"):
        load_catalog(path)


def test_inconsistent_entry_refused():
    raw = dict(default_catalog().to_json()["protocols"][0], secure_port=502)
    with pytest.raises(ValueError, match="coincide"):
        ProtocolEntry.from_json(raw)
    coap = dict(default_catalog().to_json()["protocols"][-1], dtls=False)
    with pytest.raises(ValueError, match="DTLS"):
        ProtocolEntry.from_json(coap)


@pytest.mark.parametrize("protocol, pct, n, group", [
    ("MQTT", 12.0, 5000, "large"), ("EtherNetIP", 6.4, 300, "medium"), ("Modbus", 0.0, 0, "small"),
    ("DNP3", 3.0, 9, "small"), ("AMQP", 10.0, None, "large"), ("CoAP", 0.01, None, "medium"),
])
def test_adoption_groups(protocol, pct, n, group):
    assert classify_adoption_group(protocol, pct, n) == group


def test_adoption_group_rejects_unknown_protocol():
    with pytest.raises(UnknownProtocolError):
        classify_adoption_group("PROFINET", 50.0)
