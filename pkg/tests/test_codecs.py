"""Golden vectors, read-only guarantees and random-input robustness for every codec."""
import random

import pytest
from hypothesis import given, settings, strategies as st

from iiotscan.catalog import Protocol
from iiotscan.protocols import CODECS, Reason, build_probe, codec
from iiotscan.protocols.base import ValidationVerdict

from conftest import GOLDEN, read_hex

PROTOCOLS = list(CODECS)
FUZZ_TRIALS = 10_000


def golden(protocol: Protocol, kind: str) -> bytes:
    return read_hex(GOLDEN / f"{protocol.value.lower()}.{kind}.hex")


def default_probe(protocol):
    # the MQTT client id is random per scan unless pinned
    opts = {"client_id": "iiotscan"} if protocol is Protocol.MQTT else {}
    return build_probe(protocol, **opts)


@pytest.mark.parametrize("protocol", PROTOCOLS, ids=lambda p: p.value)
class TestGolden:
    def test_probe_bytes(self, protocol):
        assert default_probe(protocol).payload == golden(protocol, "request")

    def test_request_round_trip(self, protocol):
        c = codec(protocol)
        request = golden(protocol, "request")
        fields = c.decode_request(request)
        assert c.encode_request(**fields) == request

    def test_reply_validates(self, protocol):
        c = codec(protocol)
        verdict = c.validate(golden(protocol, "reply"), default_probe(protocol))
        assert verdict.valid and verdict.reason is Reason.OK

    def test_harness_reply_matches_golden(self, protocol):
        assert codec(protocol).respond(golden(protocol, "request")) == golden(protocol, "reply")

    def test_probe_is_read_only(self, protocol):
        c = codec(protocol)
        kind = c.request_kind(default_probe(protocol).payload)
        assert kind in c.read_only_kinds

    def test_truncated_replies_are_invalid(self, protocol):
        c = codec(protocol)
        reply = golden(protocol, "reply")
        probe = default_probe(protocol)
        # a CoAP datagram cut at an option boundary is itself a complete message
        cuts = range(8) if protocol is Protocol.COAP else range(len(reply))
        for cut in cuts:
            assert not c.validate(reply[:cut], probe).valid, cut

    def test_empty_reply(self, protocol):
        assert codec(protocol).validate(b"").reason is Reason.EMPTY

    def test_harness_misbehaviours_are_rejected(self, protocol):
        c = codec(protocol)
        request = golden(protocol, "request")
        probe = default_probe(protocol)
        assert c.respond(request, "silent") is None
        broken = c.respond(request, "malformed_length")
        if broken is not None:
            assert not c.validate(broken, probe).valid

    def test_random_bytes_fuzz(self, protocol):
        c = codec(protocol)
        probe = default_probe(protocol)
        rng = random.Random(protocol.value)
        invalid = 0
        for _ in range(FUZZ_TRIALS):
            data = rng.randbytes(rng.randint(1, 96))
            verdict = c.validate(data, probe)  # any exception fails the test
            assert isinstance(verdict, ValidationVerdict)
            invalid += not verdict.valid
        assert invalid / FUZZ_TRIALS >= 0.99


def test_ten_protocols_have_vectors():
    names = {p.name for p in GOLDEN.glob("*.request.hex")}
    assert len(names) == len(PROTOCOLS) >= 10


def test_mqtt_connect_has_no_credentials_or_will():
    payload = default_probe(Protocol.MQTT).payload
    flags = payload[9]
    assert flags == 0x02


def test_modbus_never_encodes_writes():
    c = codec(Protocol.MODBUS)
    for tid in (0, 1, 0x4949, 0xFFFF):
        payload = c.build_probe(transaction_id=tid).payload
        assert payload[7] == 0x2B and payload[8] == 0x0E


def test_amqp_one_dot_zero_header():
    c = codec(Protocol.AMQP)
    payload = c.build_probe(dialect="1.0").payload
    assert payload.startswith(b"AMQP\x00\x01\x00\x00")
    assert c.request_kind(payload) in c.read_only_kinds


def test_enip_follow_up_registers_session():
    c = codec(Protocol.ETHERNETIP)
    follow = c.follow_up()
    assert c.request_kind(follow.payload) == "REGISTER_SESSION"
    assert c.decode_request(follow.payload) == {"command": "REGISTER_SESSION"}


@settings(max_examples=300, deadline=None)
@given(protocol=st.sampled_from(PROTOCOLS), data=st.binary(min_size=1, max_size=200))
def test_validate_is_total(protocol, data):
    verdict = codec(protocol).validate(data, default_probe(protocol))
    assert verdict.valid == (verdict.reason is Reason.OK)


@settings(max_examples=200, deadline=None)
@given(protocol=st.sampled_from(PROTOCOLS), data=st.data())
def test_mutated_golden_replies_never_raise(protocol, data):
    reply = bytearray(golden(protocol, "reply"))
    i = data.draw(st.integers(0, len(reply) - 1))
    reply[i] = data.draw(st.integers(0, 255))
    codec(protocol).validate(bytes(reply), default_probe(protocol))
