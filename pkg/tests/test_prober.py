import socket
import struct
import threading

import pytest

from iiotscan.catalog import Protocol
from iiotscan.lab.pki import CertSpec
from iiotscan.lab.scenarios import Scenario, start_lab
from iiotscan.prober import wire
from iiotscan.prober.engine import DtlsTimers
from iiotscan.prober.probe import ProbeConfig, handshake, run_battery
from iiotscan.prober.results import Outcome
from iiotscan.prober.suites import BATTERY_ORDER, CODE_POINTS, NAMES_BY_CODE, suite_set
from iiotscan.targets import Endpoint

FAST = ProbeConfig(connect_timeout=1.0, read_timeout=0.5, udp_retransmits=1, dtls_timers=DtlsTimers(0.2, 1))
HANDSHAKE_FAILURE = bytes([0x15, 0x03, 0x03, 0x00, 0x02, 0x02, 0x28])


class HelloRecorder:
    """Reads one ClientHello, keeps its body, then alerts, closes or stays silent."""

    def __init__(self, address: str, reply: str = "alert", udp: bool = False):
        kind = socket.SOCK_DGRAM if udp else socket.SOCK_STREAM
        self.sock = socket.socket(socket.AF_INET, kind)
        self.sock.bind((address, 0))
        if not udp:
            self.sock.listen()
        self.port = self.sock.getsockname()[1]
        self.reply = reply
        self.udp = udp
        self.hellos: list[bytes] = []
        self.sock.settimeout(5)
        threading.Thread(target=self._serve, daemon=True).start()

    def _serve(self):
        try:
            if self.udp:
                data, peer = self.sock.recvfrom(65535)
                # 13-byte DTLS record header, 12-byte handshake header
                self.hellos.append(data[13 + 12:])
                return
            conn, _ = self.sock.accept()
            with conn:
                buf = b""
                while len(buf) < 9 or len(buf) < 9 + int.from_bytes(buf[6:9], "big"):
                    chunk = conn.recv(65535)
                    if not chunk:
                        return
                    buf += chunk
                self.hellos.append(buf[9:9 + int.from_bytes(buf[6:9], "big")])
                if self.reply == "alert":
                    conn.sendall(HANDSHAKE_FAILURE)
                elif self.reply == "silent":
                    conn.recv(1)
        except OSError:
            pass

    def close(self):
        self.sock.close()


@pytest.fixture
def recorder():
    made = []

    def make(**kw):
        r = HelloRecorder(f"127.77.250.{len(made) + 1}", **kw)
        made.append(r)
        return r
    yield make
    for r in made:
        r.close()


@pytest.mark.parametrize("name", [n.value for n in BATTERY_ORDER])
def test_client_hello_offers_exactly_the_set(recorder, name):
    r = recorder()
    ep = Endpoint.make("127.77.250.1", "MQTT", "secure", r.port)
    result, _ = handshake(ep, name, None, FAST)
    assert result.outcome is Outcome.DENIED
    hello = wire.parse_client_hello(r.hellos[0])
    assert hello.cipher_suites == suite_set(name).code_points()
    offered = [NAMES_BY_CODE[c] for c in hello.cipher_suites]
    assert offered == [s for s in suite_set(name).suites if s in CODE_POINTS]
    assert hello.version == 0x0303
    assert hello.compression == b"\x00"


def test_dtls_client_hello_offers_the_set(recorder):
    r = recorder(udp=True)
    ep = Endpoint.make("127.77.250.1", "CoAP", "secure", r.port)
    result, _ = handshake(ep, "REC", None, FAST)
    assert result.outcome is Outcome.TIMEOUT and result.dtls
    hello = wire.parse_client_hello(r.hellos[0], dtls=True)
    assert hello.cookie == b""
    # DTLS cannot carry stream-cipher suites; the REC set has none
    assert hello.cipher_suites == suite_set("REC").code_points()


@pytest.mark.parametrize("reply, outcome", [("alert", Outcome.DENIED), ("close", Outcome.DENIED),
                                            ("silent", Outcome.TIMEOUT)])
def test_outcome_before_server_hello(recorder, reply, outcome):
    r = recorder(reply=reply)
    ep = Endpoint.make("127.77.250.1", "MQTT", "secure", r.port)
    result, channel = handshake(ep, "REC", None, FAST)
    assert result.outcome is outcome and channel is None
    assert not result.server_hello_valid and not result.completed
    if reply == "alert":
        assert result.alert == "handshake_failure"


def test_closed_port_is_denied():
    s = socket.socket()
    s.bind(("127.77.250.9", 0))
    port = s.getsockname()[1]
    s.close()
    result, _ = handshake(Endpoint.make("127.77.250.9", "MQTT", "secure", port), "REC", None, FAST)
    assert result.outcome is Outcome.DENIED


# --- against the harness ------------------------------------------------------------------

POLICIES = ["broad", "rec_only", "no_rec", "ins_accepting", "weak_mac", "weak_cipher"]


@pytest.fixture(scope="module")
def harness(tmp_path_factory):
    # static ECDH needs an EC server key
    ecdsa = CertSpec(key_type="ECDSA", key_bits=256, key_usage=("digital_signature", "key_agreement"))
    scenarios = [Scenario(p, Protocol.OPCUA, suite_policy=p, **({"cert": ecdsa} if p == "no_rec" else {}))
                 for p in POLICIES]
    scenarios.append(Scenario("dtls", Protocol.COAP))
    with start_lab(scenarios, tmp_path_factory.mktemp("lab")) as lab:
        yield {h.scenario.name: h.endpoints[0] for h in lab.handles}


@pytest.mark.lab
@pytest.mark.parametrize("policy", POLICIES + ["dtls"])
def test_battery_is_complete_honest_and_repeatable(harness, policy):
    ep = harness[policy]
    first, app = run_battery(ep, None, FAST)
    second, _ = run_battery(ep, None, FAST, app_probe=False)
    assert list(first.results) == list(BATTERY_ORDER)
    for name, result in first.results.items():
        if result.outcome is Outcome.ACCEPTED:
            assert result.negotiated_suite in suite_set(name)
    assert [r.outcome_key() for r in first.results.values()] == [r.outcome_key() for r in second.results.values()]
    assert any(r.completed for r in first.results.values())
    assert app is not None and app.verdict.valid


@pytest.mark.lab
def test_pace_hook_runs_before_every_handshake(harness):
    seen = []
    battery, _ = run_battery(harness["broad"], None, FAST, app_probe=False, pace=seen.append,
                             on_handshake=lambda r: seen.append(r.suite_set.value))
    assert seen == [0, "REC", 1, "noPFS", 2, "COMP", 3, "INS"]
    assert len(battery.results) == 4


@pytest.mark.lab
def test_expected_acceptance_per_policy(harness):
    accepted = {}
    for policy in POLICIES:
        battery, _ = run_battery(harness[policy], None, FAST, app_probe=False)
        accepted[policy] = {n.value for n, r in battery.results.items() if r.outcome is Outcome.ACCEPTED}
    # REC and COMP share four suites
    assert accepted["rec_only"] == {"REC", "COMP"}
    assert "REC" not in accepted["no_rec"]
    assert "INS" in accepted["ins_accepting"]
    assert "REC" in accepted["broad"] and "INS" not in accepted["broad"]


def test_code_points_round_trip():
    for name, code in CODE_POINTS.items():
        assert NAMES_BY_CODE[code] == name
        assert struct.pack("!H", code) != b"\x00\x00" or name == "NULL_WITH_NULL_NULL"
