import socket
import threading

import dns.flags
import dns.message
import dns.rcode
import dns.resolver
import dns.rrset
import pytest

from iiotscan.access import (DEFAULT_BYTE_LIMIT, AccessLimits, AccessVerdict, Contact, amqp_default_credentials,
                             extract_contacts, find_emails, has_mx, http_login_check, mqtt_open_access)
from iiotscan.catalog import Protocol
from iiotscan.lab.apps import AppConfig
from iiotscan.lab.servers import TcpListener, plain_handler
from iiotscan.prober.probe import PlainStream
from iiotscan.protocols import CODECS

# --- a tiny authoritative DNS server ------------------------------------------------

ZONE = {
    "lab-operator.example.": "mx",
    "nomx.example.": "empty",
    "broken.example.": "servfail",
}


class DnsServer:
    def __init__(self):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(("127.0.0.1", 0))
        self.port = self.sock.getsockname()[1]
        self.queries: list[str] = []
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self):
        while True:
            try:
                data, addr = self.sock.recvfrom(4096)
            except OSError:
                return
            q = dns.message.from_wire(data)
            name = q.question[0].name.to_text().lower()
            self.queries.append(name)
            r = dns.message.make_response(q)
            r.flags |= dns.flags.AA
            kind = ZONE.get(name)
            if kind == "mx":
                r.answer.append(dns.rrset.from_text(name, 300, "IN", "MX", f"10 mail.{name}"))
            elif kind == "servfail":
                r.set_rcode(dns.rcode.SERVFAIL)
            elif kind is None:
                r.set_rcode(dns.rcode.NXDOMAIN)
            self.sock.sendto(r.to_wire(), addr)

    def resolver(self):
        res = dns.resolver.Resolver(configure=False)
        res.nameservers = ["127.0.0.1"]
        res.port = self.port
        res.lifetime = 2.0
        return res

    def close(self):
        self.sock.close()


@pytest.fixture(scope="module")
def dns_server():
    server = DnsServer()
    yield server
    server.close()


def test_mx_lookup(dns_server):
    res = dns_server.resolver()
    assert has_mx("lab-operator.example", res) is True
    assert has_mx("nomx.example", res) is False
    assert has_mx("missing.example", res) is False
    assert has_mx("broken.example", res) is None


def test_contacts_keep_mx_and_unverified(dns_server):
    text = ("ops@lab-operator.example, OPS@lab-operator.example; a@nomx.example "
            "b@missing.example c@broken.example")
    contacts = extract_contacts(text, dns_server.resolver(), "192.0.2.1")
    assert [(c.address, c.mx_verified) for c in contacts] == [("ops@lab-operator.example", True),
                                                             ("c@broken.example", None)]
    assert contacts[1].to_row()["mx_verified"] == "unverified"


def test_find_emails():
    assert find_emails('{"m": "x.y+z@plant.example.org", "n": "not-an@address"}') == ["x.y+z@plant.example.org"]


# --- harness brokers -----------------------------------------------------------------

@pytest.fixture
def serve():
    listeners = []

    def start(handler):
        lst = TcpListener("127.0.0.1", handler).start()
        listeners.append(lst)
        return lst

    yield start
    for lst in listeners:
        lst.stop()


def connect(lst):
    return PlainStream(socket.create_connection((lst.address, lst.port), timeout=2))


def app(protocol, **kw):
    return plain_handler(AppConfig(protocol, **kw))


def assert_read_only(v: AccessVerdict, protocol):
    allowed = CODECS[protocol].read_only_kinds
    assert v.sent and set(v.sent) <= allowed, v.sent


@pytest.mark.parametrize("access,status", [("default_credentials", "default_credentials"),
                                           ("credentials", "protected"), ("open", "default_credentials")])
def test_amqp_default_credentials(serve, access, status):
    lst = serve(app(Protocol.AMQP, access=access))
    v = amqp_default_credentials(connect(lst), timeout=2)
    assert v.status == status
    assert_read_only(v, Protocol.AMQP)
    assert "connection.open" not in v.sent


def test_amqp_silent_broker_is_indeterminate(serve):
    lst = serve(app(Protocol.AMQP, behavior="silent"))
    v = amqp_default_credentials(connect(lst), timeout=0.5)
    assert v.status == "indeterminate" and v.evidence["reply"] == "none"


def test_amqp_one_dot_zero_broker(serve):
    lst = serve(app(Protocol.AMQP, amqp_dialect="1.0"))
    v = amqp_default_credentials(connect(lst), timeout=1)
    assert v.status == "indeterminate"


@pytest.mark.parametrize("access,status,rc", [("open", "open", 0), ("credentials", "protected", 5)])
def test_mqtt_anonymous_connect(serve, access, status, rc):
    lst = serve(app(Protocol.MQTT, access=access))
    v = mqtt_open_access(connect(lst), AccessLimits(read_timeout=2))
    assert v.status == status and v.evidence["connack"] == rc
    assert_read_only(v, Protocol.MQTT)
    assert "SUBSCRIBE" not in v.sent


def test_mqtt_no_connack(serve):
    lst = serve(app(Protocol.MQTT, behavior="silent"))
    v = mqtt_open_access(connect(lst), AccessLimits(read_timeout=0.5))
    assert v.status == "indeterminate"


def test_mqtt_root_subscription_collects_contacts(serve, dns_server):
    lst = serve(app(Protocol.MQTT))
    limits = AccessLimits(subscribe_root=True, read_timeout=1, idle_timeout=0.5)
    v = mqtt_open_access(connect(lst), limits, source_host="127.0.0.1", resolver=dns_server.resolver())
    assert v.status == "open"
    assert v.evidence["subscribed"] == "#" and v.evidence["messages"] == 1 and v.evidence["stop"] == "idle"
    assert [c.address for c in v.contacts] == ["plant-ops@lab-operator.example"]
    assert_read_only(v, Protocol.MQTT)
    assert "PUBLISH" not in v.sent


@pytest.mark.parametrize("cap", [100_000, 333_333])
def test_mqtt_byte_cap_is_hard(serve, cap):
    lst = serve(app(Protocol.MQTT, flood_bytes=2_000_000))
    v = mqtt_open_access(connect(lst), AccessLimits(byte_limit=cap, subscribe_root=True, read_timeout=1,
                                                    idle_timeout=2))
    assert v.evidence["stop"] == "byte_limit"
    assert v.payload_bytes_read == cap


def test_mqtt_time_cap(serve):
    lst = serve(app(Protocol.MQTT))
    v = mqtt_open_access(connect(lst), AccessLimits(subscribe_root=True, time_limit=0.4, read_timeout=0.1))
    assert v.evidence["stop"] == "time_limit"
    assert v.evidence["seconds"] < 1.0


def test_default_cap_is_ten_decimal_megabytes():
    assert DEFAULT_BYTE_LIMIT == 10_000_000
    assert AccessLimits().time_limit == 1800


# --- HTTP landing page ----------------------------------------------------------------

def canned(response: bytes):
    def handle(sock, counters):
        sock.settimeout(2)
        try:
            sock.recv(4096)
            sock.sendall(response)
        finally:
            sock.close()
    return handle


def http(status_line: str, body: bytes = b"", headers: str = "") -> bytes:
    return (f"HTTP/1.1 {status_line}\r\n{headers}Content-Length: {len(body)}\r\n\r\n").encode() + body


@pytest.mark.parametrize("response,status", [
    (http("200 OK", b"<html><table>points</table></html>"), "open"),
    (http("200 OK", b"<form><input type='password'></form>"), "protected"),
    (http("200 OK"), "protected"),
    (http("401 Unauthorized"), "protected"),
    (http("403 Forbidden"), "protected"),
    (http("302 Found", headers="Location: /prelogin?next=/\r\n"), "protected"),
    (http("302 Found", headers="Location: /dashboard\r\n"), "indeterminate"),
    (http("503 Service Unavailable"), "indeterminate"),
    (b"garbage\r\n\r\n", "indeterminate"),
])
def test_http_landing_page(serve, response, status):
    lst = serve(canned(response))
    v = http_login_check(connect(lst), "127.0.0.1", timeout=2)
    assert v.status == status
    assert v.sent == ["GET"]


def test_http_against_harness(serve):
    assert http_login_check(connect(serve(app(Protocol.FOX_PLATFORM))), timeout=2).status == "open"
    lst = serve(app(Protocol.FOX_PLATFORM, access="credentials"))
    assert http_login_check(connect(lst), timeout=2).status == "protected"


def test_verdict_json_round_trip():
    v = AccessVerdict("open", {"connack": 0}, 12, "MQTT", [Contact("a@b.example", "h", None)], ["CONNECT"])
    back = AccessVerdict.from_json(v.to_json())
    assert back.to_json() == v.to_json()
    with pytest.raises(ValueError):
        AccessVerdict("maybe")
