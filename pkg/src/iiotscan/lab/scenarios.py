"""The harness scenario matrix and the code that brings scenarios up.

Each scenario describes one server configuration plus the results the
auditor is expected to produce for it.  Expectations are written by hand
from the configuration, never computed by the code under test.
"""
from __future__ import annotations

import ipaddress
import json
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..catalog import Protocol, Variant, default_catalog
from ..targets import Endpoint
from .apps import AppConfig
from .pki import CertSpec, HarnessPKI, IssuedCert
from .servers import (Listener, TcpListener, TlsConfig, UdpListener, free_port, legacy_handler,
                      openssl_handler, plain_handler)

# listener kinds: TLS on the secure port, plaintext on the standard port,
# TLS on the standard port (reached through the fallback battery)
LISTENER_KINDS = {"tls": Variant.SECURE, "plain": Variant.STANDARD, "tls_standard": Variant.STANDARD}
TRANSPORT_BEHAVIORS = ("normal", "accept_close", "closed")
LAB_NET = ipaddress.ip_network("127.77.0.0/16")


@dataclass
class Scenario:
    name: str
    protocol: Protocol
    listeners: tuple[str, ...] = ("tls",)
    tls_version_ceiling: str = "TLSv1.2"
    suite_policy: str = "broad"
    cert: CertSpec = field(default_factory=CertSpec)
    client_auth: str = "off"
    behavior: str = "compliant"
    access: str = "credentials"
    amqp_dialect: str = "0-9-1"
    transport: str = "normal"
    hosts: int = 1
    # one ASN per host; empty means a scenario-private AS
    as_numbers: tuple[int, ...] = ()
    flood_bytes: int = 0
    blocklisted: bool = False

    # expectations
    expect_stage: dict[str, str] = field(default_factory=dict)
    expect_findings: frozenset[str] = frozenset()
    expect_class: str | None = None
    expect_access: str | None = None
    expect_adoption: str | None = None
    expect_trust: str | None = None
    expect_tls13_capable: bool = False

    def __post_init__(self):
        self.protocol = Protocol(self.protocol)
        self.listeners = tuple(self.listeners)
        self.as_numbers = tuple(self.as_numbers)
        self.expect_findings = frozenset(self.expect_findings)
        unknown = set(self.listeners) - set(LISTENER_KINDS)
        if unknown:
            raise ValueError(f"unknown listener kinds {sorted(unknown)}")
        if len({LISTENER_KINDS[k] for k in self.listeners}) != len(self.listeners):
            raise ValueError("at most one listener per port variant")
        if self.transport not in TRANSPORT_BEHAVIORS:
            raise ValueError(f"unknown transport behaviour {self.transport}")
        if self.as_numbers and len(self.as_numbers) != self.hosts:
            raise ValueError("one ASN per host")

    @property
    def uses_tls(self) -> bool:
        return any(k != "plain" for k in self.listeners)

    def to_json(self) -> dict:
        return {
            "name": self.name, "protocol": self.protocol.value, "listeners": list(self.listeners),
            "tls_version_ceiling": self.tls_version_ceiling, "suite_policy": self.suite_policy,
            "cert": self.cert.to_json(), "client_auth": self.client_auth, "behavior": self.behavior,
            "access": self.access, "amqp_dialect": self.amqp_dialect, "transport": self.transport,
            "hosts": self.hosts, "as_numbers": list(self.as_numbers), "flood_bytes": self.flood_bytes,
            "blocklisted": self.blocklisted,
            "expect": {"stage": self.expect_stage, "findings": sorted(self.expect_findings),
                       "class": self.expect_class, "access": self.expect_access,
                       "adoption": self.expect_adoption, "trust": self.expect_trust,
                       "tls13_capable": self.expect_tls13_capable},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Scenario":
        obj = dict(obj)
        exp = obj.pop("expect", {})
        obj["cert"] = CertSpec.from_json(obj["cert"])
        return cls(**obj, expect_stage=exp.get("stage", {}), expect_findings=frozenset(exp.get("findings", ())),
                   expect_class=exp.get("class"), expect_access=exp.get("access"),
                   expect_adoption=exp.get("adoption"), expect_trust=exp.get("trust"),
                   expect_tls13_capable=exp.get("tls13_capable", False))


def dump_scenarios(scenarios: list[Scenario], path: str | Path) -> None:
    Path(path).write_text(json.dumps([s.to_json() for s in scenarios], indent=2) + "\n")


def load_scenarios(path: str | Path) -> list[Scenario]:
    return [Scenario.from_json(o) for o in json.loads(Path(path).read_text())]


_RSA1024_MD5 = CertSpec(key_bits=1024, sig_hash="MD5")
_ECDSA = CertSpec(key_type="ECDSA", key_bits=256, key_usage=("digital_signature",))


def canonical_suite() -> list[Scenario]:
    S = Scenario
    valid = {"tls": "valid"}
    return [
        S("mqtt_broad", Protocol.MQTT, expect_stage=valid, expect_class="secure", expect_access="protected",
          expect_adoption="tls_only", expect_trust="self_signed"),
        S("mqtt_open_tls13", Protocol.MQTT, access="open", tls_version_ceiling="TLSv1.3",
          expect_stage=valid, expect_findings={"no_access_control"}, expect_class="secure",
          expect_access="open", expect_adoption="tls_only", expect_tls13_capable=True),
        S("mqtt_malformed_length", Protocol.MQTT, behavior="malformed_length",
          expect_stage={"tls": "tls_success"}),
        S("mqtt_silent", Protocol.MQTT, behavior="silent", expect_stage={"tls": "tls_success"}),
        S("mqtt_client_ca_required", Protocol.MQTT, client_auth="require_known_ca",
          expect_stage={"tls": "tls_valid"}),
        S("mqtt_client_cert_any", Protocol.MQTT, client_auth="request_accept_any", expect_stage=valid,
          expect_class="secure", expect_access="protected", expect_adoption="tls_only"),
        S("mqtt_tls13_only", Protocol.MQTT, suite_policy="tls13_only", tls_version_ceiling="TLSv1.3",
          expect_stage={"tls": "transport"}),
        S("mqtt_accept_close", Protocol.MQTT, transport="accept_close", expect_stage={"tls": "none"}),
        S("mqtt_closed_port", Protocol.MQTT, transport="closed", expect_stage={"tls": "none"}),
        S("mqtt_optional_tls", Protocol.MQTT, listeners=("plain", "tls"),
          expect_stage={"plain": "valid", "tls": "valid"}, expect_class="secure", expect_access="protected",
          expect_adoption="optional_tls"),
        S("mqtt_tls_both_ports", Protocol.MQTT, listeners=("tls", "tls_standard"),
          expect_stage={"tls": "valid", "tls_standard": "valid"}, expect_class="secure",
          expect_access="protected", expect_adoption="tls_only"),
        S("mqtt_reuse_intra_as", Protocol.MQTT, hosts=3, as_numbers=(64701, 64701, 64701),
          cert=CertSpec(common_name="gateway.fleet.lab.invalid"), expect_stage=valid,
          expect_findings={"cert_reuse_intra_as"}, expect_class="secure", expect_access="protected",
          expect_adoption="tls_only"),
        S("mqtt_reuse_inter_as", Protocol.MQTT, hosts=3, as_numbers=(64711, 64712, 64713),
          cert=CertSpec(common_name="broker.vendor-default.invalid"), expect_stage=valid,
          expect_findings={"cert_reuse_inter_as"}, expect_class="secure", expect_access="protected",
          expect_adoption="tls_only"),
        S("mqtt_blocklisted", Protocol.MQTT, blocklisted=True),
        S("amqp_default_credentials", Protocol.AMQP, access="default_credentials", expect_stage=valid,
          expect_findings={"default_credentials"}, expect_class="secure", expect_access="default_credentials",
          expect_adoption="tls_only"),
        S("amqp10_private_ca", Protocol.AMQP, amqp_dialect="1.0", cert=CertSpec(issuer="private_ca"),
          expect_stage=valid, expect_class="secure", expect_access="indeterminate",
          expect_adoption="tls_only", expect_trust="private_ca"),
        S("modbus_legacy_device", Protocol.MODBUS, tls_version_ceiling="TLSv1.0", cert=_RSA1024_MD5,
          expect_stage=valid,
          expect_findings={"deprecated_version", "short_key", "weak_sig_hash", "no_rec_suite",
                           "weak_mac_accepted"},
          expect_class="insecure_accepting", expect_adoption="tls_only"),
        S("modbus_plaintext", Protocol.MODBUS, listeners=("plain",), expect_stage={"plain": "valid"},
          expect_adoption="plaintext_only"),
        S("dnp3_rec_only", Protocol.DNP3, suite_policy="rec_only", cert=_ECDSA, expect_stage=valid,
          expect_class="secure", expect_adoption="tls_only"),
        S("iec104_ins_accepting", Protocol.IEC104, suite_policy="ins_accepting", expect_stage=valid,
          expect_findings={"insecure_suite_accepted"}, expect_class="insecure_accepting",
          expect_adoption="tls_only"),
        S("iec104_error_response", Protocol.IEC104, behavior="error_response",
          expect_stage={"tls": "tls_success"}),
        S("s7_no_rec", Protocol.S7, suite_policy="no_rec", cert=_ECDSA, expect_stage=valid,
          expect_findings={"no_rec_suite"}, expect_class="denies_harmless", expect_adoption="tls_only"),
        S("opcua_weak_mac", Protocol.OPCUA, suite_policy="weak_mac", expect_stage=valid,
          expect_findings={"weak_mac_accepted"}, expect_class="insecure_accepting", expect_adoption="tls_only"),
        S("enip_weak_cipher", Protocol.ETHERNETIP, suite_policy="weak_cipher", expect_stage=valid,
          expect_findings={"weak_cipher_accepted", "weak_mac_accepted", "insecure_suite_accepted"},
          expect_class="insecure_accepting", expect_adoption="tls_only"),
        S("fox_expired", Protocol.TRIDIUM_FOX, cert=CertSpec(not_before="now-400d", lifetime_days=365),
          expect_stage=valid, expect_findings={"expired_cert"}, expect_class="secure",
          expect_adoption="tls_only"),
        S("foxplatform_over_long", Protocol.FOX_PLATFORM, cert=CertSpec(lifetime_days=3650),
          expect_stage=valid, expect_findings={"over_long_lifetime"}, expect_class="secure",
          expect_access="protected", expect_adoption="tls_only"),
        S("foxplatform_open_public_ca", Protocol.FOX_PLATFORM, access="open", cert=CertSpec(issuer="public_ca"),
          expect_stage=valid, expect_findings={"no_access_control"}, expect_class="secure",
          expect_access="open", expect_adoption="tls_only", expect_trust="public_ca"),
        S("coap_dtls", Protocol.COAP, expect_stage=valid, expect_class="secure", expect_adoption="tls_only"),
        S("coap_plaintext", Protocol.COAP, listeners=("plain",), expect_stage={"plain": "valid"},
          expect_adoption="plaintext_only"),
    ]


# --- spawning ------------------------------------------------------------------------

class AddressPool:
    """Hands out distinct loopback addresses from the lab network."""

    def __init__(self, network: ipaddress.IPv4Network = LAB_NET):
        self._hosts = network.hosts()

    def take(self) -> str:
        return str(next(self._hosts))


@dataclass
class HostHandle:
    address: str
    asn: int
    endpoints: dict[str, Endpoint]  # listener kind -> endpoint
    listeners: list[Listener]


@dataclass
class ServerHandle:
    scenario: Scenario
    hosts: list[HostHandle]
    cert: IssuedCert | None

    @property
    def endpoints(self) -> list[Endpoint]:
        return [ep for h in self.hosts for ep in h.endpoints.values()]

    @property
    def addresses(self) -> list[str]:
        return [h.address for h in self.hosts]

    def listener_kind(self, ep: Endpoint) -> str:
        for h in self.hosts:
            for kind, e in h.endpoints.items():
                if e == ep:
                    return kind
        raise KeyError(str(ep))

    def bytes_sent(self) -> int:
        return sum(lst.counters.bytes_out for h in self.hosts for lst in h.listeners)

    def stop(self) -> None:
        for h in self.hosts:
            for lst in h.listeners:
                lst.stop()

    def __enter__(self) -> "ServerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def _scenario_cert(scenario: Scenario) -> CertSpec:
    spec = scenario.cert
    if spec.common_name == CertSpec.common_name:
        # distinct subjects keep certificates of different scenarios apart
        spec = replace(spec, common_name=f"{scenario.name.replace('_', '-')}.lab.invalid")
    return spec


def _listener(kind: str, address: str, scenario: Scenario, app: AppConfig, tls: TlsConfig | None) -> Listener:
    udp = scenario.protocol is Protocol.COAP
    if udp:
        return UdpListener(address, app, tls if kind != "plain" else None).start()
    if kind == "plain":
        handler = plain_handler(app)
    elif tls.suite_policy.backend == "legacy":
        handler = legacy_handler(tls, app)
    else:
        handler = openssl_handler(tls, app)
    return TcpListener(address, handler, accept_close=scenario.transport == "accept_close").start()


def spawn(scenario: Scenario, pool: AddressPool, pki: HarnessPKI, default_asn: int = 64500) -> ServerHandle:
    app = AppConfig(scenario.protocol, scenario.behavior, scenario.access, scenario.amqp_dialect,
                    flood_bytes=scenario.flood_bytes)
    cert = pki.issue(_scenario_cert(scenario)) if scenario.uses_tls else None
    tls = None
    if cert is not None:
        tls = TlsConfig(cert, scenario.suite_policy, scenario.tls_version_ceiling, scenario.client_auth,
                        trusted_client_ca=pki.private_ca.cert_der)
    entry = default_catalog().lookup(scenario.protocol)
    hosts = []
    try:
        for i in range(scenario.hosts):
            address = pool.take()
            asn = scenario.as_numbers[i] if scenario.as_numbers else default_asn
            endpoints, listeners = {}, []
            for kind in scenario.listeners:
                if scenario.transport == "closed":
                    port = free_port(address, udp=entry.transport.value == "UDP")
                else:
                    lst = _listener(kind, address, scenario, app, tls)
                    listeners.append(lst)
                    port = lst.port
                endpoints[kind] = Endpoint(address, port, scenario.protocol, LISTENER_KINDS[kind], entry.transport)
            hosts.append(HostHandle(address, asn, endpoints, listeners))
    except Exception:
        for h in hosts:
            for lst in h.listeners:
                lst.stop()
        raise
    return ServerHandle(scenario, hosts, cert)


@dataclass
class Lab:
    """A running scenario matrix with its PKI, AS map and blocklist."""

    handles: list[ServerHandle]
    pki: HarnessPKI
    workdir: Path

    @property
    def endpoints(self) -> list[Endpoint]:
        return [ep for h in self.handles for ep in h.endpoints]

    @property
    def blocklist(self) -> list[str]:
        return [f"{a}/32" for h in self.handles if h.scenario.blocklisted for a in h.addresses]

    def as_map_rows(self) -> list[tuple[str, int]]:
        return [(f"{host.address}/32", host.asn) for h in self.handles for host in h.hosts]

    def write_as_map(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text("".join(f"{cidr}\t{asn}\n" for cidr, asn in self.as_map_rows()))
        types = path.with_name(path.name + ".types")
        types.write_text("".join(f"{asn}\tenterprise\n" for asn in sorted({a for _, a in self.as_map_rows()})))
        return path

    def write_targets(self, path: str | Path) -> Path:
        path = Path(path)
        lines = ["address,protocol,variant,port"]
        lines += [f"{ep.address},{ep.protocol.value},{ep.variant.value},{ep.port}" for ep in self.endpoints]
        path.write_text("\n".join(lines) + "\n")
        return path

    def handle_for(self, ep: Endpoint) -> ServerHandle:
        for h in self.handles:
            if ep in h.endpoints:
                return h
        raise KeyError(str(ep))

    def stop(self) -> None:
        for h in self.handles:
            h.stop()

    def __enter__(self) -> "Lab":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def start_lab(scenarios: list[Scenario] | None = None, workdir: str | Path | None = None) -> Lab:
    scenarios = canonical_suite() if scenarios is None else scenarios
    workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="iiotscan-lab-"))
    pki = HarnessPKI(workdir / "pki")
    pool = AddressPool()
    handles: list[ServerHandle] = []
    try:
        for i, sc in enumerate(scenarios):
            handles.append(spawn(sc, pool, pki, default_asn=64500 + i))
    except Exception:
        for h in handles:
            h.stop()
        raise
    return Lab(handles, pki, workdir)
