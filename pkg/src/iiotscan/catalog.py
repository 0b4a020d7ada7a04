"""Protocol / port knowledge base for the scanned (I)IoT protocols.

The catalog is shipped as ``data/catalog.json`` and can be replaced with
:func:`load_catalog`.  Everything in the package that names a protocol uses
:class:`Protocol`, so the catalog is closed-world.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path


class Protocol(str, Enum):
    MODBUS = "Modbus"
    DNP3 = "DNP3"
    IEC104 = "IEC104"
    ETHERNETIP = "EtherNetIP"
    S7 = "S7"
    TRIDIUM_FOX = "TridiumFox"
    FOX_PLATFORM = "FoxPlatform"
    AMQP = "AMQP"
    OPCUA = "OPCUA"
    MQTT = "MQTT"
    COAP = "CoAP"

    @classmethod
    def parse(cls, name: str) -> "Protocol":
        key = re.sub(r"[\s/_-]", "", name).lower()
        for member in cls:
            if member.value.lower() == key or member.name.replace("_", "").lower() == key:
                return member
        raise UnknownProtocolError(name)


class Variant(str, Enum):
    STANDARD = "standard"
    SECURE = "secure"


class Transport(str, Enum):
    TCP = "TCP"
    UDP = "UDP"


class UnknownProtocolError(KeyError):
    """Raised for protocol names that are not part of the catalog."""

    def __init__(self, name: str, note: str | None = None):
        self.name = name
        self.note = note
        super().__init__(name)

    def __str__(self) -> str:
        if self.note:
            return f"unknown protocol {self.name!r}: {self.note}"
        return f"unknown protocol {self.name!r}"


@dataclass(frozen=True)
class ProtocolEntry:
    protocol: Protocol
    standard_port: int
    secure_port: int
    transport: Transport
    pattern: str  # client_server | pubsub | both
    tls_mode: str  # retrofitted | by_design
    dtls: bool
    alt_standard_ports: tuple[int, ...] = ()
    alt_secure_ports: tuple[int, ...] = ()
    iana: tuple[str, ...] = ()

    def __post_init__(self):
        if self.standard_port == self.secure_port:
            raise ValueError(f"{self.protocol.value}: standard and secure port coincide")
        if self.dtls != (self.transport is Transport.UDP):
            raise ValueError(f"{self.protocol.value}: DTLS iff UDP transport")

    def port(self, variant: Variant) -> int:
        return self.standard_port if variant is Variant.STANDARD else self.secure_port

    def ports(self, variant: Variant) -> tuple[int, ...]:
        """Primary port followed by the alternates, all of which are probed."""
        if variant is Variant.STANDARD:
            return (self.standard_port, *self.alt_standard_ports)
        return (self.secure_port, *self.alt_secure_ports)

    def to_json(self) -> dict:
        out = {
            "protocol": self.protocol.value,
            "standard_port": self.standard_port,
            "secure_port": self.secure_port,
        }
        if self.alt_standard_ports:
            out["alt_standard_ports"] = list(self.alt_standard_ports)
        if self.alt_secure_ports:
            out["alt_secure_ports"] = list(self.alt_secure_ports)
        out.update(transport=self.transport.value, pattern=self.pattern,
                   tls_mode=self.tls_mode, dtls=self.dtls)
        if self.iana:
            out["iana"] = list(self.iana)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ProtocolEntry":
        return cls(
            protocol=Protocol(obj["protocol"]),
            standard_port=int(obj["standard_port"]),
            secure_port=int(obj["secure_port"]),
            transport=Transport(obj["transport"]),
            pattern=obj["pattern"],
            tls_mode=obj["tls_mode"],
            dtls=bool(obj["dtls"]),
            alt_standard_ports=tuple(obj.get("alt_standard_ports", ())),
            alt_secure_ports=tuple(obj.get("alt_secure_ports", ())),
            iana=tuple(obj.get("iana", ())),
        )


@dataclass
class Catalog:
    entries: dict[Protocol, ProtocolEntry]
    without_tls_variant: dict[str, int] = field(default_factory=dict)
    version: int = 1

    def lookup(self, protocol: Protocol | str) -> ProtocolEntry:
        if isinstance(protocol, str) and not isinstance(protocol, Protocol):
            for name in self.without_tls_variant:
                if name.lower() == protocol.strip().lower():
                    raise UnknownProtocolError(protocol, "catalogued without a (D)TLS variant")
            protocol = Protocol.parse(protocol)
        try:
            return self.entries[protocol]
        except KeyError:
            raise UnknownProtocolError(str(protocol)) from None

    def default_port(self, protocol: Protocol, variant: Variant) -> int:
        return self.lookup(protocol).port(variant)

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "protocols": [e.to_json() for e in self.entries.values()],
            "without_tls_variant": dict(self.without_tls_variant),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"


def load_catalog(path: str | Path | None = None) -> Catalog:
    if path is None:
        text = resources.files("iiotscan").joinpath("data/catalog.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    entries = {}
    for obj in raw["protocols"]:
        entry = ProtocolEntry.from_json(obj)
        entries[entry.protocol] = entry
    missing = set(Protocol) - set(entries)
    if missing:
        raise ValueError(f"catalog lacks entries for {sorted(p.value for p in missing)}")
    return Catalog(entries, dict(raw.get("without_tls_variant", {})), raw.get("version", 1))


_DEFAULT: Catalog | None = None


def default_catalog() -> Catalog:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_catalog()
    return _DEFAULT


def lookup(protocol: Protocol | str) -> ProtocolEntry:
    return default_catalog().lookup(protocol)


def classify_adoption_group(protocol: Protocol | str, pct_tls: float,
                            tls_deployments: int | None = None) -> str:
    """Bucket a protocol by (D)TLS adoption: ``small``, ``medium`` or ``large``.

    Fewer than ten TLS deployments (when the count is known) or a zero share
    is small; a double-digit percentage is large; everything between is medium.
    """
    lookup(protocol)
    if pct_tls <= 0.0 or (tls_deployments is not None and tls_deployments < 10):
        return "small"
    if pct_tls >= 10.0:
        return "large"
    return "medium"
