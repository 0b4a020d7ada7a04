"""Probe targets."""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass

from .catalog import Catalog, Protocol, Transport, Variant, default_catalog


@dataclass(frozen=True, order=True)
class Endpoint:
    address: str
    port: int
    protocol: Protocol
    variant: Variant
    transport: Transport

    def __post_init__(self):
        object.__setattr__(self, "address", str(ipaddress.ip_address(self.address)))
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port {self.port} out of range")
        if (self.transport is Transport.UDP) != (self.protocol is Protocol.COAP):
            raise ValueError("UDP transport is used by CoAP and only by CoAP")

    @classmethod
    def make(cls, address: str, protocol: Protocol | str, variant: Variant | str = Variant.SECURE,
             port: int | None = None, catalog: Catalog | None = None) -> "Endpoint":
        protocol = protocol if isinstance(protocol, Protocol) else Protocol.parse(protocol)
        variant = Variant(variant)
        entry = (catalog or default_catalog()).lookup(protocol)
        return cls(address, port or entry.port(variant), protocol, variant, entry.transport)

    @property
    def udp(self) -> bool:
        return self.transport is Transport.UDP

    @property
    def secure(self) -> bool:
        return self.variant is Variant.SECURE

    def to_json(self) -> dict:
        return {"address": self.address, "port": self.port, "protocol": self.protocol.value,
                "variant": self.variant.value, "transport": self.transport.value}

    @classmethod
    def from_json(cls, obj: dict) -> "Endpoint":
        return cls(obj["address"], int(obj["port"]), Protocol(obj["protocol"]), Variant(obj["variant"]),
                   Transport(obj["transport"]))

    def __str__(self) -> str:
        return f"{self.protocol.value}/{self.variant.value}@{self.address}:{self.port}"
