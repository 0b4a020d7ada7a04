"""Protocol-compliant probes and reply validation."""
from __future__ import annotations

import os

from ..catalog import Protocol
from .amqp import AmqpCodec
from .base import Codec, ProbeMessage, Reason, ValidationVerdict
from .coap import CoapCodec
from .dnp3 import Dnp3Codec
from .enip import EnipCodec
from .fox import FoxCodec
from .http import HttpCodec
from .iec104 import Iec104Codec
from .modbus import ModbusCodec
from .mqtt import MqttCodec
from .opcua import OpcUaCodec
from .s7 import S7Codec

CODECS: dict[Protocol, Codec] = {c.protocol: c for c in (
    ModbusCodec(), Dnp3Codec(), Iec104Codec(), EnipCodec(), S7Codec(), FoxCodec(), HttpCodec(),
    AmqpCodec(), OpcUaCodec(), MqttCodec(), CoapCodec())}


def codec(protocol: Protocol | str) -> Codec:
    return CODECS[Protocol.parse(protocol) if isinstance(protocol, str) else protocol]


def build_probe(protocol: Protocol | str, **opts) -> ProbeMessage:
    return codec(protocol).build_probe(**opts)


def validate_response(protocol: Protocol | str, data: bytes, probe: ProbeMessage | None = None) -> ValidationVerdict:
    return codec(protocol).validate(data, probe)


def fuzz_reject(protocol: Protocol | str, data: bytes | None = None, size: int = 64) -> ValidationVerdict:
    """Validate random bytes; only meaningful as a test harness operation."""
    return codec(protocol).validate(os.urandom(size) if data is None else data)
