"""Synthetic probe records and batteries for offline tests."""
from __future__ import annotations

import datetime as dt

from iiotscan.catalog import Variant
from iiotscan.pipeline import ProbeRecord, classify_stage
from iiotscan.prober.results import HandshakeResult, Outcome, SuiteBattery, TransportResult
from iiotscan.prober.suites import BATTERY_ORDER, SuiteSetName, suite_set
from iiotscan.protocols import Reason
from iiotscan.protocols.base import ValidationVerdict
from iiotscan.protocols.session import AppExchange
from iiotscan.targets import Endpoint

UTC = dt.timezone.utc
GOOD = ValidationVerdict(True, Reason.OK)
BAD = ValidationVerdict(False, Reason.UNPARSABLE)


def handshake(name, accepted=True, suite=None, version="TLSv1.2", leaf=b"leaf", random_=None, **kw):
    name = SuiteSetName(name)
    if not accepted:
        return HandshakeResult(name, kw.pop("outcome", Outcome.DENIED), **kw)
    suite = suite or suite_set(name).suites[0]
    return HandshakeResult(name, Outcome.ACCEPTED, version, suite, random_ or bytes(32), [leaf],
                           server_hello_valid=True, completed=True, **kw)


def battery(accepted=("REC", "noPFS", "COMP"), suites=None, leaf=b"leaf", version="TLSv1.2", **kw):
    suites = suites or {}
    return SuiteBattery({n: handshake(n, n.value in accepted, suites.get(n.value), version, leaf, **kw)
                         for n in BATTERY_ORDER})


def record(address="192.0.2.1", protocol="MQTT", variant="secure", port=None, *, alive=True,
           bat=None, app_ok=True, tls=True):
    ep = Endpoint.make(address, protocol, Variant(variant), port)
    r = ProbeRecord(ep, TransportResult.ALIVE if alive else TransportResult.DEAD,
                    (bat or battery()) if tls else None, AppExchange(GOOD if app_ok else BAD))
    r.stage = classify_stage(r)
    return r
