from __future__ import annotations

import base64
from dataclasses import asdict, dataclass, field
from enum import Enum

from .suites import BATTERY_ORDER, SuiteSetName


class TransportResult(str, Enum):
    ALIVE = "alive"
    DEAD = "dead"
    RESET = "reset"


class Outcome(str, Enum):
    ACCEPTED = "accepted"
    DENIED = "denied"
    GENERIC_ERROR = "generic_error"
    TIMEOUT = "timeout"


class ClientAuth(str, Enum):
    NOT_REQUESTED = "not_requested"
    REQUESTED_AND_ACCEPTED = "requested_and_accepted"
    REQUESTED_AND_REJECTED = "requested_and_rejected"


@dataclass
class HandshakeResult:
    suite_set: SuiteSetName | None
    outcome: Outcome
    negotiated_version: str | None = None
    negotiated_suite: str | None = None
    server_random: bytes | None = None
    chain: list[bytes] = field(default_factory=list)
    client_cert_requested: bool = False
    rejected_after_client_cert: bool = False
    # ServerHello parsed, offered version/suite, no compression.
    server_hello_valid: bool = False
    # Both Finished messages exchanged and verified.
    completed: bool = False
    alert: str | None = None
    error: str | None = None
    downgrade_sentinel: bool = False
    dtls: bool = False
    started_at: float | None = None

    def to_json(self) -> dict:
        out = asdict(self)
        out["suite_set"] = self.suite_set.value if self.suite_set else None
        out["outcome"] = self.outcome.value
        out["server_random"] = self.server_random.hex() if self.server_random else None
        out["chain"] = [base64.b64encode(c).decode() for c in self.chain]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "HandshakeResult":
        obj = dict(obj)
        obj["suite_set"] = SuiteSetName(obj["suite_set"]) if obj.get("suite_set") else None
        obj["outcome"] = Outcome(obj["outcome"])
        obj["server_random"] = bytes.fromhex(obj["server_random"]) if obj.get("server_random") else None
        obj["chain"] = [base64.b64decode(c) for c in obj.get("chain", [])]
        return cls(**obj)

    def outcome_key(self) -> tuple:
        """Fields that must be identical for identical server configurations."""
        return (self.suite_set, self.outcome, self.negotiated_version, self.negotiated_suite,
                self.client_cert_requested, self.rejected_after_client_cert,
                self.server_hello_valid, self.completed)


@dataclass
class SuiteBattery:
    results: dict[SuiteSetName, HandshakeResult]

    def __post_init__(self):
        if set(self.results) != set(BATTERY_ORDER):
            raise ValueError("a battery holds exactly one handshake per suite set")

    def __getitem__(self, name: SuiteSetName | str) -> HandshakeResult:
        return self.results[SuiteSetName(name)]

    def __iter__(self):
        return (self.results[n] for n in BATTERY_ORDER)

    def __len__(self) -> int:
        return len(self.results)

    def accepted(self, name: SuiteSetName | str) -> bool:
        return self[name].outcome is Outcome.ACCEPTED

    def outcome_vector(self) -> tuple[str, ...]:
        return tuple(self.results[n].outcome.value for n in BATTERY_ORDER)

    def first_completed(self) -> HandshakeResult | None:
        return next((h for h in self if h.completed), None)

    def leaf(self) -> bytes | None:
        for h in self:
            if h.chain:
                return h.chain[0]
        return None

    def to_json(self) -> dict:
        return {n.value: self.results[n].to_json() for n in BATTERY_ORDER}

    @classmethod
    def from_json(cls, obj: dict) -> "SuiteBattery":
        return cls({SuiteSetName(k): HandshakeResult.from_json(v) for k, v in obj.items()})
