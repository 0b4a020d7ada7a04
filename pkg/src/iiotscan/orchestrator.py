"""Targets, policy, pacing, the scan loop and report files."""
from __future__ import annotations

import csv
import datetime as dt
import ipaddress
import json
import logging
import os
import re
import threading
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from . import __version__
from .access import AccessLimits, AccessVerdict, check_access
from .asmap import AsMap, load_as_map
from .assessor import Assessment, LoadBalancerAllowlist, assess
from .assessor.certs import load_trust_stores
from .catalog import Catalog, Variant, default_catalog, load_catalog
from .clustering import ClusterReport, cluster_certificates
from .pipeline import SUMMARY_COLUMNS, Deployment, ProbeRecord, aggregate, dedup, stage_records
from .prober.identity import ClientIdentity
from .prober.probe import (ProbeConfig, handshake_record, probe_plaintext, probe_tls13, probe_transport,
                           run_battery)
from .prober.results import HandshakeResult, TransportResult
from .prober.suites import BATTERY_ORDER
from .targets import Endpoint

log = logging.getLogger(__name__)

BLOCKLIST_ENV = "IIOTSCAN_BLOCKLIST"
MAX_SWEEP = 1 << 16
FINDING_COLUMNS = ["deployment_id", "check", "severity", "evidence"]
CONTACT_COLUMNS = ["address", "source_host", "mx_verified"]


class PolicyError(ValueError):
    pass


class BlocklistError(ValueError):
    pass


class ReportError(OSError):
    pass


# --- units ------------------------------------------------------------------------------

_DURATION = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(ms|s|sec|secs|m|min|mins|h|hr|d)?\s*$", re.IGNORECASE)
_DURATION_UNITS = {"ms": 0.001, "s": 1, "sec": 1, "secs": 1, "m": 60, "min": 60, "mins": 60, "h": 3600,
                   "hr": 3600, "d": 86400}
_SIZE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(b|kb|mb|gb|kib|mib|gib)?\s*$", re.IGNORECASE)
_SIZE_UNITS = {"b": 1, "kb": 10**3, "mb": 10**6, "gb": 10**9, "kib": 2**10, "mib": 2**20, "gib": 2**30}


def parse_duration(value) -> float:
    """Seconds from 900, "900s", "15m", "1.5h"."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        out = float(value)
    else:
        m = _DURATION.match(str(value))
        if not m:
            raise PolicyError(f"bad duration {value!r}")
        out = float(m.group(1)) * _DURATION_UNITS[(m.group(2) or "s").lower()]
    if out < 0:
        raise PolicyError(f"negative duration {value!r}")
    return out


def parse_size(value) -> int:
    """Bytes from 1024, "10MB" (decimal) or "10MiB" (binary)."""
    if isinstance(value, int) and not isinstance(value, bool):
        out = value
    else:
        m = _SIZE.match(str(value))
        if not m:
            raise PolicyError(f"bad size {value!r}")
        out = int(float(m.group(1)) * _SIZE_UNITS[(m.group(2) or "b").lower()])
    if out < 0:
        raise PolicyError(f"negative size {value!r}")
    return out


# --- targets ----------------------------------------------------------------------------

@dataclass
class RowError:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


class TargetList(list):
    """Endpoints in file order, plus the rows that could not be used."""

    def __init__(self, items: Iterable[Endpoint] = (), errors: list[RowError] | None = None):
        super().__init__(items)
        self.errors = errors or []


def _override_port(overrides: dict | None, protocol, variant: Variant) -> int | None:
    if not overrides:
        return None
    for key in ((protocol, variant), f"{protocol.value}/{variant.value}", protocol, protocol.value):
        if key in overrides:
            return int(overrides[key])
    return None


def _row_endpoints(row: dict, catalog: Catalog, overrides: dict | None, lab_mode: bool) -> list[Endpoint]:
    address = (row.get("address") or "").strip()
    proto_name = (row.get("protocol") or "").strip()
    variant_name = (row.get("variant") or "secure").strip().lower() or "secure"
    port_text = str(row.get("port") or "").strip()
    if not address or not proto_name:
        raise ValueError("address and protocol are required")
    entry = catalog.lookup(proto_name)  # unknown protocol: fatal, not caught by the caller
    try:
        variant = Variant(variant_name)
    except ValueError:
        raise ValueError(f"variant must be standard or secure, not {variant_name!r}") from None
    if "/" in address:
        if not lab_mode:
            raise ValueError("CIDR sweeps are only allowed in lab mode")
        net = ipaddress.ip_network(address, strict=False)
        if net.num_addresses > MAX_SWEEP:
            raise ValueError(f"sweep of {net.num_addresses} addresses exceeds {MAX_SWEEP}")
        hosts = [str(h) for h in (net.hosts() if net.num_addresses > 2 else net)]
    else:
        hosts = [str(ipaddress.ip_address(address))]
    if port_text:
        if not port_text.isdigit():
            raise ValueError(f"port {port_text!r} is not a number")
        ports = (int(port_text),)
    else:
        override = _override_port(overrides, entry.protocol, variant)
        ports = (override,) if override else entry.ports(variant)
    return [Endpoint(h, p, entry.protocol, variant, entry.transport) for h in hosts for p in ports]


def _csv_rows(text: str):
    lines = text.splitlines()
    first = next((l for l in lines if l.strip() and not l.lstrip().startswith("#")), "")
    has_header = first.split(",")[0].strip().lower() == "address"
    reader = csv.reader(lines)
    header = None
    for fields in reader:
        line = reader.line_num
        if not fields or not "".join(fields).strip() or fields[0].lstrip().startswith("#"):
            continue
        if has_header and header is None:
            header = [f.strip().lower() for f in fields]
            continue
        names = header or ["address", "protocol", "variant", "port"]
        if len(fields) > len(names):
            yield line, None, f"{len(fields)} columns, expected at most {len(names)}"
            continue
        yield line, dict(zip(names, fields)), None


def _jsonl_rows(text: str):
    for line, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            yield line, None, f"invalid JSON: {exc.msg}"
            continue
        if not isinstance(obj, dict):
            yield line, None, "row is not an object"
            continue
        yield line, obj, None


def load_targets(path: str | Path, overrides: dict | None = None, *, lab_mode: bool = False,
                 catalog: Catalog | None = None) -> TargetList:
    """Endpoints from a CSV (address,protocol,variant[,port]) or JSONL file.

    Without an explicit port every catalog port of the variant is used.
    Bad rows are reported with their line number and skipped; an unknown
    protocol name aborts.  Duplicates are dropped.
    """
    path = Path(path)
    catalog = catalog or default_catalog()
    text = path.read_text()
    stripped = text.lstrip()
    jsonl = path.suffix.lower() in (".jsonl", ".json", ".ndjson") or stripped.startswith("{")
    rows = _jsonl_rows(text) if jsonl else _csv_rows(text)
    out = TargetList()
    seen = set()
    for line, row, problem in rows:
        if problem:
            out.errors.append(RowError(line, problem))
            continue
        try:
            eps = _row_endpoints(row, catalog, overrides, lab_mode)
        except ValueError as exc:
            out.errors.append(RowError(line, str(exc)))
            continue
        for ep in eps:
            if ep not in seen:
                seen.add(ep)
                out.append(ep)
    for err in out.errors:
        log.warning("%s: %s", path, err)
    return out


# --- policy --------------------------------------------------------------------------------

Network = ipaddress.IPv4Network | ipaddress.IPv6Network


def parse_blocklist(entries: Iterable[str], source: str = "blocklist") -> list[Network]:
    out = []
    for i, raw in enumerate(entries, 1):
        text = str(raw).split("#", 1)[0].strip()
        if not text:
            continue
        try:
            out.append(ipaddress.ip_network(text, strict=False))
        except ValueError:
            raise BlocklistError(f"{source}:{i}: malformed CIDR {text!r}") from None
    return out


def blocklist_from_env(env: dict | None = None) -> list[Network]:
    env = os.environ if env is None else env
    path = env.get(BLOCKLIST_ENV)
    if not path:
        return []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise BlocklistError(f"{BLOCKLIST_ENV}={path}: {exc.strerror}") from None
    return parse_blocklist(lines, path)


@dataclass
class ScanPolicy:
    per_host_interval: float = 15 * 60.0
    per_host_time_limit: float = 30 * 60.0
    per_host_byte_limit: int = 10 * 10**6
    blocklist: list[Network] = field(default_factory=list)
    # zeroes pacing and allows CIDR sweeps
    lab_mode: bool = False
    subscribe_root: bool = False
    # required on top of subscribe_root for publicly routable targets
    public_ack: bool = False
    idle_timeout: float | None = None
    connect_timeout: float = 10.0
    read_timeout: float = 5.0
    udp_retransmits: int = 3
    offer_tls13: bool = False
    access_checks: bool = True
    workers: int = 32
    trust_store_dir: str | None = None
    lb_allowlist: list[dict] = field(default_factory=list)
    identity_path: str | None = None
    catalog_path: str | None = None

    def __post_init__(self):
        if self.per_host_interval < 0:
            raise PolicyError("per_host_interval must be >= 0")
        if self.workers < 1:
            raise PolicyError("workers must be >= 1")

    @property
    def interval(self) -> float:
        return 0.0 if self.lab_mode else self.per_host_interval

    def probe_config(self) -> ProbeConfig:
        return ProbeConfig(connect_timeout=self.connect_timeout, read_timeout=self.read_timeout,
                           udp_retransmits=self.udp_retransmits, offer_tls13=self.offer_tls13)

    def access_limits(self, targets_public: bool) -> AccessLimits:
        subscribe = self.subscribe_root and (self.lab_mode or self.public_ack or not targets_public)
        if self.subscribe_root and not subscribe:
            log.warning("root subscription requested for public targets without public_ack; disabled")
        return AccessLimits(self.per_host_byte_limit, self.per_host_time_limit, subscribe, self.read_timeout,
                            self.idle_timeout)

    @classmethod
    def from_json(cls, obj: dict, base_dir: Path | None = None) -> "ScanPolicy":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise PolicyError(f"unknown policy keys {sorted(unknown)}")
        kw = dict(obj)
        for key in ("per_host_interval", "per_host_time_limit", "connect_timeout", "read_timeout"):
            if key in kw:
                kw[key] = parse_duration(kw[key])
        if kw.get("idle_timeout") is not None:
            kw["idle_timeout"] = parse_duration(kw["idle_timeout"])
        if "per_host_byte_limit" in kw:
            kw["per_host_byte_limit"] = parse_size(kw["per_host_byte_limit"])
        kw["blocklist"] = parse_blocklist(kw.get("blocklist", []), "policy blocklist")
        for key in ("trust_store_dir", "identity_path", "catalog_path"):
            if kw.get(key) and base_dir is not None:
                kw[key] = str((base_dir / kw[key]).resolve())
        return cls(**kw)

    def to_json(self) -> dict:
        out = asdict(self)
        out["blocklist"] = [str(n) for n in self.blocklist]
        return out


def load_policy(path: str | Path | None) -> ScanPolicy:
    if path is None:
        return ScanPolicy()
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise PolicyError(f"{path}: {exc}") from None
    return ScanPolicy.from_json(obj, path.parent)


def effective_blocklist(policy: ScanPolicy, env: dict | None = None) -> list[Network]:
    return list(policy.blocklist) + blocklist_from_env(env)


def is_blocked(address: str, blocklist: list[Network]) -> bool:
    ip = ipaddress.ip_address(address)
    return any(ip.version == n.version and ip in n for n in blocklist)


def apply_blocklist(targets: list[Endpoint], policy: ScanPolicy, env: dict | None = None) -> list[Endpoint]:
    blocklist = effective_blocklist(policy, env)
    kept = [ep for ep in targets if not is_blocked(ep.address, blocklist)]
    if len(kept) != len(targets):
        log.info("blocklist removed %d of %d endpoints", len(targets) - len(kept), len(targets))
    return kept


# --- plan ------------------------------------------------------------------------------------

@dataclass(frozen=True)
class Job:
    at: float
    host: str
    endpoint: Endpoint
    # suite set name for a handshake, "plaintext" for an application probe
    step: str


def _by_host(targets: Iterable[Endpoint]) -> dict[str, list[Endpoint]]:
    hosts: dict[str, list[Endpoint]] = defaultdict(list)
    for ep in targets:
        hosts[ep.address].append(ep)
    for eps in hosts.values():
        eps.sort(key=lambda e: (e.protocol.value, e.variant.value, e.port))
    return hosts


def schedule(targets: list[Endpoint], policy: ScanPolicy) -> list[Job]:
    """Static plan: every host starts at t=0 and its k-th contact sits at k * interval.

    Secure endpoints contribute one job per suite set, standard endpoints a
    single plaintext probe.  Fallback batteries decided at run time go
    through the same per-host pacer.
    """
    jobs = []
    for host, eps in _by_host(targets).items():
        k = 0
        for ep in eps:
            steps = [s.value for s in BATTERY_ORDER] if ep.secure else ["plaintext"]
            for step in steps:
                jobs.append(Job(k * policy.interval, host, ep, step))
                k += 1
    jobs.sort(key=lambda j: (j.at, ipaddress.ip_address(j.host).packed, j.endpoint.port, j.step))
    return jobs


class HostPacer:
    """Spacing between contacts to one host, measured on the wall clock
    from the recorded start of the previous contact."""

    # slack on top of the interval so that send-side jitter cannot eat into it
    MARGIN = 0.02

    def __init__(self, interval: float, clock: Callable[[], float] = time.time,
                 sleep: Callable[[float], None] = time.sleep, margin: float = MARGIN):
        self.interval = interval
        self.margin = margin if interval > 0 else 0.0
        self.clock = clock
        self.sleep = sleep
        self.last: float | None = None

    def wait(self) -> None:
        if self.last is None or self.interval <= 0:
            return
        while True:
            delay = self.last + self.interval + self.margin - self.clock()
            if delay <= 0:
                return
            self.sleep(delay)

    def mark(self, when: float | None = None) -> None:
        when = self.clock() if when is None else when
        self.last = when if self.last is None else max(self.last, when)


# --- scan ------------------------------------------------------------------------------------

@dataclass
class ScanResult:
    records: list[ProbeRecord]
    deployments: list[Deployment]
    assessments: list[Assessment]
    summary: dict
    clusters: ClusterReport
    handshakes: list[dict] = field(default_factory=list)
    access: dict[str, AccessVerdict] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    as_map: AsMap | None = None

    @property
    def findings(self):
        return [f for a in self.assessments for f in a.findings]

    @property
    def contacts(self):
        return [c for v in self.access.values() for c in v.contacts]


class _Context:
    def __init__(self, policy: ScanPolicy, blocklist: list[Network], identity: ClientIdentity | None):
        self.policy = policy
        self.blocklist = blocklist
        self.identity = identity
        self.cfg = policy.probe_config()
        self.lock = threading.Lock()
        self.handshakes: list[dict] = []
        self.pacers: dict[str, HostPacer] = {}

    def pacer(self, host: str) -> HostPacer:
        with self.lock:
            if host not in self.pacers:
                self.pacers[host] = HostPacer(self.policy.interval)
            return self.pacers[host]

    def guard(self, ep: Endpoint) -> None:
        if is_blocked(ep.address, self.blocklist):
            raise RuntimeError(f"refusing to contact blocklisted {ep.address}")

    def logger(self, ep: Endpoint, pacer: HostPacer, purpose: str = "battery"):
        def on_handshake(result: HandshakeResult) -> None:
            pacer.mark(result.started_at)
            with self.lock:
                self.handshakes.append({**handshake_record(ep, result), "purpose": purpose})
        return on_handshake


def _battery(ep: Endpoint, ctx: _Context, pacer: HostPacer):
    return run_battery(ep, ctx.identity, ctx.cfg, pace=lambda i: pacer.wait(),
                       on_handshake=ctx.logger(ep, pacer))


def _probe_endpoint(ep: Endpoint, ctx: _Context, pacer: HostPacer) -> ProbeRecord:
    ctx.guard(ep)
    transport = probe_transport(ep, ctx.cfg)
    rec = ProbeRecord(ep, transport, probed_at=time.time())
    if transport is not TransportResult.ALIVE:
        return rec
    if ep.secure:
        rec.battery, rec.app = _battery(ep, ctx, pacer)
    else:
        pacer.wait()
        pacer.mark()
        app = probe_plaintext(ep, ctx.cfg)
        rec.app = app
        if not app.verdict.valid:
            # maybe TLS on the standard port
            battery, tls_app = _battery(ep, ctx, pacer)
            if any(h.server_hello_valid for h in battery):
                rec.battery, rec.app, rec.plaintext_app, rec.fallback = battery, tls_app, app, True
    if ctx.policy.offer_tls13 and rec.battery is not None and not ep.udp:
        pacer.wait()
        rec.tls13 = probe_tls13(ep, ctx.identity, ctx.cfg)
        ctx.logger(ep, pacer, "tls13")(rec.tls13)
    return rec


def _probe_host(eps: list[Endpoint], ctx: _Context) -> list[ProbeRecord]:
    pacer = ctx.pacer(eps[0].address)
    out = []
    for ep in eps:
        try:
            out.append(_probe_endpoint(ep, ctx, pacer))
        except RuntimeError:
            raise
        except Exception:
            log.exception("probe of %s failed", ep)
            out.append(ProbeRecord(ep, TransportResult.DEAD, probed_at=time.time()))
    return out


def _access_host(deps: list[Deployment], ctx: _Context, limits: AccessLimits, resolver) -> dict:
    pacer = ctx.pacer(deps[0].host)
    out = {}
    for d in deps:
        ctx.guard(d.records[0].endpoint)
        ep = d.records[0].endpoint
        verdict = check_access(d, limits, ctx.identity, ctx.cfg, resolver=resolver, pace=pacer.wait,
                               on_handshake=ctx.logger(ep, pacer, "access"), mark=pacer.mark)
        if verdict is not None:
            out[d.id] = verdict
    return out


def analyze(records: list[ProbeRecord], *, as_map: AsMap | None = None, policy: ScanPolicy | None = None,
            now: dt.datetime | None = None, access: dict[str, AccessVerdict] | None = None,
            access_runner: Callable[[list[Deployment]], dict] | None = None) -> ScanResult:
    """Everything after probing: stages, deployments, access, findings, summary, clusters."""
    policy = policy or ScanPolicy()
    stage_records(records)
    deployments = dedup(records, as_map)
    if access is None:
        access = access_runner(deployments) if access_runner else {}
    stores = load_trust_stores(policy.trust_store_dir)
    allow = LoadBalancerAllowlist.from_json(policy.lb_allowlist)
    assessments = assess(deployments, trust_stores=stores, now=now, allowlist=allow, access=access)
    summary = aggregate(deployments, as_map)
    clusters = cluster_certificates([a.certificate for a in assessments if a.certificate is not None])
    return ScanResult(records, deployments, assessments, summary, clusters, access=access, as_map=as_map)


def run(targets: list[Endpoint], policy: ScanPolicy, *, as_map: AsMap | None = None,
        identity: ClientIdentity | None = None, env: dict | None = None, resolver=None,
        target_errors: list[RowError] | None = None) -> ScanResult:
    """Probe every target, hosts in parallel, each host strictly serialized."""
    started = dt.datetime.now(dt.timezone.utc)
    blocklist = effective_blocklist(policy, env)
    targets = [ep for ep in targets if not is_blocked(ep.address, blocklist)]
    if identity is None:
        identity = ClientIdentity.load_or_create(policy.identity_path)
    ctx = _Context(policy, blocklist, identity)
    hosts = _by_host(targets)
    records: list[ProbeRecord] = []
    with ThreadPoolExecutor(max_workers=policy.workers) as pool:
        for recs in pool.map(lambda eps: _probe_host(eps, ctx), hosts.values()):
            records.extend(recs)
    targets_public = any(ipaddress.ip_address(h).is_global for h in hosts)
    limits = policy.access_limits(targets_public)

    def run_access(deployments: list[Deployment]) -> dict:
        if not policy.access_checks:
            return {}
        per_host: dict[str, list[Deployment]] = defaultdict(list)
        for d in deployments:
            if d.valid:
                per_host[d.host].append(d)
        verdicts: dict[str, AccessVerdict] = {}
        with ThreadPoolExecutor(max_workers=policy.workers) as pool:
            for part in pool.map(lambda ds: _access_host(ds, ctx, limits, resolver), per_host.values()):
                verdicts.update(part)
        return verdicts

    finished = dt.datetime.now(dt.timezone.utc)
    result = analyze(records, as_map=as_map, policy=policy, now=finished, access_runner=run_access)
    result.handshakes = sorted(ctx.handshakes, key=lambda h: h.get("started_at") or 0)
    result.metadata = {
        "tool": "iiotscan", "version": __version__,
        "started_at": started.isoformat(), "finished_at": dt.datetime.now(dt.timezone.utc).isoformat(),
        "assessed_at": finished.isoformat(),
        "targets": len(targets), "hosts": len(hosts), "blocklist_entries": len(blocklist),
        "target_errors": [str(e) for e in target_errors or []],
        "policy": policy.to_json(),
        "root_subscription": limits.subscribe_root,
        "timeouts": {"connect": policy.connect_timeout, "read": policy.read_timeout,
                     "udp_retransmits": policy.udp_retransmits},
    }
    return result


# --- report files ---------------------------------------------------------------------------

REPORT_FILES = ("records.jsonl", "handshakes.jsonl", "deployments.jsonl", "access.jsonl", "summary.csv",
                "findings.csv", "contacts.csv", "clusters.json", "metadata.json")


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _write_csv(path: Path, columns: list[str], rows: Iterable[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in columns})


def emit_report(result: ScanResult, out_dir: str | Path) -> Path:
    """Write every report file; an unusable directory is fatal."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_jsonl(out / "records.jsonl", (r.to_json() for r in result.records))
        _write_jsonl(out / "handshakes.jsonl", result.handshakes)
        _write_jsonl(out / "deployments.jsonl", (a.to_json() for a in result.assessments))
        _write_jsonl(out / "access.jsonl", ({"deployment_id": k, **v.to_json()} for k, v in result.access.items()))
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS, result.summary.values())
        _write_csv(out / "findings.csv", FINDING_COLUMNS, (f.to_row() for f in result.findings))
        _write_csv(out / "contacts.csv", CONTACT_COLUMNS, (c.to_row() for c in result.contacts))
        (out / "clusters.json").write_text(json.dumps(result.clusters.to_json(), indent=2) + "\n")
        if result.as_map is not None:
            rows = "".join(f"{net}\t{asn}\n" for net, asn in result.as_map.ranges)
            rows += "".join(f"{asn}\t{t}\n" for asn, t in sorted(result.as_map.as_types.items()))
            (out / "as_map.tsv").write_text(rows)
        (out / "metadata.json").write_text(json.dumps(result.metadata, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc.strerror or exc}") from exc
    return out


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def load_report(in_dir: str | Path) -> ScanResult:
    """Rebuild the analysis from a report directory's raw records."""
    d = Path(in_dir)
    if not (d / "records.jsonl").exists():
        raise FileNotFoundError(f"{d}: no records.jsonl")
    meta = json.loads((d / "metadata.json").read_text()) if (d / "metadata.json").exists() else {}
    policy_obj = dict(meta.get("policy") or {})
    policy = ScanPolicy.from_json(policy_obj) if policy_obj else ScanPolicy()
    as_map = load_as_map(d / "as_map.tsv") if (d / "as_map.tsv").exists() else None
    records = [ProbeRecord.from_json(o) for o in _read_jsonl(d / "records.jsonl")]
    access = {o["deployment_id"]: AccessVerdict.from_json(o) for o in _read_jsonl(d / "access.jsonl")}
    now = dt.datetime.fromisoformat(meta["assessed_at"]) if meta.get("assessed_at") else None
    result = analyze(records, as_map=as_map, policy=policy, now=now, access=access)
    result.handshakes = _read_jsonl(d / "handshakes.jsonl")
    result.metadata = meta
    return result


def load_catalog_for(policy: ScanPolicy) -> Catalog:
    return load_catalog(policy.catalog_path) if policy.catalog_path else default_catalog()
