"""Command line: ``audit scan``, ``audit report``, ``audit lab``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
import time
from pathlib import Path

from .asmap import load_as_map
from .catalog import UnknownProtocolError
from .orchestrator import (BLOCKLIST_ENV, BlocklistError, PolicyError, ReportError, ScanPolicy, apply_blocklist,
                           emit_report, load_catalog_for, load_policy, load_report, load_targets, parse_blocklist,
                           run)
from .pipeline import SUMMARY_COLUMNS

log = logging.getLogger("iiotscan")


def _print_summary(result, out=None) -> None:
    out = out or sys.stdout
    widths = [max(len(c), 8) for c in SUMMARY_COLUMNS]
    print("  ".join(c.rjust(w) for c, w in zip(SUMMARY_COLUMNS, widths)), file=out)
    for row in result.summary.values():
        print("  ".join(str(row[c]).rjust(w) for c, w in zip(SUMMARY_COLUMNS, widths)), file=out)
    counts: dict[str, int] = {}
    for f in result.findings:
        counts[f.check.value] = counts.get(f.check.value, 0) + 1
    print(f"findings: {sum(counts.values())}", file=out)
    for check, n in sorted(counts.items()):
        print(f"  {check}: {n}", file=out)
    print(f"template clusters: {len(result.clusters.clusters)}  noise: {len(result.clusters.noise)}", file=out)


def cmd_scan(args) -> int:
    policy = load_policy(args.policy)
    if args.lab_mode:
        policy.lab_mode = True
    targets = load_targets(args.targets, lab_mode=policy.lab_mode, catalog=load_catalog_for(policy))
    for err in targets.errors:
        print(f"{args.targets}: {err}", file=sys.stderr)
    try:
        as_map = load_as_map(args.as_map) if args.as_map else None
    except ValueError as exc:
        raise PolicyError(f"as map: {exc}") from None
    kept = apply_blocklist(list(targets), policy)
    print(f"{len(kept)} endpoints to probe ({len(targets) - len(kept)} blocklisted)", file=sys.stderr)
    result = run(kept, policy, as_map=as_map, target_errors=targets.errors)
    out = emit_report(result, args.out)
    _print_summary(result)
    print(f"report written to {out}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    result = load_report(args.in_dir)
    if args.rewrite:
        emit_report(result, args.in_dir)
    _print_summary(result)
    return 0


def cmd_lab(args) -> int:
    from .lab.scenarios import canonical_suite, load_scenarios, start_lab
    from .lab.verify import check_lab

    scenarios = canonical_suite() if args.scenarios == "all" else None
    if scenarios is None:
        path = Path(args.scenarios)
        if path.exists():
            scenarios = load_scenarios(path)
        else:
            wanted = set(args.scenarios.split(","))
            scenarios = [s for s in canonical_suite() if s.name in wanted]
            missing = wanted - {s.name for s in scenarios}
            if missing:
                print(f"unknown scenarios: {', '.join(sorted(missing))}", file=sys.stderr)
                return 2
    workdir = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="iiotscan-lab-"))
    workdir.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    with start_lab(scenarios, workdir) as lab:
        targets_path = lab.write_targets(workdir / "targets.csv")
        as_map_path = lab.write_as_map(workdir / "as_map.tsv")
        policy = ScanPolicy(lab_mode=True, subscribe_root=True, idle_timeout=1.0, read_timeout=2.0,
                            connect_timeout=2.0, trust_store_dir=str(lab.pki.trust_store_dir),
                            blocklist=parse_blocklist(lab.blocklist), access_checks=True)
        (workdir / "policy.json").write_text(json.dumps(policy.to_json(), indent=2) + "\n")
        targets = load_targets(targets_path, lab_mode=True)
        result = run(apply_blocklist(list(targets), policy), policy, as_map=load_as_map(as_map_path))
        emit_report(result, workdir / "report")
        checks = check_lab(lab, result)
    for c in checks:
        print(c.line())
    passed = sum(c.passed for c in checks)
    print(f"{passed}/{len(checks)} scenarios matched in {time.monotonic() - t0:.1f}s; files in {workdir}")
    return 0 if passed == len(checks) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="audit", description="(D)TLS configuration audit for industrial IoT endpoints")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scan", help="probe targets and write a report directory",
                       epilog=f"addresses listed in the file named by ${BLOCKLIST_ENV} are never contacted")
    s.add_argument("--targets", required=True, help="CSV (address,protocol,variant[,port]) or JSONL")
    s.add_argument("--policy", help="policy JSON (pacing, limits, blocklist, timeouts)")
    s.add_argument("--as-map", help="TSV of cidr<TAB>asn and asn<TAB>type rows")
    s.add_argument("--out", required=True, help="report directory")
    s.add_argument("--lab-mode", action="store_true", help="no pacing, CIDR rows allowed")
    s.set_defaults(func=cmd_scan)

    r = sub.add_parser("report", help="summarize an existing report directory")
    r.add_argument("--in", dest="in_dir", required=True)
    r.add_argument("--rewrite", action="store_true", help="regenerate derived files from records.jsonl")
    r.set_defaults(func=cmd_report)

    lab = sub.add_parser("lab", help="run the harness scenarios and check every expectation")
    lab.add_argument("--scenarios", default="all", help="'all', a scenario JSON file, or comma-separated names")
    lab.add_argument("--out", help="working directory (default: a fresh temp dir)")
    lab.set_defaults(func=cmd_lab)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UnknownProtocolError, PolicyError, BlocklistError, ReportError, FileNotFoundError) as exc:
        print(f"audit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
