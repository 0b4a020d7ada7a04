"""IP → AS lookup from prefix tables, plus coarse AS types."""
from __future__ import annotations

import bisect
import ipaddress
from dataclasses import dataclass, field
from pathlib import Path

AS_TYPES = ("enterprise", "ISP", "unknown")

# category strings as found in PeeringDB's info_type field
_CATEGORY = {
    "content": "enterprise",
    "enterprise": "enterprise",
    "network services": "ISP",
    "nsp": "ISP",
    "educational": "ISP",
    "educational/research": "ISP",
    "isp": "ISP",
    "cable/dsl/isp": "ISP",
}


def as_type_for(category: str) -> str:
    return _CATEGORY.get(category.strip().lower(), "unknown")


def _parse_asn(text: str) -> int:
    text = text.strip()
    if text[:2].upper() == "AS":
        text = text[2:]
    asn = int(text)
    if not 0 <= asn < 2 ** 32:
        raise ValueError(f"ASN out of range: {asn}")
    return asn


@dataclass
class AsMap:
    """Longest-prefix-match table.

    Overlapping input prefixes are allowed; the most specific one wins, so
    the effective ranges never overlap.
    """

    ranges: list[tuple[ipaddress.IPv4Network | ipaddress.IPv6Network, int]] = field(default_factory=list)
    as_types: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self._tables: dict[tuple[int, int], tuple[list[int], list[int]]] = {}
        uniq = {}
        for net, asn in self.ranges:
            net = ipaddress.ip_network(net, strict=False)
            uniq[net] = asn
        self.ranges = sorted(uniq.items(), key=lambda kv: (kv[0].version, kv[0].network_address, kv[0].prefixlen))
        buckets: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for net, asn in self.ranges:
            buckets.setdefault((net.version, net.prefixlen), []).append((int(net.network_address), asn))
        for key, rows in buckets.items():
            rows.sort()
            self._tables[key] = ([r[0] for r in rows], [r[1] for r in rows])
        # most specific first
        self._order = sorted(self._tables, key=lambda k: (k[0], -k[1]))

    def lookup(self, address: str) -> int | None:
        ip = ipaddress.ip_address(address)
        bits = ip.max_prefixlen
        value = int(ip)
        for version, plen in self._order:
            if version != ip.version:
                continue
            starts, asns = self._tables[(version, plen)]
            key = value >> (bits - plen) << (bits - plen) if plen else 0
            i = bisect.bisect_left(starts, key)
            if i < len(starts) and starts[i] == key:
                return asns[i]
        return None

    def as_type(self, asn: int | None) -> str:
        if asn is None:
            return "unknown"
        return self.as_types.get(asn, "unknown")

    def effective_ranges(self) -> list[tuple[ipaddress.IPv4Network, int]]:
        """Non-overlapping ranges equivalent to the table (IPv4 only)."""
        out = []
        v4 = [(n, a) for n, a in self.ranges if n.version == 4]
        # walk boundaries; each elementary interval takes the most specific cover
        points = sorted({int(n.network_address) for n, _ in v4} | {int(n.broadcast_address) + 1 for n, _ in v4})
        for lo, hi in zip(points, points[1:]):
            asn = self.lookup(str(ipaddress.IPv4Address(lo)))
            if asn is None:
                continue
            for net in ipaddress.summarize_address_range(ipaddress.IPv4Address(lo), ipaddress.IPv4Address(hi - 1)):
                out.append((net, asn))
        return out


def load_as_map(path: str | Path, types_path: str | Path | None = None) -> AsMap:
    """Read ``cidr<TAB>asn`` rows and ``asn<TAB>type`` rows.

    Both kinds may share one file; a sibling ``<name>.types`` file is read
    too when present.
    """
    path = Path(path)
    ranges, types = [], {}
    files = [path]
    sibling = path.with_name(path.name + ".types")
    if types_path is not None:
        files.append(Path(types_path))
    elif sibling.exists():
        files.append(sibling)
    for f in files:
        for lineno, line in enumerate(f.read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) < 2:
                raise ValueError(f"{f}:{lineno}: expected two columns")
            first, second = parts[0].strip(), parts[1].strip()
            if "/" in first or ":" in first or first.count(".") == 3:
                ranges.append((ipaddress.ip_network(first, strict=False), _parse_asn(second)))
            else:
                types[_parse_asn(first)] = second if second in AS_TYPES else as_type_for(second)
    return AsMap(ranges, types)
