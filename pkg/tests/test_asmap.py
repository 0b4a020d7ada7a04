import ipaddress

import pytest
from hypothesis import given, settings, strategies as st

from iiotscan.asmap import AsMap, as_type_for, load_as_map


def brute_lookup(ranges, address):
    ip = ipaddress.ip_address(address)
    best = None
    for net, asn in ranges:
        net = ipaddress.ip_network(net)
        if ip.version == net.version and ip in net and (best is None or net.prefixlen >= best[0]):
            best = (net.prefixlen, asn)
    return best[1] if best else None


prefixes = st.builds(lambda a, p: ipaddress.ip_network(f"{ipaddress.IPv4Address(a)}/{p}", strict=False),
                     st.integers(0x0A000000, 0x0A00FFFF), st.integers(16, 30))


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(prefixes, st.integers(1, 70000)), max_size=12, unique_by=lambda t: t[0]),
       st.lists(st.integers(0x0A000000, 0x0A00FFFF), min_size=1, max_size=20))
def test_longest_prefix_matches_brute_force(ranges, addresses):
    m = AsMap(ranges)
    for a in addresses:
        addr = str(ipaddress.IPv4Address(a))
        assert m.lookup(addr) == brute_lookup(ranges, addr)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(prefixes, st.integers(1, 70000)), max_size=8, unique_by=lambda t: t[0]))
def test_effective_ranges_do_not_overlap_and_agree(ranges):
    m = AsMap(ranges)
    eff = m.effective_ranges()
    for i, (a, _) in enumerate(eff):
        for b, _ in eff[i + 1:]:
            assert not a.overlaps(b)
    for net, asn in eff:
        for probe in (net.network_address, net.broadcast_address):
            assert m.lookup(str(probe)) == asn


def test_lookup_is_total():
    m = AsMap([(ipaddress.ip_network("192.0.2.0/24"), 64500)])
    assert m.lookup("192.0.2.9") == 64500
    assert m.lookup("203.0.113.1") is None
    assert m.lookup("2001:db8::1") is None
    assert m.as_type(None) == "unknown"


def test_nested_prefix_wins():
    m = AsMap([(ipaddress.ip_network("10.0.0.0/8"), 1), (ipaddress.ip_network("10.1.0.0/16"), 2)])
    assert m.lookup("10.1.2.3") == 2
    assert m.lookup("10.2.0.1") == 1


def test_load_mixed_file(tmp_path):
    path = tmp_path / "as_map.tsv"
    path.write_text("# ranges\n192.0.2.0/24\tAS64500\n198.51.100.0/24\t64501\n2001:db8::/32\t64502\n"
                    "64500\tenterprise\n64501\tCable/DSL/ISP\n")
    m = load_as_map(path)
    assert m.lookup("198.51.100.4") == 64501
    assert m.lookup("2001:db8::5") == 64502
    assert m.as_type(64500) == "enterprise"
    assert m.as_type(64501) == "ISP"
    assert m.as_type(64502) == "unknown"


def test_sibling_types_file(tmp_path):
    (tmp_path / "m.tsv").write_text("192.0.2.0/24 64500\n")
    (tmp_path / "m.tsv.types").write_text("64500 Content\n")
    assert load_as_map(tmp_path / "m.tsv").as_type(64500) == "enterprise"


@pytest.mark.parametrize("line", ["192.0.2.0/24\n", "192.0.2.0/24\tAS-x\n", "192.0.2.0/24\t4294967296\n"])
def test_bad_rows(tmp_path, line):
    (tmp_path / "bad.tsv").write_text(line)
    with pytest.raises(ValueError):
        load_as_map(tmp_path / "bad.tsv")


def test_category_mapping():
    assert as_type_for(" NSP ") == "ISP"
    assert as_type_for("Non-Profit") == "unknown"
