import datetime as dt
import itertools

import pytest
from hypothesis import given, settings, strategies as st

from iiotscan.assessor import LoadBalancerAllowlist, assess
from iiotscan.assessor.certs import CertificateRecord, TrustAnchor, classify_trust_anchor, load_trust_stores, \
    parse_certificate
from iiotscan.assessor.checks import (Check, Finding, Reuse, check_ciphers, check_lifetime, check_primitives,
                                      check_version, classify_reuse, figure1_class, lifetime_cap, reuse_finding,
                                      tls13_capable)
from iiotscan.lab.pki import CertSpec
from iiotscan.pipeline import dedup

from factories import battery, record

UTC = dt.timezone.utc
NOW = dt.datetime(2023, 1, 1, tzinfo=UTC)


def t(text: str) -> dt.datetime:
    return dt.datetime.fromisoformat(text).replace(tzinfo=UTC)


def cert(nb="2022-06-01T00:00:00", na="2023-06-01T00:00:00", key_type="RSA", bits=2048, sig="SHA256"):
    return CertificateRecord("00" * 32, "CN=x", "CN=x", t(nb), t(na), key_type, bits, sig)


# (label, not_before, not_after, key type, bits, sig hash, expected checks)
# expected values worked out by hand: 39 months from 2016-06-01, 825 days
# from 2018-02-01 (lands on 2020-05-06), 398 days from 2020-09-01 (2021-10-04)
CASES = [
    ("before the first era", "2016-05-31T23:59:59", "2036-05-31T23:59:59", "RSA", 2048, "SHA256", set()),
    ("39mo exactly", "2016-06-01T00:00:00", "2019-09-01T00:00:00", "RSA", 2048, "SHA256", {"expired_cert"}),
    ("39mo plus a second", "2016-06-01T00:00:00", "2019-09-01T00:00:01", "RSA", 2048, "SHA256", {"expired_cert", "over_long_lifetime"}),
    ("39mo clamped to April 30", "2018-01-31T23:59:59", "2021-04-30T23:59:59", "RSA", 2048, "SHA256", {"expired_cert"}),
    ("39mo clamp plus a second", "2018-01-31T23:59:59", "2021-05-01T00:00:00", "RSA", 2048, "SHA256", {"expired_cert", "over_long_lifetime"}),
    ("825d exactly", "2018-02-01T00:00:00", "2020-05-06T00:00:00", "RSA", 2048, "SHA256", {"expired_cert"}),
    ("825d plus a second", "2018-02-01T00:00:00", "2020-05-06T00:00:01", "RSA", 2048, "SHA256", {"expired_cert", "over_long_lifetime"}),
    ("last second of the 825d era", "2020-08-31T23:59:59", "2022-12-04T23:59:59", "RSA", 2048, "SHA256", {"expired_cert"}),
    ("398d exactly", "2020-09-01T00:00:00", "2021-10-04T00:00:00", "RSA", 2048, "SHA256", {"expired_cert"}),
    ("398d plus a second", "2020-09-01T00:00:00", "2021-10-04T00:00:01", "RSA", 2048, "SHA256", {"expired_cert", "over_long_lifetime"}),
    ("399 days, current", "2022-09-01T00:00:00", "2023-10-05T00:00:00", "RSA", 2048, "SHA256", {"over_long_lifetime"}),
    ("expired a second ago", "2022-01-01T00:00:00", "2022-12-31T23:59:59", "RSA", 2048, "SHA256", {"expired_cert"}),
    ("expires right now", "2022-01-01T00:00:00", "2023-01-01T00:00:00", "RSA", 2048, "SHA256", set()),
    ("expires in a second", "2022-01-01T00:00:00", "2023-01-01T00:00:01", "RSA", 2048, "SHA256", set()),
    ("pre-era and expired", "2015-01-01T00:00:00", "2020-01-01T00:00:00", "RSA", 2048, "SHA256", {"expired_cert"}),
    ("ten years from 2021", "2021-01-01T00:00:00", "2031-01-01T00:00:00", "RSA", 2048, "SHA256", {"over_long_lifetime"}),
    ("RSA 1999", "2022-06-01T00:00:00", "2023-06-01T00:00:00", "RSA", 1999, "SHA256", {"short_key"}),
    ("RSA 2000", "2022-06-01T00:00:00", "2023-06-01T00:00:00", "RSA", 2000, "SHA256", set()),
    ("RSA 2048", "2022-06-01T00:00:00", "2023-06-01T00:00:00", "RSA", 2048, "SHA256", set()),
    ("RSA 1024", "2022-06-01T00:00:00", "2023-06-01T00:00:00", "RSA", 1024, "SHA256", {"short_key"}),
    ("ECDSA 256", "2022-06-01T00:00:00", "2023-06-01T00:00:00", "ECDSA", 256, "SHA256", set()),
    ("MD5", "2022-06-01T00:00:00", "2023-06-01T00:00:00", "RSA", 2048, "MD5", {"weak_sig_hash"}),
    ("SHA1", "2022-06-01T00:00:00", "2023-06-01T00:00:00", "RSA", 2048, "SHA1", {"weak_sig_hash"}),
    ("SHA256 ECDSA", "2022-06-01T00:00:00", "2023-06-01T00:00:00", "ECDSA", 384, "SHA384", set()),
    ("everything wrong", "2020-10-01T00:00:00", "2022-10-01T00:00:00", "RSA", 1024, "SHA1",
     {"expired_cert", "over_long_lifetime", "short_key", "weak_sig_hash"}),
]


def test_table_has_25_cases():
    assert len(CASES) == 25


@pytest.mark.parametrize("label,nb,na,key_type,bits,sig,expected", CASES, ids=[c[0] for c in CASES])
def test_certificate_rules(label, nb, na, key_type, bits, sig, expected):
    c = cert(nb, na, key_type, bits, sig)
    found = {f.check.value for f in check_lifetime(c, NOW) + check_primitives(c)}
    assert found == expected


def test_era_boundaries():
    assert lifetime_cap(t("2016-05-31T23:59:59")) is None
    assert lifetime_cap(t("2016-06-01T00:00:00")) == "39mo"
    assert lifetime_cap(t("2018-02-01T00:00:00")) == "825d"
    assert lifetime_cap(t("2020-09-01T00:00:00")) == "398d"


@settings(max_examples=300, deadline=None)
@given(st.datetimes(dt.datetime(2014, 1, 1), dt.datetime(2030, 1, 1)),
       st.integers(1, 4000 * 86400), st.integers(0, 1000 * 86400))
def test_extending_not_after_keeps_the_lifetime_finding(nb, seconds, extra):
    nb = nb.replace(tzinfo=UTC)
    short = cert(nb.isoformat()[:19], (nb + dt.timedelta(seconds=seconds)).isoformat()[:19])
    longer = cert(nb.isoformat()[:19], (nb + dt.timedelta(seconds=seconds + extra)).isoformat()[:19])
    has = lambda c: any(f.check is Check.OVER_LONG_LIFETIME for f in check_lifetime(c, NOW))
    assert has(longer) or not has(short)


def test_clean_certificate_has_no_findings():
    c = cert()
    assert check_primitives(c) == [] and check_lifetime(c, NOW) == []


def test_record_invariants():
    with pytest.raises(ValueError):
        cert("2023-01-01T00:00:00", "2022-01-01T00:00:00")
    with pytest.raises(ValueError):
        cert(bits=0)


def test_findings_carry_key_value_evidence():
    with pytest.raises(ValueError):
        Finding("d", Check.SHORT_KEY, "short")
    f = check_primitives(cert(bits=1024))[0]
    assert f.evidence == "key_type=RSA;key_bits=1024" and f.severity == "warn"


# --- parsing real DER ------------------------------------------------------------

@pytest.mark.parametrize("key_type,bits,sig", [("RSA", 1999, "SHA256"), ("RSA", 2000, "SHA1"),
                                               ("RSA", 2048, "MD5"), ("ECDSA", 256, "SHA256")])
def test_parse_certificate_extracts_primitives(pki, key_type, bits, sig):
    issued = pki.issue(CertSpec(key_type=key_type, key_bits=bits, sig_hash=sig, not_before="2022-03-01T00:00:00",
                                lifetime_days=100, common_name="p.lab.invalid", organization="Lab"))
    rec = parse_certificate(issued.cert_der)
    assert (rec.key_type, rec.key_bits, rec.sig_hash) == (key_type, bits, sig)
    assert rec.not_before == t("2022-03-01T00:00:00")
    assert rec.lifetime == dt.timedelta(days=100)
    assert rec.common_name == "p.lab.invalid" and rec.organization == "Lab"
    assert rec.fingerprint == issued.fingerprint


def test_trust_anchor_classes(pki):
    stores = load_trust_stores(pki.trust_store_dir)
    got = {mode: classify_trust_anchor(pki.issue(CertSpec(issuer=mode)).chain, stores)
           for mode in ("self", "private_ca", "public_ca")}
    assert got == {"self": TrustAnchor.SELF_SIGNED, "private_ca": TrustAnchor.PRIVATE_CA,
                   "public_ca": TrustAnchor.PUBLIC_CA}
    # without a store nothing is public
    assert classify_trust_anchor(pki.issue(CertSpec(issuer="public_ca")).chain, load_trust_stores(None)) \
        is TrustAnchor.PRIVATE_CA


def test_expired_public_chain_still_public(pki):
    stores = load_trust_stores(pki.trust_store_dir)
    issued = pki.issue(CertSpec(issuer="public_ca", not_before="2019-01-01T00:00:00", lifetime_days=30))
    assert classify_trust_anchor(issued.chain, stores) is TrustAnchor.PUBLIC_CA


# --- cipher battery rules -------------------------------------------------------

BROAD = ("REC", "noPFS", "COMP")


@pytest.mark.parametrize("accepted,comp_suite,expected_class,expected", [
    (("REC",), None, "secure", set()),
    (BROAD, "ECDHE_RSA_WITH_AES_128_GCM_SHA256", "secure", set()),
    (BROAD + ("INS",), None, "insecure_accepting", {"insecure_suite_accepted"}),
    (("COMP",), "ECDHE_RSA_WITH_AES_128_GCM_SHA256", "denies_harmless", {"no_rec_suite"}),
    (("COMP",), "RSA_WITH_RC4_128_SHA", "insecure_accepting",
     {"no_rec_suite", "weak_cipher_accepted", "weak_mac_accepted"}),
    (("REC", "COMP"), "ECDHE_RSA_WITH_AES_128_CBC_SHA", "insecure_accepting", {"weak_mac_accepted"}),
    ((), None, "denies_harmless", {"no_rec_suite"}),
])
def test_battery_classes(accepted, comp_suite, expected_class, expected):
    b = battery(accepted, suites={"COMP": comp_suite} if comp_suite else None)
    assert figure1_class(b) == expected_class
    assert {f.check.value for f in check_ciphers(b)} == expected


def test_deprecated_version():
    assert check_version(battery(version="TLSv1.1")).check is Check.DEPRECATED_VERSION
    assert check_version(battery(version="DTLSv1.0")).check is Check.DEPRECATED_VERSION
    assert check_version(battery(version="DTLSv1.2")) is None
    with pytest.raises(ValueError):
        check_version(battery(accepted=()))


def test_tls13_capability_from_sentinel():
    marked = battery(random_=bytes(24) + b"DOWNGRD\x01")
    assert tls13_capable(marked)
    assert not tls13_capable(battery())
    assert not tls13_capable(battery(random_=bytes(24) + b"DOWNGRD\x00"))


# --- reuse -------------------------------------------------------------------------

def written_rule(usage) -> Reuse:
    """More than two hosts: one AS is intra-AS reuse, several are inter-AS reuse."""
    hosts = {h for h, _ in usage}
    ases = {a for _, a in usage}
    if len(hosts) > 2:
        return Reuse.INTRA_AS if len(ases) == 1 else Reuse.INTER_AS
    return Reuse.NOT_REUSED


def all_usage_sets():
    grid = list(itertools.product(["h1", "h2", "h3", "h4"], [64500, 64501, 64502]))
    for mask in range(1, 1 << len(grid)):
        yield {grid[i] for i in range(len(grid)) if mask >> i & 1}


def test_reuse_exhaustive():
    count = 0
    for usage in all_usage_sets():
        assert classify_reuse(usage) is written_rule(usage), usage
        count += 1
    assert count == 2 ** 12 - 1


def test_reuse_findings():
    usage = {("a", 1), ("b", 1), ("c", 1)}
    assert reuse_finding(Reuse.INTRA_AS, "ff", usage).check is Check.CERT_REUSE_INTRA_AS
    assert reuse_finding(Reuse.INTER_AS, "ff", usage | {("d", 2)}).severity == "critical"
    assert reuse_finding(Reuse.NOT_REUSED, "ff", usage) is None
    with pytest.raises(ValueError):
        classify_reuse([])


# --- end-to-end assess ------------------------------------------------------------

def _deployments(leaf, hosts):
    from iiotscan.asmap import AsMap
    import ipaddress
    as_map = AsMap([(ipaddress.ip_network("192.0.2.0/26"), 64500), (ipaddress.ip_network("192.0.2.64/26"), 64501)])
    return dedup([record(h, bat=battery(leaf=leaf)) for h in hosts], as_map)


def test_assess_reuse_and_allowlist(pki):
    issued = pki.issue(CertSpec(common_name="lb.cloud.invalid", organization="Cloud Broker"))
    intra = assess(_deployments(issued.cert_der, ["192.0.2.1", "192.0.2.2", "192.0.2.3"]), now=NOW)
    assert all("cert_reuse_intra_as" in a.checks for a in intra)
    inter = assess(_deployments(issued.cert_der, ["192.0.2.1", "192.0.2.2", "192.0.2.65"]), now=NOW)
    assert all("cert_reuse_inter_as" in a.checks for a in inter)
    allow = LoadBalancerAllowlist.from_json([{"common_name": r"lb\..*", "organization": "Cloud.*"}])
    suppressed = assess(_deployments(issued.cert_der, ["192.0.2.1", "192.0.2.2", "192.0.2.65"]),
                        now=NOW, allowlist=allow)
    assert all(a.load_balancer and not a.checks for a in suppressed)
    pair = assess(_deployments(issued.cert_der, ["192.0.2.1", "192.0.2.65"]), now=NOW)
    assert all(a.reuse is Reuse.NOT_REUSED and not a.checks for a in pair)


def test_assess_orders_findings_and_skips_invalid(pki):
    issued = pki.issue(CertSpec(key_bits=1024, sig_hash="SHA1", not_before="2020-01-01T00:00:00",
                                lifetime_days=3650))
    deps = dedup([record("192.0.2.1", bat=battery(("COMP", "INS"), leaf=issued.cert_der,
                                                  suites={"COMP": "RSA_WITH_RC4_128_SHA"})),
                  record("192.0.2.9", alive=False)])
    a, dead = assess(deps, now=NOW)
    order = [f.check for f in a.findings]
    assert order == sorted(order, key=list(Check).index)
    assert a.checks == {"no_rec_suite", "weak_cipher_accepted", "weak_mac_accepted", "insecure_suite_accepted",
                        "over_long_lifetime", "short_key", "weak_sig_hash"}
    assert a.figure1 == "insecure_accepting" and a.weakness == "W(B)"
    assert dead.note.startswith("not assessed") and not dead.findings
