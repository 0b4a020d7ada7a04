"""Cipher-suite sets offered by the four-handshake battery.

Set membership is transcribed name-for-name; the order within each set is
the preference order used in the ClientHello.  Names follow the TLS registry
without the ``TLS_`` prefix.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class SuiteSetName(str, Enum):
    REC = "REC"
    NOPFS = "noPFS"
    COMP = "COMP"
    INS = "INS"


BATTERY_ORDER = (SuiteSetName.REC, SuiteSetName.NOPFS, SuiteSetName.COMP, SuiteSetName.INS)

# Registry code points.  Several INS entries come from the (never
# standardised) EXPORT1024 drafts, which scanners and OpenSSL still know.
CODE_POINTS: dict[str, int] = {
    "NULL_WITH_NULL_NULL": 0x0000,
    "RSA_WITH_NULL_MD5": 0x0001,
    "RSA_WITH_NULL_SHA": 0x0002,
    "RSA_EXPORT_WITH_RC4_40_MD5": 0x0003,
    "RSA_WITH_RC4_128_MD5": 0x0004,
    "RSA_WITH_RC4_128_SHA": 0x0005,
    "RSA_EXPORT_WITH_RC2_CBC_40_MD5": 0x0006,
    "RSA_EXPORT_WITH_DES40_CBC_SHA": 0x0008,
    "RSA_WITH_DES_CBC_SHA": 0x0009,
    "RSA_WITH_3DES_EDE_CBC_SHA": 0x000A,
    "DH_DSS_EXPORT_WITH_DES40_CBC_SHA": 0x000B,
    "DH_DSS_WITH_DES_CBC_SHA": 0x000C,
    "DH_RSA_EXPORT_WITH_DES40_CBC_SHA": 0x000E,
    "DH_RSA_WITH_DES_CBC_SHA": 0x000F,
    "DHE_DSS_EXPORT_WITH_DES40_CBC_SHA": 0x0011,
    "DHE_DSS_WITH_DES_CBC_SHA": 0x0012,
    "DHE_RSA_EXPORT_WITH_DES40_CBC_SHA": 0x0014,
    "DHE_RSA_WITH_DES_CBC_SHA": 0x0015,
    "DH_ANON_EXPORT_WITH_RC4_40_MD5": 0x0017,
    "DH_ANON_WITH_RC4_128_MD5": 0x0018,
    "DH_ANON_EXPORT_WITH_DES40_CBC_SHA": 0x0019,
    "DH_ANON_WITH_DES_CBC_SHA": 0x001A,
    "DH_ANON_WITH_3DES_EDE_CBC_SHA": 0x001B,
    "RSA_WITH_AES_128_CBC_SHA": 0x002F,
    "RSA_WITH_AES_256_CBC_SHA": 0x0035,
    "RSA_WITH_NULL_SHA256": 0x003B,
    "RSA_WITH_AES_128_CBC_SHA256": 0x003C,
    "RSA_WITH_AES_256_CBC_SHA256": 0x003D,
    "DH_DSS_WITH_AES_128_CBC_SHA256": 0x003E,
    "DH_RSA_WITH_AES_128_CBC_SHA256": 0x003F,
    "DHE_DSS_WITH_AES_128_CBC_SHA256": 0x0040,
    "RSA_EXPORT1024_WITH_RC4_56_MD5": 0x0060,
    "RSA_EXPORT1024_WITH_RC2_CBC_56_MD5": 0x0061,
    "RSA_EXPORT1024_WITH_DES_CBC_SHA": 0x0062,
    "DHE_DSS_EXPORT1024_WITH_DES_CBC_SHA": 0x0063,
    "RSA_EXPORT1024_WITH_RC4_56_SHA": 0x0064,
    "DHE_DSS_EXPORT1024_WITH_RC4_56_SHA": 0x0065,
    "DHE_DSS_WITH_RC4_128_SHA": 0x0066,
    "DHE_RSA_WITH_AES_128_CBC_SHA256": 0x0067,
    "DH_DSS_WITH_AES_256_CBC_SHA256": 0x0068,
    "DH_RSA_WITH_AES_256_CBC_SHA256": 0x0069,
    "DHE_DSS_WITH_AES_256_CBC_SHA256": 0x006A,
    "DHE_RSA_WITH_AES_256_CBC_SHA256": 0x006B,
    "DH_ANON_WITH_AES_128_CBC_SHA256": 0x006C,
    "DH_ANON_WITH_AES_256_CBC_SHA256": 0x006D,
    "RSA_WITH_AES_128_GCM_SHA256": 0x009C,
    "RSA_WITH_AES_256_GCM_SHA384": 0x009D,
    "DHE_RSA_WITH_AES_128_GCM_SHA256": 0x009E,
    "DHE_RSA_WITH_AES_256_GCM_SHA384": 0x009F,
    "DH_RSA_WITH_AES_128_GCM_SHA256": 0x00A0,
    "DH_RSA_WITH_AES_256_GCM_SHA384": 0x00A1,
    "DHE_DSS_WITH_AES_128_GCM_SHA256": 0x00A2,
    "DHE_DSS_WITH_AES_256_GCM_SHA384": 0x00A3,
    "DH_DSS_WITH_AES_128_GCM_SHA256": 0x00A4,
    "DH_DSS_WITH_AES_256_GCM_SHA384": 0x00A5,
    "DH_ANON_WITH_AES_128_GCM_SHA256": 0x00A6,
    "DH_ANON_WITH_AES_256_GCM_SHA384": 0x00A7,
    "ECDH_ECDSA_WITH_NULL_SHA": 0xC001,
    "ECDH_ECDSA_WITH_RC4_128_SHA": 0xC002,
    "ECDHE_ECDSA_WITH_NULL_SHA": 0xC006,
    "ECDHE_ECDSA_WITH_RC4_128_SHA": 0xC007,
    "ECDHE_ECDSA_WITH_AES_128_CBC_SHA": 0xC009,
    "ECDHE_ECDSA_WITH_AES_256_CBC_SHA": 0xC00A,
    "ECDH_RSA_WITH_NULL_SHA": 0xC00B,
    "ECDH_RSA_WITH_RC4_128_SHA": 0xC00C,
    "ECDHE_RSA_WITH_NULL_SHA": 0xC010,
    "ECDHE_RSA_WITH_RC4_128_SHA": 0xC011,
    "ECDHE_RSA_WITH_3DES_EDE_CBC_SHA": 0xC012,
    "ECDHE_RSA_WITH_AES_128_CBC_SHA": 0xC013,
    "ECDHE_RSA_WITH_AES_256_CBC_SHA": 0xC014,
    "ECDH_ANON_WITH_NULL_SHA": 0xC015,
    "ECDH_ANON_WITH_RC4_128_SHA": 0xC016,
    "ECDH_ANON_WITH_3DES_EDE_CBC_SHA": 0xC017,
    "ECDH_ANON_WITH_AES_128_CBC_SHA": 0xC018,
    "ECDH_ANON_WITH_AES_256_CBC_SHA": 0xC019,
    "ECDHE_ECDSA_WITH_AES_128_CBC_SHA256": 0xC023,
    "ECDHE_ECDSA_WITH_AES_256_CBC_SHA384": 0xC024,
    "ECDH_ECDSA_WITH_AES_128_CBC_SHA256": 0xC025,
    "ECDH_ECDSA_WITH_AES_256_CBC_SHA384": 0xC026,
    "ECDHE_RSA_WITH_AES_128_CBC_SHA256": 0xC027,
    "ECDHE_RSA_WITH_AES_256_CBC_SHA384": 0xC028,
    "ECDH_RSA_WITH_AES_128_CBC_SHA256": 0xC029,
    "ECDH_RSA_WITH_AES_256_CBC_SHA384": 0xC02A,
    "ECDHE_ECDSA_WITH_AES_128_GCM_SHA256": 0xC02B,
    "ECDHE_ECDSA_WITH_AES_256_GCM_SHA384": 0xC02C,
    "ECDH_ECDSA_WITH_AES_128_GCM_SHA256": 0xC02D,
    "ECDH_ECDSA_WITH_AES_256_GCM_SHA384": 0xC02E,
    "ECDHE_RSA_WITH_AES_128_GCM_SHA256": 0xC02F,
    "ECDHE_RSA_WITH_AES_256_GCM_SHA384": 0xC030,
    "ECDH_RSA_WITH_AES_128_GCM_SHA256": 0xC031,
    "ECDH_RSA_WITH_AES_256_GCM_SHA384": 0xC032,
    "DHE_RSA_WITH_AES_128_CCM": 0xC09E,
    "DHE_RSA_WITH_AES_256_CCM": 0xC09F,
    "DHE_RSA_WITH_AES_128_CCM_8": 0xC0A2,
    "DHE_RSA_WITH_AES_256_CCM_8": 0xC0A3,
    "ECDHE_ECDSA_WITH_AES_128_CCM": 0xC0AC,
    "ECDHE_ECDSA_WITH_AES_256_CCM": 0xC0AD,
    "ECDHE_ECDSA_WITH_AES_128_CCM_8": 0xC0AE,
    "ECDHE_ECDSA_WITH_AES_256_CCM_8": 0xC0AF,
}
NAMES_BY_CODE = {v: k for k, v in CODE_POINTS.items()}

REC = (
    "ECDHE_ECDSA_WITH_AES_256_GCM_SHA384",
    "ECDHE_RSA_WITH_AES_256_GCM_SHA384",
    "DHE_RSA_WITH_AES_256_GCM_SHA384",
    "DHE_DSS_WITH_AES_256_GCM_SHA384",
    "ECDHE_ECDSA_WITH_AES_256_CCM",
    "DHE_RSA_WITH_AES_256_CCM",
    "ECDHE_ECDSA_WITH_AES_128_GCM_SHA256",
    "ECDHE_RSA_WITH_AES_128_GCM_SHA256",
    "DHE_RSA_WITH_AES_128_GCM_SHA256",
    "DHE_DSS_WITH_AES_128_GCM_SHA256",
    "ECDHE_ECDSA_WITH_AES_128_CCM",
    "DHE_RSA_WITH_AES_128_CCM",
    "ECDHE_ECDSA_WITH_AES_256_CBC_SHA384",
    "ECDHE_RSA_WITH_AES_256_CBC_SHA384",
    "DHE_RSA_WITH_AES_256_CBC_SHA256",
    "DHE_DSS_WITH_AES_256_CBC_SHA256",
    "DHE_RSA_WITH_AES_128_CBC_SHA256",
    "DHE_DSS_WITH_AES_128_CBC_SHA256",
    "ECDHE_RSA_WITH_AES_128_CBC_SHA256",
    "ECDHE_ECDSA_WITH_AES_128_CBC_SHA256",
    "ECDHE_ECDSA_WITH_AES_128_CBC_SHA",
    "ECDHE_ECDSA_WITH_AES_256_CCM_8",
    "DHE_RSA_WITH_AES_256_CCM_8",
    "ECDHE_ECDSA_WITH_AES_128_CCM_8",
    "DHE_RSA_WITH_AES_128_CCM_8",
    "ECDHE_ECDSA_WITH_AES_256_CBC_SHA",
)

NOPFS = (
    "ECDH_ECDSA_WITH_AES_256_GCM_SHA384",
    "ECDH_RSA_WITH_AES_256_GCM_SHA384",
    "DH_RSA_WITH_AES_256_GCM_SHA384",
    "DH_DSS_WITH_AES_256_GCM_SHA384",
    "ECDH_ECDSA_WITH_AES_128_GCM_SHA256",
    "ECDH_RSA_WITH_AES_128_GCM_SHA256",
    "DH_RSA_WITH_AES_128_GCM_SHA256",
    "DH_DSS_WITH_AES_128_GCM_SHA256",
    "ECDH_ECDSA_WITH_AES_256_CBC_SHA384",
    "ECDH_RSA_WITH_AES_256_CBC_SHA384",
    "ECDH_RSA_WITH_AES_256_CBC_SHA256",
    "DH_DSS_WITH_AES_256_CBC_SHA256",
    "ECDH_ECDSA_WITH_AES_128_CBC_SHA256",
    "ECDH_RSA_WITH_AES_128_CBC_SHA256",
    "DH_RSA_WITH_AES_128_CBC_SHA256",
    "DH_DSS_WITH_AES_128_CBC_SHA256",
)

COMP = (
    "ECDHE_RSA_WITH_AES_128_GCM_SHA256",
    "ECDHE_ECDSA_WITH_AES_128_GCM_SHA256",
    "ECDHE_RSA_WITH_RC4_128_SHA",
    "ECDHE_ECDSA_WITH_RC4_128_SHA",
    "ECDHE_RSA_WITH_AES_128_CBC_SHA",
    "ECDHE_ECDSA_WITH_AES_128_CBC_SHA",
    "ECDHE_RSA_WITH_AES_256_CBC_SHA",
    "ECDHE_ECDSA_WITH_AES_256_CBC_SHA",
    "RSA_WITH_RC4_128_SHA",
    "RSA_WITH_AES_128_CBC_SHA",
    "RSA_WITH_AES_256_CBC_SHA",
    "ECDHE_RSA_WITH_3DES_EDE_CBC_SHA",
    "RSA_WITH_3DES_EDE_CBC_SHA",
)

INS = (
    "NULL_WITH_NULL_NULL",
    "RSA_WITH_NULL_MD5",
    "RSA_WITH_NULL_SHA",
    "RSA_WITH_NULL_SHA256",
    "ECDH_ECDSA_WITH_NULL_SHA",
    "ECDHE_ECDSA_WITH_NULL_SHA",
    "ECDH_RSA_WITH_NULL_SHA",
    "ECDHE_RSA_WITH_NULL_SHA",
    "ECDH_ANON_WITH_NULL_SHA",
    "RSA_EXPORT_WITH_RC2_CBC_40_MD5",
    "RSA_EXPORT1024_WITH_RC2_CBC_56_MD5",
    "RSA_EXPORT_WITH_DES40_CBC_SHA",
    "DH_RSA_EXPORT_WITH_DES40_CBC_SHA",
    "DH_DSS_EXPORT_WITH_DES40_CBC_SHA",
    "DHE_DSS_EXPORT_WITH_DES40_CBC_SHA",
    "DHE_RSA_EXPORT_WITH_DES40_CBC_SHA",
    "DH_ANON_EXPORT_WITH_DES40_CBC_SHA",
    "DHE_DSS_EXPORT1024_WITH_DES_CBC_SHA",
    "RSA_EXPORT1024_WITH_DES_CBC_SHA",
    "DH_ANON_EXPORT_WITH_RC4_40_MD5",
    "RSA_EXPORT1024_WITH_RC4_56_MD5",
    "RSA_EXPORT1024_WITH_RC4_56_SHA",
    "DHE_DSS_EXPORT1024_WITH_RC4_56_SHA",
    "RSA_EXPORT_WITH_RC4_40_MD5",
    "RSA_WITH_RC4_40_MD5",
    "RSA_WITH_RC4_128_SHA",
    "DH_ANON_WITH_RC4_128_MD5",
    "DHE_DSS_WITH_RC4_128_SHA",
    "ECDH_ECDSA_WITH_RC4_128_SHA",
    "ECDHE_ECDSA_WITH_RC4_128_SHA",
    "ECDH_RSA_WITH_RC4_128_SHA",
    "ECDHE_RSA_WITH_RC4_128_SHA",
    "ECDH_ANON_WITH_RC4_128_SHA",
    "RSA_WITH_DES_CBC_SHA",
    "DH_DSS_WITH_DES_CBC_SHA",
    "DH_RSA_WITH_DES_CBC_SHA",
    "DHE_DSS_WITH_DES_CBC_SHA",
    "DHE_RSA_WITH_DES_CBC_SHA",
    "DH_ANON_WITH_DES_CBC_SHA",
    "DH_ANON_WITH_3DES_EDE_CBC_SHA",
    "ECDH_ANON_WITH_3DES_EDE_CBC_SHA",
    "DH_ANON_WITH_AES_128_CBC_SHA256",
    "DH_ANON_WITH_AES_256_CBC_SHA256",
    "DH_ANON_WITH_AES_128_GCM_SHA256",
    "DH_ANON_WITH_AES_256_GCM_SHA384",
    "ECDH_ANON_WITH_AES_128_CBC_SHA",
    "ECDH_ANON_WITH_AES_256_CBC_SHA",
)


@dataclass(frozen=True)
class SuiteSet:
    name: SuiteSetName
    suites: tuple[str, ...]

    def __contains__(self, suite: str) -> bool:
        return suite in self.suites

    def __len__(self) -> int:
        return len(self.suites)

    def code_points(self) -> list[int]:
        """Wire identifiers, in preference order.

        Names without a registry code point are listed in the set but cannot
        be put on the wire, so they are skipped here.
        """
        return [CODE_POINTS[s] for s in self.suites if s in CODE_POINTS]

    def unregistered(self) -> list[str]:
        return [s for s in self.suites if s not in CODE_POINTS]


SUITE_SETS: dict[SuiteSetName, SuiteSet] = {
    SuiteSetName.REC: SuiteSet(SuiteSetName.REC, REC),
    SuiteSetName.NOPFS: SuiteSet(SuiteSetName.NOPFS, NOPFS),
    SuiteSetName.COMP: SuiteSet(SuiteSetName.COMP, COMP),
    SuiteSetName.INS: SuiteSet(SuiteSetName.INS, INS),
}


def suite_set(name: SuiteSetName | str) -> SuiteSet:
    return SUITE_SETS[SuiteSetName(name)]


# --- suite decomposition -------------------------------------------------

_BULK = (
    "AES_128_CCM_8", "AES_256_CCM_8", "AES_128_CCM", "AES_256_CCM",
    "AES_128_GCM", "AES_256_GCM", "AES_128_CBC", "AES_256_CBC",
    "3DES_EDE_CBC", "DES40_CBC", "DES_CBC", "RC4_128", "RC4_40", "RC4_56",
    "RC2_CBC_40", "RC2_CBC_56", "NULL",
)


@dataclass(frozen=True)
class SuiteParts:
    key_exchange: str  # e.g. ECDHE_RSA, RSA, DH_ANON, RSA_EXPORT1024
    bulk: str  # e.g. AES_128_GCM, RC4_128, NULL
    mac: str  # SHA, SHA256, SHA384, MD5, NULL; "" for CCM

    @property
    def aead(self) -> bool:
        return "GCM" in self.bulk or "CCM" in self.bulk

    @property
    def export(self) -> bool:
        return "EXPORT" in self.key_exchange

    @property
    def forward_secret(self) -> bool:
        return self.key_exchange.startswith(("ECDHE_", "DHE_"))

    @property
    def anonymous(self) -> bool:
        return self.key_exchange.endswith("_ANON")

    @property
    def prf_hash(self) -> str:
        """Hash used by the TLS 1.2 PRF (SHA-384 only for *_SHA384 suites)."""
        return "SHA384" if self.mac == "SHA384" else "SHA256"


def parse_suite(name: str) -> SuiteParts:
    if name == "NULL_WITH_NULL_NULL":
        return SuiteParts("NULL", "NULL", "NULL")
    kex, _, rest = name.partition("_WITH_")
    if not rest:
        raise ValueError(f"not a TLS 1.0-1.2 suite name: {name}")
    for bulk in _BULK:
        if rest == bulk:
            return SuiteParts(kex, bulk, "")
        if rest.startswith(bulk + "_"):
            return SuiteParts(kex, bulk, rest[len(bulk) + 1:])
    raise ValueError(f"unknown bulk cipher in {name}")


def is_weak_cipher(name: str) -> bool:
    """RC4, (3)DES, RC2, export or NULL encryption."""
    parts = parse_suite(name)
    return not parts.bulk.startswith("AES_") or parts.export


def is_weak_mac(name: str) -> bool:
    """HMAC-SHA1 or HMAC-MD5 record protection; AEAD suites never qualify."""
    parts = parse_suite(name)
    return not parts.aead and parts.mac in ("SHA", "MD5")


def weakness_class(name: str) -> str | None:
    """``W(C)``, ``W(M)``, ``W(B)`` or ``None`` for a negotiated suite."""
    cipher, mac = is_weak_cipher(name), is_weak_mac(name)
    if cipher and mac:
        return "W(B)"
    if cipher:
        return "W(C)"
    if mac:
        return "W(M)"
    return None
