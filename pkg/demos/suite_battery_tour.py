"""What the four-handshake battery offers, and how a server's answers are read.

Prints the size and a few members of each suite set, classifies a couple of
negotiated suites, and shows the downgrade marker check on two server randoms.
No network access.
"""
import os

from iiotscan.prober.engine import detect_downgrade_sentinel
from iiotscan.prober.suites import BATTERY_ORDER, suite_set, weakness_class

for name in BATTERY_ORDER:
    s = suite_set(name)
    unregistered = s.unregistered()
    print(f"{name.value:<6} {len(s):3d} suites, {len(s.code_points()):3d} on the wire; first: {s.suites[0]}")
    if unregistered:
        print(f"       listed but without a code point: {', '.join(unregistered)}")

print()
for suite in ["ECDHE_RSA_WITH_AES_128_GCM_SHA256", "ECDHE_RSA_WITH_AES_128_CBC_SHA",
              "RSA_WITH_3DES_EDE_CBC_SHA", "RSA_WITH_RC4_128_SHA"]:
    print(f"{suite:<36} weakness: {weakness_class(suite) or 'none'}")

print()
capable = os.urandom(24) + b"DOWNGRD\x01"
plain = os.urandom(32)
print("server random ending", capable[-8:].hex(), "->", "TLS 1.3 capable" if detect_downgrade_sentinel(capable) else "no marker")
print("server random ending", plain[-8:].hex(), "->", "TLS 1.3 capable" if detect_downgrade_sentinel(plain) else "no marker")
