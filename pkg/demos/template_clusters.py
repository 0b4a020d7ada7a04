"""Group certificate subjects that came out of the same generator script.

Three vendors' naming schemes plus some one-off subjects go through the
TF-IDF / DBSCAN pipeline.  The entropy table then shows which parameters the
templates pin down: a parameter whose weighted in-cluster entropy sits below
its corpus-wide entropy is shaped by the template rather than by chance.
"""
import datetime as dt
import random

from iiotscan.assessor.certs import CertificateRecord
from iiotscan.clustering import cluster_certificates

rng = random.Random(4)
UTC = dt.timezone.utc
start = dt.datetime(2021, 3, 1, tzinfo=UTC)


def cert(subject, key_type, bits, days):
    nb = start + dt.timedelta(days=rng.randrange(300))
    fp = "%064x" % rng.getrandbits(256)
    return CertificateRecord(fp, subject, subject, nb, nb + dt.timedelta(days=days), key_type, bits, "SHA256")


certs = []
for i in range(12):
    certs.append(cert(f"CN=gw-{rng.randrange(10**6):06d}.fleet.example,O=Northwind Gateways", "RSA", 2048, 3650))
for i in range(9):
    certs.append(cert(f"C=DE,O=Relay Works,CN=relay{i:02d}", "ECDSA", 256, 825))
for i in range(7):
    certs.append(cert(f"CN=hmi-{rng.randrange(16**4):04x}.line3.plant.local,O=Bright Controls", "RSA", 1024, 7300))
for subject in ["CN=mail.acme.test", "O=Test,CN=localhost", "CN=10.1.2.3", "CN=printer"]:
    certs.append(cert(subject, rng.choice(["RSA", "ECDSA"]), rng.choice([2048, 256, 4096]),
                      rng.choice([90, 365, 398, 730])))

report = cluster_certificates(certs)
by_fp = {c.fingerprint: c for c in certs}

for i, members in enumerate(report.clusters):
    sample = by_fp[members[0]].subject
    print(f"cluster {i}: {len(members):2d} certificates, e.g. {sample}")
print(f"noise: {len(report.noise)} certificates\n")

print(f"{'parameter':<20}{'corpus H':>10}{'norm H':>9}{'in-cluster':>12}  template?")
for name, row in report.per_parameter.items():
    mark = "yes" if row.template_influence else "no"
    print(f"{name:<20}{row.global_entropy:>10.3f}{row.normalized_global_entropy:>9.3f}"
          f"{row.weighted_cluster_entropy:>12.3f}  {mark}")
