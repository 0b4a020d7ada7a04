import datetime as dt
from pathlib import Path

import pytest

UTC = dt.timezone.utc
GOLDEN = Path(__file__).resolve().parents[1] / "src" / "iiotscan" / "data" / "golden"


def read_hex(path: Path) -> bytes:
    lines = (line.split("#", 1)[0] for line in path.read_text().splitlines())
    return bytes.fromhex("".join("".join(lines).split()))


@pytest.fixture(scope="session")
def pki(tmp_path_factory):
    from iiotscan.lab.pki import HarnessPKI
    return HarnessPKI(tmp_path_factory.mktemp("pki"))


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        terminalreporter.write_line(verdicts[number])
