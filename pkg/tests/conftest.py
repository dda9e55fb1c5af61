from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from driftbench.fpdb import DynamicDatabase, FingerprintRecord, ReferencePoint

EPOCH = datetime(2023, 6, 1, tzinfo=timezone.utc)


def make_record(rid, day, rp, readings, hour=9, device="laptop"):
    ts = EPOCH + timedelta(days=day - 1, hours=hour, seconds=rid)
    return FingerprintRecord(rid, ts, day, device, rp, dict(readings))


def make_db(rows, rps=None):
    """rows: (day, rp, readings) triples; rps default to a line at x = 3*rp."""
    records = [make_record(i, d, rp, r) for i, (d, rp, r) in enumerate(rows)]
    if rps is None:
        ids = sorted({rp for _, rp, _ in rows} | {0})
        rps = [ReferencePoint(i, 3.0 * i, 0.0, 0) for i in ids]
    return DynamicDatabase(records, rps)


@pytest.fixture
def rng():
    return np.random.default_rng(20230601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
