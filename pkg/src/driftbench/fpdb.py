"""Fingerprint data model, CSV ingestion/export, day slicing and matrices.

Native storage is long format: one row per (record, AP, RSSI) so that APs
can come and go across days without changing any schema.  RSSI levels are
integers in [-109, 0]; ``NOT_DETECTED`` (-110) marks an undetected AP and is
only ever materialized in matrices, never stored as a reading.
"""

import csv
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from ._io import atomic_write_csv, fmt_float
from .errors import (
    EmptyDatabase,
    ForeignKeyError,
    InvalidRange,
    ParseError,
    UnknownAp,
    UnknownRp,
)

NOT_DETECTED = -110
RSSI_MIN = -109
RSSI_MAX = 0

RECORDS_HEADER = ["record_id", "timestamp", "day_index", "device_id", "rp_id"]
READINGS_HEADER = ["record_id", "ap_id", "rssi"]
RPS_HEADER = ["rp_id", "x", "y", "floor"]

RECORDS_FILE = "records.csv"
READINGS_FILE = "readings.csv"
RPS_FILE = "rps.csv"


@dataclass(frozen=True)
class ReferencePoint:
    rp_id: int
    x: float
    y: float
    floor: int = 0


@dataclass(frozen=True, eq=True)
class FingerprintRecord:
    record_id: int
    timestamp: datetime
    day_index: int
    device_id: str
    rp_id: int
    readings: dict = field(default_factory=dict, hash=False)

    def sort_key(self):
        return (self.day_index, self.timestamp, self.record_id)


@dataclass(frozen=True)
class RssiMatrix:
    matrix: np.ndarray
    row_labels: np.ndarray
    row_coords: np.ndarray
    row_days: np.ndarray
    ap_universe: tuple
    dropped: int = 0


def day_of(ts, epoch):
    return (ts.date() - epoch).days + 1


def parse_timestamp(text):
    """ISO-8601 (``Z`` suffix allowed) or integer UNIX seconds, returned in UTC."""
    text = text.strip()
    if text.lstrip("-").isdigit():
        return datetime.fromtimestamp(int(text), tz=timezone.utc)
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts):
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


class DynamicDatabase:
    """Ordered fingerprint records plus RP and AP indices.

    Records are kept sorted by ``(day_index, timestamp, record_id)``.  Views
    produced by :func:`slice_days` share the parent's RP list and AP index.
    """

    def __init__(self, records, rps, ap_index=None, epoch=None):
        self.records = tuple(sorted(records, key=FingerprintRecord.sort_key))
        self.rps = tuple(rps)
        self._rp_by_id = {rp.rp_id: rp for rp in self.rps}
        if len(self._rp_by_id) != len(self.rps):
            raise ForeignKeyError("duplicate rp_id in reference points")
        for rec in self.records:
            if rec.rp_id not in self._rp_by_id:
                raise ForeignKeyError(f"record {rec.record_id} references unknown rp {rec.rp_id}")
        self.ap_index = tuple(ap_index) if ap_index is not None else observed_aps(self.records)
        self._ap_set = frozenset(self.ap_index)
        if epoch is None and self.records:
            first = self.records[0]
            epoch = first.timestamp.date() - timedelta(days=first.day_index - 1)
        self.epoch = epoch

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, DynamicDatabase):
            return NotImplemented
        return (
            self.records == other.records
            and self.rps == other.rps
            and self.ap_index == other.ap_index
            and self.epoch == other.epoch
        )

    def __repr__(self):
        return (
            f"DynamicDatabase({len(self.records)} records, {len(self.rps)} rps, "
            f"{len(self.ap_index)} aps, days={self.days()[:1]}..{self.days()[-1:]})"
        )

    def rp(self, rp_id):
        try:
            return self._rp_by_id[rp_id]
        except KeyError:
            raise UnknownRp(f"unknown rp {rp_id}") from None

    def has_rp(self, rp_id):
        return rp_id in self._rp_by_id

    def has_ap(self, ap):
        return ap in self._ap_set

    def days(self):
        return sorted({r.day_index for r in self.records})

    def observed_aps(self):
        """APs actually present in this database's records, first-seen order."""
        return observed_aps(self.records)

    def rp_ids_present(self):
        seen = {}
        for r in self.records:
            seen.setdefault(r.rp_id, None)
        return sorted(seen)


def observed_aps(records):
    seen = {}
    for rec in records:
        for ap in rec.readings:
            seen.setdefault(ap, None)
    return tuple(seen)


def _validate_rssi(value, line, path):
    try:
        rssi = int(value)
    except ValueError:
        raise ParseError(line, f"rssi {value!r} is not an integer", path) from None
    if not RSSI_MIN <= rssi <= RSSI_MAX:
        raise ParseError(line, f"rssi {rssi} outside [{RSSI_MIN}, {RSSI_MAX}]", path)
    return rssi


def _read_rows(path, header):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise ParseError(1, "missing header", path) from None
        if [h.strip() for h in got] != header:
            raise ParseError(1, f"expected header {','.join(header)}", path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(lineno, f"expected {len(header)} fields, got {len(row)}", path)
            yield lineno, row


def load_native(records_csv, readings_csv, rps_csv):
    """Load the three native CSV files into a :class:`DynamicDatabase`."""
    rps = []
    for line, (rp_id, x, y, floor) in _read_rows(rps_csv, RPS_HEADER):
        try:
            rp = ReferencePoint(int(rp_id), float(x), float(y), int(floor))
        except ValueError as exc:
            raise ParseError(line, str(exc), rps_csv) from None
        if not (np.isfinite(rp.x) and np.isfinite(rp.y)):
            raise ParseError(line, "non-finite coordinate", rps_csv)
        rps.append(rp)

    headers = {}
    for line, (rid, ts, day, device, rp_id) in _read_rows(records_csv, RECORDS_HEADER):
        try:
            rid, day, rp_id = int(rid), int(day), int(rp_id)
            stamp = parse_timestamp(ts)
        except ValueError as exc:
            raise ParseError(line, str(exc), records_csv) from None
        if day < 1:
            raise ParseError(line, f"day_index {day} < 1", records_csv)
        if rid in headers:
            raise ParseError(line, f"duplicate record_id {rid}", records_csv)
        headers[rid] = (stamp, day, device, rp_id, line)

    readings = {rid: {} for rid in headers}
    for line, (rid, ap, rssi) in _read_rows(readings_csv, READINGS_HEADER):
        try:
            rid = int(rid)
        except ValueError:
            raise ParseError(line, f"record_id {rid!r} is not an integer", readings_csv) from None
        if not ap:
            raise ParseError(line, "empty ap_id", readings_csv)
        value = _validate_rssi(rssi, line, readings_csv)
        if rid not in readings:
            raise ForeignKeyError(f"{readings_csv}:{line}: reading references unknown record {rid}")
        if ap in readings[rid]:
            raise ParseError(line, f"duplicate reading of {ap} in record {rid}", readings_csv)
        readings[rid][ap] = value

    records = [
        FingerprintRecord(rid, stamp, day, device, rp_id, readings[rid])
        for rid, (stamp, day, device, rp_id, _) in headers.items()
    ]
    db = DynamicDatabase(records, rps)
    for rec in db.records:
        if day_of(rec.timestamp, db.epoch) != rec.day_index:
            line = headers[rec.record_id][4]
            raise ParseError(line, f"day_index {rec.day_index} inconsistent with timestamp", records_csv)
    return db


def load_native_dir(directory):
    d = Path(directory)
    return load_native(d / RECORDS_FILE, d / READINGS_FILE, d / RPS_FILE)


def export_native(db, directory):
    """Write records.csv, readings.csv and rps.csv into ``directory``."""
    d = Path(directory)
    atomic_write_csv(
        d / RECORDS_FILE,
        RECORDS_HEADER,
        (
            (r.record_id, format_timestamp(r.timestamp), r.day_index, r.device_id, r.rp_id)
            for r in db.records
        ),
    )
    atomic_write_csv(
        d / READINGS_FILE,
        READINGS_HEADER,
        ((r.record_id, ap, rssi) for r in db.records for ap, rssi in r.readings.items()),
    )
    atomic_write_csv(
        d / RPS_FILE,
        RPS_HEADER,
        ((rp.rp_id, fmt_float(rp.x), fmt_float(rp.y), rp.floor) for rp in db.rps),
    )
    return [d / RECORDS_FILE, d / READINGS_FILE, d / RPS_FILE]


# UJIIndoorLoc uses LONGITUDE/LATITUDE/PHONEID etc.; accept both spellings.
_WIDE_ALIASES = {
    "x": "x",
    "longitude": "x",
    "y": "y",
    "latitude": "y",
    "floor": "floor",
    "timestamp": "timestamp",
    "device_id": "device_id",
    "phoneid": "device_id",
}
_WIDE_IGNORED = {"buildingid", "spaceid", "relativeposition", "userid"}


def import_wide(path, not_detected_code=100):
    """Import a wide (one column per AP) file such as UJIIndoorLoc.

    Cells equal to ``not_detected_code`` become absent readings.  RPs are the
    distinct (x, y, floor) triples in first-seen order; day indices count
    calendar days from the earliest timestamp.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(1, "missing header", path) from None
        meta = {}
        ap_cols = []
        for j, name in enumerate(header):
            key = name.lower()
            if key in _WIDE_ALIASES:
                meta[_WIDE_ALIASES[key]] = j
            elif key in _WIDE_IGNORED:
                continue
            else:
                if not name:
                    raise ParseError(1, f"empty column name at position {j + 1}", path)
                ap_cols.append((j, name))
        for required in ("x", "y", "floor", "timestamp"):
            if required not in meta:
                raise ParseError(1, f"missing {required} column", path)

        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(lineno, f"expected {len(header)} fields, got {len(row)}", path)
            try:
                x = float(row[meta["x"]])
                y = float(row[meta["y"]])
                floor = int(float(row[meta["floor"]]))
                stamp = parse_timestamp(row[meta["timestamp"]])
            except ValueError as exc:
                raise ParseError(lineno, str(exc), path) from None
            device = row[meta["device_id"]].strip() if "device_id" in meta else "wide"
            readings = {}
            for j, ap in ap_cols:
                cell = row[j].strip()
                try:
                    value = int(float(cell))
                except ValueError:
                    raise ParseError(lineno, f"{ap}: {cell!r} is not a number", path) from None
                if value == not_detected_code:
                    continue
                readings[ap] = _validate_rssi(str(value), lineno, path)
            rows.append((stamp, device, (x, y, floor), readings))

    if not rows:
        raise EmptyDatabase(f"{path} contains no fingerprint rows")
    epoch = min(r[0] for r in rows).date()
    rp_ids = {}
    for _, _, key, _ in rows:
        rp_ids.setdefault(key, len(rp_ids))
    rps = [ReferencePoint(i, k[0], k[1], k[2]) for k, i in rp_ids.items()]
    records = [
        FingerprintRecord(i, stamp, day_of(stamp, epoch), device, rp_ids[key], readings)
        for i, (stamp, device, key, readings) in enumerate(rows)
    ]
    return DynamicDatabase(records, rps, epoch=epoch)


def slice_days(db, first_day, last_day):
    """Records with first_day <= day_index <= last_day; AP index is inherited."""
    if first_day > last_day:
        raise InvalidRange(f"first_day {first_day} > last_day {last_day}")
    kept = [r for r in db.records if first_day <= r.day_index <= last_day]
    return DynamicDatabase(kept, db.rps, ap_index=db.ap_index, epoch=db.epoch)


def to_matrix(db, ap_universe=None):
    """Dense RSSI matrix over ``ap_universe`` with -110 for absent readings."""
    universe = tuple(db.ap_index if ap_universe is None else ap_universe)
    if not universe:
        raise EmptyDatabase("AP universe is empty")
    if not db.records:
        raise EmptyDatabase("database has no records")
    col = {ap: j for j, ap in enumerate(universe)}
    n = len(db.records)
    mat = np.full((n, len(universe)), float(NOT_DETECTED))
    labels = np.empty(n, dtype=np.int64)
    coords = np.empty((n, 2))
    days = np.empty(n, dtype=np.int64)
    dropped = 0
    for i, rec in enumerate(db.records):
        for ap, rssi in rec.readings.items():
            j = col.get(ap)
            if j is None:
                dropped += 1
            else:
                mat[i, j] = rssi
        rp = db.rp(rec.rp_id)
        labels[i] = rec.rp_id
        coords[i] = (rp.x, rp.y)
        days[i] = rec.day_index
    return RssiMatrix(mat, labels, coords, days, universe, dropped)


@dataclass(frozen=True)
class DayAggregate:
    day_index: int
    samples: tuple
    n_visits: int

    @property
    def detection_fraction(self):
        return len(self.samples) / self.n_visits if self.n_visits else 0.0

    @property
    def mean(self):
        return float(np.mean(self.samples)) if self.samples else float(NOT_DETECTED)

    @property
    def std(self):
        return float(np.std(self.samples)) if self.samples else 0.0

    @property
    def min(self):
        return float(min(self.samples)) if self.samples else float(NOT_DETECTED)

    @property
    def max(self):
        return float(max(self.samples)) if self.samples else float(NOT_DETECTED)

    def stats(self):
        return (self.mean, self.std, self.min, self.max, self.detection_fraction)


def day_aggregates(db, ap, rp_id):
    """Per-day detections of ``ap`` at ``rp_id`` for every day in ``db``."""
    if not db.has_ap(ap):
        raise UnknownAp(f"unknown ap {ap!r}")
    db.rp(rp_id)
    by_day = {d: ([], 0) for d in db.days()}
    for rec in db.records:
        if rec.rp_id != rp_id:
            continue
        samples, visits = by_day[rec.day_index]
        rssi = rec.readings.get(ap)
        if rssi is not None:
            samples.append(rssi)
        by_day[rec.day_index] = (samples, visits + 1)
    return [DayAggregate(d, tuple(s), v) for d, (s, v) in sorted(by_day.items())]


def rssi_series(db, ap, rp_id, aggregation="mean"):
    """Per-day RSSI series for one (AP, RP) pair.

    ``mean`` yields ``(day, mean)``, ``raw`` yields ``(day, samples)`` and
    ``stats`` yields ``(day, (mean, std, min, max, detection_fraction))``.
    Days without a detection report -110 and a detection fraction of 0.
    """
    aggs = day_aggregates(db, ap, rp_id)
    if aggregation == "mean":
        return [(a.day_index, a.mean) for a in aggs]
    if aggregation == "raw":
        return [(a.day_index, list(a.samples)) for a in aggs]
    if aggregation == "stats":
        return [(a.day_index, a.stats()) for a in aggs]
    raise ValueError(f"unknown aggregation {aggregation!r}")
