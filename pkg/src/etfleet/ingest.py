"""Trajectory parsing, trip extraction, demand curves, synthetic data.

The raw record format is one comma-separated row per GPS status sample:
``taxi_id,timestamp,longitude,latitude,load`` with the timestamp encoded
YYYYMMDDHHMMSS and load a 0/1 occupancy flag. Coordinates may be empty
(both fields) on rows where the receiver had no fix.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, RecordParseError
from .geo import KM_PER_DEG_LAT, KM_PER_DEG_LON

TIMESTAMP_FMT = "%Y%m%d%H%M%S"

# Trips shorter than this are discarded as invalid.
MIN_TRIP_SECONDS = 120.0
# Maximum gap when substituting coordinates for a boundary row without a fix.
COORD_WINDOW_SECONDS = 180.0


@dataclass(frozen=True)
class TaxiRecord:
    """One GPS status row. lon/lat are None when the row has no fix."""

    taxi_id: int
    timestamp: datetime
    lon: float | None
    lat: float | None
    load: int

    @property
    def has_coords(self) -> bool:
        return self.lon is not None


def parse_record(line: str, line_no: int = 0) -> TaxiRecord:
    """Decode one record row; raises RecordParseError with the line number."""
    fields = line.strip().split(",")
    if len(fields) != 5:
        raise RecordParseError(line_no, f"expected 5 fields, got {len(fields)}")
    raw_id, raw_ts, raw_lon, raw_lat, raw_load = fields
    try:
        taxi_id = int(raw_id)
    except ValueError:
        raise RecordParseError(line_no, f"invalid taxi id {raw_id!r}")
    try:
        ts = datetime.strptime(raw_ts, TIMESTAMP_FMT)
    except ValueError:
        raise RecordParseError(line_no, f"invalid timestamp {raw_ts!r}")
    if (raw_lon == "") != (raw_lat == ""):
        raise RecordParseError(line_no, "longitude/latitude must be both present or both empty")
    if raw_lon == "":
        lon = lat = None
    else:
        try:
            lon, lat = float(raw_lon), float(raw_lat)
        except ValueError:
            raise RecordParseError(line_no, f"invalid coordinates {raw_lon!r},{raw_lat!r}")
        if not -180.0 <= lon <= 180.0 or not -90.0 <= lat <= 90.0:
            raise RecordParseError(line_no, f"coordinates out of range {lon},{lat}")
    if raw_load not in ("0", "1"):
        raise RecordParseError(line_no, f"invalid load {raw_load!r}")
    return TaxiRecord(taxi_id, ts, lon, lat, int(raw_load))


def serialize_record(rec: TaxiRecord) -> str:
    """Inverse of parse_record; shortest-repr floats, empty fields for no fix."""
    lon = "" if rec.lon is None else repr(rec.lon)
    lat = "" if rec.lat is None else repr(rec.lat)
    return f"{rec.taxi_id},{rec.timestamp.strftime(TIMESTAMP_FMT)},{lon},{lat},{rec.load}"


def read_records(path: str | Path) -> list[TaxiRecord]:
    """Read a records CSV (no header); malformed rows fail with line numbers."""
    records = []
    try:
        with open(path) as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                records.append(parse_record(line, line_no))
    except OSError as e:
        raise DataError(f"cannot read records file {path}: {e}") from e
    return records


def write_records(records: Iterable[TaxiRecord], path: str | Path) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(serialize_record(rec) + "\n")


@dataclass(frozen=True)
class Trip:
    """An extracted origin-destination journey, coordinates in degrees."""

    taxi_id: int
    start_time: datetime
    end_time: datetime
    o_lon: float
    o_lat: float
    d_lon: float
    d_lat: float

    @property
    def duration_s(self) -> float:
        return (self.end_time - self.start_time).total_seconds()


@dataclass
class TripExtraction:
    trips: list[Trip]
    excluded: int
    transitions: int  # observed load 0->1 transitions; len(trips) + excluded


def _nearest_fix(fix_times: list[datetime], fixes: list[tuple[float, float]],
                 when: datetime) -> tuple[float, float] | None:
    """Coordinates of the fix nearest in time to `when`, within the window.

    Equidistant neighbours resolve to the earlier fix.
    """
    if not fix_times:
        return None
    i = bisect.bisect_left(fix_times, when)
    best = None
    best_dt = timedelta(seconds=COORD_WINDOW_SECONDS)
    if i > 0 and when - fix_times[i - 1] <= best_dt:
        best = fixes[i - 1]
        best_dt = when - fix_times[i - 1]
    if i < len(fix_times) and fix_times[i] - when < best_dt:
        best = fixes[i]
    return best


def extract_trips(records: Iterable[TaxiRecord]) -> TripExtraction:
    """Extract complete OD trips from status records.

    A trip opens at each load 0->1 transition and closes at the next 1->0.
    Boundary rows without a fix borrow the nearest fix of the same taxi
    within 3 minutes, otherwise the trip is excluded; trips shorter than
    2 minutes are excluded. A trailing 0->1 with no closing transition and
    a leading in-progress trip are discarded per the complete-OD rule.
    Taxis are processed in id order so the result is deterministic.
    """
    by_taxi: dict[int, list[TaxiRecord]] = {}
    for rec in records:
        by_taxi.setdefault(rec.taxi_id, []).append(rec)

    trips: list[Trip] = []
    excluded = 0
    transitions = 0
    for taxi_id in sorted(by_taxi):
        rows = sorted(by_taxi[taxi_id], key=lambda r: r.timestamp)
        deduped: list[TaxiRecord] = []
        for r in rows:
            if deduped and r.timestamp == deduped[-1].timestamp:
                continue
            deduped.append(r)
        fix_times = [r.timestamp for r in deduped if r.has_coords]
        fixes = [(r.lon, r.lat) for r in deduped if r.has_coords]

        open_row: TaxiRecord | None = None
        prev_load: int | None = None
        for r in deduped:
            if prev_load == 0 and r.load == 1:
                transitions += 1
                open_row = r
            elif prev_load == 1 and r.load == 0 and open_row is not None:
                trip = _close_trip(open_row, r, fix_times, fixes)
                if trip is None:
                    excluded += 1
                else:
                    trips.append(trip)
                open_row = None
            prev_load = r.load
        if open_row is not None:
            excluded += 1  # horizon-truncated, no destination observed
    return TripExtraction(trips=trips, excluded=excluded, transitions=transitions)


def _close_trip(open_row: TaxiRecord, close_row: TaxiRecord,
                fix_times: list[datetime], fixes: list[tuple[float, float]]) -> Trip | None:
    duration = (close_row.timestamp - open_row.timestamp).total_seconds()
    if duration < MIN_TRIP_SECONDS:
        return None
    origin = (open_row.lon, open_row.lat) if open_row.has_coords \
        else _nearest_fix(fix_times, fixes, open_row.timestamp)
    dest = (close_row.lon, close_row.lat) if close_row.has_coords \
        else _nearest_fix(fix_times, fixes, close_row.timestamp)
    if origin is None or dest is None:
        return None
    return Trip(open_row.taxi_id, open_row.timestamp, close_row.timestamp,
                origin[0], origin[1], dest[0], dest[1])


@dataclass
class DemandCurve:
    """Hourly ride-request counts from a horizon start."""

    horizon_start: datetime
    counts: list[int]

    @property
    def bins(self) -> list[tuple[int, int]]:
        return list(enumerate(self.counts))

    def count_at(self, hour_index: int) -> int:
        if 0 <= hour_index < len(self.counts):
            return self.counts[hour_index]
        return 0

    @property
    def total(self) -> int:
        return sum(self.counts)


def build_demand_curve(trips: Sequence[Trip], horizon_start: datetime,
                       n_hours: int | None = None) -> DemandCurve:
    """Count trip starts into 60-minute bins from horizon_start."""
    offsets = []
    for t in trips:
        dt = (t.start_time - horizon_start).total_seconds()
        if dt < 0:
            raise ValueError(f"trip at {t.start_time} starts before horizon {horizon_start}")
        offsets.append(int(dt // 3600))
    if n_hours is None:
        n_hours = max(offsets) + 1 if offsets else 0
    counts = [0] * n_hours
    for h in offsets:
        if h >= n_hours:
            raise ValueError(f"trip in hour {h} falls outside the {n_hours}-hour horizon")
        counts[h] += 1
    return DemandCurve(horizon_start=horizon_start, counts=counts)


TRIPS_HEADER = ["taxi_id", "start_time", "end_time", "o_lon", "o_lat", "d_lon", "d_lat"]
DEMAND_HEADER = ["hour_index", "count"]
ISO_FMT = "%Y-%m-%dT%H:%M:%S"


def write_trips_csv(trips: Iterable[Trip], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRIPS_HEADER)
        for t in trips:
            w.writerow([t.taxi_id, t.start_time.strftime(ISO_FMT), t.end_time.strftime(ISO_FMT),
                        repr(t.o_lon), repr(t.o_lat), repr(t.d_lon), repr(t.d_lat)])


def read_trips_csv(path: str | Path) -> list[Trip]:
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataError(f"cannot read trips file {path}: {e}") from e
    if not rows or rows[0] != TRIPS_HEADER:
        raise DataError(f"trips file {path} must start with header {','.join(TRIPS_HEADER)}")
    trips = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 7:
            raise DataError(f"trips file {path} line {i}: expected 7 fields")
        try:
            trips.append(Trip(int(row[0]),
                              datetime.strptime(row[1], ISO_FMT),
                              datetime.strptime(row[2], ISO_FMT),
                              float(row[3]), float(row[4]), float(row[5]), float(row[6])))
        except ValueError as e:
            raise DataError(f"trips file {path} line {i}: {e}") from e
    return trips


def write_demand_csv(curve: DemandCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(DEMAND_HEADER)
        for hour, count in curve.bins:
            w.writerow([hour, count])


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic trajectory generator.

    hourly_trips[i] is the exact number of trips starting in hour i; start
    seconds are sampled uniformly within the hour. Origins and destinations
    are drawn from a seeded mixture of spatial Gaussian hotspots clipped to
    the extent, so origin clustering has non-trivial K-means structure.
    """

    n_taxis: int
    horizon_start: datetime
    hourly_trips: Sequence[int]
    extent: tuple[float, float, float, float] = (116.20, 39.75, 116.55, 40.05)  # lon/lat box
    n_hotspots: int = 6
    hotspot_sigma_km: float = 2.0
    speed_kmh: float = 30.0

    def validate(self) -> None:
        if self.n_taxis < 1:
            raise ConfigError(f"synthetic spec needs at least 1 taxi, got {self.n_taxis}")
        if not self.hourly_trips or len(self.hourly_trips) < 1:
            raise ConfigError("synthetic spec needs a non-empty hourly demand profile")
        if any(c < 0 for c in self.hourly_trips):
            raise ConfigError("hourly demand counts must be >= 0")
        lon_min, lat_min, lon_max, lat_max = self.extent
        if lon_min >= lon_max or lat_min >= lat_max:
            raise ConfigError(f"degenerate extent {self.extent}")
        if self.speed_kmh <= 0:
            raise ConfigError(f"speed must be positive, got {self.speed_kmh}")
        if self.n_hotspots < 1:
            raise ConfigError(f"need at least one hotspot, got {self.n_hotspots}")


def generate_synthetic(spec: SyntheticSpec, seed: int) -> list[TaxiRecord]:
    """Deterministic synthetic record stream; pure function of (spec, seed).

    Each taxi emits an idle row at the horizon start, then a load-1 row at
    every trip origin and a load-0 row at the destination, which is exactly
    the boundary structure extract_trips consumes. Trip durations follow the
    Manhattan distance at the configured speed, floored at 150 s so no generated
    trip falls under the validity cutoff. A trip is dropped only when every
    taxi is still busy at its start time (rare unless the fleet saturates).
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    lon_min, lat_min, lon_max, lat_max = spec.extent
    mid_lat = 0.5 * (lat_min + lat_max)
    km_per_lon = math.cos(math.radians(mid_lat)) * KM_PER_DEG_LON

    pad_lon = 0.1 * (lon_max - lon_min)
    pad_lat = 0.1 * (lat_max - lat_min)
    hot_lon = rng.uniform(lon_min + pad_lon, lon_max - pad_lon, spec.n_hotspots)
    hot_lat = rng.uniform(lat_min + pad_lat, lat_max - pad_lat, spec.n_hotspots)
    sig_lon = spec.hotspot_sigma_km / km_per_lon
    sig_lat = spec.hotspot_sigma_km / KM_PER_DEG_LAT

    def draw_point() -> tuple[float, float]:
        h = int(rng.integers(spec.n_hotspots))
        lon = float(np.clip(rng.normal(hot_lon[h], sig_lon), lon_min, lon_max))
        lat = float(np.clip(rng.normal(hot_lat[h], sig_lat), lat_min, lat_max))
        return lon, lat

    free_at = [spec.horizon_start] * spec.n_taxis
    records: list[TaxiRecord] = []
    for taxi_id in range(spec.n_taxis):
        lon, lat = draw_point()
        records.append(TaxiRecord(taxi_id, spec.horizon_start, lon, lat, 0))

    for hour, n_trips in enumerate(spec.hourly_trips):
        if n_trips == 0:
            continue
        offsets = np.sort(rng.integers(1, 3600, n_trips))
        for off in offsets:
            start = spec.horizon_start + timedelta(hours=hour, seconds=int(off))
            o = draw_point()
            d = draw_point()
            dist_km = abs(d[0] - o[0]) * km_per_lon + abs(d[1] - o[1]) * KM_PER_DEG_LAT
            duration = max(150.0, dist_km / spec.speed_kmh * 3600.0)
            end = start + timedelta(seconds=int(round(duration)))
            idle = [i for i in range(spec.n_taxis) if free_at[i] <= start]
            if not idle:
                continue
            taxi = idle[int(rng.integers(len(idle)))]
            records.append(TaxiRecord(taxi, start, o[0], o[1], 1))
            records.append(TaxiRecord(taxi, end, d[0], d[1], 0))
            free_at[taxi] = end + timedelta(seconds=60)

    records.sort(key=lambda r: (r.timestamp, r.taxi_id, r.load))
    return records
