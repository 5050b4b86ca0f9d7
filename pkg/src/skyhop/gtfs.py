"""Minimal GTFS ingestion.

Only the parts of a feed the planner needs are read: ``stops.txt``
(positions), ``trips.txt`` (trip ids) and ``stop_times.txt`` (the
timetable).  Columns are resolved by header name, unknown columns are
ignored.  Arrival times past midnight ("25:10:00") are legal GTFS and
parse to more than 86400 seconds.

Each trip is clipped to the query window and bounding box by keeping its
longest contiguous run of in-window, in-box stop events (earliest run on
ties); trips with fewer than two surviving stop events are dropped.
Timestamps are shifted so the window start is second 0.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .errors import GtfsError
from .geo import BoundingBox, GeoPoint
from .network import TimedStop, TransitTrip


def parse_gtfs_time(text: str) -> int:
    """Parse ``HH:MM:SS`` into seconds, allowing hours of 24 or more."""
    parts = text.strip().split(":")
    if len(parts) != 3:
        raise ValueError(f"bad time {text!r}")
    h, m, s = (int(p) for p in parts)
    if h < 0 or not 0 <= m < 60 or not 0 <= s < 60:
        raise ValueError(f"bad time {text!r}")
    return h * 3600 + m * 60 + s


def _open_table(gtfs_dir: Path, name: str):
    path = gtfs_dir / name
    if not path.is_file():
        raise GtfsError(f"missing GTFS file: {path}")
    return path


def _read_rows(path: Path, required: tuple[str, ...]) -> list[tuple[int, dict]]:
    """Read a GTFS csv, returning (line_number, row) pairs."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise GtfsError(f"{path.name}: empty file")
        for col in required:
            if col not in reader.fieldnames:
                raise GtfsError(f"{path.name}: missing column {col!r}")
        rows = []
        for line, row in enumerate(reader, start=2):
            rows.append((line, row))
        return rows


def load_timetable(
    gtfs_dir: str | Path,
    bbox: BoundingBox,
    window: tuple[float, float],
) -> list[TransitTrip]:
    """Load trips from a GTFS directory, clipped to ``bbox`` and ``window``.

    ``window`` is (start, end) in seconds since midnight, closed on both
    ends.  Returned trips carry timestamps in seconds since the window
    start and are sorted by trip id.
    """
    gtfs_dir = Path(gtfs_dir)
    w0, w1 = window
    if w1 <= w0:
        raise GtfsError(f"empty query window: {window!r}")

    stops: dict[str, GeoPoint] = {}
    for line, row in _read_rows(_open_table(gtfs_dir, "stops.txt"), ("stop_id", "stop_lat", "stop_lon")):
        try:
            stops[row["stop_id"]] = GeoPoint(float(row["stop_lat"]), float(row["stop_lon"]))
        except (TypeError, ValueError) as exc:
            raise GtfsError(f"stops.txt line {line}: {exc}") from exc

    trip_ids: set[str] = set()
    for line, row in _read_rows(_open_table(gtfs_dir, "trips.txt"), ("trip_id",)):
        if not row["trip_id"]:
            raise GtfsError(f"trips.txt line {line}: empty trip_id")
        trip_ids.add(row["trip_id"])

    # (time, stop, line) events grouped per trip, ordered by stop_sequence.
    events: dict[str, list[tuple[int, int, str, int]]] = {}
    for line, row in _read_rows(
        _open_table(gtfs_dir, "stop_times.txt"),
        ("trip_id", "arrival_time", "stop_id", "stop_sequence"),
    ):
        tid = row["trip_id"]
        if tid not in trip_ids:
            raise GtfsError(f"stop_times.txt line {line}: unknown trip {tid!r}")
        if row["stop_id"] not in stops:
            raise GtfsError(f"stop_times.txt line {line}: unknown stop {row['stop_id']!r}")
        try:
            seq = int(row["stop_sequence"])
            t = parse_gtfs_time(row["arrival_time"])
        except ValueError as exc:
            raise GtfsError(f"stop_times.txt line {line}: {exc}") from exc
        events.setdefault(tid, []).append((seq, t, row["stop_id"], line))

    trips: list[TransitTrip] = []
    for tid in sorted(events):
        rows = sorted(events[tid])
        seen_seq = set()
        for seq, t, _sid, line in rows:
            if seq in seen_seq:
                raise GtfsError(f"stop_times.txt line {line}: duplicate stop_sequence {seq} in trip {tid!r}")
            seen_seq.add(seq)
        for (_, ta, _, _), (_, tb, _, line) in zip(rows, rows[1:]):
            if tb <= ta:
                raise GtfsError(
                    f"stop_times.txt line {line}: non-increasing time in trip {tid!r}"
                )

        keep = [w0 <= t <= w1 and bbox.contains(stops[sid]) for _, t, sid, _ in rows]
        lo, hi = _longest_run(keep)
        if hi - lo < 2:
            continue
        timed = [
            TimedStop(i, stops[rows[lo + i][2]], float(rows[lo + i][1] - w0))
            for i in range(hi - lo)
        ]
        trips.append(TransitTrip(tid, timed))
    return trips


def _longest_run(mask: list[bool]) -> tuple[int, int]:
    """Bounds [lo, hi) of the longest run of True values (earliest on ties)."""
    best = (0, 0)
    i = 0
    while i < len(mask):
        if mask[i]:
            j = i
            while j < len(mask) and mask[j]:
                j += 1
            if j - i > best[1] - best[0]:
                best = (i, j)
            i = j
        else:
            i += 1
    return best
