"""Embedded append-only time-series store with the tag/field data model.

Tags are the only query predicates; fields hold the measured values. Storage
is a per-day segmented append-only log of length-prefixed canonical JSON
records (little-endian u32 length), with an in-memory tag index rebuilt on
open. Duplicate (same tags, same timestamp) points resolve last-write-wins at
query time; nothing on disk is ever rewritten.
"""

from __future__ import annotations

import json
import math
import os
import statistics
import struct
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .errors import EmptySeries, InvalidRange, MalformedBatch, UnknownAggregate
from .timeutil import epoch_ms, format_time, from_epoch_ms, parse_time

REQUIRED_TAGS = (
    "device_id",
    "location_general",
    "location_specific",
    "fieldname",
    "system_version",
)

AGGREGATES = ("raw", "mean", "min", "max", "count")

_LEN = struct.Struct("<I")


@dataclass
class DataPoint:
    time: datetime
    tags: dict[str, str]
    fields: dict[str, float | int | bool]

    def canonical_dict(self) -> dict:
        """Flat wire form, key order fixed: time, required tags, extra tags
        (sorted), value, extra fields (sorted)."""
        out: dict = {"time": format_time(self.time)}
        for name in REQUIRED_TAGS:
            out[name] = self.tags[name]
        for name in sorted(set(self.tags) - set(REQUIRED_TAGS)):
            out[name] = self.tags[name]
        out["value"] = self.fields["value"]
        for name in sorted(set(self.fields) - {"value"}):
            out[name] = self.fields[name]
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.canonical_dict(), separators=(",", ":"), ensure_ascii=False)

    def dedup_key(self) -> tuple:
        return (tuple(sorted(self.tags.items())), epoch_ms(self.time))


def parse_wire_point(raw: dict) -> DataPoint:
    """Parse one flat wire object. Raises ValueError with a reason usable as
    a rejection code; tag presence is checked by the store, not here."""
    if not isinstance(raw, dict):
        raise ValueError("malformed_point")
    if "time" not in raw:
        raise ValueError("malformed_time")
    try:
        when = parse_time(raw["time"])
    except ValueError:
        raise ValueError("malformed_time") from None
    tags: dict[str, str] = {}
    fields: dict[str, float | int | bool] = {}
    for key, value in raw.items():
        if key == "time":
            continue
        if key in REQUIRED_TAGS:
            tags[key] = value if isinstance(value, str) else str(value)
        else:
            if isinstance(value, bool) or isinstance(value, (int, float)):
                fields[key] = value
            else:
                raise ValueError(f"bad_field_value:{key}")
    return DataPoint(time=when, tags=tags, fields=fields)


@dataclass
class IngestReceipt:
    accepted: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": [{"index": i, "reason": r} for i, r in self.rejected],
        }


@dataclass
class Series:
    selector: dict[str, str]
    points: list[tuple[datetime, float]]

    @property
    def median_interval_s(self) -> float:
        if len(self.points) < 2:
            raise EmptySeries("median interval needs at least two points")
        deltas = [
            (b[0] - a[0]).total_seconds() for a, b in zip(self.points, self.points[1:])
        ]
        return float(statistics.median(deltas))

    def values(self) -> list[float]:
        return [v for _, v in self.points]

    def to_dict(self) -> dict:
        return {
            "selector": dict(self.selector),
            "points": [{"time": format_time(t), "value": v} for t, v in self.points],
        }


@dataclass
class NyquistResult:
    adequate: bool
    required_interval_s: float

    def to_dict(self) -> dict:
        return {"adequate": self.adequate, "required_interval_s": self.required_interval_s}


class TimeSeriesStore:
    """Append-only store. Many writers and readers may interleave; a point is
    visible to queries no later than the moment its write receipt returns."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._points: list[DataPoint] = []
        self._times: list[int] = []
        self._alive: list[bool] = []
        self._postings: dict[str, dict[str, list[int]]] = {}
        self._by_key: dict[tuple, int] = {}
        self._handles: dict[str, object] = {}
        self._lock = threading.RLock()
        self._replay()

    # -- persistence ---------------------------------------------------------

    def _segment_path(self, day: str) -> Path:
        return self.root / f"{day}.seg"

    def _replay(self) -> None:
        for path in sorted(self.root.glob("*.seg")):
            with open(path, "rb") as fh:
                while True:
                    header = fh.read(_LEN.size)
                    if len(header) < _LEN.size:
                        break
                    (length,) = _LEN.unpack(header)
                    blob = fh.read(length)
                    if len(blob) < length:
                        break  # torn tail write; everything acknowledged is intact
                    point = parse_wire_point(json.loads(blob.decode("utf-8")))
                    self._add_to_memory(point)

    def _append_to_disk(self, point: DataPoint, dirty: set) -> None:
        day = point.time.date().isoformat()
        handle = self._handles.get(day)
        if handle is None:
            handle = open(self._segment_path(day), "ab")
            self._handles[day] = handle
        blob = point.canonical_json().encode("utf-8")
        handle.write(_LEN.pack(len(blob)) + blob)
        dirty.add(handle)

    def flush(self) -> None:
        with self._lock:
            for handle in self._handles.values():
                handle.flush()
                os.fsync(handle.fileno())

    def close(self) -> None:
        with self._lock:
            for handle in self._handles.values():
                handle.flush()
                os.fsync(handle.fileno())
                handle.close()
            self._handles.clear()

    # -- writes --------------------------------------------------------------

    def _add_to_memory(self, point: DataPoint) -> None:
        idx = len(self._points)
        self._points.append(point)
        self._times.append(epoch_ms(point.time))
        self._alive.append(True)
        key = point.dedup_key()
        prior = self._by_key.get(key)
        if prior is not None:
            self._alive[prior] = False  # last write wins
        self._by_key[key] = idx
        for name, value in point.tags.items():
            self._postings.setdefault(name, {}).setdefault(value, []).append(idx)

    def write(self, batch, catalog=None) -> IngestReceipt:
        """Validate and durably append a batch. Partial acceptance: rejected
        entries are enumerated with reasons, accepted ones are fsynced before
        the receipt returns.

        `catalog`, when given, must expose known(device_id) and
        accepts(device_id, fieldname) for schema-membership checks.
        """
        if batch is None or isinstance(batch, (str, bytes, dict)):
            raise MalformedBatch("batch must be a sequence of point objects")
        try:
            entries = list(batch)
        except TypeError:
            raise MalformedBatch("batch must be a sequence of point objects") from None

        receipt = IngestReceipt()
        accepted: list[DataPoint] = []
        for index, raw in enumerate(entries):
            try:
                point = raw if isinstance(raw, DataPoint) else parse_wire_point(raw)
            except ValueError as exc:
                receipt.rejected.append((index, str(exc)))
                continue
            missing = [t for t in REQUIRED_TAGS if t not in point.tags]
            if missing:
                receipt.rejected.append((index, f"missing_tag:{missing[0]}"))
                continue
            if "value" not in point.fields:
                receipt.rejected.append((index, "missing_value"))
                continue
            if catalog is not None:
                if not catalog.known(point.tags["device_id"]):
                    receipt.rejected.append((index, "unknown_device"))
                    continue
                if not catalog.accepts(point.tags["device_id"], point.tags["fieldname"]):
                    receipt.rejected.append((index, "unknown_field"))
                    continue
            accepted.append(point)

        with self._lock:
            dirty: set = set()
            for point in accepted:
                self._append_to_disk(point, dirty)
            for handle in dirty:
                handle.flush()
                os.fsync(handle.fileno())
            for point in accepted:
                self._add_to_memory(point)
        receipt.accepted = len(accepted)
        return receipt

    # -- reads ---------------------------------------------------------------

    def select(self, selector: dict[str, str], t0: datetime, t1: datetime) -> list[DataPoint]:
        """Raw points matching every tag predicate, time in [t0, t1), ordered
        by (time, arrival)."""
        if t0 >= t1:
            raise InvalidRange(f"empty time range: {t0} >= {t1}")
        ms0, ms1 = epoch_ms(t0), epoch_ms(t1)
        with self._lock:
            if selector:
                postings = []
                for name, value in selector.items():
                    lst = self._postings.get(name, {}).get(value)
                    if not lst:
                        return []
                    postings.append(lst)
                candidates = min(postings, key=len)
            else:
                candidates = range(len(self._points))
            out = []
            for idx in candidates:
                if not self._alive[idx]:
                    continue
                when = self._times[idx]
                if not ms0 <= when < ms1:
                    continue
                point = self._points[idx]
                if all(point.tags.get(k) == v for k, v in selector.items()):
                    out.append((when, idx, point))
        out.sort(key=lambda item: (item[0], item[1]))
        return [point for _, _, point in out]

    def query(
        self,
        selector: dict[str, str],
        t0: datetime,
        t1: datetime,
        agg: str = "raw",
        every: float | None = None,
    ) -> Series:
        """Raw points or one aggregate value per window; windows are aligned
        to epoch multiples of `every` and empty windows are omitted."""
        if agg not in AGGREGATES:
            raise UnknownAggregate(f"unknown aggregate: {agg!r}")
        points = self.select(selector, t0, t1)
        if agg == "raw":
            return Series(selector=dict(selector), points=[(p.time, p.fields["value"]) for p in points])
        if every is None or every <= 0:
            raise InvalidRange("aggregate queries require a positive 'every'")
        every_ms = int(round(every * 1000))
        buckets: dict[int, list[float]] = {}
        for point in points:
            window = epoch_ms(point.time) // every_ms
            buckets.setdefault(window, []).append(point.fields["value"])
        reduced: list[tuple[datetime, float]] = []
        for window in sorted(buckets):
            values = buckets[window]
            if agg == "mean":
                value = sum(values) / len(values)
            elif agg == "min":
                value = min(values)
            elif agg == "max":
                value = max(values)
            else:
                value = len(values)
            reduced.append((from_epoch_ms(window * every_ms), value))
        return Series(selector=dict(selector), points=reduced)

    def all_points(self) -> list[DataPoint]:
        """Snapshot of every live point, time-ordered (for oracles/export)."""
        with self._lock:
            items = [
                (self._times[i], i, self._points[i])
                for i in range(len(self._points))
                if self._alive[i]
            ]
        items.sort(key=lambda item: (item[0], item[1]))
        return [point for _, _, point in items]

    def count(self) -> int:
        with self._lock:
            return sum(self._alive)

    def earliest_time(self, selector: dict[str, str] | None = None) -> datetime | None:
        with self._lock:
            best: int | None = None
            for idx in range(len(self._points)):
                if not self._alive[idx]:
                    continue
                if selector and not all(
                    self._points[idx].tags.get(k) == v for k, v in selector.items()
                ):
                    continue
                if best is None or self._times[idx] < best:
                    best = self._times[idx]
        return from_epoch_ms(best) if best is not None else None


def align(series_list: list[Series]) -> tuple[list[Series], float]:
    """Bring several series onto one time base at the coarsest interval.

    The common interval is the max of the series' median intervals, rounded
    up to whole seconds; every series is mean-binned into epoch-aligned
    windows of that width and restricted to windows populated in all inputs,
    so the outputs share identical timestamps and length.
    """
    if len(series_list) < 2:
        raise EmptySeries("alignment needs at least two non-empty series")
    for series in series_list:
        if len(series.points) < 2:
            raise EmptySeries("every series must have at least two points")
    common_s = float(math.ceil(max(s.median_interval_s for s in series_list)))
    if common_s <= 0:
        raise EmptySeries("series interval is not positive")
    common_ms = int(common_s * 1000)

    binned: list[dict[int, float]] = []
    for series in series_list:
        buckets: dict[int, list[float]] = {}
        for when, value in series.points:
            buckets.setdefault(epoch_ms(when) // common_ms, []).append(value)
        binned.append({w: sum(v) / len(v) for w, v in buckets.items()})

    shared = sorted(set.intersection(*(set(b) for b in binned)))
    aligned = [
        Series(
            selector=dict(series.selector),
            points=[(from_epoch_ms(w * common_ms), binned[i][w]) for w in shared],
        )
        for i, series in enumerate(series_list)
    ]
    return aligned, common_s


def nyquist_check(series: Series, behavior_period_s: float) -> NyquistResult:
    """Sampling is adequate when the series' median interval is at most half
    the period of the fastest behavior of interest."""
    if behavior_period_s <= 0:
        raise InvalidRange("behavior_period_s must be positive")
    if len(series.points) < 2:
        raise EmptySeries("nyquist check needs at least two points")
    required = behavior_period_s / 2.0
    return NyquistResult(
        adequate=series.median_interval_s <= required,
        required_interval_s=required,
    )
