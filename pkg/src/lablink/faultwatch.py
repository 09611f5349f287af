"""Automated routines that locate invalid data: silent devices, counter-gap
partial loss, recurring night cutoffs, out-of-spec values, and consensus
outliers against co-located neighbors.

Detectors are pure given their input window and the store snapshot; the sweep
runs them all, persists new reports, and is idempotent per
(device, fieldname, fault class, window).
"""

from __future__ import annotations

import logging
import math
import threading
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta
from zoneinfo import ZoneInfo

import numpy as np

from .devices import Device, DeviceRegistry
from .errors import (
    InsufficientHistory,
    LabLinkError,
    NoCounterField,
    NoExpectedInterval,
    NoRangeSpec,
    TooFewNeighbors,
    TooFewPoints,
)
from .floorplan import FloorPlan, FloorplanStore
from .registry import new_id
from .timeutil import epoch_ms, format_time, utcnow

log = logging.getLogger(__name__)

MAD_CONSISTENCY = 1.4826

FAULT_CLASSES = ("silent", "partial_loss", "night_cutoff", "out_of_range", "consensus_outlier")


@dataclass
class FaultwatchConfig:
    """Detection thresholds; every knob is overridable from the service
    config under faultwatch.*."""

    silent_min_gap_intervals: float = 3.0
    silent_severity_saturation_intervals: float = 10.0
    partial_loss_threshold: float = 0.05
    counter_modulus: int = 256
    night_presence_max: float = 0.1
    night_baseline_min: float = 0.8
    night_min_block_hours: int = 2
    night_trailing_days: int = 14
    out_of_range_threshold: float = 0.01
    consensus_z_threshold: float = 3.5
    consensus_bin_fraction: float = 0.75
    consensus_radius_cells: float = 10.0
    mad_epsilon: float = 1e-9
    sweep_lookback_s: float = 86400.0


@dataclass
class FaultReport:
    report_id: str
    device_id: str
    fieldname: str
    fault_class: str
    window_start: datetime
    window_end: datetime
    severity: float
    evidence: dict[str, float]

    def dedup_key(self) -> tuple:
        return (
            self.device_id,
            self.fieldname,
            self.fault_class,
            epoch_ms(self.window_start),
            epoch_ms(self.window_end),
        )

    def to_dict(self) -> dict:
        return {
            "report_id": self.report_id,
            "device_id": self.device_id,
            "fieldname": self.fieldname,
            "fault_class": self.fault_class,
            "window_start": format_time(self.window_start),
            "window_end": format_time(self.window_end),
            "severity": self.severity,
            "evidence": dict(self.evidence),
        }


class FaultStore:
    """Persisted reports with duplicate suppression across sweeps."""

    def __init__(self):
        self._reports: list[FaultReport] = []
        self._seen: set[tuple] = set()
        self._lock = threading.RLock()

    def add(self, report: FaultReport) -> bool:
        with self._lock:
            key = report.dedup_key()
            if key in self._seen:
                return False
            self._seen.add(key)
            self._reports.append(report)
            return True

    def all(self) -> list[FaultReport]:
        return list(self._reports)

    def search(self, since: datetime | None = None, fault_class: str | None = None) -> list[FaultReport]:
        out = []
        for report in self._reports:
            if since is not None and report.window_end < since:
                continue
            if fault_class is not None and report.fault_class != fault_class:
                continue
            out.append(report)
        return out


def wrapped_counter_loss(counters: list[int], modulus: int) -> tuple[int, int, float]:
    """expected/received/loss_rate from a counter sequence with wraparound.

    Each consecutive pair contributes ((c2 - c1) mod modulus) expected
    transmissions; a zero delta is a retransmitted duplicate and counts as
    one. received is the observed transition count (n - 1).
    """
    if modulus <= 1:
        raise ValueError("counter modulus must be > 1")
    if len(counters) < 2:
        raise TooFewPoints("need at least two counter samples")
    expected = 0
    for current, nxt in zip(counters, counters[1:]):
        delta = (nxt - current) % modulus
        expected += delta if delta != 0 else 1
    received = len(counters) - 1
    return expected, received, 1.0 - received / expected


class FaultWatch:
    def __init__(
        self,
        store,
        devices: DeviceRegistry,
        floorplans: FloorplanStore,
        config: FaultwatchConfig | None = None,
        local_tz: str = "UTC",
    ):
        self.store = store
        self.devices = devices
        self.floorplans = floorplans
        self.config = config or FaultwatchConfig()
        self.local_tz = local_tz
        self.reports = FaultStore()

    # -- detectors -------------------------------------------------------

    def detect_silent(self, device: Device, window: tuple[datetime, datetime]) -> FaultReport | None:
        """Report a device that produced nothing over a window at least
        3x its fastest expected interval."""
        intervals = [
            spec.expected_interval_s
            for spec in device.known_fields.values()
            if spec.expected_interval_s
        ]
        if not intervals:
            raise NoExpectedInterval(f"device {device.device_id} declares no expected interval")
        interval = min(intervals)
        fieldname = min(
            (f for f, s in device.known_fields.items() if s.expected_interval_s == interval),
        )
        t0, t1 = window
        gap_s = (t1 - t0).total_seconds()
        if gap_s < self.config.silent_min_gap_intervals * interval:
            return None
        if self.store.select({"device_id": device.device_id}, t0, t1):
            return None
        saturation = self.config.silent_severity_saturation_intervals * interval
        return FaultReport(
            report_id=new_id(),
            device_id=device.device_id,
            fieldname=fieldname,
            fault_class="silent",
            window_start=t0,
            window_end=t1,
            severity=min(1.0, gap_s / saturation),
            evidence={"gap_s": gap_s, "expected_interval_s": interval},
        )

    def detect_partial_loss(
        self,
        device: Device,
        fieldname: str,
        window: tuple[datetime, datetime],
        counter_modulus: int | None = None,
    ) -> FaultReport | None:
        """Estimate in-transit loss from gaps in the per-point counter."""
        modulus = counter_modulus or device.counter_modulus or self.config.counter_modulus
        points = self.store.select(
            {"device_id": device.device_id, "fieldname": fieldname}, *window
        )
        if len(points) < 2:
            raise TooFewPoints(
                f"{device.device_id}/{fieldname}: {len(points)} points in window"
            )
        counters = []
        for point in points:
            counter = point.fields.get("counter")
            if counter is None or isinstance(counter, bool):
                raise NoCounterField(f"{device.device_id}/{fieldname} lacks a counter field")
            counters.append(int(counter))
        expected, received, loss_rate = wrapped_counter_loss(counters, modulus)
        if loss_rate <= self.config.partial_loss_threshold:
            return None
        return FaultReport(
            report_id=new_id(),
            device_id=device.device_id,
            fieldname=fieldname,
            fault_class="partial_loss",
            window_start=window[0],
            window_end=window[1],
            severity=min(1.0, loss_rate),
            evidence={"expected": expected, "received": received, "loss_rate": loss_rate},
        )

    def detect_night_cutoff(
        self,
        device: Device,
        fieldname: str,
        trailing_days: int | None = None,
        local_tz: str | None = None,
        now: datetime | None = None,
    ) -> FaultReport | None:
        """Find a recurring local-hour block where this device goes dark
        while the rest of the fleet keeps reporting."""
        days = trailing_days or self.config.night_trailing_days
        if days < 7:
            raise InsufficientHistory(f"need at least 7 trailing days, got {days}")
        now = now or utcnow()
        t0 = now - timedelta(days=days)
        earliest = self.store.earliest_time({"fieldname": fieldname})
        # one-day slack: a fleet whose first day is partial still has the
        # recurring-pattern history this detector needs
        if earliest is None or earliest > t0 + timedelta(days=1):
            raise InsufficientHistory(
                f"store holds less than {days} days of {fieldname} history"
            )
        tz = ZoneInfo(local_tz or self.local_tz)

        def presence(device_id: str) -> np.ndarray | None:
            points = self.store.select(
                {"device_id": device_id, "fieldname": fieldname}, t0, now
            )
            if not points:
                return None
            seen: set[tuple[str, int]] = set()
            for point in points:
                local = point.time.astimezone(tz)
                seen.add((local.date().isoformat(), local.hour))
            ratios = np.zeros(24)
            for _, hour in seen:
                ratios[hour] += 1
            return ratios / days

        mine = presence(device.device_id)
        if mine is None:
            return None  # a fully dark device is the silent detector's case
        peers = []
        for other in self.devices.active():
            if other.device_id == device.device_id or fieldname not in other.known_fields:
                continue
            ratios = presence(other.device_id)
            if ratios is not None:
                peers.append(ratios)
        if not peers:
            return None
        baseline = np.mean(peers, axis=0)

        flagged = (mine < self.config.night_presence_max) & (
            baseline > self.config.night_baseline_min
        )
        block = _longest_circular_run(flagged)
        if block is None or block[1] < self.config.night_min_block_hours:
            return None
        start, length = block
        hours = [(start + i) % 24 for i in range(length)]
        mean_presence = float(np.mean(mine[hours]))
        mean_baseline = float(np.mean(baseline[hours]))
        return FaultReport(
            report_id=new_id(),
            device_id=device.device_id,
            fieldname=fieldname,
            fault_class="night_cutoff",
            window_start=t0,
            window_end=now,
            severity=min(1.0, max(0.0, 1.0 - mean_presence)),
            evidence={
                "block_start_hour": start,
                "block_end_hour": (start + length) % 24,
                "block_hours": length,
                "mean_presence": mean_presence,
                "mean_baseline": mean_baseline,
            },
        )

    def detect_out_of_range(
        self, device: Device, fieldname: str, window: tuple[datetime, datetime]
    ) -> FaultReport | None:
        """Report when more than the tolerated fraction of points fall
        outside the field's declared valid range."""
        spec = device.known_fields.get(fieldname)
        if spec is None or (spec.min_valid is None and spec.max_valid is None):
            raise NoRangeSpec(f"{device.device_id}/{fieldname} declares no valid range")
        points = self.store.select(
            {"device_id": device.device_id, "fieldname": fieldname}, *window
        )
        if not points:
            return None
        outliers = 0
        for point in points:
            value = point.fields["value"]
            if spec.min_valid is not None and value < spec.min_valid:
                outliers += 1
            elif spec.max_valid is not None and value > spec.max_valid:
                outliers += 1
        fraction = outliers / len(points)
        if fraction <= self.config.out_of_range_threshold:
            return None
        return FaultReport(
            report_id=new_id(),
            device_id=device.device_id,
            fieldname=fieldname,
            fault_class="out_of_range",
            window_start=window[0],
            window_end=window[1],
            severity=min(1.0, fraction),
            evidence={
                "points": len(points),
                "outliers": outliers,
                "outlier_fraction": fraction,
            },
        )

    def detect_consensus_outlier(
        self,
        plan: FloorPlan,
        fieldname: str,
        window: tuple[datetime, datetime],
        radius_cells: float | None = None,
        z_threshold: float | None = None,
    ) -> list[FaultReport]:
        """Flag devices whose values persistently deviate from the robust
        consensus (median/MAD) of their same-field neighbors. Catches
        inverted sensors, stuck values, and constant offsets without
        reacting to fleet-wide shifts."""
        radius = radius_cells if radius_cells is not None else self.config.consensus_radius_cells
        threshold = z_threshold if z_threshold is not None else self.config.consensus_z_threshold
        candidates = [
            d
            for d in self.devices.on_plan(plan.plan_id)
            if d.active and fieldname in d.known_fields
        ]
        if len(candidates) < 3:
            raise TooFewNeighbors(
                f"plan {plan.name} has {len(candidates)} devices with {fieldname}"
            )

        t0, t1 = window
        raw: list[list[tuple[int, float]]] = []
        medians: list[float] = []
        for device in candidates:
            points = self.store.select(
                {"device_id": device.device_id, "fieldname": fieldname}, t0, t1
            )
            raw.append([(epoch_ms(p.time), float(p.fields["value"])) for p in points])
            if len(points) >= 2:
                deltas = [
                    (b.time - a.time).total_seconds() for a, b in zip(points, points[1:])
                ]
                medians.append(float(np.median(deltas)))
        if not medians:
            return []
        common_ms = int(math.ceil(max(max(medians), 1.0))) * 1000

        bins: set[int] = set()
        per_device: list[dict[int, float]] = []
        for series in raw:
            buckets: dict[int, list[float]] = {}
            for when, value in series:
                buckets.setdefault(when // common_ms, []).append(value)
            means = {w: sum(v) / len(v) for w, v in buckets.items()}
            per_device.append(means)
            bins.update(means)
        ordered = sorted(bins)
        index = {w: i for i, w in enumerate(ordered)}
        matrix = np.full((len(candidates), len(ordered)), np.nan)
        for row, means in enumerate(per_device):
            for w, value in means.items():
                matrix[row, index[w]] = value

        centers = [plan.cell_center(d.cell) for d in candidates]
        reports = []
        for i, device in enumerate(candidates):
            neighbor_rows = [
                j
                for j in range(len(candidates))
                if j != i
                and math.dist(centers[i], centers[j]) <= radius * plan.cell_size_m
            ]
            if len(neighbor_rows) < 2:
                continue
            neighbors = matrix[neighbor_rows]
            mine = matrix[i]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                med = np.nanmedian(neighbors, axis=0)
                mad = np.nanmedian(np.abs(neighbors - med), axis=0)
            enough = np.sum(np.isfinite(neighbors), axis=0) >= 2
            valid = np.isfinite(mine) & np.isfinite(med) & enough
            if not valid.any():
                continue
            z = np.abs(mine[valid] - med[valid]) / (
                MAD_CONSISTENCY * mad[valid] + self.config.mad_epsilon
            )
            exceed_fraction = float(np.mean(z > threshold))
            if exceed_fraction < self.config.consensus_bin_fraction:
                continue
            reports.append(
                FaultReport(
                    report_id=new_id(),
                    device_id=device.device_id,
                    fieldname=fieldname,
                    fault_class="consensus_outlier",
                    window_start=t0,
                    window_end=t1,
                    severity=exceed_fraction,
                    evidence={
                        "bins": int(valid.sum()),
                        "exceeding": int(np.sum(z > threshold)),
                        "exceed_fraction": exceed_fraction,
                        "peak_robust_z": float(np.max(z)),
                        "neighbors": len(neighbor_rows),
                    },
                )
            )
        return reports

    # -- sweep -------------------------------------------------------------

    def sweep(self, now: datetime | None = None) -> list[FaultReport]:
        """Run every detector over all active devices; persist and return the
        reports not already known. Per-detector preconditions that fail are
        logged and skipped, never fatal."""
        now = now or utcnow()
        window = (now - timedelta(seconds=self.config.sweep_lookback_s), now)
        found: list[FaultReport] = []

        for device in self.devices.active():
            for detector in self._device_detectors(device, window, now):
                try:
                    result = detector()
                except LabLinkError as exc:
                    log.debug("detector skipped for %s: %s", device.device_id, exc)
                    continue
                if result is not None:
                    found.append(result)

        fieldnames_by_plan: dict[str, set[str]] = {}
        for device in self.devices.active():
            if device.plan_id and device.cell:
                fieldnames_by_plan.setdefault(device.plan_id, set()).update(device.known_fields)
        for plan_id, fieldnames in sorted(fieldnames_by_plan.items()):
            plan = self.floorplans.get_plan(plan_id)
            for fieldname in sorted(fieldnames):
                try:
                    found.extend(self.detect_consensus_outlier(plan, fieldname, window))
                except LabLinkError as exc:
                    log.debug("consensus skipped for %s/%s: %s", plan_id, fieldname, exc)

        fresh = [report for report in found if self.reports.add(report)]
        return fresh

    def _device_detectors(self, device, window, now):
        yield lambda: self.detect_silent(device, window)
        for fieldname in device.fieldnames():
            yield lambda f=fieldname: self.detect_partial_loss(device, f, window)
            yield lambda f=fieldname: self.detect_out_of_range(device, f, window)
            yield lambda f=fieldname: self.detect_night_cutoff(device, f, now=now)


def _longest_circular_run(flags: np.ndarray) -> tuple[int, int] | None:
    """(start_hour, length) of the longest run of set flags on a 24h ring."""
    n = len(flags)
    if flags.all():
        return 0, n
    if not flags.any():
        return None
    best: tuple[int, int] | None = None
    i = 0
    while i < 2 * n:
        if not flags[i % n]:
            i += 1
            continue
        j = i
        while j < 2 * n and j - i < n and flags[j % n]:
            j += 1
        if i < n and (best is None or j - i > best[1]):
            best = (i, j - i)
        i = j + 1
    return best
