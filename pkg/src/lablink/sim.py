"""Deterministic sensor-fleet simulator: generates multi-week telemetry with
diurnal signal shapes, injects documented failure modes (in-transit loss,
occupancy-outlet night cutoffs, dead devices, inverted or offset sensors),
drives a platform instance, and scores detections against injections.

Randomness comes from numpy's PCG64 seeded per device through a SeedSequence
spawn, so a (seed, spec) pair always yields a byte-identical point stream.
"""

from __future__ import annotations

import hashlib
import json
import time as _time
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from .config import ServiceConfig
from .devices import FieldSpec
from .errors import IngestRejected, InvalidScenario, TargetUnreachable
from .floorplan import GridCell
from .service import LabLinkService
from .timeutil import format_time, from_epoch_ms, parse_time, epoch_ms

COUNTER_MODULUS = 256
LUX_PEAK = 800.0
LUX_NOISE = 20.0
INVERT_PIVOT = LUX_PEAK + LUX_NOISE

FAULT_KINDS = ("silent_from", "partial_drop", "night_cutoff", "invert", "offset")

# injected fault kind -> fault class a detector should report
KIND_TO_CLASS = {
    "silent_from": "silent",
    "partial_drop": "partial_loss",
    "night_cutoff": "night_cutoff",
    "invert": "consensus_outlier",
    "offset": "consensus_outlier",
}

DEFAULT_START = "2021-03-01T00:00:00.000Z"


@dataclass
class PlanSpec:
    name: str = "Sim Lab"
    cell_size_m: float = 1.0
    cols: int = 6
    rows: int = 5


@dataclass
class FaultInjection:
    device_index: int
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    seed: int = 42
    device_count: int = 30
    duration_days: int = 30
    interval_s: dict = field(default_factory=lambda: {"lux": 900.0})
    plan: PlanSpec = field(default_factory=PlanSpec)
    faults: list[FaultInjection] = field(default_factory=list)
    start_time: str = DEFAULT_START
    tz: str = "UTC"
    system_version: str = "lll-1.0.0"

    def validate(self) -> "Scenario":
        if self.device_count < 1:
            raise InvalidScenario("device_count must be at least 1")
        if self.duration_days < 1:
            raise InvalidScenario("duration_days must be at least 1")
        if not self.interval_s:
            raise InvalidScenario("at least one sampled field is required")
        for name, interval in self.interval_s.items():
            if interval <= 0:
                raise InvalidScenario(f"interval for {name} must be positive")
        if self.device_count > self.plan.cols * self.plan.rows:
            raise InvalidScenario("more devices than grid cells")
        for fault in self.faults:
            if not 0 <= fault.device_index < self.device_count:
                raise InvalidScenario(f"fault device_index {fault.device_index} out of range")
            if fault.kind not in FAULT_KINDS:
                raise InvalidScenario(f"unknown fault kind: {fault.kind!r}")
        try:
            parse_time(self.start_time)
        except ValueError:
            raise InvalidScenario(f"bad start_time: {self.start_time!r}")
        try:
            ZoneInfo(self.tz)
        except Exception:
            raise InvalidScenario(f"bad timezone: {self.tz!r}")
        return self

    def device_id(self, index: int) -> str:
        return hashlib.sha256(f"{self.seed}:{index}".encode()).hexdigest()[:12]

    def device_cell(self, index: int) -> GridCell:
        return GridCell(index % self.plan.cols, index // self.plan.cols)

    def field_specs(self) -> list[FieldSpec]:
        specs = []
        for name in sorted(self.interval_s):
            interval = float(self.interval_s[name])
            if name == "lux":
                specs.append(FieldSpec(name, "real", "lux", 0.0, 100000.0, interval))
            elif name == "co2":
                specs.append(FieldSpec(name, "real", "ppm", 0.0, 10000.0, interval))
            elif name == "heartbeat":
                specs.append(FieldSpec(name, "integer", "", None, None, interval))
            else:
                specs.append(FieldSpec(name, "real", "", None, None, interval))
        return specs


def canonical_scenario(seed: int = 42) -> Scenario:
    """The desk-scale reference fixture: a 30-device month of 15-minute lux
    with one lossy link, one night-cutoff outlet, and one dead sensor."""
    return Scenario(
        seed=seed,
        device_count=30,
        duration_days=30,
        interval_s={"lux": 900.0},
        plan=PlanSpec("Sim Lab", 1.0, 6, 5),
        faults=[
            FaultInjection(7, "partial_drop", {"p": 0.2}),
            FaultInjection(13, "night_cutoff", {"start_hour": 22, "end_hour": 6}),
            FaultInjection(21, "silent_from", {"day": 10}),
        ],
    )


def scenario_from_tree(tree: dict) -> Scenario:
    plan_tree = tree.get("plan") or {}
    plan = PlanSpec(
        name=plan_tree.get("name", "Sim Lab"),
        cell_size_m=float(plan_tree.get("cell_size_m", 1.0)),
        cols=int(plan_tree.get("cols", 6)),
        rows=int(plan_tree.get("rows", 5)),
    )
    interval = tree.get("interval_s", {"lux": 900.0})
    if isinstance(interval, (int, float)):
        interval = {"lux": float(interval)}
    faults = [
        FaultInjection(
            device_index=int(raw["device_index"]),
            kind=str(raw["kind"]),
            params=dict(raw.get("params") or {}),
        )
        for raw in tree.get("faults") or []
    ]
    return Scenario(
        seed=int(tree.get("seed", 42)),
        device_count=int(tree.get("device_count", 30)),
        duration_days=int(tree.get("duration_days", 30)),
        interval_s={str(k): float(v) for k, v in interval.items()},
        plan=plan,
        faults=faults,
        start_time=str(tree.get("start_time", DEFAULT_START)),
        tz=str(tree.get("tz", "UTC")),
        system_version=str(tree.get("system_version", "lll-1.0.0")),
    ).validate()


def scenario_from_file(path: str | Path) -> Scenario:
    import yaml

    with open(path, encoding="utf-8") as fh:
        tree = yaml.safe_load(fh)
    if not isinstance(tree, dict):
        raise InvalidScenario(f"scenario file {path} must hold a mapping")
    return scenario_from_tree(tree)


# -- signal generation ---------------------------------------------------------


def _local_hours(times_ms: np.ndarray, tz: str) -> np.ndarray:
    """Fractional local hour-of-day for each timestamp."""
    if tz == "UTC":
        return (times_ms / 1000.0 % 86400.0) / 3600.0
    zone = ZoneInfo(tz)
    out = np.empty(len(times_ms))
    for i, ms in enumerate(times_ms):
        local = from_epoch_ms(int(ms)).astimezone(zone)
        out[i] = local.hour + local.minute / 60.0 + local.second / 3600.0
    return out


def _signal(fieldname: str, hours: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if fieldname == "lux":
        daylight = np.clip(np.sin(np.pi * (hours - 6.0) / 12.0), 0.0, None)
        return LUX_PEAK * daylight + rng.uniform(0.0, LUX_NOISE, len(hours))
    if fieldname == "co2":
        return 420.0 + 60.0 * np.sin(2.0 * np.pi * hours / 24.0) + rng.uniform(0.0, 10.0, len(hours))
    if fieldname == "heartbeat":
        return np.ones(len(hours))
    return np.sin(2.0 * np.pi * hours / 24.0) + rng.uniform(0.0, 0.1, len(hours))


def generate(scenario: Scenario) -> list[dict]:
    """The full fault-transformed point stream, ordered by time then device
    then field, as flat wire objects."""
    scenario.validate()
    start_ms = epoch_ms(parse_time(scenario.start_time))
    seeds = np.random.SeedSequence(scenario.seed).spawn(scenario.device_count)

    grids: dict[str, tuple[np.ndarray, list[str], np.ndarray]] = {}
    for name in sorted(scenario.interval_s):
        interval_ms = int(round(scenario.interval_s[name] * 1000))
        count = int(scenario.duration_days * 86_400_000 // interval_ms)
        times_ms = start_ms + interval_ms * np.arange(count, dtype=np.int64)
        iso = [format_time(from_epoch_ms(int(ms))) for ms in times_ms]
        grids[name] = (times_ms, iso, _local_hours(times_ms, scenario.tz))

    stream: list[tuple[int, int, str, dict]] = []
    for index in range(scenario.device_count):
        rng = np.random.default_rng(seeds[index])
        device_id = scenario.device_id(index)
        label = f"grid_{index}"  # row-major: cell (i % cols, i // cols)
        faults = [f for f in scenario.faults if f.device_index == index]
        for name in sorted(scenario.interval_s):
            times_ms, iso, hours = grids[name]
            values = _signal(name, hours, rng)
            counters = np.arange(len(times_ms), dtype=np.int64) % COUNTER_MODULUS
            keep = np.ones(len(times_ms), dtype=bool)
            for fault in faults:
                keep, values = _apply_fault(
                    fault, name, times_ms, hours, values, keep, rng, start_ms
                )
            for k in np.nonzero(keep)[0]:
                point = {
                    "time": iso[k],
                    "device_id": device_id,
                    "location_general": scenario.plan.name,
                    "location_specific": label,
                    "fieldname": name,
                    "system_version": scenario.system_version,
                    "value": float(values[k]),
                    "counter": int(counters[k]),
                }
                stream.append((int(times_ms[k]), index, name, point))

    stream.sort(key=lambda item: item[:3])
    return [point for _, _, _, point in stream]


def _apply_fault(fault, fieldname, times_ms, hours, values, keep, rng, start_ms):
    params = fault.params
    if fault.kind == "partial_drop":
        p = float(params.get("p", 0.1))
        keep = keep & (rng.random(len(times_ms)) >= p)
    elif fault.kind == "night_cutoff":
        start, end = int(params.get("start_hour", 22)), int(params.get("end_hour", 6))
        whole = hours.astype(int)
        in_block = (
            (whole >= start) & (whole < end)
            if start < end
            else (whole >= start) | (whole < end)
        )
        keep = keep & ~in_block
    elif fault.kind == "silent_from":
        cutoff = start_ms + int(float(params.get("day", 0)) * 86_400_000)
        keep = keep & (times_ms < cutoff)
    elif fault.kind == "invert":
        if params.get("fieldname", "lux") == fieldname:
            values = float(params.get("pivot", INVERT_PIVOT)) - values
    elif fault.kind == "offset":
        if params.get("fieldname", "lux") == fieldname:
            values = values + float(params.get("amount", 100.0))
    return keep, values


def stream_digest(points: list[dict]) -> str:
    """SHA-256 over the newline-joined canonical stream; pins byte identity."""
    payload = "\n".join(json.dumps(p, separators=(",", ":")) for p in points)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# -- targets ---------------------------------------------------------------


class InprocTarget:
    """Drives a LabLinkService directly with an admin actor."""

    def __init__(self, service: LabLinkService, actor=None):
        self.service = service
        self.actor = actor or service.bootstrap_admin("labsim")

    def check_reachable(self):
        self.service.health()

    def create_floorplan(self, plan: PlanSpec) -> str:
        created = self.service.create_floorplan(
            self.actor, plan.name, plan.cell_size_m, plan.cols, plan.rows
        )
        return created.plan_id

    def register_device(self, device_id, specs, plan_id, cell):
        self.service.register_device(
            self.actor, device_id, specs, plan_id=plan_id, cell=cell
        )

    def ingest(self, batch) -> dict:
        return self.service.ingest(self.actor, batch).to_dict()

    def sweep(self, at) -> None:
        self.service.run_sweep(self.actor, at)

    def fault_reports(self) -> list[dict]:
        return [r.to_dict() for r in self.service.fault_reports(self.actor)]


class HttpTarget:
    """Drives a running gateway over HTTP with a bearer token."""

    def __init__(self, base_url: str, token: str | None = None, client=None):
        import httpx

        self.base_url = base_url.rstrip("/")
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = client or httpx.Client(base_url=self.base_url, headers=headers, timeout=30.0)
        self._errors = (httpx.TransportError,)

    def _check(self, response):
        if response.status_code >= 400:
            raise IngestRejected(
                f"{response.request.method} {response.request.url.path} -> "
                f"{response.status_code}: {response.text}"
            )
        return response.json()

    def check_reachable(self):
        try:
            response = self._client.get("/api/v1/health")
        except self._errors as exc:
            raise TargetUnreachable(f"{self.base_url}: {exc}")
        if response.status_code >= 400:
            raise TargetUnreachable(f"{self.base_url}: health returned {response.status_code}")

    def create_floorplan(self, plan: PlanSpec) -> str:
        body = {
            "name": plan.name,
            "cell_size_m": plan.cell_size_m,
            "cols": plan.cols,
            "rows": plan.rows,
        }
        return self._check(self._client.post("/api/v1/floorplans", json=body))["plan_id"]

    def register_device(self, device_id, specs, plan_id, cell):
        body = {
            "device_id": device_id,
            "fields": [s.to_dict() for s in specs],
            "plan_id": plan_id,
            "col": cell.col,
            "row": cell.row,
        }
        self._check(self._client.post("/api/v1/devices", json=body))

    def ingest(self, batch) -> dict:
        return self._check(self._client.post("/api/v1/points", json=batch))

    def sweep(self, at) -> None:
        body = {"at": format_time(at)} if at else {}
        self._check(self._client.post("/api/v1/faults/sweep", json=body))

    def fault_reports(self) -> list[dict]:
        return self._check(self._client.get("/api/v1/faults"))["reports"]


# -- scoring ---------------------------------------------------------------


@dataclass
class ScenarioReport:
    injected: list[dict]
    detected: list[dict]
    per_class: dict[str, dict[str, int]]
    generated_points: int
    deleted_points: int
    accepted_points: int

    def to_dict(self) -> dict:
        return {
            "injected": self.injected,
            "detected": self.detected,
            "per_class": self.per_class,
            "generated_points": self.generated_points,
            "deleted_points": self.deleted_points,
            "accepted_points": self.accepted_points,
        }


def score(scenario: Scenario, detected: list[dict]) -> dict[str, dict[str, int]]:
    """Per-class tp/fp/fn comparing injected faults against detections."""
    injected_by_class: dict[str, set[str]] = {}
    for fault in scenario.faults:
        cls = KIND_TO_CLASS[fault.kind]
        injected_by_class.setdefault(cls, set()).add(scenario.device_id(fault.device_index))
    detected_by_class: dict[str, set[str]] = {}
    for report in detected:
        detected_by_class.setdefault(report["fault_class"], set()).add(report["device_id"])
    per_class = {}
    for cls in sorted(set(injected_by_class) | set(detected_by_class)):
        injected = injected_by_class.get(cls, set())
        got = detected_by_class.get(cls, set())
        per_class[cls] = {
            "tp": len(injected & got),
            "fp": len(got - injected),
            "fn": len(injected - got),
        }
    return per_class


def run(
    scenario: Scenario,
    target,
    batch_size: int = 5000,
    pace_s_per_sim_s: float = 0.0,
) -> ScenarioReport:
    """Register the fleet, stream the generated points in time order, trigger
    a sweep at scenario end, and score detections against injections.

    `target` is "inproc", an http(s) URL string, or a prepared target object.
    """
    scenario.validate()
    owned_service = None
    if target == "inproc":
        import tempfile

        owned_service = LabLinkService(
            ServiceConfig(
                data_dir=Path(tempfile.mkdtemp(prefix="labsim-")),
                deployment_tz=scenario.tz,
            )
        )
        target = InprocTarget(owned_service)
    elif isinstance(target, str):
        target = HttpTarget(target)

    try:
        target.check_reachable()

        plan_id = target.create_floorplan(scenario.plan)
        specs = scenario.field_specs()
        for index in range(scenario.device_count):
            target.register_device(
                scenario.device_id(index), specs, plan_id, scenario.device_cell(index)
            )

        points = generate(scenario)
        full_count = scenario.device_count * sum(
            int(scenario.duration_days * 86_400_000 // int(round(i * 1000)))
            for i in scenario.interval_s.values()
        )
        accepted = 0
        for at in range(0, len(points), batch_size):
            batch = points[at: at + batch_size]
            if pace_s_per_sim_s > 0 and at > 0:
                span_ms = (
                    epoch_ms(parse_time(batch[0]["time"]))
                    - epoch_ms(parse_time(points[at - 1]["time"]))
                )
                _time.sleep(max(0.0, span_ms / 1000.0 * pace_s_per_sim_s))
            receipt = target.ingest(batch)
            if receipt["rejected"]:
                raise IngestRejected(
                    f"store rejected {len(receipt['rejected'])} points, first: "
                    f"{receipt['rejected'][0]}"
                )
            accepted += receipt["accepted"]

        end = parse_time(scenario.start_time) + timedelta(days=scenario.duration_days)
        target.sweep(end)
        # report ids are random; everything else is a pure function of the
        # scenario, so the report stays reproducible without them
        detected = [
            {key: value for key, value in report.items() if key != "report_id"}
            for report in target.fault_reports()
        ]

        injected = [
            {
                "device_id": scenario.device_id(f.device_index),
                "device_index": f.device_index,
                "kind": f.kind,
                "expected_class": KIND_TO_CLASS[f.kind],
            }
            for f in scenario.faults
        ]
        return ScenarioReport(
            injected=injected,
            detected=detected,
            per_class=score(scenario, detected),
            generated_points=full_count,
            deleted_points=full_count - len(points),
            accepted_points=accepted,
        )
    finally:
        if owned_service is not None:
            owned_service.close()
