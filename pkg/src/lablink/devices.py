"""Device registry: immutable tags, declared field schemas, and the
schema-membership check every ingested point passes through."""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .errors import DuplicateDeviceId, EmptyFieldSchema, NotFound
from .floorplan import FloorPlan, FloorplanStore, GridCell


@dataclass(frozen=True)
class FieldSpec:
    fieldname: str
    value_kind: str = "real"  # real | integer | boolean
    unit: str = ""
    min_valid: float | None = None
    max_valid: float | None = None
    expected_interval_s: float | None = None

    def __post_init__(self):
        if self.value_kind not in ("real", "integer", "boolean"):
            raise ValueError(f"unknown value_kind: {self.value_kind!r}")
        if (
            self.min_valid is not None
            and self.max_valid is not None
            and not self.min_valid < self.max_valid
        ):
            raise ValueError(
                f"min_valid must be < max_valid ({self.min_valid} vs {self.max_valid})"
            )
        if self.expected_interval_s is not None and self.expected_interval_s <= 0:
            raise ValueError("expected_interval_s must be positive")

    def to_dict(self) -> dict:
        return {
            "fieldname": self.fieldname,
            "value_kind": self.value_kind,
            "unit": self.unit,
            "min_valid": self.min_valid,
            "max_valid": self.max_valid,
            "expected_interval_s": self.expected_interval_s,
        }


@dataclass
class Device:
    device_id: str
    known_fields: dict[str, FieldSpec]
    owner: str | None = None
    location_general: str = ""
    location_specific: str = ""
    plan_id: str | None = None
    cell: GridCell | None = None
    system_version: str = "lll-1.0.0"
    status: str = "active"  # active | retired
    counter_modulus: int | None = None  # overrides the fleet-wide default
    revision: int = 0

    @property
    def active(self) -> bool:
        return self.status == "active"

    def fieldnames(self) -> list[str]:
        return sorted(self.known_fields)

    def tags(self) -> dict[str, str]:
        """Current tag set stamped onto points that omit location context."""
        return {
            "device_id": self.device_id,
            "location_general": self.location_general,
            "location_specific": self.location_specific,
            "system_version": self.system_version,
        }

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "owner": self.owner,
            "location_general": self.location_general,
            "location_specific": self.location_specific,
            "plan_id": self.plan_id,
            "cell": {"col": self.cell.col, "row": self.cell.row} if self.cell else None,
            "known_fields": [self.known_fields[f].to_dict() for f in self.fieldnames()],
            "system_version": self.system_version,
            "status": self.status,
            "counter_modulus": self.counter_modulus,
            "revision": self.revision,
        }


def _as_field_specs(fields) -> dict[str, FieldSpec]:
    specs: dict[str, FieldSpec] = {}
    for item in fields:
        spec = item if isinstance(item, FieldSpec) else FieldSpec(**item)
        specs[spec.fieldname] = spec
    return specs


class DeviceRegistry:
    """Read-mostly store: registration is serialized, schema lookups are
    called concurrently from the ingestion path."""

    def __init__(self, floorplans: FloorplanStore | None = None):
        self._devices: dict[str, Device] = {}
        self._floorplans = floorplans
        self._lock = threading.RLock()

    def register(
        self,
        device_id: str,
        fields,
        owner: str | None = None,
        location_general: str = "",
        location_specific: str = "",
        plan_id: str | None = None,
        cell: GridCell | None = None,
        system_version: str = "lll-1.0.0",
        counter_modulus: int | None = None,
    ) -> Device:
        with self._lock:
            if device_id in self._devices:
                raise DuplicateDeviceId(f"device already registered: {device_id}")
            known = _as_field_specs(fields)
            if not known:
                raise EmptyFieldSchema(f"device {device_id} declares no fields")
            if plan_id is not None and cell is not None:
                plan = self._plan(plan_id)
                plan.require_in_bounds(cell)
                location_specific = plan.cell_label(cell)
                location_general = location_general or plan.name
            device = Device(
                device_id=device_id,
                known_fields=known,
                owner=owner,
                location_general=location_general,
                location_specific=location_specific,
                plan_id=plan_id,
                cell=cell,
                system_version=system_version,
                counter_modulus=counter_modulus,
            )
            self._devices[device_id] = device
            return device

    def get(self, device_id: str) -> Device:
        device = self._devices.get(device_id)
        if device is None:
            raise NotFound(f"no such device: {device_id}")
        return device

    def list_known_fields(self, device_id: str) -> list[str]:
        """Declared field set, stable-ordered by name."""
        return self.get(device_id).fieldnames()

    def accepts(self, device_id: str, fieldname: str) -> bool:
        """Ingestion acceptance is exactly schema membership."""
        device = self._devices.get(device_id)
        return device is not None and fieldname in device.known_fields

    def known(self, device_id: str) -> bool:
        return device_id in self._devices

    def move(self, device_id: str, plan_id: str, cell: GridCell) -> Device:
        """Update location tags. Historical points keep the tags they were
        recorded with; only subsequently ingested points pick these up."""
        with self._lock:
            device = self.get(device_id)
            plan = self._plan(plan_id)
            plan.require_in_bounds(cell)
            if device.plan_id == plan_id and device.cell == cell:
                return device  # no-op move keeps the revision
            device.plan_id = plan_id
            device.cell = cell
            device.location_specific = plan.cell_label(cell)
            device.location_general = plan.name
            device.revision += 1
            return device

    def retire(self, device_id: str) -> Device:
        """Retirement freezes the schema and stops dashboard/fault coverage;
        stored datapoints tagged with the id are retained."""
        with self._lock:
            device = self.get(device_id)
            device.status = "retired"
            device.revision += 1
            return device

    def set_owner(self, device_id: str, owner: str | None) -> Device:
        with self._lock:
            device = self.get(device_id)
            device.owner = owner
            return device

    def all(self) -> list[Device]:
        return list(self._devices.values())

    def active(self) -> list[Device]:
        return [d for d in self._devices.values() if d.active]

    def on_plan(self, plan_id: str) -> list[Device]:
        return [d for d in self._devices.values() if d.plan_id == plan_id and d.cell]

    def __len__(self) -> int:
        return len(self._devices)

    def _plan(self, plan_id: str) -> FloorPlan:
        if self._floorplans is None:
            raise NotFound(f"no floor plan store attached (plan {plan_id})")
        return self._floorplans.get_plan(plan_id)
