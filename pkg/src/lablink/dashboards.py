"""Auto-generated dashboard definitions: declarative panel + query documents
executed server-side at render time. One dashboard per member and per active
device; member dashboards default private, device dashboards public."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from .errors import AlreadyExists, NotFound, PermissionDenied
from .devices import Device
from .registry import Member, Role, new_id
from .timeutil import format_time

DEFAULT_LOOKBACK_S = 6 * 3600.0
DEFAULT_EVERY_S = 900.0


@dataclass
class Panel:
    title: str
    selector: dict[str, str]
    agg: str = "mean"
    every_s: float | None = DEFAULT_EVERY_S
    lookback_s: float = DEFAULT_LOOKBACK_S
    render_hint: str = "timeseries"  # timeseries | stat | table

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "query": {
                "selector": dict(self.selector),
                "agg": self.agg,
                "every_s": self.every_s,
            },
            "lookback_s": self.lookback_s,
            "render_hint": self.render_hint,
        }


@dataclass
class Dashboard:
    dashboard_id: str
    owner_kind: str  # member | device
    owner_id: str
    panels: list[Panel] = field(default_factory=list)
    visibility: str = "private"  # private | public

    def to_dict(self) -> dict:
        return {
            "dashboard_id": self.dashboard_id,
            "owner_kind": self.owner_kind,
            "owner_id": self.owner_id,
            "visibility": self.visibility,
            "panels": [p.to_dict() for p in self.panels],
        }


def device_panels(device: Device) -> list[Panel]:
    """One timeseries panel per declared field, pinned to the device tag."""
    panels = []
    for fieldname in device.fieldnames():
        spec = device.known_fields[fieldname]
        panels.append(
            Panel(
                title=f"{device.device_id} {fieldname}",
                selector={"device_id": device.device_id, "fieldname": fieldname},
                every_s=spec.expected_interval_s or DEFAULT_EVERY_S,
            )
        )
    return panels


def member_panels(devices: list[Device]) -> list[Panel]:
    """One panel per nearby device, pinned to that device's id."""
    panels = []
    for device in sorted(devices, key=lambda d: d.device_id):
        fieldname = device.fieldnames()[0]
        spec = device.known_fields[fieldname]
        panels.append(
            Panel(
                title=f"{device.device_id} {fieldname}",
                selector={"device_id": device.device_id, "fieldname": fieldname},
                every_s=spec.expected_interval_s or DEFAULT_EVERY_S,
            )
        )
    return panels


class DashboardStore:
    """Exactly one dashboard per (owner_kind, owner_id)."""

    def __init__(self):
        self._dashboards: dict[str, Dashboard] = {}
        self._by_owner: dict[tuple[str, str], str] = {}
        self._lock = threading.RLock()

    def generate_for_device(self, device: Device) -> Dashboard:
        return self._create("device", device.device_id, device_panels(device), "public")

    def generate_for_member(self, member: Member, nearby_devices: list[Device]) -> Dashboard:
        return self._create("member", member.member_id, member_panels(nearby_devices), "private")

    def _create(self, owner_kind: str, owner_id: str, panels: list[Panel], visibility: str) -> Dashboard:
        with self._lock:
            key = (owner_kind, owner_id)
            if key in self._by_owner:
                raise AlreadyExists(f"dashboard already exists for {owner_kind} {owner_id}")
            dashboard = Dashboard(new_id(), owner_kind, owner_id, panels, visibility)
            self._dashboards[dashboard.dashboard_id] = dashboard
            self._by_owner[key] = dashboard.dashboard_id
            return dashboard

    def get(self, dashboard_id: str) -> Dashboard:
        dashboard = self._dashboards.get(dashboard_id)
        if dashboard is None:
            raise NotFound(f"no such dashboard: {dashboard_id}")
        return dashboard

    def for_owner(self, owner_kind: str, owner_id: str) -> Dashboard:
        dashboard_id = self._by_owner.get((owner_kind, owner_id))
        if dashboard_id is None:
            raise NotFound(f"no dashboard for {owner_kind} {owner_id}")
        return self._dashboards[dashboard_id]

    def remove_for_owner(self, owner_kind: str, owner_id: str) -> list[str]:
        with self._lock:
            dashboard_id = self._by_owner.pop((owner_kind, owner_id), None)
            if dashboard_id is None:
                return []
            del self._dashboards[dashboard_id]
            return [dashboard_id]

    def set_panels(self, dashboard_id: str, panels: list[Panel]) -> Dashboard:
        with self._lock:
            dashboard = self.get(dashboard_id)
            dashboard.panels = panels
            return dashboard

    def all(self) -> list[Dashboard]:
        return list(self._dashboards.values())

    def __len__(self) -> int:
        return len(self._dashboards)


def may_view(dashboard: Dashboard, viewer: Member | None) -> bool:
    """Public boards are open; private ones need the owner or staff+."""
    if dashboard.visibility == "public":
        return True
    if viewer is None:
        return False
    if viewer.role in (Role.STAFF, Role.ADMIN):
        return True
    return dashboard.owner_kind == "member" and dashboard.owner_id == viewer.member_id


def render(dashboard: Dashboard, now: datetime, query) -> dict:
    """Execute every panel query over [now - lookback, now] and return a
    self-contained document. `query` is the store's query callable; render
    never broadens a panel's tag predicates."""
    panels = []
    for panel in dashboard.panels:
        t0 = now - timedelta(seconds=panel.lookback_s)
        series = query(dict(panel.selector), t0, now, panel.agg, panel.every_s)
        doc = panel.to_dict()
        doc["series"] = series.to_dict()["points"]
        panels.append(doc)
    return {
        "dashboard_id": dashboard.dashboard_id,
        "owner_kind": dashboard.owner_kind,
        "owner_id": dashboard.owner_id,
        "visibility": dashboard.visibility,
        "rendered_at": format_time(now),
        "panels": panels,
    }


def check_panel_scope(dashboard: Dashboard, panels: list[Panel], known_device_ids) -> None:
    """Panel edits must keep queries inside the owner's scope: device boards
    stay pinned to the owning device; member boards pin some known device."""
    for panel in panels:
        device_id = panel.selector.get("device_id")
        if dashboard.owner_kind == "device":
            if device_id != dashboard.owner_id:
                raise PermissionDenied(
                    f"panel {panel.title!r} escapes device scope {dashboard.owner_id}"
                )
        else:
            if not device_id or device_id not in known_device_ids:
                raise PermissionDenied(
                    f"panel {panel.title!r} must pin a registered device id"
                )
