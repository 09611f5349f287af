"""The platform facade: wires every subsystem behind a single object,
enforces the permission matrix on each operation, and owns the cross-module
cascades (member deletion, dashboard auto-provisioning, survey rekeying).

Writes are serialized through per-store writer locks; reads operate on
snapshots. Every mutating operation funnels through exactly one authorization
decision before touching state, which the authz log makes auditable.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta

from . import dashboards as dashboards_mod
from .config import CORE_MODULES, OPTIONAL_MODULES, ServiceConfig
from .devices import Device, DeviceRegistry
from .errors import ModuleDisabled, NoSeat, NotFound, PermissionDenied
from .faultwatch import FaultReport, FaultWatch
from .floorplan import FloorplanStore, GridCell, devices_within_radius
from .registry import (
    Action,
    DeletionReceipt,
    Descriptor,
    Member,
    MemberRegistry,
    ResourceKind,
    Role,
    authorize,
    verify_credential,
)
from .surveys import (
    AnonymousResponseStore,
    ComplianceRow,
    Outbox,
    OutboxEntry,
    SurveyAssignment,
    SurveyStore,
    SurveyTemplate,
)
from .tsstore import DataPoint, IngestReceipt, Series, TimeSeriesStore
from .timeutil import utcnow


@dataclass
class AuditEntry:
    at: datetime
    actor_id: str | None
    action: str
    detail: str = ""


@dataclass
class AuthzDecision:
    at: datetime
    actor_id: str | None
    role: str | None
    action: str
    resource_kind: str
    allowed: bool


@dataclass
class TokenRecord:
    member_id: str
    expires_at: datetime | None = None


class LabLinkService:
    def __init__(self, config: ServiceConfig | None = None):
        self.config = (config or ServiceConfig()).validate()
        self.config.data_dir.mkdir(parents=True, exist_ok=True)

        self.registry = MemberRegistry()
        self.floorplans = FloorplanStore()
        self.devices = DeviceRegistry(self.floorplans)
        self.store = TimeSeriesStore(self.config.data_dir / "tsstore")

        self.surveys: SurveyStore | None = None
        if self.config.module_enabled("surveys"):
            self.surveys = SurveyStore(
                outbox=Outbox(self.config.data_dir / "outbox.log"),
                responses=AnonymousResponseStore(
                    self.config.data_dir / "anonymous" / "responses.jsonl"
                ),
                grace_s=self.config.survey_grace_s,
            )

        self.dashboards = (
            dashboards_mod.DashboardStore() if self.config.module_enabled("dashboards") else None
        )

        self.faultwatch: FaultWatch | None = None
        if self.config.module_enabled("faultwatch"):
            self.faultwatch = FaultWatch(
                self.store,
                self.devices,
                self.floorplans,
                self.config.faultwatch,
                local_tz=self.config.deployment_tz,
            )

        self.audit_log: list[AuditEntry] = []
        self.authz_log: list[AuthzDecision] = []
        self._tokens: dict[str, TokenRecord] = {}
        self._write_lock = threading.RLock()

        if self.config.admin_username:
            self.bootstrap_admin(self.config.admin_username, self.config.admin_password)

    def close(self) -> None:
        self.store.close()

    # -- authn/authz -----------------------------------------------------

    def bootstrap_admin(self, username: str, password: str | None = None) -> Member:
        """First-admin creation at boot; everything after goes through
        create_member."""
        try:
            return self.registry.get_by_username(username)
        except NotFound:
            pass
        member = self.registry.create(
            username=username,
            role=Role.ADMIN,
            descriptor=Descriptor.RESEARCHER,
            password=password,
        )
        if self.dashboards is not None:
            self.dashboards.generate_for_member(member, [])
        self._audit(member.member_id, "bootstrap_admin", username)
        return member

    def issue_token(self, member: Member, ttl_s: float | None = None) -> str:
        token = secrets.token_hex(16)
        expires = utcnow() + timedelta(seconds=ttl_s) if ttl_s is not None else None
        self._tokens[token] = TokenRecord(member.member_id, expires)
        return token

    def resolve_token(self, token: str | None) -> Member | None:
        """Invalid, unknown, or expired tokens degrade to anonymous."""
        if not token:
            return None
        record = self._tokens.get(token)
        if record is None:
            return None
        if record.expires_at is not None and record.expires_at < utcnow():
            return None
        try:
            return self.registry.get(record.member_id)
        except NotFound:
            return None

    def login(self, username: str, password: str) -> str:
        try:
            member = self.registry.get_by_username(username)
        except NotFound:
            raise PermissionDenied("bad credentials")
        if not member.active or member.credential_hash is None:
            raise PermissionDenied("bad credentials")
        if not verify_credential(password, member.credential_hash):
            raise PermissionDenied("bad credentials")
        return self.issue_token(member)

    def check(self, actor: Member | None, action: Action, kind: ResourceKind) -> bool:
        """The single decision point. Anonymous callers hold read_public and
        nothing else."""
        if actor is None:
            allowed = action is Action.READ_PUBLIC
            role = None
        else:
            allowed = authorize(actor.role, action, kind)
            role = actor.role.value
        self.authz_log.append(
            AuthzDecision(
                at=utcnow(),
                actor_id=actor.member_id if actor else None,
                role=role,
                action=action.value,
                resource_kind=kind.value,
                allowed=allowed,
            )
        )
        return allowed

    def _authorize(self, actor: Member | None, action: Action, kind: ResourceKind) -> None:
        if not self.check(actor, action, kind):
            who = actor.username if actor else "anonymous"
            raise PermissionDenied(f"{who} may not {action.value} on {kind.value}")

    def _audit(self, actor_id: str | None, action: str, detail: str = "") -> None:
        self.audit_log.append(AuditEntry(utcnow(), actor_id, action, detail))

    def require_module(self, name: str):
        if not self.config.module_enabled(name):
            raise ModuleDisabled(f"the {name} module is disabled in settings")

    # -- registry ----------------------------------------------------------

    def create_member(
        self,
        actor: Member | None,
        username: str,
        email: str = "",
        display_name: str = "",
        role: Role | str = Role.USER,
        descriptor: Descriptor | str = Descriptor.PARTICIPANT,
        password: str | None = None,
    ) -> Member:
        self._authorize(actor, Action.CREATE_MODEL, ResourceKind.MEMBER)
        with self._write_lock:
            member = self.registry.create(
                username=username,
                email=email,
                display_name=display_name,
                role=Role(role),
                descriptor=Descriptor(descriptor),
                password=password,
            )
            if self.dashboards is not None:
                self.dashboards.generate_for_member(member, self._nearby_for_member(member))
        self._audit(actor.member_id if actor else None, "create_member", username)
        return member

    def delete_member(self, actor: Member | None, member_id: str) -> DeletionReceipt:
        """Cascade: the member's dashboard, seats, and survey assignments go;
        devices, floor plans, and survey templates stay (owned devices are
        merely unlinked)."""
        self._authorize(actor, Action.DELETE_MODEL, ResourceKind.MEMBER)
        with self._write_lock:
            member = self.registry.get(member_id)
            receipt = DeletionReceipt(member_id=member_id)
            if self.dashboards is not None:
                receipt.deleted_dashboards = self.dashboards.remove_for_owner(
                    "member", member_id
                )
            for seat in self.floorplans.seats_for_member(member_id):
                self.floorplans.remove_seat(seat.seat_id)
                receipt.deleted_seats.append(seat.seat_id)
            if self.surveys is not None:
                receipt.deleted_survey_assignments = (
                    self.surveys.remove_assignments_for_member(member_id)
                )
            for device in self.devices.all():
                if device.owner == member_id:
                    self.devices.set_owner(device.device_id, None)
            self.registry.remove(member_id)
        self._audit(
            actor.member_id if actor else None,
            "delete_member",
            f"{member.username}: {receipt.downstream_total} downstream deletions",
        )
        return receipt

    def rotate_secret(self, actor: Member | None, member_id: str | None = None) -> Member:
        """Self-service only: replaces the salt and rekeys stored survey
        assignments, orphaning previously recorded responses."""
        if actor is None:
            raise PermissionDenied("anonymous callers cannot rotate secrets")
        if member_id is not None and member_id != actor.member_id:
            raise PermissionDenied("secrets can only be rotated by their owner")
        self._authorize(actor, Action.READ_OWN_DATA, ResourceKind.MEMBER)
        with self._write_lock:
            member = self.registry.rotate_salt(actor.member_id)
            if self.surveys is not None:
                self.surveys.rekey_member(member)
        self._audit(actor.member_id, "rotate_secret")
        return member

    # -- floor plans ---------------------------------------------------------

    def create_floorplan(self, actor, name: str, cell_size_m: float, cols: int, rows: int):
        self._authorize(actor, Action.WRITE_DEVICE_METADATA, ResourceKind.FLOORPLAN)
        with self._write_lock:
            plan = self.floorplans.create_plan(name, cell_size_m, cols, rows)
        self._audit(actor.member_id if actor else None, "create_floorplan", name)
        return plan

    def assign_seat(self, actor, member_id: str, plan_id: str, cell: GridCell, valid_from=None):
        self._authorize(actor, Action.WRITE_DEVICE_METADATA, ResourceKind.SEAT)
        with self._write_lock:
            member = self.registry.get(member_id)
            seat = self.floorplans.assign_seat(
                member_id, plan_id, cell, valid_from or utcnow()
            )
            self._reseed_member_dashboard(member)
        self._audit(actor.member_id if actor else None, "assign_seat", seat.seat_id)
        return seat

    def nearby_devices(self, actor, member_id: str, radius_m: float) -> list[str]:
        if actor is not None and actor.member_id == member_id:
            self._authorize(actor, Action.READ_OWN_DATA, ResourceKind.SEAT)
        else:
            self._authorize(actor, Action.READ_COMPLIANCE, ResourceKind.SEAT)
        self.registry.get(member_id)
        return devices_within_radius(
            member_id, radius_m, floorplans=self.floorplans, devices=self.devices
        )

    def _nearby_for_member(self, member: Member) -> list[Device]:
        try:
            ids = devices_within_radius(
                member.member_id,
                self.config.default_radius_m,
                floorplans=self.floorplans,
                devices=self.devices,
            )
        except NoSeat:
            return []
        return [self.devices.get(device_id) for device_id in ids]

    def _reseed_member_dashboard(self, member: Member) -> None:
        """Seat-driven device auto-assignment: fill an empty member dashboard
        with panels for devices within the configured default radius."""
        if self.dashboards is None:
            return
        try:
            dashboard = self.dashboards.for_owner("member", member.member_id)
        except NotFound:
            return
        if dashboard.panels:
            return
        dashboard.panels = dashboards_mod.member_panels(self._nearby_for_member(member))

    # -- devices ---------------------------------------------------------------

    def register_device(self, actor, device_id: str, fields, **kwargs) -> Device:
        self._authorize(actor, Action.WRITE_DEVICE_METADATA, ResourceKind.DEVICE)
        with self._write_lock:
            device = self.devices.register(device_id, fields, **kwargs)
            if self.dashboards is not None:
                self.dashboards.generate_for_device(device)
        self._audit(actor.member_id if actor else None, "register_device", device_id)
        return device

    def move_device(self, actor, device_id: str, plan_id: str, cell: GridCell) -> Device:
        self._authorize(actor, Action.WRITE_DEVICE_METADATA, ResourceKind.DEVICE)
        with self._write_lock:
            device = self.devices.move(device_id, plan_id, cell)
        self._audit(actor.member_id if actor else None, "move_device", device_id)
        return device

    def retire_device(self, actor, device_id: str) -> Device:
        """Retires the device and drops its dashboard; stored datapoints
        tagged with its id are retained."""
        self._authorize(actor, Action.DELETE_MODEL, ResourceKind.DEVICE)
        with self._write_lock:
            device = self.devices.retire(device_id)
            if self.dashboards is not None:
                self.dashboards.remove_for_owner("device", device_id)
        self._audit(actor.member_id if actor else None, "retire_device", device_id)
        return device

    def list_known_fields(self, actor, device_id: str) -> list[str]:
        self._authorize(actor, Action.READ_PUBLIC, ResourceKind.DEVICE)
        return self.devices.list_known_fields(device_id)

    # -- telemetry ---------------------------------------------------------------

    def ingest(self, actor, batch) -> IngestReceipt:
        """Validated batch write. Points missing location context are stamped
        with the device's current tags, so movers pick up new tags without
        rewriting history."""
        self._authorize(actor, Action.WRITE_DEVICE_METADATA, ResourceKind.DATAPOINT)
        stamped = []
        for raw in batch if isinstance(batch, list) else [batch]:
            if isinstance(raw, dict) and "device_id" in raw:
                device_id = raw.get("device_id")
                if self.devices.known(device_id):
                    defaults = self.devices.get(device_id).tags()
                    merged = {
                        key: value
                        for key, value in defaults.items()
                        if key not in raw
                    }
                    if merged:
                        raw = {**raw, **merged}
            stamped.append(raw)
        return self.store.write(stamped, catalog=self.devices)

    def query(self, actor, selector, t0, t1, agg: str = "raw", every: float | None = None) -> Series:
        self._authorize(actor, Action.READ_PUBLIC, ResourceKind.DATAPOINT)
        return self.store.query(selector, t0, t1, agg, every)

    def select_points(self, actor, selector, t0, t1) -> list[DataPoint]:
        self._authorize(actor, Action.READ_PUBLIC, ResourceKind.DATAPOINT)
        return self.store.select(selector, t0, t1)

    # -- surveys ---------------------------------------------------------------

    def create_template(self, actor, title: str, provider_url: str, cadence: str = "weekly") -> SurveyTemplate:
        self.require_module("surveys")
        self._authorize(actor, Action.WRITE_SURVEY_METADATA, ResourceKind.SURVEY_TEMPLATE)
        with self._write_lock:
            template = self.surveys.create_template(title, provider_url, cadence)
        self._audit(actor.member_id if actor else None, "create_template", title)
        return template

    def schedule_survey(
        self, actor, member_id: str, template_id: str, open_time, close_time
    ) -> SurveyAssignment:
        self.require_module("surveys")
        self._authorize(actor, Action.WRITE_SURVEY_METADATA, ResourceKind.SURVEY_ASSIGNMENT)
        with self._write_lock:
            member = self.registry.get(member_id)
            assignment = self.surveys.schedule(member, template_id, open_time, close_time)
        self._audit(actor.member_id if actor else None, "schedule_survey", assignment.assignment_id)
        return assignment

    def record_completion(self, anonymous_id: str, received_at=None, payload=None, actor=None) -> SurveyAssignment:
        """Provider callback; the unguessable anonymous id is the credential,
        so anonymous read_public plus an exact id match is sufficient."""
        self.require_module("surveys")
        self._authorize(actor, Action.READ_PUBLIC, ResourceKind.SURVEY_ASSIGNMENT)
        with self._write_lock:
            return self.surveys.record_completion(
                anonymous_id, received_at or utcnow(), payload or {}
            )

    def compliance_report(
        self,
        actor,
        member_id: str | None = None,
        template_id: str | None = None,
        window=None,
    ) -> list[ComplianceRow]:
        self.require_module("surveys")
        self._authorize(actor, Action.READ_COMPLIANCE, ResourceKind.SURVEY_ASSIGNMENT)
        usernames = {m.member_id: m.username for m in self.registry.all()}
        return self.surveys.compliance(usernames, member_id, template_id, window)

    def extend_deadline(self, actor, assignment_id: str, new_close) -> SurveyAssignment:
        self.require_module("surveys")
        self._authorize(actor, Action.WRITE_SURVEY_METADATA, ResourceKind.SURVEY_ASSIGNMENT)
        with self._write_lock:
            assignment = self.surveys.extend_deadline(assignment_id, new_close)
        self._audit(actor.member_id if actor else None, "extend_deadline", assignment_id)
        return assignment

    def redistribute(self, actor, assignment_id: str, now=None) -> OutboxEntry:
        self.require_module("surveys")
        self._authorize(actor, Action.WRITE_SURVEY_METADATA, ResourceKind.SURVEY_ASSIGNMENT)
        with self._write_lock:
            assignment = self.surveys.get(assignment_id)
            member = self.registry.get(assignment.member_id)
            entry = self.surveys.redistribute(member, assignment_id, now)
        self._audit(actor.member_id if actor else None, "redistribute", assignment_id)
        return entry

    # -- dashboards ---------------------------------------------------------------

    def render_dashboard(self, actor, owner_kind: str, owner_id: str, now=None) -> dict:
        self.require_module("dashboards")
        self._authorize(actor, Action.READ_PUBLIC, ResourceKind.DASHBOARD)
        dashboard = self.dashboards.for_owner(owner_kind, owner_id)
        if not dashboards_mod.may_view(dashboard, actor):
            raise PermissionDenied("this dashboard is private")
        return dashboards_mod.render(dashboard, now or utcnow(), self.store.query)

    def edit_dashboard_panels(self, actor, owner_kind: str, owner_id: str, panels) -> dict:
        self.require_module("dashboards")
        dashboard = self.dashboards.for_owner(owner_kind, owner_id)
        is_owner = (
            actor is not None
            and owner_kind == "member"
            and dashboard.owner_id == actor.member_id
        )
        if is_owner:
            self._authorize(actor, Action.READ_OWN_DATA, ResourceKind.DASHBOARD)
        else:
            self._authorize(actor, Action.WRITE_DEVICE_METADATA, ResourceKind.DASHBOARD)
        known = {d.device_id for d in self.devices.all()}
        dashboards_mod.check_panel_scope(dashboard, panels, known)
        with self._write_lock:
            self.dashboards.set_panels(dashboard.dashboard_id, panels)
        self._audit(actor.member_id if actor else None, "edit_dashboard", dashboard.dashboard_id)
        return dashboard.to_dict()

    # -- faults ---------------------------------------------------------------

    def run_sweep(self, actor, now=None) -> list[FaultReport]:
        self.require_module("faultwatch")
        self._authorize(actor, Action.WRITE_DEVICE_METADATA, ResourceKind.DEVICE)
        reports = self.faultwatch.sweep(now)
        self._audit(actor.member_id if actor else None, "fault_sweep", f"{len(reports)} new reports")
        return reports

    def fault_reports(self, actor, since=None, fault_class: str | None = None) -> list[FaultReport]:
        self.require_module("faultwatch")
        self._authorize(actor, Action.READ_COMPLIANCE, ResourceKind.DEVICE)
        return self.faultwatch.reports.search(since, fault_class)

    # -- health ---------------------------------------------------------------

    def health(self) -> dict:
        modules = {name: "ok" for name in CORE_MODULES}
        for name in sorted(OPTIONAL_MODULES):
            modules[name] = "ok" if self.config.module_enabled(name) else "disabled"
        return {"status": "ok", "modules": modules}
