"""HTTP gateway binding every module: bearer-token authentication, role
enforcement through the registry matrix, module enable/disable semantics, and
the uniform {code, message, detail?} error envelope.

Unknown fields in request bodies are ignored and echoed back in an
X-Ignored-Fields header so heterogeneous device firmware keeps working.
"""

from __future__ import annotations

import json
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .errors import InvalidRange, LabLinkError, MalformedBatch, PermissionDenied
from .floorplan import GridCell
from .dashboards import Panel
from .registry import Action, ResourceKind
from .service import LabLinkService
from .timeutil import format_time, parse_time

API_PREFIX = "/api/v1"


async def _json_body(request: Request):
    try:
        raw = await request.body()
        return json.loads(raw) if raw else {}
    except json.JSONDecodeError:
        raise MalformedBatch("request body is not valid JSON")


def _pick(body: dict, allowed: tuple[str, ...], response: Response) -> dict:
    """Keep allowed keys; surface what was dropped in a warning header."""
    if not isinstance(body, dict):
        raise MalformedBatch("request body must be a JSON object")
    ignored = sorted(set(body) - set(allowed))
    if ignored:
        response.headers["X-Ignored-Fields"] = ",".join(ignored)
    return {key: body[key] for key in allowed if key in body}


def _time_param(value: str | None, name: str):
    if value is None:
        raise InvalidRange(f"missing time parameter: {name}")
    try:
        return parse_time(value)
    except ValueError:
        raise InvalidRange(f"bad time parameter {name}: {value!r}")


def _opt_time_param(value: str | None, name: str):
    return None if value is None else _time_param(value, name)


def _cell(body: dict) -> GridCell:
    try:
        return GridCell(int(body["col"]), int(body["row"]))
    except (KeyError, TypeError, ValueError):
        raise MalformedBatch("cell requires integer 'col' and 'row'")


def create_app(service: LabLinkService, console_dir: str | Path | None = None) -> FastAPI:
    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        service.close()  # drain in-flight writes before exit

    app = FastAPI(title="lablink", version="0.1.0", docs_url=None, redoc_url=None, lifespan=lifespan)
    app.state.service = service

    @app.exception_handler(LabLinkError)
    async def _lablink_error(_request: Request, exc: LabLinkError):
        return JSONResponse(status_code=exc.http_status, content=exc.envelope())

    def actor_from(request: Request):
        header = request.headers.get("authorization", "")
        token = header[7:] if header.lower().startswith("bearer ") else None
        return service.resolve_token(token)

    # -- health / auth -----------------------------------------------------

    @app.get(API_PREFIX + "/health")
    def health():
        return service.health()

    @app.post(API_PREFIX + "/auth/token")
    async def auth_token(request: Request, response: Response):
        body = _pick(await _json_body(request), ("username", "password"), response)
        token = service.login(body.get("username", ""), body.get("password", ""))
        member = service.resolve_token(token)
        return {"token": token, "role": member.role.value}

    @app.get(API_PREFIX + "/me")
    def me(request: Request):
        actor = actor_from(request)
        if actor is None or not service.check(actor, Action.READ_OWN_DATA, ResourceKind.MEMBER):
            raise PermissionDenied("authentication required")
        return actor.to_public_dict()

    @app.post(API_PREFIX + "/me/rotate-secret")
    def rotate_secret(request: Request):
        actor = actor_from(request)
        member = service.rotate_secret(actor)
        return member.to_public_dict()

    # -- members -----------------------------------------------------------

    @app.post(API_PREFIX + "/members", status_code=201)
    async def create_member(request: Request, response: Response):
        body = _pick(
            await _json_body(request),
            ("username", "email", "display_name", "role", "descriptor", "password"),
            response,
        )
        member = service.create_member(actor_from(request), **body)
        return member.to_public_dict()

    @app.delete(API_PREFIX + "/members/{member_id}")
    def delete_member(member_id: str, request: Request):
        receipt = service.delete_member(actor_from(request), member_id)
        return receipt.to_dict()

    @app.get(API_PREFIX + "/members/{member_id}/nearby-devices")
    def nearby_devices(member_id: str, request: Request, radius_m: float = 5.0):
        device_ids = service.nearby_devices(actor_from(request), member_id, radius_m)
        return {"member_id": member_id, "radius_m": radius_m, "device_ids": device_ids}

    # -- floor plans ---------------------------------------------------------

    @app.post(API_PREFIX + "/floorplans", status_code=201)
    async def create_floorplan(request: Request, response: Response):
        body = _pick(
            await _json_body(request), ("name", "cell_size_m", "cols", "rows"), response
        )
        plan = service.create_floorplan(
            actor_from(request),
            str(body.get("name", "")),
            float(body.get("cell_size_m", 0)),
            int(body.get("cols", 0)),
            int(body.get("rows", 0)),
        )
        return {
            "plan_id": plan.plan_id,
            "name": plan.name,
            "cell_size_m": plan.cell_size_m,
            "cols": plan.cols,
            "rows": plan.rows,
            "cells": plan.cell_count,
        }

    @app.post(API_PREFIX + "/seats", status_code=201)
    async def assign_seat(request: Request, response: Response):
        body = _pick(
            await _json_body(request),
            ("member_id", "plan_id", "col", "row", "valid_from"),
            response,
        )
        valid_from = _opt_time_param(body.get("valid_from"), "valid_from")
        seat = service.assign_seat(
            actor_from(request),
            body.get("member_id", ""),
            body.get("plan_id", ""),
            _cell(body),
            valid_from,
        )
        return seat.to_dict()

    @app.get(API_PREFIX + "/floorplans/{plan_id}")
    def plan_occupancy(plan_id: str, request: Request):
        """Grid-editor view: plan geometry plus seated members and placed
        devices. Seat locations are private, so this is a staff surface."""
        actor = actor_from(request)
        if not service.check(actor, Action.READ_COMPLIANCE, ResourceKind.SEAT):
            raise PermissionDenied("the occupancy view is staff-only")
        plan = service.floorplans.get_plan(plan_id)
        seats = []
        for seat in service.floorplans.seats_on_plan(plan_id):
            doc = seat.to_dict()
            try:
                doc["username"] = service.registry.get(seat.member_id).username
            except LabLinkError:
                doc["username"] = seat.member_id
            seats.append(doc)
        return {
            "plan_id": plan.plan_id,
            "name": plan.name,
            "cell_size_m": plan.cell_size_m,
            "cols": plan.cols,
            "rows": plan.rows,
            "seats": seats,
            "devices": [d.to_dict() for d in service.devices.on_plan(plan_id)],
        }

    # -- devices -------------------------------------------------------------

    @app.post(API_PREFIX + "/devices", status_code=201)
    async def register_device(request: Request, response: Response):
        body = _pick(
            await _json_body(request),
            (
                "device_id",
                "fields",
                "owner",
                "location_general",
                "location_specific",
                "plan_id",
                "col",
                "row",
                "system_version",
                "counter_modulus",
            ),
            response,
        )
        kwargs = {}
        for key in ("owner", "location_general", "location_specific", "plan_id",
                    "system_version", "counter_modulus"):
            if key in body:
                kwargs[key] = body[key]
        if "col" in body and "row" in body:
            kwargs["cell"] = _cell(body)
        device = service.register_device(
            actor_from(request), body.get("device_id", ""), body.get("fields", []), **kwargs
        )
        return device.to_dict()

    @app.patch(API_PREFIX + "/devices/{device_id}/location")
    async def move_device(device_id: str, request: Request, response: Response):
        body = _pick(await _json_body(request), ("plan_id", "col", "row"), response)
        device = service.move_device(
            actor_from(request), device_id, body.get("plan_id", ""), _cell(body)
        )
        return device.to_dict()

    @app.delete(API_PREFIX + "/devices/{device_id}")
    def retire_device(device_id: str, request: Request):
        return service.retire_device(actor_from(request), device_id).to_dict()

    @app.get(API_PREFIX + "/devices/{device_id}/fields")
    def device_fields(device_id: str, request: Request):
        fields = service.list_known_fields(actor_from(request), device_id)
        return {"device_id": device_id, "fields": fields}

    # -- telemetry -------------------------------------------------------------

    @app.post(API_PREFIX + "/points")
    async def ingest_points(request: Request):
        body = await _json_body(request)
        if not isinstance(body, list):
            raise MalformedBatch("point batches must be JSON arrays")
        receipt = service.ingest(actor_from(request), body)
        return receipt.to_dict()

    @app.get(API_PREFIX + "/query")
    def query(request: Request):
        params = request.query_params
        selector = {
            key[4:]: value for key, value in params.items() if key.startswith("tag.")
        }
        t0 = _time_param(params.get("from"), "from")
        t1 = _time_param(params.get("to"), "to")
        agg = params.get("agg", "raw")
        every = float(params["every"]) if "every" in params else None
        actor = actor_from(request)
        if agg == "raw":
            points = service.select_points(actor, selector, t0, t1)
            return {"selector": selector, "agg": "raw", "points": [p.canonical_dict() for p in points]}
        series = service.query(actor, selector, t0, t1, agg, every)
        return {"agg": agg, "every_s": every, **series.to_dict()}

    # -- surveys -------------------------------------------------------------

    @app.post(API_PREFIX + "/surveys/templates", status_code=201)
    async def create_template(request: Request, response: Response):
        service.require_module("surveys")  # gate before body validation
        body = _pick(await _json_body(request), ("title", "provider_url", "cadence"), response)
        template = service.create_template(
            actor_from(request),
            body.get("title", ""),
            body.get("provider_url", ""),
            body.get("cadence", "weekly"),
        )
        return template.to_dict()

    @app.post(API_PREFIX + "/surveys/assignments", status_code=201)
    async def schedule_survey(request: Request, response: Response):
        service.require_module("surveys")  # gate before body validation
        body = _pick(
            await _json_body(request),
            ("member_id", "template_id", "open_time", "close_time"),
            response,
        )
        assignment = service.schedule_survey(
            actor_from(request),
            body.get("member_id", ""),
            body.get("template_id", ""),
            _time_param(body.get("open_time"), "open_time"),
            _time_param(body.get("close_time"), "close_time"),
        )
        return assignment.to_dict()

    @app.post(API_PREFIX + "/surveys/assignments/{assignment_id}/extend")
    async def extend_deadline(assignment_id: str, request: Request, response: Response):
        service.require_module("surveys")  # gate before body validation
        body = _pick(await _json_body(request), ("new_close",), response)
        assignment = service.extend_deadline(
            actor_from(request), assignment_id, _time_param(body.get("new_close"), "new_close")
        )
        return assignment.to_dict()

    @app.post(API_PREFIX + "/surveys/assignments/{assignment_id}/redistribute")
    async def redistribute(assignment_id: str, request: Request, response: Response):
        service.require_module("surveys")  # gate before body validation
        body = _pick(await _json_body(request), ("at",), response)
        at = _opt_time_param(body.get("at"), "at")
        entry = service.redistribute(actor_from(request), assignment_id, now=at)
        assignment = service.surveys.get(assignment_id)
        return {
            "queued_at": format_time(entry.queued_at),
            "email": entry.email,
            "link": entry.link,
            "deliveries": assignment.deliveries,
        }

    @app.post(API_PREFIX + "/surveys/callback")
    async def survey_callback(request: Request, response: Response):
        service.require_module("surveys")  # gate before body validation
        body = _pick(
            await _json_body(request), ("anonymous_id", "payload", "received_at"), response
        )
        received = _opt_time_param(body.get("received_at"), "received_at")
        service.record_completion(
            body.get("anonymous_id", ""),
            received,
            body.get("payload"),
            actor=actor_from(request),
        )
        return {"status": "completed"}

    @app.get(API_PREFIX + "/surveys/assignments")
    def list_assignments(request: Request):
        """Staff listing behind the compliance table's extend/redistribute
        actions."""
        service.require_module("surveys")
        actor = actor_from(request)
        if not service.check(actor, Action.READ_COMPLIANCE, ResourceKind.SURVEY_ASSIGNMENT):
            raise PermissionDenied("assignment listings are staff-only")
        member_id = request.query_params.get("member_id")
        assignments = (
            service.surveys.assignments_for_member(member_id)
            if member_id
            else service.surveys.assignments()
        )
        assignments = sorted(assignments, key=lambda a: (a.member_id, a.open_time.isoformat()))
        return {"assignments": [a.to_dict() for a in assignments]}

    @app.get(API_PREFIX + "/surveys/compliance")
    def compliance(request: Request):
        service.require_module("surveys")  # gate before body validation
        params = request.query_params
        window = None
        if "from" in params or "to" in params:
            window = (
                _time_param(params.get("from"), "from"),
                _time_param(params.get("to"), "to"),
            )
        rows = service.compliance_report(
            actor_from(request),
            member_id=params.get("member_id"),
            template_id=params.get("template_id"),
            window=window,
        )
        return {"rows": [row.to_dict() for row in rows]}

    # -- dashboards ------------------------------------------------------------

    @app.get(API_PREFIX + "/dashboards/{owner_kind}/{owner_id}")
    def render_dashboard(owner_kind: str, owner_id: str, request: Request):
        service.require_module("dashboards")  # gate before body validation
        at = _opt_time_param(request.query_params.get("at"), "at")
        return service.render_dashboard(actor_from(request), owner_kind, owner_id, at)

    @app.patch(API_PREFIX + "/dashboards/{owner_kind}/{owner_id}")
    async def edit_dashboard(owner_kind: str, owner_id: str, request: Request, response: Response):
        service.require_module("dashboards")  # gate before body validation
        body = _pick(await _json_body(request), ("panels",), response)
        panels = []
        for raw in body.get("panels", []):
            query_doc = raw.get("query", {})
            panels.append(
                Panel(
                    title=raw.get("title", ""),
                    selector=dict(query_doc.get("selector", {})),
                    agg=query_doc.get("agg", "mean"),
                    every_s=query_doc.get("every_s"),
                    lookback_s=raw.get("lookback_s", 6 * 3600.0),
                    render_hint=raw.get("render_hint", "timeseries"),
                )
            )
        return service.edit_dashboard_panels(actor_from(request), owner_kind, owner_id, panels)

    # -- faults ----------------------------------------------------------------

    @app.get(API_PREFIX + "/faults")
    def faults(request: Request):
        service.require_module("faultwatch")  # gate before body validation
        params = request.query_params
        since = _opt_time_param(params.get("since"), "since")
        reports = service.fault_reports(
            actor_from(request), since, params.get("class")
        )
        return {"reports": [r.to_dict() for r in reports]}

    @app.post(API_PREFIX + "/faults/sweep")
    async def fault_sweep(request: Request, response: Response):
        service.require_module("faultwatch")  # gate before body validation
        body = _pick(await _json_body(request), ("at",), response)
        at = _opt_time_param(body.get("at"), "at")
        reports = service.run_sweep(actor_from(request), at)
        return {"new_reports": [r.to_dict() for r in reports]}

    # -- console ----------------------------------------------------------------

    @app.get("/console/bootstrap.json")
    def console_bootstrap():
        return {"api_base_url": API_PREFIX, "poll_interval_s": 15}

    if console_dir is not None and Path(console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=str(console_dir), html=True), name="console")

    return app
