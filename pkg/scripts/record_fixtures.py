#!/usr/bin/env python3
"""Record real API responses into frontend/fixtures/.

The console's snapshot tests render these documents verbatim; recording them
from a live in-process service keeps the frontend honest about what the API
actually returns.
"""

from __future__ import annotations

import json
import tempfile
from datetime import timedelta
from pathlib import Path

from fastapi.testclient import TestClient

from lablink.api import create_app
from lablink.config import ServiceConfig
from lablink.floorplan import GridCell
from lablink.service import LabLinkService
from lablink.timeutil import format_time, parse_time

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "fixtures"

T0 = parse_time("2021-03-01T00:00:00Z")


def seed(service: LabLinkService, client: TestClient) -> dict:
    admin = service.bootstrap_admin("root")
    staff = service.create_member(admin, "organizer", email="org@lab.test", role="staff",
                                  descriptor="organizer")
    occupants = [
        service.create_member(admin, f"occupant{i}", email=f"occ{i}@lab.test")
        for i in range(1, 4)
    ]

    plan = service.create_floorplan(admin, "Link Lab", 1.0, 8, 6)
    service.assign_seat(admin, occupants[0].member_id, plan.plan_id, GridCell(1, 1), T0)
    service.assign_seat(admin, occupants[1].member_id, plan.plan_id, GridCell(5, 4), T0)

    # a 15-minute air-quality sensor with six hours of data for the live chart
    service.register_device(
        admin, "503eaa71b92a",
        [{"fieldname": "co2", "unit": "ppm", "min_valid": 0, "max_valid": 10000,
          "expected_interval_s": 900}],
        plan_id=plan.plan_id, cell=GridCell(2, 1),
    )
    points = []
    for k in range(24):
        points.append({
            "time": format_time(T0 + timedelta(seconds=900 * k)),
            "device_id": "503eaa71b92a",
            "fieldname": "co2",
            "value": 420 + (k % 6) * 15,
            "counter": k,
        })
    service.ingest(admin, points)

    # an hourly fleet where one outlet goes dark at night, for the fault board
    for d in range(3):
        service.register_device(
            admin, f"outlet00{d}",
            [{"fieldname": "lux", "expected_interval_s": 3600}],
            plan_id=plan.plan_id, cell=GridCell(4 + d, 2),
        )
    night = []
    for d in range(3):
        for hour in range(14 * 24):
            hour_of_day = hour % 24
            if d == 0 and (hour_of_day >= 22 or hour_of_day < 6):
                continue
            night.append({
                "time": format_time(T0 + timedelta(hours=hour)),
                "device_id": f"outlet00{d}",
                "fieldname": "lux",
                "value": 300.0 if 6 <= hour_of_day < 22 else 2.0,
                "counter": hour % 256,
            })
    service.ingest(admin, night)
    service.run_sweep(admin, now=T0 + timedelta(days=14))

    # survey compliance: occupant1 completes 2 of 3 weekly surveys
    template = service.create_template(admin, "Weekly wellbeing", "https://survey.test/weekly")
    for i, occupant in enumerate(occupants):
        for week in range(3):
            assignment = service.schedule_survey(
                staff, occupant.member_id, template.template_id,
                T0 + timedelta(days=7 * week, hours=9),
                T0 + timedelta(days=7 * week + 4, hours=17),
            )
            if (i, week) in {(0, 0), (0, 1), (1, 0), (2, 0), (2, 1), (2, 2)}:
                service.record_completion(
                    assignment.anonymous_id, assignment.open_time + timedelta(hours=2), {"ok": 1}
                )

    return {
        "staff_token": service.issue_token(staff),
        "user_token": service.issue_token(occupants[0]),
        "plan_id": plan.plan_id,
        "occupant1_id": occupants[0].member_id,
    }


def record():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(prefix="fixtures-") as tmp:
        service = LabLinkService(ServiceConfig(data_dir=Path(tmp)))
        try:
            client = TestClient(create_app(service))
            handles = seed(service, client)
            staff = {"Authorization": f"Bearer {handles['staff_token']}"}
            user = {"Authorization": f"Bearer {handles['user_token']}"}

            captures = {
                "compliance.json": client.get("/api/v1/surveys/compliance", headers=staff),
                "assignments.json": client.get(
                    "/api/v1/surveys/assignments",
                    params={"member_id": handles["occupant1_id"]},
                    headers=staff,
                ),
                "plan.json": client.get(
                    f"/api/v1/floorplans/{handles['plan_id']}", headers=staff
                ),
                "device_dashboard.json": client.get(
                    "/api/v1/dashboards/device/503eaa71b92a",
                    params={"at": "2021-03-01T06:00:00Z"},
                    headers=staff,
                ),
                "faults.json": client.get("/api/v1/faults", headers=staff),
                "me_staff.json": client.get("/api/v1/me", headers=staff),
                "me_user.json": client.get("/api/v1/me", headers=user),
                "health.json": client.get("/api/v1/health"),
            }
            for name, response in captures.items():
                assert response.status_code == 200, f"{name}: {response.status_code} {response.text}"
                (FIXTURES / name).write_text(
                    json.dumps(response.json(), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8",
                )
                print(f"recorded {name}")
        finally:
            service.close()


if __name__ == "__main__":
    record()
