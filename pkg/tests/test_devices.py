from __future__ import annotations

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from lablink.devices import FieldSpec
from lablink.errors import (
    DuplicateDeviceId,
    EmptyFieldSchema,
    NotFound,
    OutOfBounds,
    PermissionDenied,
)
from lablink.floorplan import GridCell
from lablink.timeutil import parse_time


@pytest.fixture
def plan(service, admin):
    return service.create_floorplan(admin, "Link Lab", 1.0, 10, 10)


class TestRegisterDevice:
    def test_register_with_fields_and_location(self, service, admin, plan):
        device = service.register_device(
            admin,
            "503eaa71b92a",
            [
                {"fieldname": "heartbeat", "value_kind": "integer", "expected_interval_s": 900},
                {"fieldname": "humidity", "unit": "%"},
            ],
            plan_id=plan.plan_id,
            cell=GridCell(5, 0),
        )
        assert device.location_specific == "grid_5"
        assert device.location_general == "Link Lab"
        # auto-provisioned dashboard, one panel per field
        dashboard = service.dashboards.for_owner("device", device.device_id)
        assert len(dashboard.panels) == 2

    def test_duplicate_id(self, service, admin):
        service.register_device(admin, "aabbccddeeff", [{"fieldname": "lux"}])
        with pytest.raises(DuplicateDeviceId):
            service.register_device(admin, "aabbccddeeff", [{"fieldname": "lux"}])

    def test_empty_schema(self, service, admin):
        with pytest.raises(EmptyFieldSchema):
            service.register_device(admin, "bare0000", [])

    def test_range_spec_stored(self, service, admin):
        device = service.register_device(
            admin, "lux0001", [{"fieldname": "lux", "min_valid": 0, "max_valid": 100000}]
        )
        spec = device.known_fields["lux"]
        assert (spec.min_valid, spec.max_valid) == (0, 100000)

    def test_user_cannot_register(self, service, user):
        with pytest.raises(PermissionDenied):
            service.register_device(user, "nope0000", [{"fieldname": "lux"}])

    def test_bad_range_rejected(self):
        with pytest.raises(ValueError):
            FieldSpec("lux", min_valid=10, max_valid=10)


class TestKnownFields:
    def test_sorted_field_listing(self, service, admin):
        service.register_device(
            admin, "503eaa71b92a", [{"fieldname": "heartbeat"}, {"fieldname": "counter_total"}]
        )
        assert service.list_known_fields(admin, "503eaa71b92a") == ["counter_total", "heartbeat"]

    def test_retired_device_keeps_schema(self, service, admin):
        service.register_device(admin, "old0001", [{"fieldname": "lux"}])
        service.retire_device(admin, "old0001")
        assert service.list_known_fields(admin, "old0001") == ["lux"]

    def test_unknown_device(self, service, admin):
        with pytest.raises(NotFound):
            service.list_known_fields(admin, "missing")


class TestMoveDevice:
    def test_move_updates_tags_history_stays(self, service, admin, plan):
        service.register_device(
            admin, "mover001", [{"fieldname": "lux"}], plan_id=plan.plan_id, cell=GridCell(5, 0)
        )
        service.ingest(admin, [
            {"time": "2021-03-01T10:00:00Z", "device_id": "mover001", "fieldname": "lux", "value": 1}
        ])
        service.move_device(admin, "mover001", plan.plan_id, GridCell(7, 1))
        service.ingest(admin, [
            {"time": "2021-03-01T11:00:00Z", "device_id": "mover001", "fieldname": "lux", "value": 2}
        ])
        t0, t1 = parse_time("2021-03-01T00:00:00Z"), parse_time("2021-03-02T00:00:00Z")
        old = service.store.select({"location_specific": "grid_5"}, t0, t1)
        new = service.store.select({"location_specific": "grid_17"}, t0, t1)
        assert [p.fields["value"] for p in old] == [1]
        assert [p.fields["value"] for p in new] == [2]

    def test_same_cell_is_noop(self, service, admin, plan):
        device = service.register_device(
            admin, "fixed001", [{"fieldname": "lux"}], plan_id=plan.plan_id, cell=GridCell(3, 3)
        )
        before = device.revision
        service.move_device(admin, "fixed001", plan.plan_id, GridCell(3, 3))
        assert service.devices.get("fixed001").revision == before

    def test_move_out_of_bounds(self, service, admin, plan):
        service.register_device(admin, "edge0001", [{"fieldname": "lux"}])
        with pytest.raises(OutOfBounds):
            service.move_device(admin, "edge0001", plan.plan_id, GridCell(99, 99))


class TestSchemaMembership:
    @settings(max_examples=60, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(fieldname=st.text(alphabet="abcdefgh_", min_size=1, max_size=12))
    def test_acceptance_is_exactly_schema_membership(self, service, admin, fieldname):
        known = {"lux", "co2", "deg_c"}
        if not service.devices.known("fuzz0001"):
            service.register_device(admin, "fuzz0001", [{"fieldname": f} for f in sorted(known)])
        receipt = service.ingest(admin, [
            {"time": "2021-03-01T00:00:00Z", "device_id": "fuzz0001", "fieldname": fieldname, "value": 1}
        ])
        if fieldname in known:
            assert receipt.accepted == 1 and not receipt.rejected
        else:
            assert receipt.accepted == 0
            assert receipt.rejected[0][1] == "unknown_field"


class TestConcurrentReads:
    def test_schema_lookups_race_ingestion_safely(self, service, admin):
        import threading

        service.register_device(admin, "race0001", [{"fieldname": "lux"}])
        errors = []

        def reader():
            try:
                for _ in range(200):
                    assert service.list_known_fields(admin, "race0001") == ["lux"]
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        def writer():
            try:
                for i in range(50):
                    receipt = service.ingest(admin, [{
                        "time": f"2021-03-01T00:{i % 60:02d}:00Z",
                        "device_id": "race0001", "fieldname": "lux", "value": i,
                    }])
                    assert receipt.accepted == 1
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=reader) for _ in range(4)]
        threads.append(threading.Thread(target=writer))
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        assert not errors


class TestDashboardCoupling:
    def test_n_devices_n_dashboards(self, service, admin):
        before = len(service.dashboards)
        for i in range(7):
            service.register_device(admin, f"batch{i:03d}", [{"fieldname": "lux"}])
        assert len(service.dashboards) == before + 7

    def test_retire_drops_dashboard_keeps_points(self, service, admin):
        service.register_device(admin, "gone0001", [{"fieldname": "lux"}])
        service.ingest(admin, [
            {"time": "2021-03-01T00:00:00Z", "device_id": "gone0001", "fieldname": "lux", "value": 5}
        ])
        service.retire_device(admin, "gone0001")
        with pytest.raises(NotFound):
            service.dashboards.for_owner("device", "gone0001")
        points = service.store.select(
            {"device_id": "gone0001"},
            parse_time("2021-03-01T00:00:00Z"),
            parse_time("2021-03-02T00:00:00Z"),
        )
        assert len(points) == 1
