from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lablink.errors import DuplicateUsername, NotFound, PermissionDenied
from lablink.registry import (
    Action,
    PERMISSION_MATRIX,
    ResourceKind,
    Role,
    allow_set,
    authorize,
)
from lablink.timeutil import parse_time


class TestPermissionMatrix:
    def test_matrix_is_total(self):
        triples = {(r, a, k) for r in Role for a in Action for k in ResourceKind}
        assert set(PERMISSION_MATRIX) == triples
        assert all(isinstance(v, bool) for v in PERMISSION_MATRIX.values())

    def test_allow_sets_nest_strictly(self):
        assert allow_set(Role.USER) < allow_set(Role.STAFF) < allow_set(Role.ADMIN)

    @given(st.sampled_from(list(Action)), st.sampled_from(list(ResourceKind)))
    def test_no_user_privilege_escapes_staff(self, action, kind):
        if authorize(Role.USER, action, kind):
            assert authorize(Role.STAFF, action, kind)
        if authorize(Role.STAFF, action, kind):
            assert authorize(Role.ADMIN, action, kind)

    def test_staff_reads_compliance_but_user_does_not(self):
        assert authorize(Role.STAFF, Action.READ_COMPLIANCE, ResourceKind.SURVEY_ASSIGNMENT)
        assert not authorize(Role.USER, Action.READ_COMPLIANCE, ResourceKind.SURVEY_ASSIGNMENT)

    def test_admin_may_delete_members(self):
        assert authorize(Role.ADMIN, Action.DELETE_MODEL, ResourceKind.MEMBER)

    def test_staff_never_creates_or_deletes_members(self):
        assert not authorize(Role.STAFF, Action.CREATE_MODEL, ResourceKind.MEMBER)
        assert not authorize(Role.STAFF, Action.DELETE_MODEL, ResourceKind.MEMBER)

    def test_staff_writes_survey_metadata(self):
        assert authorize(Role.STAFF, Action.WRITE_SURVEY_METADATA, ResourceKind.SURVEY_ASSIGNMENT)

    def test_everyone_reads_public(self):
        for role in Role:
            for kind in ResourceKind:
                assert authorize(role, Action.READ_PUBLIC, kind)


class TestCreateMember:
    def test_admin_creates_participant(self, service, admin):
        member = service.create_member(admin, "occupant7", role="user", descriptor="participant")
        assert member.role is Role.USER
        assert member.username == "occupant7"
        assert len(member.secret_salt) == 16

    def test_staff_cannot_create(self, service, admin, staff):
        with pytest.raises(PermissionDenied):
            service.create_member(staff, "occupant8")

    def test_duplicate_username_rejected(self, service, admin):
        service.create_member(admin, "occupant7")
        with pytest.raises(DuplicateUsername):
            service.create_member(admin, "occupant7")

    def test_creation_provisions_a_dashboard(self, service, admin):
        member = service.create_member(admin, "occupant9")
        dashboard = service.dashboards.for_owner("member", member.member_id)
        assert dashboard.visibility == "private"
        assert dashboard.panels == []

    def test_creation_is_audited(self, service, admin):
        service.create_member(admin, "occupant10")
        assert any(
            entry.action == "create_member" and entry.detail == "occupant10"
            for entry in service.audit_log
        )

    def test_fresh_salts_are_distinct(self, service, admin):
        a = service.create_member(admin, "m1")
        b = service.create_member(admin, "m2")
        assert a.secret_salt != b.secret_salt


class TestDeleteMember:
    def test_cascade_counts(self, service, admin):
        from lablink.floorplan import GridCell

        member = service.create_member(admin, "leaver")
        plan = service.create_floorplan(admin, "Lab", 1.0, 4, 4)
        service.assign_seat(admin, member.member_id, plan.plan_id, GridCell(0, 0))
        template = service.create_template(admin, "Weekly", "https://survey.test/w")
        for day in (1, 8, 15):
            service.schedule_survey(
                admin,
                member.member_id,
                template.template_id,
                parse_time(f"2021-03-{day:02d}T09:00:00Z"),
                parse_time(f"2021-03-{day:02d}T17:00:00Z"),
            )
        device = service.register_device(admin, "dev0001", [{"fieldname": "lux"}])

        receipt = service.delete_member(admin, member.member_id)
        assert receipt.downstream_total == 5
        assert len(receipt.deleted_dashboards) == 1
        assert len(receipt.deleted_seats) == 1
        assert len(receipt.deleted_survey_assignments) == 3
        # shared objects survive
        assert service.devices.get(device.device_id)
        assert service.floorplans.get_plan(plan.plan_id)
        assert service.surveys.get_template(template.template_id)

    def test_empty_cascade(self, tmp_path):
        # a member with no attachments at all needs the dashboards module off,
        # since creation otherwise provisions one
        from lablink.config import ServiceConfig
        from lablink.service import LabLinkService

        svc = LabLinkService(
            ServiceConfig(
                data_dir=tmp_path / "bare", enabled_modules=frozenset({"surveys", "faultwatch"})
            )
        )
        try:
            admin = svc.bootstrap_admin("root")
            member = svc.create_member(admin, "loner")
            receipt = svc.delete_member(admin, member.member_id)
            assert receipt.downstream_total == 0
        finally:
            svc.close()

    def test_cascade_with_dashboard_only(self, service, admin):
        member = service.create_member(admin, "loner")
        receipt = service.delete_member(admin, member.member_id)
        assert receipt.downstream_total == 1
        assert receipt.deleted_dashboards and not receipt.deleted_seats

    def test_staff_cannot_delete(self, service, admin, staff, user):
        with pytest.raises(PermissionDenied):
            service.delete_member(staff, user.member_id)

    def test_unknown_target(self, service, admin):
        with pytest.raises(NotFound):
            service.delete_member(admin, "nope")


class TestRotateSecret:
    def test_rotation_changes_salt(self, service, user):
        before = user.secret_salt
        service.rotate_secret(user)
        assert user.secret_salt != before

    def test_two_rotations_two_salts(self, service, user):
        service.rotate_secret(user)
        first = user.secret_salt
        service.rotate_secret(user)
        assert user.secret_salt != first

    def test_cannot_rotate_someone_else(self, service, admin, user):
        with pytest.raises(PermissionDenied):
            service.rotate_secret(admin, member_id=user.member_id)

    def test_anonymous_cannot_rotate(self, service):
        with pytest.raises(PermissionDenied):
            service.rotate_secret(None)


class TestSerialization:
    def test_public_dict_never_exposes_secrets(self, service, admin, user):
        for member in (admin, user):
            doc = member.to_public_dict()
            assert "secret_salt" not in doc
            assert "credential_hash" not in doc
            blob = str(doc)
            assert member.secret_salt.hex() not in blob

    def test_deactivation_keeps_the_account(self, service, admin, user):
        service.registry.deactivate(user.member_id)
        assert service.registry.get(user.member_id).active is False
