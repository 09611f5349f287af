from __future__ import annotations

import json
import random
from datetime import timedelta

import pytest

from lablink.errors import (
    AlreadyCompleted,
    DuplicateAssignment,
    InvalidWindow,
    PermissionDenied,
    UnknownId,
    WindowClosed,
)
from lablink.surveys import MockSurveyProvider, anonymous_identifier
from lablink.timeutil import parse_time

OPEN = parse_time("2021-03-01T09:00:00Z")
CLOSE = parse_time("2021-03-05T17:00:00Z")


@pytest.fixture
def template(service, admin):
    return service.create_template(admin, "Weekly wellbeing", "https://survey.test/weekly")


class TestAnonymousIdentifier:
    def test_deterministic(self):
        salt = b"\x01" * 16
        a = anonymous_identifier(salt, "occupant7", "https://s.test/w", OPEN)
        b = anonymous_identifier(salt, "occupant7", "https://s.test/w", OPEN)
        assert a == b
        assert len(a) == 32 and a == a.lower()
        int(a, 16)  # strictly hex

    def test_distinct_open_times_distinct_ids(self):
        salt = b"\x01" * 16
        a = anonymous_identifier(salt, "occupant7", "https://s.test/w", OPEN)
        b = anonymous_identifier(
            salt, "occupant7", "https://s.test/w", OPEN + timedelta(days=7)
        )
        assert a != b

    def test_salt_rotation_changes_id(self, service, admin, user, template):
        assignment = service.schedule_survey(
            admin, user.member_id, template.template_id, OPEN, CLOSE
        )
        before = service.surveys.anonymous_id_for(user, assignment)
        assert before == assignment.anonymous_id
        service.rotate_secret(user)
        after = service.surveys.anonymous_id_for(user, assignment)
        assert after != before


class TestSchedule:
    def test_schedule_queues_one_link(self, service, staff, user, template):
        assignment = service.schedule_survey(
            staff, user.member_id, template.template_id, OPEN, CLOSE
        )
        assert assignment.completed is False
        entries = service.surveys.outbox.entries
        assert len(entries) == 1
        assert entries[0].email == user.email
        assert assignment.anonymous_id in entries[0].link
        assert entries[0].link.startswith(template.provider_url)

    def test_duplicate_triple_rejected(self, service, staff, user, template):
        service.schedule_survey(staff, user.member_id, template.template_id, OPEN, CLOSE)
        with pytest.raises(DuplicateAssignment):
            service.schedule_survey(staff, user.member_id, template.template_id, OPEN, CLOSE)

    def test_same_template_same_time_distinct_members(self, service, admin, staff, template):
        a = service.create_member(admin, "occA")
        b = service.create_member(admin, "occB")
        first = service.schedule_survey(staff, a.member_id, template.template_id, OPEN, CLOSE)
        second = service.schedule_survey(staff, b.member_id, template.template_id, OPEN, CLOSE)
        assert first.anonymous_id != second.anonymous_id

    def test_plain_user_cannot_schedule(self, service, user, template):
        with pytest.raises(PermissionDenied):
            service.schedule_survey(user, user.member_id, template.template_id, OPEN, CLOSE)

    def test_open_after_close_rejected(self, service, staff, user, template):
        with pytest.raises(InvalidWindow):
            service.schedule_survey(staff, user.member_id, template.template_id, CLOSE, OPEN)


class TestCompletion:
    def _schedule(self, service, staff, user, template):
        return service.schedule_survey(staff, user.member_id, template.template_id, OPEN, CLOSE)

    def test_callback_within_window(self, service, staff, user, template):
        assignment = self._schedule(service, staff, user, template)
        done = service.record_completion(
            assignment.anonymous_id, OPEN + timedelta(hours=2), {"mood": 4}
        )
        assert done.completed is True
        assert done.completed_at == OPEN + timedelta(hours=2)

    def test_late_callback_window_closed(self, service, staff, user, template):
        assignment = self._schedule(service, staff, user, template)
        with pytest.raises(WindowClosed):
            service.record_completion(assignment.anonymous_id, CLOSE + timedelta(days=10))

    def test_grace_period_boundary(self, service, staff, user, template):
        assignment = self._schedule(service, staff, user, template)
        inside = CLOSE + timedelta(hours=23)
        done = service.record_completion(assignment.anonymous_id, inside)
        assert done.completed

    def test_early_callback_rejected(self, service, staff, user, template):
        assignment = self._schedule(service, staff, user, template)
        with pytest.raises(WindowClosed):
            service.record_completion(assignment.anonymous_id, OPEN - timedelta(hours=1))

    def test_second_callback_already_completed(self, service, staff, user, template):
        assignment = self._schedule(service, staff, user, template)
        service.record_completion(assignment.anonymous_id, OPEN + timedelta(hours=1))
        with pytest.raises(AlreadyCompleted):
            service.record_completion(assignment.anonymous_id, OPEN + timedelta(hours=2))
        assert len(service.surveys.responses.all()) == 1  # payload not duplicated

    def test_unknown_id(self, service):
        with pytest.raises(UnknownId):
            service.record_completion("f" * 32, OPEN)

    def test_mock_provider_roundtrip(self, service, staff, user, template):
        assignment = self._schedule(service, staff, user, template)
        provider = MockSurveyProvider()
        link = provider.distribute(template.provider_url, assignment.anonymous_id)
        done = provider.complete(service.surveys, link, OPEN + timedelta(hours=1))
        assert done.assignment_id == assignment.assignment_id


class TestExtendAndRedistribute:
    def test_extend_moves_close_only(self, service, staff, user, template):
        assignment = service.schedule_survey(staff, user.member_id, template.template_id, OPEN, CLOSE)
        anon_before = assignment.anonymous_id
        extended = service.extend_deadline(staff, assignment.assignment_id, CLOSE + timedelta(hours=48))
        assert extended.close_time == CLOSE + timedelta(hours=48)
        assert extended.anonymous_id == anon_before
        assert any(e.action == "extend_deadline" for e in service.audit_log)

    def test_extend_backwards_invalid(self, service, staff, user, template):
        assignment = service.schedule_survey(staff, user.member_id, template.template_id, OPEN, CLOSE)
        with pytest.raises(InvalidWindow):
            service.extend_deadline(staff, assignment.assignment_id, OPEN)

    def test_redistribute_increments_deliveries(self, service, staff, user, template):
        assignment = service.schedule_survey(staff, user.member_id, template.template_id, OPEN, CLOSE)
        service.redistribute(staff, assignment.assignment_id, now=OPEN + timedelta(days=1))
        assert assignment.deliveries == 2
        assert len(service.surveys.outbox.entries) == 2

    def test_redistribute_completed(self, service, staff, user, template):
        assignment = service.schedule_survey(staff, user.member_id, template.template_id, OPEN, CLOSE)
        service.record_completion(assignment.anonymous_id, OPEN + timedelta(hours=1))
        with pytest.raises(AlreadyCompleted):
            service.redistribute(staff, assignment.assignment_id, now=OPEN + timedelta(days=1))

    def test_redistribute_after_close(self, service, staff, user, template):
        assignment = service.schedule_survey(staff, user.member_id, template.template_id, OPEN, CLOSE)
        with pytest.raises(WindowClosed):
            service.redistribute(staff, assignment.assignment_id, now=CLOSE + timedelta(days=2))


class TestCompliance:
    def test_two_of_three(self, service, staff, user, template):
        for week in range(3):
            service.schedule_survey(
                staff, user.member_id, template.template_id,
                OPEN + timedelta(days=7 * week), CLOSE + timedelta(days=7 * week),
            )
        assignments = service.surveys.assignments_for_member(user.member_id)
        for assignment in assignments[:2]:
            service.record_completion(assignment.anonymous_id, assignment.open_time)
        [row] = service.compliance_report(staff, member_id=user.member_id)
        assert (row.assigned, row.completed) == (3, 2)
        assert row.rate == pytest.approx(0.667, abs=1e-3)

    def test_plain_user_denied(self, service, user):
        with pytest.raises(PermissionDenied):
            service.compliance_report(user)

    def test_zero_assigned_rate_absent(self, service, staff, user):
        [row] = service.compliance_report(staff, member_id=user.member_id)
        assert row.assigned == 0 and row.rate is None
        assert "rate" not in row.to_dict()

    def test_randomized_recount_oracle(self, service, admin, staff, template):
        rng = random.Random(20210301)
        members = [service.create_member(admin, f"occ{i}") for i in range(5)]
        for member in members:
            for week in range(4):
                assignment = service.schedule_survey(
                    staff, member.member_id, template.template_id,
                    OPEN + timedelta(days=7 * week), CLOSE + timedelta(days=7 * week),
                )
                if rng.random() < 0.6:
                    service.record_completion(assignment.anonymous_id, assignment.open_time)

        window = (OPEN, OPEN + timedelta(days=15))  # spans weeks 0..2
        rows = {r.member_id: r for r in service.compliance_report(staff, window=window)}

        # brute-force recount over the assignment table
        expected: dict[str, list[int]] = {}
        for assignment in service.surveys.assignments():
            if not window[0] <= assignment.open_time < window[1]:
                continue
            bucket = expected.setdefault(assignment.member_id, [0, 0])
            bucket[0] += 1
            bucket[1] += int(assignment.completed)
        assert set(rows) == set(expected)
        for member_id, (assigned, completed) in expected.items():
            assert (rows[member_id].assigned, rows[member_id].completed) == (assigned, completed)
        # conservation under every filter
        assert all(row.completed <= row.assigned for row in rows.values())


class TestAnonymity:
    def test_response_store_carries_no_identifiers(self, service, admin, staff, template):
        members = [
            service.create_member(admin, f"anon{i}", email=f"anon{i}@lab.test")
            for i in range(4)
        ]
        for member in members:
            assignment = service.schedule_survey(
                staff, member.member_id, template.template_id, OPEN, CLOSE
            )
            service.record_completion(
                assignment.anonymous_id, OPEN + timedelta(hours=3), {"answers": [1, 2, 3]}
            )
        blob = (service.config.data_dir / "anonymous" / "responses.jsonl").read_text()
        for member in members:
            assert member.member_id not in blob
            assert member.username not in blob
            assert member.email not in blob

    def test_metadata_recomputation_matches_stored_keys(self, service, admin, staff, template):
        members = [service.create_member(admin, f"link{i}") for i in range(3)]
        for member in members:
            assignment = service.schedule_survey(
                staff, member.member_id, template.template_id, OPEN, CLOSE
            )
            service.record_completion(assignment.anonymous_id, OPEN + timedelta(hours=1))
        stored_keys = service.surveys.responses.keys()
        for member in members:
            for assignment in service.surveys.assignments_for_member(member.member_id):
                assert service.surveys.anonymous_id_for(member, assignment) in stored_keys

    def test_rotation_orphans_prior_responses(self, service, staff, user, template):
        assignment = service.schedule_survey(staff, user.member_id, template.template_id, OPEN, CLOSE)
        old_anon = assignment.anonymous_id
        service.record_completion(old_anon, OPEN + timedelta(hours=1))
        service.rotate_secret(user)
        # the stored assignment now carries a fresh id; the recorded response
        # key no longer matches anything recomputable from metadata
        assert assignment.anonymous_id != old_anon
        assert old_anon in service.surveys.responses.keys()
        assert service.surveys.anonymous_id_for(user, assignment) == assignment.anonymous_id
        with pytest.raises(UnknownId):
            service.record_completion(old_anon, OPEN + timedelta(hours=2))


class TestOutboxFormat:
    def test_lines_are_minimal_json_records(self, service, staff, user, template):
        service.schedule_survey(staff, user.member_id, template.template_id, OPEN, CLOSE)
        lines = (service.config.data_dir / "outbox.log").read_text().splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert set(record) == {"queued_at", "email", "link"}
        assert record["email"] == user.email
