"""Survey templates, scheduled per-member assignments with open/close
windows, keyed-hash anonymous identifiers, a mock provider adapter, and
compliance reporting.

Responses live in a store physically separate from member metadata: linking a
response back to a member requires both stores plus the member's current
secret salt.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

from .errors import (
    AlreadyCompleted,
    DuplicateAssignment,
    InvalidWindow,
    NotFound,
    UnknownId,
    WindowClosed,
)
from .registry import Member, new_id
from .timeutil import format_time, utcnow

CADENCES = ("event", "daily", "weekly", "monthly", "custom")

ANONYMOUS_ID_HEX_CHARS = 32  # 128-bit truncation of sha256


def anonymous_identifier(
    secret_salt: bytes, username: str, provider_url: str, open_time: datetime
) -> str:
    """Keyed hash binding (member, survey, open time) into 32 lowercase hex
    chars. Rotating the salt changes every subsequently generated id."""
    payload = (
        secret_salt
        + username.encode("utf-8")
        + provider_url.encode("utf-8")
        + format_time(open_time).encode("utf-8")
    )
    return hashlib.sha256(payload).hexdigest()[:ANONYMOUS_ID_HEX_CHARS]


def distribution_link(provider_url: str, anonymous_id: str) -> str:
    sep = "&" if "?" in provider_url else "?"
    return f"{provider_url}{sep}anonymous_id={anonymous_id}"


@dataclass
class SurveyTemplate:
    template_id: str
    title: str
    provider_url: str
    cadence: str = "weekly"

    def __post_init__(self):
        if not self.provider_url:
            raise InvalidWindow("provider_url must be non-empty")
        if self.cadence not in CADENCES:
            raise ValueError(f"unknown cadence: {self.cadence!r}")

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "title": self.title,
            "provider_url": self.provider_url,
            "cadence": self.cadence,
        }


@dataclass
class SurveyAssignment:
    assignment_id: str
    member_id: str
    template_id: str
    open_time: datetime
    close_time: datetime
    anonymous_id: str
    completed: bool = False
    completed_at: datetime | None = None
    deliveries: int = 0

    def to_dict(self) -> dict:
        return {
            "assignment_id": self.assignment_id,
            "member_id": self.member_id,
            "template_id": self.template_id,
            "open_time": format_time(self.open_time),
            "close_time": format_time(self.close_time),
            "anonymous_id": self.anonymous_id,
            "completed": self.completed,
            "completed_at": format_time(self.completed_at) if self.completed_at else None,
            "deliveries": self.deliveries,
        }


@dataclass
class OutboxEntry:
    queued_at: datetime
    email: str
    link: str

    def to_line(self) -> str:
        return json.dumps(
            {"queued_at": format_time(self.queued_at), "email": self.email, "link": self.link},
            separators=(",", ":"),
        )


class Outbox:
    """Append-only delivery log; deployments consume it however they wish."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.entries: list[OutboxEntry] = []

    def queue(self, email: str, link: str, queued_at: datetime | None = None) -> OutboxEntry:
        entry = OutboxEntry(queued_at or utcnow(), email, link)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(entry.to_line() + "\n")
        self.entries.append(entry)
        return entry


class AnonymousResponseStore:
    """Keeps payloads keyed only by anonymous id, in its own namespace.

    Nothing written here may carry a member id, username, or email; the only
    way back to a member is recomputing the keyed hash from the metadata
    side.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._responses: list[dict] = []
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                self._responses = [json.loads(line) for line in fh if line.strip()]

    def record(self, anonymous_id: str, received_at: datetime, payload) -> dict:
        row = {
            "anonymous_id": anonymous_id,
            "received_at": format_time(received_at),
            "payload": payload,
        }
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
        self._responses.append(row)
        return row

    def all(self) -> list[dict]:
        return list(self._responses)

    def keys(self) -> set[str]:
        return {row["anonymous_id"] for row in self._responses}


@dataclass
class ComplianceRow:
    member_id: str
    username: str
    assigned: int
    completed: int

    @property
    def rate(self) -> float | None:
        if self.assigned == 0:
            return None
        return self.completed / self.assigned

    def to_dict(self) -> dict:
        row = {
            "member_id": self.member_id,
            "username": self.username,
            "assigned": self.assigned,
            "completed": self.completed,
        }
        if self.rate is not None:
            row["rate"] = self.rate
        return row


class SurveyStore:
    """Templates and assignments. (member, template, open_time) is unique
    together; completion is exactly-once under concurrent callbacks."""

    def __init__(self, outbox: Outbox, responses: AnonymousResponseStore, grace_s: float = 86400.0):
        self.outbox = outbox
        self.responses = responses
        self.grace_s = float(grace_s)
        self._templates: dict[str, SurveyTemplate] = {}
        self._assignments: dict[str, SurveyAssignment] = {}
        self._by_triple: dict[tuple[str, str, int], str] = {}
        self._by_anon: dict[str, str] = {}
        self._lock = threading.RLock()

    # -- templates -----------------------------------------------------------

    def create_template(self, title: str, provider_url: str, cadence: str = "weekly") -> SurveyTemplate:
        with self._lock:
            template = SurveyTemplate(new_id(), title, provider_url, cadence)
            self._templates[template.template_id] = template
            return template

    def get_template(self, template_id: str) -> SurveyTemplate:
        template = self._templates.get(template_id)
        if template is None:
            raise NotFound(f"no such survey template: {template_id}")
        return template

    def templates(self) -> list[SurveyTemplate]:
        return list(self._templates.values())

    # -- assignments ---------------------------------------------------------

    def anonymous_id_for(self, member: Member, assignment: SurveyAssignment) -> str:
        template = self.get_template(assignment.template_id)
        return anonymous_identifier(
            member.secret_salt, member.username, template.provider_url, assignment.open_time
        )

    def schedule(
        self,
        member: Member,
        template_id: str,
        open_time: datetime,
        close_time: datetime,
    ) -> SurveyAssignment:
        from .timeutil import epoch_ms

        with self._lock:
            template = self.get_template(template_id)
            if open_time >= close_time:
                raise InvalidWindow(f"open_time must precede close_time")
            triple = (member.member_id, template_id, epoch_ms(open_time))
            if triple in self._by_triple:
                raise DuplicateAssignment(
                    f"member {member.username} already assigned {template.title} at "
                    f"{format_time(open_time)}"
                )
            anon = anonymous_identifier(
                member.secret_salt, member.username, template.provider_url, open_time
            )
            assignment = SurveyAssignment(
                assignment_id=new_id(),
                member_id=member.member_id,
                template_id=template_id,
                open_time=open_time,
                close_time=close_time,
                anonymous_id=anon,
            )
            self._assignments[assignment.assignment_id] = assignment
            self._by_triple[triple] = assignment.assignment_id
            self._by_anon[anon] = assignment.assignment_id
            self._queue_link(member, template, assignment)
            return assignment

    def _queue_link(self, member: Member, template: SurveyTemplate, assignment: SurveyAssignment) -> OutboxEntry:
        link = distribution_link(template.provider_url, assignment.anonymous_id)
        entry = self.outbox.queue(member.email, link)
        assignment.deliveries += 1
        return entry

    def get(self, assignment_id: str) -> SurveyAssignment:
        assignment = self._assignments.get(assignment_id)
        if assignment is None:
            raise NotFound(f"no such assignment: {assignment_id}")
        return assignment

    def assignments(self) -> list[SurveyAssignment]:
        return list(self._assignments.values())

    def assignments_for_member(self, member_id: str) -> list[SurveyAssignment]:
        return [a for a in self._assignments.values() if a.member_id == member_id]

    def remove_assignments_for_member(self, member_id: str) -> list[str]:
        from .timeutil import epoch_ms

        with self._lock:
            doomed = [a for a in self._assignments.values() if a.member_id == member_id]
            for assignment in doomed:
                del self._assignments[assignment.assignment_id]
                self._by_triple.pop(
                    (assignment.member_id, assignment.template_id, epoch_ms(assignment.open_time)),
                    None,
                )
                self._by_anon.pop(assignment.anonymous_id, None)
            return [a.assignment_id for a in doomed]

    def rekey_member(self, member: Member) -> None:
        """Regenerate stored anonymous ids after a salt rotation; previously
        stored responses become orphaned on purpose."""
        with self._lock:
            for assignment in self.assignments_for_member(member.member_id):
                old = assignment.anonymous_id
                fresh = self.anonymous_id_for(member, assignment)
                if fresh == old:
                    continue
                self._by_anon.pop(old, None)
                assignment.anonymous_id = fresh
                self._by_anon[fresh] = assignment.assignment_id

    # -- completion ----------------------------------------------------------

    def record_completion(self, anonymous_id: str, received_at: datetime, payload) -> SurveyAssignment:
        with self._lock:
            assignment_id = self._by_anon.get(anonymous_id)
            if assignment_id is None:
                raise UnknownId(f"no assignment for anonymous id {anonymous_id}")
            assignment = self._assignments[assignment_id]
            if assignment.completed:
                raise AlreadyCompleted(f"assignment {assignment_id} already completed")
            deadline = assignment.close_time + timedelta(seconds=self.grace_s)
            if received_at > deadline or received_at < assignment.open_time:
                raise WindowClosed(
                    f"received {format_time(received_at)} outside window "
                    f"[{format_time(assignment.open_time)}, {format_time(deadline)}]"
                )
            assignment.completed = True
            assignment.completed_at = received_at
            self.responses.record(anonymous_id, received_at, payload)
            return assignment

    def extend_deadline(self, assignment_id: str, new_close: datetime) -> SurveyAssignment:
        with self._lock:
            assignment = self.get(assignment_id)
            if new_close <= assignment.close_time:
                raise InvalidWindow("new close time must be after the current one")
            assignment.close_time = new_close
            return assignment

    def redistribute(self, member: Member, assignment_id: str, now: datetime | None = None) -> OutboxEntry:
        with self._lock:
            assignment = self.get(assignment_id)
            if assignment.completed:
                raise AlreadyCompleted(f"assignment {assignment_id} already completed")
            now = now or utcnow()
            if now > assignment.close_time:
                raise WindowClosed(f"assignment {assignment_id} closed")
            template = self.get_template(assignment.template_id)
            return self._queue_link(member, template, assignment)

    # -- reporting -----------------------------------------------------------

    def compliance(
        self,
        usernames: dict[str, str],
        member_id: str | None = None,
        template_id: str | None = None,
        window: tuple[datetime, datetime] | None = None,
    ) -> list[ComplianceRow]:
        """Per-member assigned/completed counts; an assignment is in scope
        when its open_time falls inside the window."""
        counts: dict[str, list[int]] = {}
        if member_id is not None:
            counts[member_id] = [0, 0]
        for assignment in self._assignments.values():
            if member_id is not None and assignment.member_id != member_id:
                continue
            if template_id is not None and assignment.template_id != template_id:
                continue
            if window is not None and not (window[0] <= assignment.open_time < window[1]):
                continue
            bucket = counts.setdefault(assignment.member_id, [0, 0])
            bucket[0] += 1
            if assignment.completed:
                bucket[1] += 1
        rows = [
            ComplianceRow(
                member_id=mid,
                username=usernames.get(mid, mid),
                assigned=assigned,
                completed=completed,
            )
            for mid, (assigned, completed) in counts.items()
        ]
        rows.sort(key=lambda row: row.username)
        return rows


class MockSurveyProvider:
    """Stand-in for an external survey service: collects distribution links
    and can fire completion callbacks, as the tests' fake respondent."""

    def __init__(self):
        self.links: list[str] = []

    def distribute(self, provider_url: str, anonymous_id: str) -> str:
        link = distribution_link(provider_url, anonymous_id)
        self.links.append(link)
        return link

    @staticmethod
    def extract_anonymous_id(link: str) -> str:
        marker = "anonymous_id="
        return link[link.index(marker) + len(marker):]

    def complete(self, store: SurveyStore, link: str, received_at: datetime, payload=None):
        anon = self.extract_anonymous_id(link)
        return store.record_completion(anon, received_at, payload or {"answers": []})
