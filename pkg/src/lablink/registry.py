"""Member accounts, the three-tier privilege model, and the authorization
decision point used by every API endpoint.

The permission matrix is a total function over (role, action, resource kind):
every triple resolves to allow or deny, and the allow-sets nest strictly
user < staff < admin.
"""

from __future__ import annotations

import enum
import hashlib
import secrets
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime

from .errors import DuplicateUsername, NotFound, PermissionDenied
from .timeutil import format_time, utcnow


class Role(str, enum.Enum):
    USER = "user"
    STAFF = "staff"
    ADMIN = "admin"


class Descriptor(str, enum.Enum):
    """Physical role of a person; informational only, never used for authz."""

    RESEARCHER = "researcher"
    DEVELOPER = "developer"
    ORGANIZER = "organizer"
    PARTICIPANT = "participant"
    NON_PARTICIPANT = "non_participant"


class Action(str, enum.Enum):
    READ_PUBLIC = "read_public"
    READ_COMPLIANCE = "read_compliance"
    WRITE_SURVEY_METADATA = "write_survey_metadata"
    WRITE_DEVICE_METADATA = "write_device_metadata"
    CREATE_MODEL = "create_model"
    DELETE_MODEL = "delete_model"
    READ_OWN_DATA = "read_own_data"
    DELETE_OWN_DATA = "delete_own_data"


class ResourceKind(str, enum.Enum):
    MEMBER = "member"
    DEVICE = "device"
    FLOORPLAN = "floorplan"
    SEAT = "seat"
    SURVEY_TEMPLATE = "survey_template"
    SURVEY_ASSIGNMENT = "survey_assignment"
    DASHBOARD = "dashboard"
    DATAPOINT = "datapoint"


_ALL_KINDS = frozenset(ResourceKind)

# Resource kinds for which "own" scoping is meaningful (own profile, owned
# device, own seat/assignments/dashboard/telemetry).
_OWNABLE = frozenset({
    ResourceKind.MEMBER,
    ResourceKind.DEVICE,
    ResourceKind.SEAT,
    ResourceKind.SURVEY_ASSIGNMENT,
    ResourceKind.DASHBOARD,
    ResourceKind.DATAPOINT,
})

# Kinds a participant may sever on their own initiative. Own account removal
# and dashboard removal stay admin-side to keep cascades and the one-dashboard
# invariant intact.
_SELF_SEVERABLE = frozenset({
    ResourceKind.SEAT,
    ResourceKind.SURVEY_ASSIGNMENT,
    ResourceKind.DATAPOINT,
})

# Kinds staff may write through the survey and device/floorplan workflows.
_SURVEY_WRITABLE = frozenset({
    ResourceKind.SURVEY_TEMPLATE,
    ResourceKind.SURVEY_ASSIGNMENT,
})
_DEVICE_WRITABLE = frozenset({
    ResourceKind.DEVICE,
    ResourceKind.FLOORPLAN,
    ResourceKind.SEAT,
    ResourceKind.DASHBOARD,
    ResourceKind.DATAPOINT,
})


def _build_allow_sets() -> dict[Role, frozenset[tuple[Action, ResourceKind]]]:
    user = set()
    for kind in _ALL_KINDS:
        user.add((Action.READ_PUBLIC, kind))
    for kind in _OWNABLE:
        user.add((Action.READ_OWN_DATA, kind))
    for kind in _SELF_SEVERABLE:
        user.add((Action.DELETE_OWN_DATA, kind))

    staff = set(user)
    for kind in _ALL_KINDS:
        staff.add((Action.READ_COMPLIANCE, kind))
    for kind in _SURVEY_WRITABLE:
        staff.add((Action.WRITE_SURVEY_METADATA, kind))
    for kind in _DEVICE_WRITABLE:
        staff.add((Action.WRITE_DEVICE_METADATA, kind))

    admin = set(staff)
    for kind in _ALL_KINDS:
        admin.add((Action.CREATE_MODEL, kind))
        admin.add((Action.DELETE_MODEL, kind))

    return {
        Role.USER: frozenset(user),
        Role.STAFF: frozenset(staff),
        Role.ADMIN: frozenset(admin),
    }


_ALLOW_SETS = _build_allow_sets()

# Fully materialized so there is no fallthrough at decision time.
PERMISSION_MATRIX: dict[tuple[Role, Action, ResourceKind], bool] = {
    (role, action, kind): (action, kind) in _ALLOW_SETS[role]
    for role in Role
    for action in Action
    for kind in ResourceKind
}


def authorize(role: Role, action: Action, resource_kind: ResourceKind) -> bool:
    """Pure decision function over the static permission matrix."""
    return PERMISSION_MATRIX[(Role(role), Action(action), ResourceKind(resource_kind))]


def allow_set(role: Role) -> frozenset[tuple[Action, ResourceKind]]:
    return _ALLOW_SETS[Role(role)]


def new_id() -> str:
    return uuid.uuid4().hex


SALT_BYTES = 16
_PBKDF2_ITERATIONS = 100_000


def hash_credential(password: str) -> bytes:
    """Salted one-way hash; stored as salt||digest."""
    salt = secrets.token_bytes(16)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode(), salt, _PBKDF2_ITERATIONS)
    return salt + digest


def verify_credential(password: str, credential_hash: bytes) -> bool:
    salt, digest = credential_hash[:16], credential_hash[16:]
    candidate = hashlib.pbkdf2_hmac("sha256", password.encode(), salt, _PBKDF2_ITERATIONS)
    return secrets.compare_digest(candidate, digest)


@dataclass
class Member:
    member_id: str
    username: str
    email: str
    display_name: str
    role: Role
    descriptor: Descriptor
    credential_hash: bytes | None
    secret_salt: bytes
    created_at: datetime
    active: bool = True

    def to_public_dict(self) -> dict:
        """Serializable view. secret_salt and credential_hash never leave."""
        return {
            "member_id": self.member_id,
            "username": self.username,
            "email": self.email,
            "display_name": self.display_name,
            "role": self.role.value,
            "descriptor": self.descriptor.value,
            "created_at": format_time(self.created_at),
            "active": self.active,
        }


@dataclass
class DeletionReceipt:
    """Downstream object ids removed by a member deletion cascade."""

    member_id: str
    deleted_dashboards: list[str] = field(default_factory=list)
    deleted_seats: list[str] = field(default_factory=list)
    deleted_survey_assignments: list[str] = field(default_factory=list)

    @property
    def downstream_total(self) -> int:
        return (
            len(self.deleted_dashboards)
            + len(self.deleted_seats)
            + len(self.deleted_survey_assignments)
        )

    def to_dict(self) -> dict:
        return {
            "member_id": self.member_id,
            "deleted_dashboards": list(self.deleted_dashboards),
            "deleted_seats": list(self.deleted_seats),
            "deleted_survey_assignments": list(self.deleted_survey_assignments),
            "downstream_total": self.downstream_total,
        }


class MemberRegistry:
    """Single-writer member store with username uniqueness."""

    def __init__(self):
        self._members: dict[str, Member] = {}
        self._by_username: dict[str, str] = {}
        self._lock = threading.RLock()

    def create(
        self,
        username: str,
        email: str = "",
        display_name: str = "",
        role: Role = Role.USER,
        descriptor: Descriptor = Descriptor.PARTICIPANT,
        password: str | None = None,
    ) -> Member:
        with self._lock:
            if username in self._by_username:
                raise DuplicateUsername(f"username already taken: {username}")
            member = Member(
                member_id=new_id(),
                username=username,
                email=email,
                display_name=display_name or username,
                role=Role(role),
                descriptor=Descriptor(descriptor),
                credential_hash=hash_credential(password) if password else None,
                secret_salt=secrets.token_bytes(SALT_BYTES),
                created_at=utcnow(),
            )
            self._members[member.member_id] = member
            self._by_username[username] = member.member_id
            return member

    def get(self, member_id: str) -> Member:
        member = self._members.get(member_id)
        if member is None:
            raise NotFound(f"no such member: {member_id}")
        return member

    def get_by_username(self, username: str) -> Member:
        member_id = self._by_username.get(username)
        if member_id is None:
            raise NotFound(f"no such member: {username}")
        return self._members[member_id]

    def remove(self, member_id: str) -> Member:
        with self._lock:
            member = self.get(member_id)
            del self._members[member_id]
            del self._by_username[member.username]
            return member

    def rotate_salt(self, member_id: str) -> Member:
        with self._lock:
            member = self.get(member_id)
            member.secret_salt = secrets.token_bytes(SALT_BYTES)
            return member

    def set_role(self, actor: Member, member_id: str, role: Role) -> Member:
        # Role transitions are an admin-only act.
        if actor.role is not Role.ADMIN:
            raise PermissionDenied("only an admin may change roles")
        with self._lock:
            member = self.get(member_id)
            member.role = Role(role)
            return member

    def deactivate(self, member_id: str) -> Member:
        """Soft alternative to deletion: sever app links, keep the account."""
        with self._lock:
            member = self.get(member_id)
            member.active = False
            return member

    def all(self) -> list[Member]:
        return list(self._members.values())

    def __len__(self) -> int:
        return len(self._members)

    def __contains__(self, member_id: str) -> bool:
        return member_id in self._members
