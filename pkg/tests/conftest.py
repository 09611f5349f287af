from __future__ import annotations

import pytest

from lablink.config import ServiceConfig
from lablink.registry import Descriptor, Role
from lablink.service import LabLinkService
from lablink.timeutil import parse_time


def T(text: str):
    return parse_time(text)


@pytest.fixture
def service(tmp_path):
    svc = LabLinkService(ServiceConfig(data_dir=tmp_path / "data"))
    yield svc
    svc.close()


@pytest.fixture
def admin(service):
    return service.bootstrap_admin("root")


@pytest.fixture
def staff(service, admin):
    return service.create_member(
        admin, "organizer", email="org@lab.test", role=Role.STAFF, descriptor=Descriptor.ORGANIZER
    )


@pytest.fixture
def user(service, admin):
    return service.create_member(
        admin, "occupant1", email="occ1@lab.test", role=Role.USER, descriptor=Descriptor.PARTICIPANT
    )
