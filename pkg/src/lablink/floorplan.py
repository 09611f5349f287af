"""Resolution-configurable grid representation of physical spaces.

Cell labels linearize row-major: cell (col, row) on a plan with C columns is
"grid_k" with k = row*C + col. Distances are Euclidean between cell centers;
the center of (c, r) at cell size s is ((c+0.5)*s, (r+0.5)*s).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from datetime import datetime

from .errors import InvalidDimensions, NotFound, OutOfBounds, SeatConflict
from .registry import new_id


@dataclass(frozen=True)
class GridCell:
    col: int
    row: int

    def __post_init__(self):
        if self.col < 0 or self.row < 0:
            raise OutOfBounds(f"negative cell coordinates: ({self.col}, {self.row})")


@dataclass
class FloorPlan:
    plan_id: str
    name: str
    cell_size_m: float
    cols: int
    rows: int

    def __post_init__(self):
        if self.cell_size_m <= 0:
            raise InvalidDimensions(f"cell_size_m must be > 0, got {self.cell_size_m}")
        if self.cols < 1 or self.rows < 1:
            raise InvalidDimensions(f"grid must be at least 1x1, got {self.cols}x{self.rows}")

    @property
    def cell_count(self) -> int:
        return self.cols * self.rows

    def contains(self, cell: GridCell) -> bool:
        return 0 <= cell.col < self.cols and 0 <= cell.row < self.rows

    def require_in_bounds(self, cell: GridCell) -> GridCell:
        if not self.contains(cell):
            raise OutOfBounds(
                f"cell ({cell.col}, {cell.row}) outside {self.cols}x{self.rows} plan"
            )
        return cell

    def cell_label(self, cell: GridCell) -> str:
        self.require_in_bounds(cell)
        return f"grid_{cell.row * self.cols + cell.col}"

    def cell_from_label(self, label: str) -> GridCell:
        if not label.startswith("grid_"):
            raise ValueError(f"not a grid label: {label!r}")
        k = int(label[len("grid_"):])
        if not 0 <= k < self.cell_count:
            raise OutOfBounds(f"label {label!r} outside {self.cols}x{self.rows} plan")
        return GridCell(col=k % self.cols, row=k // self.cols)

    def cell_center(self, cell: GridCell) -> tuple[float, float]:
        s = self.cell_size_m
        return ((cell.col + 0.5) * s, (cell.row + 0.5) * s)

    def snap_to_grid(self, x_m: float, y_m: float) -> GridCell:
        """Coarsen continuous coordinates into the cell containing them."""
        s = self.cell_size_m
        if not (0 <= x_m < self.cols * s and 0 <= y_m < self.rows * s):
            raise OutOfBounds(f"({x_m}, {y_m}) outside plan extent")
        return GridCell(col=int(math.floor(x_m / s)), row=int(math.floor(y_m / s)))

    def distance_m(self, a: GridCell, b: GridCell) -> float:
        ax, ay = self.cell_center(a)
        bx, by = self.cell_center(b)
        return math.hypot(ax - bx, ay - by)


@dataclass
class SeatAssignment:
    seat_id: str
    member_id: str
    plan_id: str
    cell: GridCell
    valid_from: datetime
    valid_to: datetime | None = None

    @property
    def open(self) -> bool:
        return self.valid_to is None

    def to_dict(self) -> dict:
        from .timeutil import format_time

        return {
            "seat_id": self.seat_id,
            "member_id": self.member_id,
            "plan_id": self.plan_id,
            "cell": {"col": self.cell.col, "row": self.cell.row},
            "valid_from": format_time(self.valid_from),
            "valid_to": format_time(self.valid_to) if self.valid_to else None,
        }


class FloorplanStore:
    """Plans plus seat assignments. Hybrid seating is allowed across plans,
    never two open seats for one member on the same plan."""

    def __init__(self):
        self._plans: dict[str, FloorPlan] = {}
        self._seats: dict[str, SeatAssignment] = {}
        self._lock = threading.RLock()

    # -- plans ---------------------------------------------------------------

    def create_plan(self, name: str, cell_size_m: float, cols: int, rows: int) -> FloorPlan:
        with self._lock:
            plan = FloorPlan(new_id(), name, float(cell_size_m), int(cols), int(rows))
            self._plans[plan.plan_id] = plan
            return plan

    def get_plan(self, plan_id: str) -> FloorPlan:
        plan = self._plans.get(plan_id)
        if plan is None:
            raise NotFound(f"no such floor plan: {plan_id}")
        return plan

    def plans(self) -> list[FloorPlan]:
        return list(self._plans.values())

    # -- seats ---------------------------------------------------------------

    def assign_seat(
        self,
        member_id: str,
        plan_id: str,
        cell: GridCell,
        valid_from: datetime,
    ) -> SeatAssignment:
        with self._lock:
            plan = self.get_plan(plan_id)
            plan.require_in_bounds(cell)
            for seat in self._seats.values():
                if seat.member_id == member_id and seat.plan_id == plan_id and seat.open:
                    raise SeatConflict(
                        f"member {member_id} already has an open seat on plan {plan_id}"
                    )
            seat = SeatAssignment(new_id(), member_id, plan_id, cell, valid_from)
            self._seats[seat.seat_id] = seat
            return seat

    def open_seats(self, member_id: str) -> list[SeatAssignment]:
        return [s for s in self._seats.values() if s.member_id == member_id and s.open]

    def seats_for_member(self, member_id: str) -> list[SeatAssignment]:
        return [s for s in self._seats.values() if s.member_id == member_id]

    def seats_on_plan(self, plan_id: str) -> list[SeatAssignment]:
        return [s for s in self._seats.values() if s.plan_id == plan_id]

    def remove_seat(self, seat_id: str) -> SeatAssignment:
        with self._lock:
            seat = self._seats.pop(seat_id, None)
            if seat is None:
                raise NotFound(f"no such seat: {seat_id}")
            return seat

    def all_seats(self) -> list[SeatAssignment]:
        return list(self._seats.values())

    def plan_count(self) -> int:
        return len(self._plans)


def devices_within_radius(member_id: str, radius_m: float, *, floorplans, devices) -> list[str]:
    """Device ids whose cell center lies within radius_m of any of the
    member's open seats, on the matching plan. `devices` must expose
    on_plan(plan_id) -> [Device]; this keeps the geometry free of a registry
    dependency."""
    from .errors import NoSeat

    seats = floorplans.open_seats(member_id)
    if not seats:
        raise NoSeat(f"member {member_id} has no open seat assignment")
    found: list[str] = []
    seen: set[str] = set()
    for seat in seats:
        plan = floorplans.get_plan(seat.plan_id)
        for device in devices.on_plan(seat.plan_id):
            if not device.active or device.device_id in seen:
                continue
            if plan.distance_m(seat.cell, device.cell) <= radius_m:
                found.append(device.device_id)
                seen.add(device.device_id)
    return sorted(found)
