"""Error taxonomy shared by every subsystem, plus the HTTP envelope mapping."""

from __future__ import annotations


class LabLinkError(Exception):
    """Base error. `code` feeds the uniform {code, message, detail?} envelope."""

    code = "error"
    http_status = 400

    def __init__(self, message: str = "", detail: object = None):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__
        self.detail = detail

    def envelope(self) -> dict:
        body = {"code": self.code, "message": self.message}
        if self.detail is not None:
            body["detail"] = self.detail
        return body


# -- authorization / lookup --------------------------------------------------

class PermissionDenied(LabLinkError):
    code = "permission_denied"
    http_status = 403


class NotFound(LabLinkError):
    code = "not_found"
    http_status = 404


class ModuleDisabled(LabLinkError):
    code = "module_disabled"
    http_status = 404


# -- registry ----------------------------------------------------------------

class DuplicateUsername(LabLinkError):
    code = "duplicate_username"
    http_status = 409


# -- floor plans -------------------------------------------------------------

class InvalidDimensions(LabLinkError):
    code = "invalid_dimensions"


class OutOfBounds(LabLinkError):
    code = "out_of_bounds"


class SeatConflict(LabLinkError):
    code = "seat_conflict"
    http_status = 409


class NoSeat(LabLinkError):
    code = "no_seat"
    http_status = 404


# -- devices -----------------------------------------------------------------

class DuplicateDeviceId(LabLinkError):
    code = "duplicate_device_id"
    http_status = 409


class EmptyFieldSchema(LabLinkError):
    code = "empty_field_schema"


# -- time-series store -------------------------------------------------------

class MalformedBatch(LabLinkError):
    code = "malformed_batch"


class InvalidRange(LabLinkError):
    code = "invalid_range"


class UnknownAggregate(LabLinkError):
    code = "unknown_aggregate"


class EmptySeries(LabLinkError):
    code = "empty_series"


# -- surveys -----------------------------------------------------------------

class DuplicateAssignment(LabLinkError):
    code = "duplicate_assignment"
    http_status = 409


class InvalidWindow(LabLinkError):
    code = "invalid_window"


class UnknownId(LabLinkError):
    code = "unknown_id"
    http_status = 404


class WindowClosed(LabLinkError):
    code = "window_closed"
    http_status = 410


class AlreadyCompleted(LabLinkError):
    code = "already_completed"
    http_status = 409


# -- dashboards --------------------------------------------------------------

class AlreadyExists(LabLinkError):
    code = "already_exists"
    http_status = 409


# -- fault detection ---------------------------------------------------------

class NoExpectedInterval(LabLinkError):
    code = "no_expected_interval"


class NoCounterField(LabLinkError):
    code = "no_counter_field"


class TooFewPoints(LabLinkError):
    code = "too_few_points"


class InsufficientHistory(LabLinkError):
    code = "insufficient_history"


class NoRangeSpec(LabLinkError):
    code = "no_range_spec"


class TooFewNeighbors(LabLinkError):
    code = "too_few_neighbors"


# -- gateway / simulator -----------------------------------------------------

class ConfigError(LabLinkError):
    code = "config_error"


class BindError(LabLinkError):
    code = "bind_error"


class InvalidScenario(LabLinkError):
    code = "invalid_scenario"


class TargetUnreachable(LabLinkError):
    code = "target_unreachable"


class IngestRejected(LabLinkError):
    code = "ingest_rejected"
