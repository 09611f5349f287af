"""Canonical UTC time handling.

All timestamps are stored and compared in UTC at millisecond precision; the
canonical text form is RFC 3339 with exactly three fractional digits and a
trailing ``Z`` (e.g. ``2020-12-23T23:54:50.727Z``).
"""

from __future__ import annotations

import re
from datetime import datetime, timedelta, timezone

UTC = timezone.utc

_RFC3339 = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[Tt ](\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?"
    r"(Z|z|[+-]\d{2}:\d{2})$"
)


def parse_time(text: str) -> datetime:
    """Parse an RFC 3339 timestamp into a UTC datetime truncated to ms.

    Raises ValueError on anything unparseable.
    """
    if not isinstance(text, str):
        raise ValueError(f"timestamp must be a string, got {type(text).__name__}")
    m = _RFC3339.match(text.strip())
    if not m:
        raise ValueError(f"malformed timestamp: {text!r}")
    year, month, day, hour, minute, second = (int(g) for g in m.groups()[:6])
    frac = m.group(7) or "0"
    micros = int(frac.ljust(6, "0"))
    offset = m.group(8)
    if offset in ("Z", "z"):
        tz = UTC
    else:
        sign = 1 if offset[0] == "+" else -1
        oh, om = int(offset[1:3]), int(offset[4:6])
        tz = timezone(sign * timedelta(hours=oh, minutes=om))
    dt = datetime(year, month, day, hour, minute, second, micros, tzinfo=tz)
    return truncate_ms(dt.astimezone(UTC))


def truncate_ms(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=UTC)
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


def format_time(dt: datetime) -> str:
    """Canonical serialization: UTC, exactly three fractional digits, 'Z'."""
    dt = truncate_ms(dt.astimezone(UTC))
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


_EPOCH = datetime(1970, 1, 1, tzinfo=UTC)


def epoch_ms(dt: datetime) -> int:
    td = truncate_ms(dt) - _EPOCH
    return (td.days * 86_400 + td.seconds) * 1000 + td.microseconds // 1000


def from_epoch_ms(ms: int) -> datetime:
    return _EPOCH + timedelta(milliseconds=ms)


def utcnow() -> datetime:
    return truncate_ms(datetime.now(tz=UTC))
