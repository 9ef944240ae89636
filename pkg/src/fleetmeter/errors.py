from __future__ import annotations


class FleetmeterError(Exception):
    """Base class for every error raised by fleetmeter."""


class IngestError(FleetmeterError, ValueError):
    """A record stream or factor document failed validation.

    ``line`` is the 1-based physical line number (the header is line 1) and
    ``field`` the offending column, when either is known.
    """

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.reason = message
        self.line = line
        self.field = field
        parts = [message]
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field {field}")
        super().__init__(", ".join(parts))


class JoinError(FleetmeterError):
    """Records from different files could not be matched up."""

    def __init__(self, message: str, missing: list | None = None):
        self.missing = list(missing or [])
        super().__init__(message)


class TelemetryError(FleetmeterError):
    """Telemetry is internally inconsistent (e.g. idle energy above measured)."""


class FactorLookupError(FleetmeterError, KeyError):
    """No conversion factors exist for a required year or campus."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""
