"""Per-prompt energy, emissions, and water accounting for AI serving fleets."""

from fleetmeter.errors import (
    FactorLookupError,
    FleetmeterError,
    IngestError,
    JoinError,
    TelemetryError,
)
from fleetmeter.records import (
    AllocationRecord,
    FactorSet,
    MachineSpec,
    PowerSample,
    PromptTally,
    Window,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationRecord",
    "FactorLookupError",
    "FactorSet",
    "FleetmeterError",
    "IngestError",
    "JoinError",
    "MachineSpec",
    "PowerSample",
    "PromptTally",
    "TelemetryError",
    "Window",
    "__version__",
]
