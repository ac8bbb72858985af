class PopulationCapError(RuntimeError):
    """Raised when a run would exceed its configured particle cap."""

    def __init__(self, size: int, cap: int, time: float):
        super().__init__(
            f"population {size} exceeds cap {cap} at t={time:.6g}; "
            "raise max_particles or shorten the horizon"
        )
        self.size = size
        self.cap = cap
        self.time = time


class EventBudgetError(RuntimeError):
    """A renewal cycle or run used more events than its budget allows."""


class DomainTooSmallError(RuntimeError):
    """The PDE front came within the guard distance of a boundary."""


class MassDriftError(RuntimeError):
    """The nonlocal solver's mass left its tolerance band."""


class NoiseFloorError(ValueError):
    """A finite-difference stencil is too fine for the Monte Carlo sample size."""
