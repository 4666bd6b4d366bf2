"""Exception types shared across the package."""


class SwarmTrackError(Exception):
    """Base class for all package-specific errors."""


class ZeroRange(SwarmTrackError):
    """Radar and target are (numerically) co-located; geometry is degenerate."""


class NonPositiveLb(SwarmTrackError):
    """A tracking-bound series contains a non-positive entry."""


class ConfigInvalid(SwarmTrackError):
    """A configuration violates its declared invariants or cannot be parsed."""


class MobilityViolation(SwarmTrackError):
    """An action exceeds the per-step displacement limit; upstream clamping failed."""


class RepairFailed(SwarmTrackError):
    """The annealing chain could not find a candidate clearing all standoff halos."""


class NonFiniteLoss(SwarmTrackError):
    """A training update produced a NaN/Inf loss; parameters were rolled back."""


class HashMismatch(SwarmTrackError):
    """Checkpoint was produced under a different configuration than supplied."""
