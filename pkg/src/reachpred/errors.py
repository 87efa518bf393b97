"""Exception types shared across the package."""


class ReachPredError(Exception):
    """Base class for all package-specific errors."""


class Unreachable(ReachPredError):
    """Requested point lies outside the arm workspace."""


class NotConverged(ReachPredError):
    """Iterative solver exhausted its iteration budget."""


class SchemaError(ReachPredError):
    """A file on disk does not match the expected layout."""


class EmptyEpisode(SchemaError):
    """An episode file contains no samples."""


class CorruptFile(SchemaError):
    """A binary weight file is truncated or fails its checksum."""


class ArchitectureMismatch(ReachPredError, ValueError):
    """A weight file holds a different model kind than requested."""


class UnknownMask(ReachPredError, ValueError):
    """Sensor mask name is not one of the defined groups."""


class EpisodeTooShort(ReachPredError, ValueError):
    """One or more episodes are shorter than the requested window.

    Carries the offending episode ids in `episodes`.
    """

    def __init__(self, H, episodes):
        self.H = H
        self.episodes = list(episodes)
        shown = ", ".join(f"{eid} ({n})" for eid, n in self.episodes[:8])
        more = "" if len(self.episodes) <= 8 else f" and {len(self.episodes) - 8} more"
        super().__init__(f"window length {H} exceeds episode length for: {shown}{more}")


class InsufficientEpisodes(ReachPredError, ValueError):
    """A board square has fewer episodes than the requested holdout."""


class Disqualified(ReachPredError):
    """Curriculum training failed to clear a stage within its epoch budget.

    Raised by the curriculum loop; the CLI maps it to a dedicated exit code
    so batch scripts can tell it apart from crashes.
    """

    def __init__(self, stage, epochs, last_rmse_mm):
        self.stage = stage
        self.epochs = epochs
        self.last_rmse_mm = last_rmse_mm
        super().__init__(
            f"curriculum stage {stage} not cleared after {epochs} epochs "
            f"(last train RMSE {last_rmse_mm:.2f} mm)"
        )
