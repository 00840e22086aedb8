"""Exception types shared across the simulator."""


class IntersimError(Exception):
    """Base class for all package errors."""


class NoSuchMovement(IntersimError):
    """An (origin, destination) lane pair is not a legal movement."""


class UnknownMovement(IntersimError):
    """A movement id does not exist in the intersection model."""


class UnknownLane(IntersimError):
    """A lane id does not exist in the intersection model."""


class ParseError(IntersimError):
    """A structured input file failed to parse.

    Carries enough context (file, row, column/field) to locate the
    offending line.
    """

    def __init__(self, message, path=None, row=None, column=None):
        detail = message
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            detail = f"{message} ({', '.join(where)})"
        super().__init__(detail)
        self.path = path
        self.row = row
        self.column = column


class InvalidMovement(IntersimError):
    """A dataset row references lanes that do not form a legal movement."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class InfeasibleMix(IntersimError):
    """A demand synthesis request needs a movement the model lacks."""


class NonPositiveGap(IntersimError):
    """Car-following was queried with gap <= 0: a collision state upstream."""


class CollisionDetected(IntersimError):
    """Two vehicles on the same lane overlap; controller or dynamics bug."""


class VehicleSetMismatch(IntersimError):
    """Replay and dataset vehicle id sets differ; cannot build a match report."""


class NoCompletedTrips(IntersimError):
    """Metrics summary requested but no vehicle completed its trip."""


class DivergedLoss(IntersimError):
    """Training loss became non-finite."""


class ConfigError(IntersimError):
    """A run configuration is invalid; names the offending field."""

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{message} (field: {field})"
        super().__init__(message)
        self.field = field
