"""Exception hierarchy shared across the package."""


class FleetMixError(Exception):
    """Base class for every error raised by fleetmix."""


class InvalidInstance(FleetMixError, ValueError):
    pass


class CapacityViolation(FleetMixError, ValueError):
    pass


class UnknownType(FleetMixError, ValueError):
    pass


class NotAPartition(FleetMixError, ValueError):
    pass


class Infeasible(FleetMixError, ValueError):
    pass


class ParseError(FleetMixError, ValueError):
    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field


class FixtureMissing(FleetMixError, FileNotFoundError):
    pass


class MaskedAction(FleetMixError, ValueError):
    pass


class IncompleteTrajectory(FleetMixError, ValueError):
    pass


class ShapeMismatch(FleetMixError, ValueError):
    pass


class NonScalarLoss(FleetMixError, ValueError):
    pass


class AllMasked(FleetMixError, ValueError):
    pass


class CoordsOutOfRange(FleetMixError, ValueError):
    pass


class TooLarge(FleetMixError, ValueError):
    pass


class ModelManifestMismatch(FleetMixError, ValueError):
    pass


class SchemaMismatch(FleetMixError, ValueError):
    pass
