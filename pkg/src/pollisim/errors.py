"""Domain errors raised by the pipeline.

The CLI maps any :class:`PollinationError` to exit code 1; argument and
precondition abuse raises plain ``ValueError`` which callers treat the
same way.
"""


class PollinationError(Exception):
    """Base class for recoverable domain errors."""

    code = "error"


class InvalidDepthError(PollinationError):
    """Depth reading is nonfinite or outside the camera's valid range."""

    code = "invalid_depth"


class DegenerateOrientationError(PollinationError):
    """Averaged surface normal vanished; cluster orientation undefined."""

    code = "degenerate_orientation"


class GenerationError(PollinationError):
    """Scene generation could not satisfy a placement constraint."""

    code = "generation"


class NotFoundError(PollinationError):
    """Referenced entity (cluster, session) does not exist."""

    code = "not_found"


class InvalidStateError(PollinationError):
    """Operation is illegal in the current state."""

    code = "invalid_state"


class UnreachableError(PollinationError):
    """Inverse kinematics found no solution for the target pose."""

    code = "unreachable"


class PlanFailedError(PollinationError):
    """No collision-free path found within the planning budget."""

    code = "plan_failed"


class TankEmptyError(PollinationError):
    """Suspension tank cannot supply the requested spray volume."""

    code = "tank_empty"


class UndefinedMetricError(PollinationError):
    """Metric has no defined value on this input (e.g. zero denominator)."""

    code = "undefined_metric"
