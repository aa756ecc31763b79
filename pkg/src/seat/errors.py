"""Exception types shared across the toolkit."""


class SeatError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(SeatError, ValueError):
    """An argument violates a documented precondition."""


class OutOfBoundsError(SeatError):
    """Geometry falls outside a voxel grid or workspace."""


class NotFoundError(SeatError, KeyError):
    """A requested instance, object, session or plan does not exist."""


class EmptyInputError(SeatError):
    """An operation received a volume or mesh with no content."""


class EmptySurfaceError(EmptyInputError):
    """A volume has no surface to sample points from."""


class NotGraspableError(SeatError):
    """No top-surface patch large enough for the suction cup."""


class KitSpecError(SeatError):
    """Kit parameters are unsatisfiable (e.g. margin exceeds the block)."""


class PlacementError(SeatError):
    """Kits could not be linked without collision; retry with a new seed."""


class WorkspaceFullError(SeatError):
    """Rejection sampling could not place all objects in the workspace."""


class SessionBusyError(SeatError):
    """A session already has an execution in flight."""
