class CoflowError(Exception):
    "Base class for every failure raised by the scheduling engine"


class NetworkError(CoflowError):
    "Malformed graph: unknown endpoint, bad capacity, duplicate arc or bad path"


class InstanceError(CoflowError):
    "Instance invariants violated or instance file could not be parsed"


class GridError(CoflowError):
    "Interval grid parameters out of range"


class LpError(CoflowError):
    "Malformed LP problem, release beyond the grid, or size guard tripped"


class InfeasibleError(LpError):
    "Raised when the LP has no feasible point"


class UnboundedError(LpError):
    "Raised when the LP objective is unbounded below"


class IterationLimitError(LpError):
    "Raised when the simplex iteration cap is exceeded"


class ParamsError(CoflowError):
    "Rounding parameters violate a required inequality"


class RoundingError(CoflowError):
    "LP solution cannot be rounded (it violates its own constraints)"


class DecompositionError(CoflowError):
    "Edge flow does not satisfy conservation"


class PacketError(CoflowError):
    "Packet routing input is malformed"


class SimulationError(CoflowError):
    "Simulator input is malformed"


class ScheduleError(CoflowError):
    "Schedule transform input breaks its precondition on capacity, release or path"
