"""Exception hierarchy shared across the simulator."""


class SimulationError(Exception):
    """Base class for all simulator-raised faults."""


class DecodeError(SimulationError):
    """A staged command violates the configuration invariants."""


class MemoryFault(SimulationError):
    """Out-of-range or misaligned memory access."""


class AddressOverflow(SimulationError):
    """An address register or stride left the 32-bit space."""


class PlanError(SimulationError):
    """A kernel lowering cannot fit the requested shape."""
