"""Exception types raised by the filters and the harness."""


class ParameterError(ValueError):
    """A constructor or function argument is outside its valid range."""


class LevelOverflowError(ParameterError):
    """A signature level beyond the universe width was requested."""


class CapacityError(RuntimeError):
    """A fixed-capacity structure was asked to hold more than it was sized for."""


class AllocationError(MemoryError):
    """A dictionary allocation would exceed the configured memory cap."""


class StaleCursorError(RuntimeError):
    """An enumeration cursor was used after its dictionary was mutated."""


class UniverseExhaustedError(RuntimeError):
    """The filter would need a level beyond the universe width."""


class ImproperDeletionError(KeyError):
    """No stored signature matches an element passed to ``delete``."""


class InvariantError(AssertionError):
    """An internal structural invariant does not hold (a bug, not bad input)."""
