"""Exception types raised by hydrasketch."""


class HydraError(Exception):
    """Base class for all library errors."""


class HashBudgetExceeded(HydraError, ValueError):
    """The row-placement fields do not fit in the reserved digest bits."""


class CounterOverflowError(HydraError, OverflowError):
    pass


class IncompatibleSketchError(HydraError, ValueError):
    pass


class UnsupportedStatisticError(HydraError, ValueError):
    pass


class UndefinedEntropyError(HydraError, ValueError):
    pass


class MalformedKeyError(HydraError, ValueError):
    pass


class DimensionalityError(HydraError, ValueError):
    pass


class KeyTooLongError(HydraError, ValueError):
    pass


class SchemaError(HydraError, ValueError):
    pass


class ConfigError(HydraError, ValueError):
    pass


class CorruptFileError(HydraError):
    pass


class UnsupportedVersionError(HydraError):
    pass


class HashFamilyMismatchError(HydraError):
    pass
