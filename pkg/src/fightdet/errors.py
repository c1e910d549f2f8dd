"""Exception hierarchy shared by every fightdet module."""


class FightDetError(Exception):
    """Base class for all errors raised by fightdet."""


class DimensionError(FightDetError, ValueError):
    pass


class ParameterError(FightDetError, ValueError):
    pass


class NumericError(FightDetError, ArithmeticError):
    pass


class FormatError(FightDetError, ValueError):
    pass


class EmptyInputError(FightDetError, ValueError):
    pass


class RangeError(FightDetError, ValueError):
    pass


class MissingMetadataError(FightDetError, ValueError):
    pass


class ConsistencyError(FightDetError, ValueError):
    pass


class ConfigurationError(FightDetError, ValueError):
    pass


class DataError(FightDetError, ValueError):
    """A dataset item could not be loaded or has the wrong shape."""

    def __init__(self, message, item_id=None):
        super().__init__(message if item_id is None else f"{item_id}: {message}")
        self.item_id = item_id


class DivergenceError(FightDetError, ArithmeticError):
    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"epoch {epoch}: {message}")
        self.epoch = epoch
