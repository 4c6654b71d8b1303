"""Exception hierarchy shared by every module."""


class D2RLError(Exception):
    pass


class DimensionError(D2RLError, ValueError):
    """Array shapes do not line up."""


class NumericError(D2RLError, ArithmeticError):
    """A NaN or Inf showed up where only finite values are allowed."""


class ConfigError(D2RLError, ValueError):
    pass


class CheckpointError(D2RLError):
    pass
