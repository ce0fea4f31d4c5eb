"""Exception hierarchy. ``exit_code`` is what the CLI returns for each family."""


class EPEError(Exception):
    exit_code = 1


class ConfigError(EPEError, ValueError):
    exit_code = 2


class DataError(EPEError, ValueError):
    exit_code = 3


class NumericalError(EPEError, ArithmeticError):
    exit_code = 4


class ConvergenceError(NumericalError):
    pass


class CollinearityError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class UnidentifiableError(NumericalError):
    pass


class CapacityError(NumericalError):
    pass
