"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class GaitprintError(Exception):
    exit_code = 1


class ConfigError(GaitprintError, ValueError):
    exit_code = 2


class DataError(GaitprintError, ValueError):
    exit_code = 3


class IngestionError(DataError):
    pass


class NumericalError(GaitprintError, ArithmeticError):
    exit_code = 4
