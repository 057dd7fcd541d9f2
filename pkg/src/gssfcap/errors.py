"""Exception hierarchy. CLI exit codes are attached to the classes."""


class GssfError(Exception):
    exit_code = 1


class ConfigError(GssfError, ValueError):
    exit_code = 1


class ShapeError(GssfError, ValueError):
    exit_code = 1


class DomainError(GssfError, ValueError):
    exit_code = 1


class ContractError(GssfError, ValueError):
    exit_code = 1


class ValidationError(GssfError, ValueError):
    exit_code = 2


class NumericError(GssfError, ArithmeticError):
    exit_code = 3


class TranslationError(GssfError):
    exit_code = 2
