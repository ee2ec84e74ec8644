"""Исключения пайплайна с кодами выхода для CLI."""


class CefcError(Exception):
    exit_code = 1


class ConfigError(CefcError):
    """Невалидный конфиг, сценарий или отсутствующий файл."""

    exit_code = 1


class DependencyError(CefcError):
    """Команде не хватает результата предыдущего шага (датасет, модель)."""

    exit_code = 1


class ModeCountError(CefcError):
    exit_code = 1


class NumericalError(CefcError):
    exit_code = 3


class IntegrationDivergenceError(NumericalError):
    pass


class SingularRegressionError(NumericalError):
    pass


class StabilizabilityError(NumericalError):
    pass


class QpError(NumericalError):
    pass


class BoundsError(NumericalError):
    """Политика управления вернула значение вне допустимых границ."""


class InsufficientHistoryError(NumericalError, ValueError):
    pass


class HorizonLengthError(NumericalError, ValueError):
    pass
