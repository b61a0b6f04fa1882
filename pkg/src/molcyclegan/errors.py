class MolCycleGanError(Exception):
    pass


class ShapeError(MolCycleGanError, ValueError):
    pass


class NumericError(MolCycleGanError, ArithmeticError):
    pass


class StateError(MolCycleGanError, RuntimeError):
    pass


class ConfigError(MolCycleGanError, ValueError):
    pass


class DataError(MolCycleGanError, ValueError):
    """Malformed dataset content; carries the 1-based line/row number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class LookupFailure(MolCycleGanError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class PreconditionError(MolCycleGanError, ValueError):
    pass
