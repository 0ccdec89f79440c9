"""Исключения пакета и коды выхода CLI."""

EXIT_OK = 0
EXIT_BUDGET = 1
EXIT_INPUT = 2


class QdError(Exception):
    exit_code = EXIT_INPUT


class InputError(QdError, ValueError):
    pass


class DimensionMismatchError(InputError):
    def __init__(self, expected, got, what="vector"):
        super().__init__(f"dimension mismatch for {what}: expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class ExpressionSyntaxError(InputError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(InputError):
    def __init__(self, name, offset=None):
        where = "" if offset is None else f" at byte offset {offset}"
        super().__init__(f"unknown identifier '{name}'{where}")
        self.name = name
        self.offset = offset


class ArityError(InputError):
    def __init__(self, name, expected, got):
        super().__init__(f"function '{name}' expects {expected} argument(s), got {got}")
        self.name = name
        self.expected = expected
        self.got = got


class UnboundParameterError(InputError):
    def __init__(self, name):
        super().__init__(f"parameter '{name}' is not bound")
        self.name = name


class NormKinkError(InputError):
    def __init__(self):
        super().__init__("norm-kink: use l1 or the sampling oracle")


class InfeasiblePointError(InputError):
    def __init__(self, residuals):
        text = ", ".join(f"{k}={v:.3g}" for k, v in residuals.items())
        super().__init__(f"base point is not feasible: {text}")
        self.residuals = dict(residuals)


class ProblemFileError(InputError):
    def __init__(self, message, section=None, key=None):
        where = ""
        if section:
            where = f"[{section}]" + (f" {key}" if key else "") + ": "
        super().__init__(where + message)
        self.section = section
        self.key = key


class BudgetExceededError(QdError):
    exit_code = EXIT_BUDGET

    def __init__(self, what, count, budget, state=None):
        super().__init__(f"{what}: {count} exceeds budget {budget}")
        self.count = count
        self.budget = budget
        self.state = state
