"""
Filename: error.py
Description:
    Named errors across depcag. Every error keeps a human-readable
    `message`; some carry structured context (offsets, interval indices).

License: Apache 2.0
"""
from typing import Optional


class DepcagError(Exception):
    """Root of all depcag errors.

    Attributes:
        message -- explanation of the error
    """

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class GridConstraintError(DepcagError):
    """A grid family or explicit window violates (B1)-(B4) or its parameter constraints."""

    def __init__(self, detail: str):
        super().__init__(f"Grid constraint violated - {detail}")


class OutsideWindowError(DepcagError):
    """A time or index lies outside the finite window of an explicit grid."""

    def __init__(self, what: str, value, lo, hi):
        self.value = value
        super().__init__(f"{what} {value} outside represented window [{lo}, {hi}]")


class ExprSyntaxError(DepcagError):
    """Malformed expression text. `offset` is a byte offset into the UTF-8 source."""

    def __init__(self, detail: str, offset: int):
        self.offset = offset
        super().__init__(f"Syntax error at byte {offset}: {detail}")


class ExprNameError(DepcagError):
    """Unknown identifier or function name."""

    def __init__(self, name: str, offset: int, kind: str = "identifier"):
        self.name = name
        self.offset = offset
        super().__init__(f"Unknown {kind} '{name}' at byte {offset}")


class ExprArityError(DepcagError):
    """Function called with the wrong number of arguments."""

    def __init__(self, func: str, expected: int, got: int, offset: int):
        self.offset = offset
        super().__init__(f"Function '{func}' takes {expected} argument(s), got {got} (byte {offset})")


class ExprEvalError(DepcagError):
    """Division by zero, non-finite result or unbound variable during evaluation."""

    def __init__(self, detail: str, subexpression: str):
        self.subexpression = subexpression
        super().__init__(f"Evaluation error in '{subexpression}': {detail}")


class IntegrationError(DepcagError):
    """Non-finite state produced by an integrator."""

    def __init__(self, detail: str, interval: Optional[int] = None):
        self.interval = interval
        where = f" (interval {interval})" if interval is not None else ""
        super().__init__(f"Integration failure{where}: {detail}")


class DomainError(DepcagError):
    """Arguments outside the domain of an operation."""

    def __init__(self, detail: str):
        super().__init__(f"Domain error - {detail}")


class SingularFactorError(DepcagError):
    """An E-factor is numerically singular, which signals a violation of condition (C)."""

    def __init__(self, interval: int, cond: float):
        self.interval = interval
        self.cond = cond
        super().__init__(
            f"Singular E-factor on interval {interval} (condition number {cond:.3e}); "
            f"condition (C) is likely violated"
        )


class WindowExceededError(DepcagError):
    """A computation needs intervals the flow table or grid window does not cover."""

    def __init__(self, needed: tuple[int, int], available: tuple[int, int]):
        self.needed = needed
        self.available = available
        super().__init__(f"Index window {needed} exceeds available window {available}")


class NoDichotomyError(DepcagError):
    """The discrete reduction has spectrum on (or numerically at) the unit circle."""

    def __init__(self, detail: str):
        super().__init__(f"No discrete dichotomy - {detail}")


class InapplicableBoundError(DepcagError):
    """A Gronwall-type or Holder estimate is used outside its hypotheses."""

    def __init__(self, detail: str):
        super().__init__(f"Inapplicable estimate - {detail}")


class ConvergenceError(DepcagError):
    """An iteration hit its cap before meeting its tolerance."""

    def __init__(self, what: str, iterations: int, last_increment: float):
        self.iterations = iterations
        self.last_increment = last_increment
        super().__init__(
            f"{what} did not converge after {iterations} iterations "
            f"(last increment {last_increment:.3e})"
        )


class ConditionViolationError(DepcagError):
    """A theorem hypothesis required by an operation does not hold."""

    def __init__(self, condition: str, detail: str = ""):
        self.condition = condition
        extra = f": {detail}" if detail else ""
        super().__init__(f"Condition {condition} not satisfied{extra}")


class ConfigError(DepcagError):
    """Invalid run configuration. `pointer` is a JSON pointer into the document."""

    def __init__(self, pointer: str, detail: str):
        self.pointer = pointer
        super().__init__(f"Invalid config at {pointer or '/'}: {detail}")
