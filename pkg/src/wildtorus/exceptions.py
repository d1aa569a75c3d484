from typing import Any, Optional


class WildTorusError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(WildTorusError, ValueError):
    """A map or cone was evaluated where it is not defined (typically z = 0)."""
    def __init__(self, operation: str, point: Any):
        self.operation = operation
        self.point = point
        super().__init__(f"{operation} is undefined at {point!r}")


class ParameterError(WildTorusError, ValueError):
    """Parameters are invalid or too weak for the hypotheses of an operation."""


class ConvergenceError(WildTorusError):
    def __init__(self, message: str, residual: Optional[float] = None, iterations: Optional[int] = None):
        self.residual = residual
        self.iterations = iterations
        details = []
        if residual is not None:
            details.append(f"residual={residual:.3e}")
        if iterations is not None:
            details.append(f"iterations={iterations}")
        super().__init__(message + (f" ({', '.join(details)})" if details else ""))


class ContinuationError(WildTorusError):
    """A continued curve or orbit left the region it was supposed to stay in."""
    def __init__(self, message: str, last_valid: Any = None):
        self.last_valid = last_valid
        super().__init__(message if last_valid is None else f"{message} (last valid: {last_valid!r})")


class LemmaViolation(WildTorusError):
    """A sampled check of a quantitative statement failed."""
    def __init__(self, check: str, witness: Any = None):
        self.check = check
        self.witness = witness
        super().__init__(f"{check} violated" + ("" if witness is None else f" at {witness!r}"))


class NoCrossingError(WildTorusError):
    """A trajectory did not reach the requested section within the time cap."""
    def __init__(self, level: float, time_cap: float, last_state: Any = None):
        self.level = level
        self.time_cap = time_cap
        self.last_state = last_state
        super().__init__(f"no crossing of s={level} within t={time_cap}")


class InconsistencyError(WildTorusError):
    """Internal contradiction between computed objects."""
