class PairSimError(Exception):
    """Base error of the toolkit. `exit_code` is what the CLI returns for it."""
    exit_code = 1


class ConfigError(PairSimError, ValueError):
    exit_code = 2


class UnknownKey(ConfigError):
    def __init__(self, key: str, line: int):
        super().__init__(f"line {line}: unknown key '{key}'")
        self.key = key
        self.line = line


class InvalidValue(ConfigError):
    def __init__(self, key: str, line: int, value: str, reason: str = "not a valid value"):
        super().__init__(f"line {line}: {key} = {value!r}: {reason}")
        self.key = key
        self.line = line
        self.value = value


class InvariantViolation(ConfigError):
    def __init__(self, violations: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(violations))
        self.violations = violations


class InputError(ConfigError):
    """Malformed input file, range spec or run directory."""


class DomainError(PairSimError, ValueError):
    exit_code = 2


class CapacityError(PairSimError):
    exit_code = 3

    def __init__(self, expected_events: float, budget: float):
        super().__init__(
            f"expected {expected_events:.3g} events exceeds the in-memory budget of {budget:.3g}; "
            "lower the rates or the duration")
        self.expected_events = expected_events
        self.budget = budget


class AnalysisError(PairSimError):
    exit_code = 2


class UnsortedStream(AnalysisError):
    pass


class NoPeak(AnalysisError):
    pass


class NoBackground(AnalysisError):
    pass


class OverlappingWindows(AnalysisError):
    pass


class WindowOutOfRange(AnalysisError):
    pass


class InsufficientBackground(AnalysisError):
    pass


class FitError(PairSimError):
    exit_code = 4


class DegenerateData(FitError):
    pass


class NoConvergence(FitError):
    """Raised when the minimizer gives up. `best` holds the best-so-far FitResult."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best
