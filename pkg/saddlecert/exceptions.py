"""
Error types raised by the saddle-point services.
"""
from typing import List, Optional, Sequence


class SaddleCertError(Exception):
    """Base class for every error raised by the package."""


class DimensionMismatch(SaddleCertError):
    pass


class NotSPD(SaddleCertError):
    """Cholesky (or an eigen test) found a non-positive pivot."""

    def __init__(self, pivot: int, message: Optional[str] = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not numerically SPD (pivot {pivot})")


class NotSelfAdjoint(SaddleCertError):
    pass


class GridTooSmall(SaddleCertError):
    pass


class BadDims(SaddleCertError):
    pass


class ThetaTooLarge(SaddleCertError):
    def __init__(self, theta: float, lambda_max: float):
        self.theta = theta
        self.lambda_max = lambda_max
        super().__init__(
            f"theta={theta:g} gives theta*lambda_max={theta * lambda_max:.6g} >= 2 "
            f"(lambda_max(diag(M)^-1 M) = {lambda_max:.6g}, need theta < {2.0 / lambda_max:.6g})"
        )


class NoGridMetadata(SaddleCertError):
    pass


class ZeroOperator(SaddleCertError):
    pass


class DeltaZero(SaddleCertError):
    """The A-solver is exact; the rescaled operator T is undefined.

    ``blocks`` carries the F assembly, which is still well defined.
    """

    def __init__(self, message: str, blocks=None):
        self.blocks = blocks
        super().__init__(message)


class NotStrictlyDominant(SaddleCertError):
    pass


class HypothesisViolated(SaddleCertError):
    def __init__(self, failed: Sequence[str]):
        self.failed: List[str] = list(failed)
        super().__init__(f"hypotheses failed: {', '.join(self.failed)}")


class GammaOutOfRange(SaddleCertError):
    pass


class SpectrumAssumptionViolated(SaddleCertError):
    pass


class TooShort(SaddleCertError):
    pass


class MaxIterReached(SaddleCertError):
    def __init__(self, history, message: str = "GMRes reached max_iter without converging"):
        self.history = history
        super().__init__(message)


class BadConstants(SaddleCertError):
    pass


class AssemblyMismatch(SaddleCertError):
    pass


class NotSymmetrized(SaddleCertError):
    pass


class IoError(SaddleCertError):
    pass


class ExperimentError(SaddleCertError):
    """A run aborted; ``rows`` holds whatever was finished before the failure."""

    def __init__(self, message: str, rows: Optional[Sequence] = None):
        self.rows = list(rows or [])
        super().__init__(message)


# Configuration errors

class ConfigIssue(SaddleCertError):
    """One problem found while parsing an experiment config."""

    kind = "ConfigIssue"

    def __init__(self, line: Optional[int], key: str, message: str, suggestion: Optional[str] = None):
        self.line = line
        self.key = key
        self.message = message
        self.suggestion = suggestion
        where = f"line {line}" if line is not None else "config"
        hint = f" (did you mean '{suggestion}'?)" if suggestion else ""
        super().__init__(f"{self.kind} at {where}: {key}: {message}{hint}")


class UnknownKey(ConfigIssue):
    kind = "UnknownKey"


class MissingRequired(ConfigIssue):
    kind = "MissingRequired"


class BadValue(ConfigIssue):
    kind = "BadValue"


class ConfigError(SaddleCertError):
    """All issues found in one config, not just the first."""

    def __init__(self, issues: Sequence[ConfigIssue]):
        self.issues: List[ConfigIssue] = list(issues)
        super().__init__("\n".join(str(i) for i in self.issues))
