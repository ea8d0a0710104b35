"""Exception hierarchy.

Every error carries a short machine-readable ``code`` used by the command
line runner when it writes its error report.
"""

from __future__ import annotations


class QuaddriftError(Exception):
    code = "numerical-failure"


class InvalidInput(QuaddriftError, ValueError):
    code = "invalid-input"


class IncompatibleDurations(InvalidInput):
    code = "incompatible-durations"


class TailToleranceError(QuaddriftError):
    code = "tail-error-exceeds-tolerance"


class ResolutionError(QuaddriftError):
    code = "resolution-insufficient"


class UnderResolvedControl(ResolutionError):
    code = "under-resolved-control"


class DerivativeUnavailable(QuaddriftError):
    code = "derivative-unavailable"


class TruncationError(QuaddriftError):
    code = "truncation-too-small"


class DivergentDerivative(QuaddriftError):
    code = "divergent-derivative"


class InsufficientHorizon(QuaddriftError):
    code = "insufficient-horizon"


class NoPlateauFound(QuaddriftError):
    code = "no-plateau-found"


class AliasingError(QuaddriftError):
    code = "aliasing"


class BlowUpError(QuaddriftError):
    code = "blow-up"


class IllConditioned(QuaddriftError):
    code = "ill-conditioned-beyond-cutoff"


class InfeasibleConstraints(QuaddriftError):
    code = "infeasible-constraints"


class LostDirectionError(QuaddriftError):
    code = "lost-direction"


class ConvergenceError(QuaddriftError):
    code = "no-convergence"

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history or [])


class SignMismatch(QuaddriftError):
    code = "sign-mismatch"


class FrequencyOverflow(QuaddriftError):
    code = "frequency-overflow"
