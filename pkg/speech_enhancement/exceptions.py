"""
Error types raised by the enhancement pipeline.

Every error carries an optional ``stage`` (filled in by the pipeline when the
error escapes a stage) and an optional ``index`` naming the offending
time-frequency bin, so command-line and task diagnostics can say where a run
broke down.
"""


class EnhancementError(Exception):
    """Base class for all enhancement failures"""

    def __init__(self, message, *, stage=None, index=None):
        super().__init__(message)
        self.message = message
        self.stage = stage
        self.index = index

    def diagnostic(self):
        """One-line description naming the stage and bin when known"""
        parts = []
        if self.stage:
            parts.append(f"stage={self.stage}")
        if self.index is not None:
            parts.append(f"bin={tuple(int(i) for i in self.index)}")
        prefix = f"[{' '.join(parts)}] " if parts else ''
        return f"{prefix}{self.message}"

    def __str__(self):
        return self.diagnostic()


class InvalidInputError(EnhancementError):
    """Input data violates an operation's preconditions"""


class ConfigurationError(EnhancementError):
    """Configuration values are inconsistent or out of range"""


class AudioIOError(EnhancementError):
    """WAV or sidecar file could not be read or written"""


class NumericalFailureError(EnhancementError):
    """A computation produced non-finite values"""


class DegenerateMatrixError(NumericalFailureError):
    """Matrix has no usable dominant eigenvalue"""


class SingularMatrixError(NumericalFailureError):
    """Matrix cannot be inverted even after regularization"""


class EstimationFailureError(NumericalFailureError):
    """Iterative estimation (ILRMA) could not proceed"""


class FilterConstructionError(NumericalFailureError):
    """Beamformer filter could not be built for some bin"""
