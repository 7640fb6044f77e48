"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so new error conditions
should subclass one of the existing categories rather than raising
bare ValueErrors from deep inside the pipeline.
"""


class GradusError(Exception):
    """Base class for all package errors."""


class PhraseParseError(GradusError):
    """Malformed phrase/score/config document."""


class PhraseValidationError(GradusError):
    """Structurally well-formed input violating a model invariant."""


class SpellingError(GradusError):
    """Pitch or key that cannot be spelled within double accidentals."""


class CheckpointError(GradusError):
    """Checkpoint missing, corrupt, or incompatible with the config."""


class FusionInfeasibleError(GradusError):
    """No phrase assignment satisfies the structure template."""

    def __init__(self, slot_index: int, message: str):
        super().__init__(message)
        self.slot_index = slot_index
