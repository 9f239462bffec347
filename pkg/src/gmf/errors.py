"""Exception hierarchy for the gmf package.

Every error raised on purpose by the library derives from ``GmfError`` so
callers (and the CLI) can distinguish input problems from numerical
failures with a single ``except`` clause each.
"""


class GmfError(Exception):
    """Base class for all gmf errors."""


class InputError(GmfError):
    """Invalid user input: bad shapes, bad tokens, bad flag values."""


class InvalidMeanError(InputError):
    """A mean value lies outside the family's mean domain."""


class InvalidResponseError(InputError):
    """A response value is invalid for the chosen family."""


class InsufficientDataError(InputError):
    """Too few observed cells for the requested computation."""


class ParseError(InputError):
    """Malformed CSV input."""


class ShapeMismatchError(InputError):
    """Declared and actual array shapes disagree."""


class UnsupportedFamilyError(InputError):
    """Unknown family token."""


class VersionMismatchError(InputError):
    """Model file written by an incompatible format version."""


class SplitInfeasibleError(InputError):
    """No holdout/fold split keeps every row and column represented."""


class UndefinedFractionError(InputError):
    """Null deviance is zero, so the explained fraction is undefined."""


class UndefinedAucError(InputError):
    """AUC requested with only one class present."""


class NumericalError(GmfError):
    """A numerical failure during fitting (non-finite objective etc.)."""


class NumericalOverflowError(NumericalError):
    """The objective became non-finite."""


class RidgeSingularError(NumericalError):
    """The unpenalized row system is singular."""


class ColumnDegenerateError(NumericalError):
    """The weighted normal equations of one response column are singular."""

    def __init__(self, column: int, message: str | None = None):
        self.column = column
        super().__init__(message or f"degenerate normal equations in column {column}")


class DegenerateLatentError(NumericalError):
    """Latent score matrix lost full column rank."""


class LineSearchMisuseError(GmfError):
    """Line search called without a descent direction."""


class BootstrapUnstableError(NumericalError):
    """Too many bootstrap replicates failed to fit."""
