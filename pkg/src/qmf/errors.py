"""Exception taxonomy shared across the package."""


class QmfError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(QmfError):
    """Invalid configuration value or inconsistent option combination."""


class DimensionError(QmfError):
    """Array dimensions incompatible with the requested operation."""


class ShapeError(QmfError):
    """Operand has the wrong shape (e.g. non-scalar loss in backward)."""


class LabelError(QmfError):
    """Class labels outside the expected range or of the wrong kind."""


class FormatError(QmfError):
    """On-disk artifact is malformed or inconsistent with its manifest."""


class DegenerateInputError(QmfError):
    """Statistic undefined for this input (e.g. correlation of a constant)."""


class DivergenceError(QmfError):
    """Training produced a non-finite quantity.

    Carries the epoch index at which the divergence was detected.
    """

    def __init__(self, message: str, epoch: int) -> None:
        super().__init__(message, epoch)  # both in args so the exception pickles
        self.epoch = epoch

    def __str__(self) -> str:
        return f"{self.args[0]} (epoch {self.epoch})"
