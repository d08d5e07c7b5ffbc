class DomainError(ValueError):
    """Input outside the admissible operating region."""


class DegenerateModeError(ValueError):
    """Repeated eigenvalue; first-order sensitivity is undefined."""


class DegenerateDataError(ValueError):
    """A coordinate has zero spread, so it cannot be standardized."""


class TrainingError(RuntimeError):
    def __init__(self, epoch, message="non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


class EncodingError(RuntimeError):
    """MILP encoding disagrees with the network it encodes."""
