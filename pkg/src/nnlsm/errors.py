"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument broke a documented precondition."""


class TrainingError(RuntimeError):
    """Network training produced a non-finite loss.

    Carries the epoch at which training diverged, the offending loss and,
    when raised from the backward loop, the grid date index being fitted.
    """

    def __init__(self, epoch: int, loss: float, date_index: int | None = None):
        self.epoch = epoch
        self.loss = loss
        self.date_index = date_index
        where = f" at date index {date_index}" if date_index is not None else ""
        super().__init__(f"training diverged{where}: epoch={epoch} loss={loss!r}")

    def at_date(self, date_index: int) -> "TrainingError":
        return TrainingError(self.epoch, self.loss, date_index)


class ConfigError(ValueError):
    """Invalid run configuration; ``location`` is a dotted field path."""

    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}")
