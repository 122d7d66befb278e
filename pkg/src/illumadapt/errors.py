"""Exception and warning types shared across the package."""


class IllumAdaptError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(IllumAdaptError):
    """An input violated a documented precondition or schema."""


class NumericalError(IllumAdaptError):
    """A computation received or produced non-finite values."""


class TrainingDivergedError(IllumAdaptError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        msg = f"training diverged at epoch {epoch}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class StaleCheckpointError(IllumAdaptError):
    """A stage checkpoint exists but was produced under a different config."""


class DegenerateDomainsWarning(UserWarning):
    """Domain classes appear indistinguishable (near-chance held-out accuracy)."""
