"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument lies outside the domain of the operation."""


class PosteriorCollapseError(RuntimeError):
    """Every particle was assigned zero likelihood by an observed datum.

    The offending outcome and control are kept so the caller can decide
    whether to abort or reinitialize.
    """

    def __init__(self, outcome, control):
        self.outcome = outcome
        self.control = control
        super().__init__(
            f"posterior collapse: total weight is zero after outcome={outcome} "
            f"at control={control}"
        )


class DegenerateCloudError(RuntimeError):
    """The particle covariance cannot be factorized even after regularization."""


class PriorSamplingError(RuntimeError):
    """A prior kept producing draws outside the model's parameter constraints."""


class UnsupportedModelError(TypeError):
    """The requested operation is not defined for this model."""
