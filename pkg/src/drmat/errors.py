class DomainError(ValueError):
    """Input outside the domain of an operation."""


class IllConditionedCovarianceError(ArithmeticError):
    """Sample covariance of the covariates is (numerically) singular."""

    def __init__(self, eigenvalue: float, largest: float):
        self.eigenvalue = eigenvalue
        self.largest = largest
        super().__init__(
            f"covariate covariance is ill-conditioned: smallest eigenvalue "
            f"{eigenvalue:.3e} vs largest {largest:.3e}"
        )


class DegenerateDataError(ArithmeticError):
    """The test statistic is undefined because its variance estimate is zero."""


class DataError(DomainError):
    """Malformed input data (missing cells, non-numeric values, bad columns)."""
