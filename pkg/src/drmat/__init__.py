"""Dimension-reduction model-adaptive heteroscedasticity testing."""

from drmat.errors import (
    DataError,
    DegenerateDataError,
    DomainError,
    IllConditionedCovarianceError,
)
from drmat.het_tests import TestConfig, TestResult, drmat, zfn, zheng
from drmat.scenarios import Dataset, ScenarioSpec, generate
from drmat.sdr import BasisEstimate, estimate_basis

__all__ = [
    "BasisEstimate",
    "DataError",
    "Dataset",
    "DegenerateDataError",
    "DomainError",
    "IllConditionedCovarianceError",
    "ScenarioSpec",
    "TestConfig",
    "TestResult",
    "drmat",
    "estimate_basis",
    "generate",
    "zfn",
    "zheng",
]

__version__ = "0.1.0"
