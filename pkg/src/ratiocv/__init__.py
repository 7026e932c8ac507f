"""Control-variate ratio-of-means estimators and their delta-method variance analysis."""

__version__ = "0.1.0"

from .coefficients import CoefficientSet, Strategy
from .errors import RatioCVError
from .estimators import Kind, ratio_estimate
from .numerics import CovarianceStructure, JointSample, MomentSet, RngStream
from .variance_model import variance_difference

__all__ = [
    "CoefficientSet",
    "CovarianceStructure",
    "JointSample",
    "Kind",
    "MomentSet",
    "RatioCVError",
    "RngStream",
    "Strategy",
    "ratio_estimate",
    "variance_difference",
]
