"""Control-variate coefficient strategies for ratio-of-means estimators.

Every strategy returns the pair ``(alpha, beta)``: ``alpha`` multiplies the
numerator correction ``E[B] - mean(B)`` and ``beta`` the denominator
correction ``E[D] - mean(D)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import CollinearControls, RatioCVError, ZeroRatio, ZeroSlope, ZeroVariance
from .numerics import JointSample, MomentSet, estimate_moments

COLLINEAR_THRESHOLD = 1.0 - 1e-9


class Strategy(str, Enum):
    NONE = "none"
    CLASSICAL = "classical"
    GORDON = "gordon"
    OPTIMAL = "optimal"
    NUMERATOR_ONLY = "numerator_only"
    LINEAR_CV = "linear_cv"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class CoefficientSet:
    alpha: float
    beta: float
    strategy: Strategy

    def __post_init__(self):
        strategy = Strategy(self.strategy)
        object.__setattr__(self, "strategy", strategy)
        if strategy is Strategy.NONE and (self.alpha != 0 or self.beta != 0):
            raise RatioCVError("strategy 'none' requires alpha = beta = 0")
        if strategy is Strategy.NUMERATOR_ONLY and self.beta != 0:
            raise RatioCVError("strategy 'numerator_only' requires beta = 0")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "strategy": self.strategy.value}


def _require_positive(moments: MomentSet, *names):
    for name in names:
        if not getattr(moments, name) > 0:
            raise ZeroVariance(f"{name} must be positive")


def _require_ratio(moments: MomentSet):
    if moments.r == 0:
        raise ZeroRatio("R = E[A]/E[C] is zero; the denominator coefficient is undefined")


def none() -> CoefficientSet:
    return CoefficientSet(0.0, 0.0, Strategy.NONE)


def classical(moments: MomentSet) -> CoefficientSet:
    """Each mean gets its own variance-minimizing coefficient, ignoring the ratio."""
    _require_positive(moments, "var_b", "var_d")
    return CoefficientSet(
        moments.cov_ab / moments.var_b,
        moments.cov_cd / moments.var_d,
        Strategy.CLASSICAL,
    )


def gordon(moments: MomentSet) -> CoefficientSet:
    """Classical numerator coefficient; denominator coefficient minimizes the ratio variance given it."""
    _require_positive(moments, "var_b", "var_d")
    _require_ratio(moments)
    m = moments
    alpha = m.cov_ab / m.var_b
    beta = (m.r * m.cov_cd - m.cov_ad + alpha * m.cov_bd) / (m.r * m.var_d)
    return CoefficientSet(alpha, beta, Strategy.GORDON)


def control_determinant(moments: MomentSet) -> float:
    """Var(B)Var(D) - Cov(B,D)^2, the determinant that must stay positive."""
    return moments.var_b * moments.var_d - moments.cov_bd**2


def optimal(moments: MomentSet) -> CoefficientSet:
    """Jointly optimal ``(alpha, beta)`` minimizing the delta-method ratio variance.

    Requires |Corr(B, D)| < 1. Raises :class:`CollinearControls` when the two
    controls are linearly related to working precision; :func:`linear_cv`
    handles that case.
    """
    m = moments
    _require_positive(m, "var_b", "var_d")
    _require_ratio(m)
    if abs(m.cov_bd) / math.sqrt(m.var_b * m.var_d) > COLLINEAR_THRESHOLD:
        raise CollinearControls(
            f"|Corr(B,D)| = {abs(m.cov_bd) / math.sqrt(m.var_b * m.var_d):.12f} is 1 "
            "to working precision; use linear_cv"
        )
    det = control_determinant(m)
    r = m.r
    alpha = (m.var_d * m.cov_ab - r * m.var_d * m.cov_bc + r * m.cov_bd * m.cov_cd - m.cov_bd * m.cov_ad) / det
    beta = (
        m.cov_bd * m.cov_ab / r - m.cov_bd * m.cov_bc + m.var_b * m.cov_cd - m.var_b * m.cov_ad / r
    ) / det
    return CoefficientSet(alpha, beta, Strategy.OPTIMAL)


def numerator_only(moments: MomentSet) -> CoefficientSet:
    """Coefficient of the CV/MC estimator: alpha minimizes the ratio variance with beta fixed at 0."""
    _require_positive(moments, "var_b")
    m = moments
    return CoefficientSet((m.cov_ab - m.r * m.cov_bc) / m.var_b, 0.0, Strategy.NUMERATOR_ONLY)


def linear_cv(moments: MomentSet, a: float, b_offset: float = 0.0, beta_choice: float = 0.0) -> CoefficientSet:
    """Minimizer for controls related by ``B = a*D + b_offset``.

    The minimizers form a line; ``beta_choice`` picks a point on it. The
    minimized variance does not depend on the choice, nor on ``a`` or
    ``b_offset``.
    """
    if a == 0:
        raise ZeroSlope("the slope a in B = a*D + b must be non-zero")
    _require_positive(moments, "var_d")
    _require_ratio(moments)
    m = moments
    eta = (m.cov_ad - m.r * m.cov_cd) / m.var_d
    alpha = (eta + beta_choice * m.r) / a
    return CoefficientSet(alpha, float(beta_choice), Strategy.LINEAR_CV)


def compute(moments: MomentSet, strategy) -> CoefficientSet:
    """Dispatch to a strategy by name. ``linear_cv`` needs its own call."""
    strategy = Strategy(strategy)
    if strategy is Strategy.NONE:
        return none()
    if strategy is Strategy.LINEAR_CV:
        raise RatioCVError("linear_cv needs the slope a; call linear_cv() directly")
    return _DISPATCH[strategy](moments)


_DISPATCH = {
    Strategy.CLASSICAL: classical,
    Strategy.GORDON: gordon,
    Strategy.OPTIMAL: optimal,
    Strategy.NUMERATOR_ONLY: numerator_only,
}


def plugin_coefficients(sample: JointSample, strategy) -> CoefficientSet:
    """Coefficients from the sample's own paired rows, with R estimated as mean(A)/mean(C)."""
    return compute(estimate_moments(sample), strategy)
