"""First-order (delta-method) variances of the ratio estimators.

All formulas drop the O(1/n^2) remainder. The common factor
``1 / (n * E[C]^2)`` is written ``k`` below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import coefficients as coef
from .coefficients import CoefficientSet, Strategy
from .errors import DegenerateDenominator, InconsistentClosedForm, RatioCVError, ZeroVariance
from .estimators import Kind
from .numerics import MomentSet

CLOSED_FORM_RTOL = 1e-10


@dataclass(frozen=True)
class VarianceBreakdown:
    var_mc_mc: float
    var_estimator: float
    difference: float
    rvr: float
    n: int
    scaling: float
    kind: Kind
    coefficients: CoefficientSet
    closed_form_difference: float | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "strategy": self.coefficients.strategy.value,
            "alpha": self.coefficients.alpha,
            "beta": self.coefficients.beta,
            "var_mc_mc": self.var_mc_mc,
            "var_estimator": self.var_estimator,
            "difference": self.difference,
            "closed_form_difference": self.closed_form_difference,
            "rvr": self.rvr,
            "n": self.n,
            "scaling": self.scaling,
        }


def _k(moments: MomentSet, n: int) -> float:
    if moments.mean_c == 0:
        raise DegenerateDenominator("E[C] is zero")
    if n < 1:
        raise RatioCVError("n must be at least 1")
    return 1.0 / (n * moments.mean_c**2)


def var_mc_mc(moments: MomentSet, n: int) -> float:
    m = moments
    return _k(m, n) * (m.var_a + m.r**2 * m.var_c - 2 * m.r * m.cov_ac)


def var_cv_mc(moments: MomentSet, alpha: float, n: int) -> float:
    m, r = moments, moments.r
    return _k(m, n) * (
        m.var_a
        + alpha**2 * m.var_b
        - 2 * alpha * m.cov_ab
        + r**2 * m.var_c
        - 2 * r * m.cov_ac
        + 2 * alpha * r * m.cov_bc
    )


def _cv_cv_terms(m: MomentSet, alpha: float, beta: float) -> tuple:
    r = m.r
    return (
        m.var_a,
        alpha**2 * m.var_b,
        -2 * alpha * m.cov_ab,
        r**2 * m.var_c,
        beta**2 * r**2 * m.var_d,
        -2 * beta * r**2 * m.cov_cd,
        -2 * r * m.cov_ac,
        2 * alpha * r * m.cov_bc,
        2 * beta * r * m.cov_ad,
        -2 * alpha * beta * r * m.cov_bd,
    )


def var_cv_cv(moments: MomentSet, alpha: float, beta: float, n: int) -> float:
    return _k(moments, n) * math.fsum(_cv_cv_terms(moments, alpha, beta))


def _difference_terms(m: MomentSet, alpha: float, beta: float) -> tuple:
    # The ten CV/CV terms minus the three shared with MC/MC.
    terms = _cv_cv_terms(m, alpha, beta)
    return terms[1:3] + terms[4:6] + terms[7:]


def gradient_cv_cv(moments: MomentSet, alpha: float, beta: float, n: int) -> tuple:
    """Analytic partial derivatives of :func:`var_cv_cv` in ``alpha`` and ``beta``."""
    m, r = moments, moments.r
    k = _k(m, n)
    d_alpha = 2 * k * (alpha * m.var_b - m.cov_ab + r * m.cov_bc - beta * r * m.cov_bd)
    d_beta = 2 * k * (beta * r**2 * m.var_d - r**2 * m.cov_cd + r * m.cov_ad - alpha * r * m.cov_bd)
    return d_alpha, d_beta


def hessian_cv_cv(moments: MomentSet, n: int) -> tuple:
    """Constant Hessian of :func:`var_cv_cv` as ``((h_aa, h_ab), (h_ab, h_bb))``."""
    m, r = moments, moments.r
    k = _k(m, n)
    h_aa = 2 * k * m.var_b
    h_ab = -2 * k * r * m.cov_bd
    h_bb = 2 * k * r**2 * m.var_d
    return (h_aa, h_ab), (h_ab, h_bb)


# Closed-form differences Var(estimator) - Var(MC/MC) for specific coefficient choices.


def classical_cv_mc_difference(moments: MomentSet, n: int) -> float:
    m = moments
    return _k(m, n) * (m.cov_ab / m.var_b) * (2 * m.r * m.cov_bc - m.cov_ab)


def numerator_only_difference(moments: MomentSet, n: int) -> float:
    m = moments
    return -_k(m, n) * (m.cov_ab - m.r * m.cov_bc) ** 2 / m.var_b


def classical_t_term(moments: MomentSet) -> float:
    """Numerator ``T`` of the CV/CV variance difference with classical coefficients."""
    m, r = moments, moments.r
    return (
        -m.cov_ab**2 * m.var_d
        - r**2 * m.cov_cd**2 * m.var_b
        + 2 * r * m.cov_ab * m.cov_bc * m.var_d
        + 2 * r * m.cov_cd * m.cov_ad * m.var_b
        - 2 * r * m.cov_ab * m.cov_cd * m.cov_bd
    )


def classical_cv_cv_difference(moments: MomentSet, n: int) -> float:
    m = moments
    return _k(m, n) * classical_t_term(m) / (m.var_b * m.var_d)


def gordon_cv_cv_difference(moments: MomentSet, n: int) -> float:
    m = moments
    t = classical_t_term(m)
    first = (t - m.cov_ad**2 * m.var_b + 2 * m.cov_ab * m.cov_bd * m.cov_ad) / (m.var_b * m.var_d)
    second = m.cov_ab**2 * m.cov_bd**2 / (m.var_b**2 * m.var_d)
    return _k(m, n) * (first - second)


def optimal_cv_cv_difference(moments: MomentSet, n: int) -> float:
    """``-k * Var(p*D - q*B) / det`` with ``p = R Cov(B,C) - Cov(A,B)``, ``q = R Cov(C,D) - Cov(A,D)``."""
    m, r = moments, moments.r
    p = r * m.cov_bc - m.cov_ab
    q = r * m.cov_cd - m.cov_ad
    var_comb = p**2 * m.var_d + q**2 * m.var_b - 2 * p * q * m.cov_bd
    return -_k(m, n) * var_comb / coef.control_determinant(m)


_CLOSED_FORMS = {
    ("cv_cv", Strategy.CLASSICAL): classical_cv_cv_difference,
    ("cv_cv", Strategy.GORDON): gordon_cv_cv_difference,
    ("cv_cv", Strategy.OPTIMAL): optimal_cv_cv_difference,
    ("cv_mc", Strategy.CLASSICAL): classical_cv_mc_difference,
    ("cv_mc", Strategy.NUMERATOR_ONLY): numerator_only_difference,
}


def acv_scaling(difference_exact: float, n: int, m: int) -> float:
    """Difference for the approximate-control version, given the exact-control one."""
    if n < 1 or m < 0:
        raise RatioCVError("need n >= 1 and m >= 0")
    return m / (n + m) * difference_exact


def _check_agreement(general: float, closed: float, magnitude: float, label: str):
    tol = CLOSED_FORM_RTOL * max(abs(general), abs(closed)) + 1e-13 * magnitude
    if abs(general - closed) > tol:
        raise InconsistentClosedForm(
            f"{label}: general formula gives {general!r}, closed form {closed!r}"
        )


def _resolve_kind(strategy: Strategy, kind) -> Kind:
    if kind is None:
        return Kind.CV_MC if strategy is Strategy.NUMERATOR_ONLY else Kind.CV_CV
    kind = Kind(kind)
    if not kind.uses_denominator_control and strategy in (Strategy.GORDON, Strategy.OPTIMAL):
        raise RatioCVError(f"strategy {strategy.value} needs a denominator control; got {kind.value}")
    return kind


def variance_difference(moments: MomentSet, strategy, n: int, kind=None, m: int = 0) -> VarianceBreakdown:
    """Delta-method variance of an estimator relative to MC/MC.

    ``kind`` defaults to ``cv_mc`` for the numerator-only strategy and
    ``cv_cv`` otherwise. For the ``acv_*`` kinds the exact-control difference
    is scaled by ``m / (n + m)``. Where a dedicated closed form exists it is
    evaluated as well and must agree with the general expression.
    """
    strategy = Strategy(strategy)
    kind = _resolve_kind(strategy, kind)
    coeffs = coef.compute(moments, strategy)
    if not kind.uses_denominator_control:
        coeffs = CoefficientSet(coeffs.alpha, 0.0, coeffs.strategy)
    alpha, beta = coeffs.alpha, coeffs.beta

    base = var_mc_mc(moments, n)
    k = _k(moments, n)
    terms = _difference_terms(moments, alpha, beta)
    exact = k * math.fsum(terms)
    magnitude = k * math.fsum(abs(t) for t in terms)

    closed = None
    exact_kind = "cv_cv" if kind.uses_denominator_control else "cv_mc"
    closed_fn = _CLOSED_FORMS.get((exact_kind, strategy))
    if closed_fn is not None:
        closed = closed_fn(moments, n)
        _check_agreement(exact, closed, magnitude, f"{strategy.value}/{exact_kind}")
    elif strategy is Strategy.NONE:
        closed = 0.0

    scaling = 1.0
    if kind.numerator == "acv":
        scaling = m / (n + m)
        exact = acv_scaling(exact, n, m)
        if closed is not None:
            closed = acv_scaling(closed, n, m)

    var_est = base + exact
    return VarianceBreakdown(
        var_mc_mc=base,
        var_estimator=var_est,
        difference=exact,
        rvr=(0.0 - exact) / base if base > 0 else math.nan,
        n=n,
        scaling=scaling,
        kind=kind,
        coefficients=coeffs,
        closed_form_difference=closed,
    )


# Linearly related controls, B = a*D + b.


def linear_controls_moments(moments: MomentSet, a: float) -> MomentSet:
    """Moments with ``B`` replaced by ``a*D + b``; the offset ``b`` shifts no second moment."""
    if a == 0:
        raise RatioCVError("the slope a in B = a*D + b must be non-zero")
    fields = moments.to_dict()
    fields.update(
        var_b=a**2 * moments.var_d,
        cov_ab=a * moments.cov_ad,
        cov_bc=a * moments.cov_cd,
        cov_bd=a * moments.var_d,
    )
    return MomentSet(**fields)


def linear_cv_tau(moments: MomentSet) -> float:
    """``Cov(A - R*C, D)``."""
    return moments.cov_ad - moments.r * moments.cov_cd


def linear_cv_variance_difference(moments: MomentSet, n: int) -> float:
    """Minimized CV/CV variance minus MC/MC variance when ``B = a*D + b``.

    Along the whole line of minimizers the ten-term variance reduces to
    ``Var(MC/MC) - k * tau**2 / Var(D)``, independent of ``beta``, ``a`` and
    ``b``.
    """
    if not moments.var_d > 0:
        raise ZeroVariance("var_d must be positive")
    tau = linear_cv_tau(moments)
    return -_k(moments, n) * tau**2 / moments.var_d


def linear_cv_reduction_predicate(moments: MomentSet) -> bool:
    """True when the minimized variance is strictly below MC/MC, i.e. ``tau != 0``."""
    return linear_cv_variance_difference(moments, 1) < 0


def linear_cv_sufficient_interval(var_d: float) -> tuple:
    """The interval condition on ``tau`` stated alongside the linear-controls minimizer.

    Returns ``((-s, 0), (s, inf))`` with ``s = sqrt(Var(D)/2)``. Membership
    implies a reduction, but the exact difference shows every non-zero
    ``tau`` reduces the variance, so the condition is sufficient and not
    necessary.
    """
    if not var_d > 0:
        raise ZeroVariance("var_d must be positive")
    s = math.sqrt(var_d / 2)
    return (-s, 0.0), (s, math.inf)


def in_sufficient_interval(tau: float, var_d: float) -> bool:
    (lo1, hi1), (lo2, hi2) = linear_cv_sufficient_interval(var_d)
    return lo1 < tau < hi1 or lo2 < tau < hi2
