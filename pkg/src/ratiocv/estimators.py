"""Mean and ratio-of-means point estimators."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .coefficients import CoefficientSet
from .errors import (
    EmptySample,
    LengthMismatch,
    MissingExtraSamples,
    MissingKnownMeans,
    ZeroDenominator,
)
from .numerics import JointSample


class Kind(str, Enum):
    MC_MC = "mc_mc"
    CV_MC = "cv_mc"
    CV_CV = "cv_cv"
    ACV_MC = "acv_mc"
    ACV_ACV = "acv_acv"

    def __str__(self):
        return self.value

    @property
    def numerator(self) -> str:
        return self.value.split("_")[0]

    @property
    def denominator(self) -> str:
        return self.value.split("_")[1]

    @property
    def uses_known_means(self) -> bool:
        return self.numerator == "cv"

    @property
    def uses_denominator_control(self) -> bool:
        return self.denominator != "mc"


@dataclass(frozen=True)
class RatioEstimate:
    value: float
    estimator_kind: Kind
    coefficients: CoefficientSet
    n: int
    m: int
    used_known_means: bool


def mc_mean(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptySample("cannot average an empty sample")
    return float(values.mean())


def cv_mean(a, b, known_mean_b: float, alpha: float) -> float:
    """``mean(a) + alpha * (E[B] - mean(b))``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"a has {a.size} values but b has {b.size}")
    return mc_mean(a) + alpha * (known_mean_b - mc_mean(b))


def acv_mean(a, b_paired, b_extra, alpha: float) -> float:
    """``mean(a) + alpha * (mean(b over n+m rows) - mean(b over n rows))``.

    The (n+m)-row mean pools the paired and the extra control values. With no
    extra rows the correction is exactly zero.
    """
    a = np.asarray(a, dtype=float)
    b_paired = np.asarray(b_paired, dtype=float)
    b_extra = np.asarray(b_extra, dtype=float)
    if a.shape != b_paired.shape:
        raise LengthMismatch(f"a has {a.size} values but b_paired has {b_paired.size}")
    pooled = mc_mean(np.concatenate([b_paired, b_extra]))
    return mc_mean(a) + alpha * (pooled - mc_mean(b_paired))


def ratio_estimate(
    sample: JointSample,
    coeffs: CoefficientSet,
    kind,
    known_means: tuple | None = None,
) -> RatioEstimate:
    """Assemble the ratio estimator of the requested kind.

    ``known_means`` is ``(E[B], E[D])`` and is required by the ``cv_*`` kinds.
    For the ``*_mc`` kinds the denominator is a plain mean and ``coeffs.beta``
    is ignored.
    """
    kind = Kind(kind)
    if kind.uses_known_means and known_means is None:
        raise MissingKnownMeans(f"{kind.value} needs the exact means (E[B], E[D])")
    if kind.numerator == "acv" and not sample.has_extra:
        raise MissingExtraSamples(f"{kind.value} needs extra control rows")

    a, b, c, d = sample.a, sample.b, sample.c, sample.d
    if kind is Kind.MC_MC:
        num, den = mc_mean(a), mc_mean(c)
    elif kind.numerator == "cv":
        num = cv_mean(a, b, known_means[0], coeffs.alpha)
        den = cv_mean(c, d, known_means[1], coeffs.beta) if kind.uses_denominator_control else mc_mean(c)
    else:
        num = acv_mean(a, b, sample.extra_b, coeffs.alpha)
        den = acv_mean(c, d, sample.extra_d, coeffs.beta) if kind.uses_denominator_control else mc_mean(c)

    if den == 0.0:
        raise ZeroDenominator(f"{kind.value} denominator estimate is exactly zero")
    return RatioEstimate(
        value=num / den,
        estimator_kind=kind,
        coefficients=coeffs,
        n=sample.n,
        m=sample.m,
        used_known_means=kind.uses_known_means,
    )
