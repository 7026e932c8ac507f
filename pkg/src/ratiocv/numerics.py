"""Random streams, Cholesky factorization, Gaussian sampling and sample moments.

Variables are always ordered (A, B, C, D): A and C are the numerator and
denominator targets, B and D their control variates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateDenominator,
    InsufficientSamples,
    NotPositiveDefinite,
    RatioCVError,
    ZeroVariance,
)

VARIABLES = ("a", "b", "c", "d")

# Lower-triangle order used for printed matrices: rows B, C, D.
OFF_DIAGONAL_PAIRS = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))

PIVOT_TOLERANCE = 1e-12


class RngStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    Streams with different ids are derived from the same seed through
    :class:`numpy.random.SeedSequence` spawn keys, so they are independent
    regardless of the order in which they are created or consumed.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def standard_normal(self, size):
        return self.generator.standard_normal(size)


@dataclass(frozen=True)
class CovarianceStructure:
    """Mean vector and covariance matrix of (A, B, C, D).

    Only the lower triangle of ``sigma`` is read; it is mirrored so the stored
    matrix is exactly symmetric.
    """

    mu: tuple
    sigma: np.ndarray = field(repr=False)

    def __post_init__(self):
        mu = tuple(float(v) for v in self.mu)
        sigma = np.array(self.sigma, dtype=float)
        if len(mu) != 4 or sigma.shape != (4, 4):
            raise RatioCVError("a covariance structure needs 4 means and a 4x4 matrix")
        if mu[2] == 0.0:
            raise DegenerateDenominator("E[C] must be non-zero for the ratio to exist")
        lower = np.tril(sigma)
        sigma = lower + np.tril(sigma, -1).T
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def from_lower(cls, mu, off_diagonal: Sequence[float], variances=(1.0, 1.0, 1.0, 1.0)):
        """Build from the six lower-triangle entries in printed order.

        The order is (B,A), (C,A), (C,B), (D,A), (D,B), (D,C).
        """
        if len(off_diagonal) != 6:
            raise RatioCVError("expected 6 off-diagonal entries")
        sigma = np.diag(np.asarray(variances, dtype=float))
        for (i, j), v in zip(OFF_DIAGONAL_PAIRS, off_diagonal):
            sigma[i, j] = sigma[j, i] = v
        return cls(tuple(mu), sigma)

    def lower_triangle(self) -> list:
        return [float(self.sigma[i, j]) for i, j in OFF_DIAGONAL_PAIRS]

    @property
    def ratio(self) -> float:
        return self.mu[0] / self.mu[2]

    def to_dict(self) -> dict:
        return {"mu": list(self.mu), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, data: dict):
        try:
            return cls(tuple(data["mu"]), np.asarray(data["sigma"], dtype=float))
        except KeyError as exc:
            raise RatioCVError(f"structure is missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class MomentSet:
    """The scalar moments consumed by every coefficient and variance formula."""

    var_a: float
    var_b: float
    var_c: float
    var_d: float
    cov_ab: float
    cov_ac: float
    cov_ad: float
    cov_bc: float
    cov_bd: float
    cov_cd: float
    mean_a: float
    mean_c: float
    r: float

    def __post_init__(self):
        for name in ("var_a", "var_b", "var_c", "var_d"):
            if getattr(self, name) < 0:
                raise RatioCVError(f"{name} must be non-negative")

    @classmethod
    def from_structure(cls, structure: CovarianceStructure) -> "MomentSet":
        """Population moments of a Gaussian structure."""
        s = structure.sigma
        mu = structure.mu
        return cls(
            var_a=float(s[0, 0]),
            var_b=float(s[1, 1]),
            var_c=float(s[2, 2]),
            var_d=float(s[3, 3]),
            cov_ab=float(s[0, 1]),
            cov_ac=float(s[0, 2]),
            cov_ad=float(s[0, 3]),
            cov_bc=float(s[1, 2]),
            cov_bd=float(s[1, 3]),
            cov_cd=float(s[2, 3]),
            mean_a=mu[0],
            mean_c=mu[2],
            r=mu[0] / mu[2],
        )

    def cov(self, x: str, y: str) -> float:
        """Covariance between two variables named by letter, e.g. ``cov("d", "b")``."""
        x, y = x.lower(), y.lower()
        if x == y:
            return getattr(self, f"var_{x}")
        key = "".join(sorted(x + y))
        return getattr(self, f"cov_{key}")

    def covariance_matrix(self) -> np.ndarray:
        return np.array([[self.cov(x, y) for y in VARIABLES] for x in VARIABLES])

    def corr(self, x: str, y: str) -> float:
        vx, vy = self.cov(x, x), self.cov(y, y)
        if vx <= 0 or vy <= 0:
            raise ZeroVariance(f"Var({x.upper()}) and Var({y.upper()}) must be positive")
        return self.cov(x, y) / math.sqrt(vx * vy)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class JointSample:
    """``n`` paired rows of (a, b, c, d) plus ``m`` extra rows of (b, d)."""

    paired: np.ndarray
    extra: np.ndarray = None
    # False when no extra rows were supplied at all, as opposed to an empty set.
    has_extra: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "has_extra", self.extra is not None)
        paired = np.asarray(self.paired, dtype=float)
        if paired.ndim != 2 or paired.shape[1] != 4:
            raise RatioCVError("paired rows must have shape (n, 4)")
        extra = np.empty((0, 2)) if self.extra is None else np.asarray(self.extra, dtype=float)
        if extra.size == 0:
            extra = np.empty((0, 2))
        if extra.ndim != 2 or extra.shape[1] != 2:
            raise RatioCVError("extra rows must have shape (m, 2)")
        object.__setattr__(self, "paired", paired)
        object.__setattr__(self, "extra", extra)

    @property
    def n(self) -> int:
        return self.paired.shape[0]

    @property
    def m(self) -> int:
        return self.extra.shape[0]

    @property
    def a(self):
        return self.paired[:, 0]

    @property
    def b(self):
        return self.paired[:, 1]

    @property
    def c(self):
        return self.paired[:, 2]

    @property
    def d(self):
        return self.paired[:, 3]

    @property
    def extra_b(self):
        return self.extra[:, 0]

    @property
    def extra_d(self):
        return self.extra[:, 1]


def cholesky(sigma, tol: float = PIVOT_TOLERANCE) -> np.ndarray:
    """Lower-triangular factor ``L`` with ``L @ L.T == sigma``.

    Raises :class:`NotPositiveDefinite` as soon as a pivot is ``<= tol``; the
    exception records which leading minor failed.
    """
    a = np.asarray(sigma, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise RatioCVError("cholesky needs a square matrix")
    k = a.shape[0]
    L = np.zeros_like(a)
    for j in range(k):
        pivot = a[j, j] - np.dot(L[j, :j], L[j, :j])
        if not pivot > tol:
            raise NotPositiveDefinite(j + 1, float(pivot))
        L[j, j] = math.sqrt(pivot)
        for i in range(j + 1, k):
            L[i, j] = (a[i, j] - np.dot(L[i, :j], L[j, :j])) / L[j, j]
    return L


def is_positive_definite(sigma) -> bool:
    try:
        cholesky(sigma)
    except NotPositiveDefinite:
        return False
    return True


def sample_gaussian(structure: CovarianceStructure, n: int, m: int, rng: RngStream) -> JointSample:
    """Draw ``n`` paired rows from N(mu, sigma) and ``m`` rows of the (B, D) marginal.

    Paired rows are drawn first, then the extra rows, from the same stream.
    """
    if n < 1 or m < 0:
        raise RatioCVError("need n >= 1 and m >= 0")
    L = cholesky(structure.sigma)
    mu = np.asarray(structure.mu)
    paired = mu + rng.standard_normal((n, 4)) @ L.T
    if m:
        idx = [1, 3]
        L_bd = cholesky(structure.sigma[np.ix_(idx, idx)])
        extra = mu[idx] + rng.standard_normal((m, 2)) @ L_bd.T
    else:
        extra = np.empty((0, 2))
    return JointSample(paired, extra)


def estimate_moments(sample: JointSample) -> MomentSet:
    """Plug-in moments from the paired rows (1/(n-1) divisor)."""
    if sample.n < 2:
        raise InsufficientSamples(f"need at least 2 paired rows, got {sample.n}")
    x = sample.paired
    means = x.mean(axis=0)
    if means[2] == 0.0:
        raise DegenerateDenominator("sample mean of C is zero")
    centered = x - means
    s = centered.T @ centered / (sample.n - 1)
    return MomentSet(
        var_a=float(s[0, 0]),
        var_b=float(s[1, 1]),
        var_c=float(s[2, 2]),
        var_d=float(s[3, 3]),
        cov_ab=float(s[0, 1]),
        cov_ac=float(s[0, 2]),
        cov_ad=float(s[0, 3]),
        cov_bc=float(s[1, 2]),
        cov_bd=float(s[1, 3]),
        cov_cd=float(s[2, 3]),
        mean_a=float(means[0]),
        mean_c=float(means[2]),
        r=float(means[0] / means[2]),
    )


def correlation_matrix(moments: MomentSet) -> np.ndarray:
    cov = moments.covariance_matrix()
    sd = np.sqrt(np.diag(cov))
    if np.any(sd <= 0):
        zero = [VARIABLES[i].upper() for i in np.flatnonzero(sd <= 0)]
        raise ZeroVariance(f"zero variance for {', '.join(zero)}")
    corr = cov / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return corr
