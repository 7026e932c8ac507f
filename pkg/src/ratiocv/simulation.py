"""Repeated-replication experiments on Gaussian covariance scenarios."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import coefficients as coef
from . import variance_model as vm
from .coefficients import Strategy
from .errors import AllReplicationsFailed, RatioCVError, ZeroBaseVariance
from .estimators import Kind, ratio_estimate
from .numerics import (
    CovarianceStructure,
    MomentSet,
    RngStream,
    cholesky,
    estimate_moments,
    sample_gaussian,
)

DEFAULT_MU = (50.0, 20.0, 10.0, 100.0)

BUILTIN_LOWER = {
    "best-case-optimal": (0.27, -0.99, -0.29, 0.95, -0.02, -0.95),
    "worst-case-gordon": (-0.99, 0.99, -0.99, -0.02, 0.02, -0.01),
    "best-case-gordon": (-0.58, -0.99, 0.57, 0.99, -0.49, -0.99),
}

DEFAULT_STRATEGIES = (
    Strategy.CLASSICAL,
    Strategy.GORDON,
    Strategy.OPTIMAL,
    Strategy.NUMERATOR_ONLY,
)
DEFAULT_KINDS = (Kind.MC_MC, Kind.CV_MC, Kind.CV_CV)

# Strategies that make sense when the denominator has no control variate.
_NUMERATOR_STRATEGIES = (Strategy.CLASSICAL, Strategy.NUMERATOR_ONLY)
_JOINT_STRATEGIES = (Strategy.CLASSICAL, Strategy.GORDON, Strategy.OPTIMAL)

QUANTILE_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)


def builtin_structure(name: str) -> CovarianceStructure:
    try:
        lower = BUILTIN_LOWER[name]
    except KeyError:
        raise RatioCVError(
            f"unknown scenario {name!r}; choose from {', '.join(sorted(BUILTIN_LOWER))}"
        ) from None
    return CovarianceStructure.from_lower(DEFAULT_MU, lower)


@dataclass(frozen=True)
class Scenario:
    name: str
    structure: CovarianceStructure
    n: int = 100
    m: int = 0
    replications: int = 10_000
    strategies: tuple = DEFAULT_STRATEGIES
    estimator_kinds: tuple = DEFAULT_KINDS

    def __post_init__(self):
        cholesky(self.structure.sigma)
        if self.replications < 1:
            raise RatioCVError("replications must be at least 1")
        if self.n < 2:
            raise RatioCVError("n must be at least 2 to estimate coefficients")
        if self.m < 0:
            raise RatioCVError("m must be non-negative")
        object.__setattr__(self, "strategies", tuple(Strategy(s) for s in self.strategies))
        object.__setattr__(self, "estimator_kinds", tuple(Kind(k) for k in self.estimator_kinds))

    @classmethod
    def builtin(cls, name: str, **overrides):
        return cls(name=name, structure=builtin_structure(name), **overrides)

    def combinations(self) -> list:
        """(kind, strategy) pairs to evaluate; MC/MC is always first."""
        combos = [(Kind.MC_MC, Strategy.NONE)]
        for kind in self.estimator_kinds:
            if kind is Kind.MC_MC:
                continue
            allowed = _JOINT_STRATEGIES if kind.uses_denominator_control else _NUMERATOR_STRATEGIES
            combos.extend((kind, s) for s in self.strategies if s in allowed)
        return combos

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "structure": self.structure.to_dict(),
            "n": self.n,
            "m": self.m,
            "replications": self.replications,
            "strategies": [s.value for s in self.strategies],
            "estimator_kinds": [k.value for k in self.estimator_kinds],
        }


def rvr(var_base: float, var_new: float) -> float:
    """Relative variance reduction of a new estimator against a baseline."""
    if not var_base > 0:
        raise ZeroBaseVariance("baseline variance must be positive")
    return (var_base - var_new) / var_base


def _rvr_influence(x: np.ndarray, base: np.ndarray) -> np.ndarray:
    # Influence function of 1 - Var(x)/Var(base), evaluated per replication.
    ux = (x - x.mean()) ** 2
    u0 = (base - base.mean()) ** 2
    vx, v0 = ux.mean(), u0.mean()
    return -(ux - vx) / v0 + vx * (u0 - v0) / v0**2


def _standard_error(influence: np.ndarray) -> float:
    if influence.size < 2:
        return math.nan
    return float(np.std(influence, ddof=1) / math.sqrt(influence.size))


@dataclass(frozen=True)
class CombinationSummary:
    kind: Kind
    strategy: Strategy
    valid: int
    failed_replications: int
    mean: float
    variance: float
    std_error_mean: float
    quantiles: tuple
    rvr_vs_mc_mc: float
    rvr_std_error: float

    def to_dict(self) -> dict:
        q = self.quantiles
        return {
            "kind": self.kind.value,
            "strategy": self.strategy.value,
            "valid": self.valid,
            "failed_replications": self.failed_replications,
            "mean": self.mean,
            "variance": self.variance,
            "std_error_mean": self.std_error_mean,
            "min": q[0],
            "q1": q[1],
            "median": q[2],
            "q3": q[3],
            "max": q[4],
            "rvr_vs_mc_mc": self.rvr_vs_mc_mc,
            "rvr_std_error": self.rvr_std_error,
        }


TSV_COLUMNS = (
    "kind",
    "strategy",
    "valid",
    "failed_replications",
    "mean",
    "variance",
    "std_error_mean",
    "min",
    "q1",
    "median",
    "q3",
    "max",
    "rvr_vs_mc_mc",
    "rvr_std_error",
)


@dataclass
class ReplicationSummary:
    scenario: Scenario
    seed: int
    coefficient_mode: str
    combinations: list
    estimates: np.ndarray = field(repr=False)

    def get(self, kind, strategy) -> CombinationSummary:
        kind, strategy = Kind(kind), Strategy(strategy)
        for c in self.combinations:
            if c.kind is kind and c.strategy is strategy:
                return c
        raise KeyError(f"{kind.value}/{strategy.value} was not simulated")

    def _column(self, kind, strategy) -> np.ndarray:
        kind, strategy = Kind(kind), Strategy(strategy)
        for j, c in enumerate(self.combinations):
            if c.kind is kind and c.strategy is strategy:
                return self.estimates[:, j]
        raise KeyError(f"{kind.value}/{strategy.value} was not simulated")

    def rvr_gap(self, first: tuple, second: tuple) -> tuple:
        """``RVR(first) - RVR(second)`` and its Monte Carlo standard error.

        Both RVRs share the same replications, so the error accounts for their
        correlation.
        """
        x = self._column(*first)
        y = self._column(*second)
        base = self._column(Kind.MC_MC, Strategy.NONE)
        ok = np.isfinite(x) & np.isfinite(y) & np.isfinite(base)
        x, y, base = x[ok], y[ok], base[ok]
        v0 = base.var()
        gap = (y.var() - x.var()) / v0
        influence = _rvr_influence(x, base) - _rvr_influence(y, base)
        return float(gap), _standard_error(influence)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "seed": self.seed,
            "coefficient_mode": self.coefficient_mode,
            "combinations": [c.to_dict() for c in self.combinations],
        }

    def tsv_rows(self) -> list:
        return [c.to_dict() for c in self.combinations]


def _population_coefficients(scenario: Scenario) -> dict:
    moments = MomentSet.from_structure(scenario.structure)
    return {s: coef.compute(moments, s) for s in {s for _, s in scenario.combinations()}}


def replicate(scenario: Scenario, seed: int, index: int, combos: list, fixed_coefficients=None) -> np.ndarray:
    """Estimates of one replication, NaN where a combination failed."""
    rng = RngStream(seed, index)
    sample = sample_gaussian(scenario.structure, scenario.n, scenario.m, rng)
    mu = scenario.structure.mu
    known = (mu[1], mu[3])
    out = np.full(len(combos), np.nan)

    coeffs = fixed_coefficients
    if coeffs is None:
        coeffs = {}
        try:
            moments = estimate_moments(sample)
        except RatioCVError:
            moments = None
        for _, s in combos:
            if s in coeffs:
                continue
            if s is Strategy.NONE:
                coeffs[s] = coef.none()
            elif moments is None:
                coeffs[s] = None
            else:
                try:
                    coeffs[s] = coef.compute(moments, s)
                except RatioCVError:
                    coeffs[s] = None

    for j, (kind, strategy) in enumerate(combos):
        c = coeffs.get(strategy)
        if c is None:
            continue
        try:
            out[j] = ratio_estimate(sample, c, kind, known_means=known).value
        except RatioCVError:
            pass
    return out


def summarize_combination(kind, strategy, values: np.ndarray, base: np.ndarray) -> CombinationSummary:
    """Aggregate one column of estimates; NaN entries count as failures."""
    ok = np.isfinite(values)
    v = values[ok]
    if v.size == 0:
        raise AllReplicationsFailed(f"every replication failed for {kind.value}/{strategy.value}")
    variance = float(np.var(v, ddof=1)) if v.size > 1 else math.nan
    quantiles = tuple(float(q) for q in np.quantile(v, QUANTILE_LEVELS))

    joint = ok & np.isfinite(base)
    rvr_value = rvr_se = math.nan
    if joint.sum() > 1:
        x, b = values[joint], base[joint]
        var_b = float(np.var(b, ddof=1))
        if var_b > 0:
            rvr_value = rvr(var_b, float(np.var(x, ddof=1)))
            rvr_se = 0.0 if kind is Kind.MC_MC else _standard_error(_rvr_influence(x, b))
    return CombinationSummary(
        kind=kind,
        strategy=strategy,
        valid=int(v.size),
        failed_replications=int((~ok).sum()),
        mean=float(v.mean()),
        variance=variance,
        std_error_mean=math.sqrt(variance / v.size) if v.size > 1 else math.nan,
        quantiles=quantiles,
        rvr_vs_mc_mc=rvr_value,
        rvr_std_error=rvr_se,
    )


def run_chunked(total: int, threads: int, work) -> None:
    """Call ``work(i)`` for ``i in range(total)`` over contiguous chunks, one per worker.

    Each index owns its random stream and its output slot, so the result does
    not depend on the number of workers.
    """
    threads = max(1, int(threads))
    edges = np.linspace(0, total, min(threads, total) + 1).astype(int)
    chunks = list(zip(edges[:-1], edges[1:]))

    def run(bounds):
        for i in range(*bounds):
            work(i)

    if len(chunks) == 1:
        run(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(run, chunks))


def run_scenario(scenario: Scenario, seed: int, threads: int = 1, coefficient_mode: str = "plugin") -> ReplicationSummary:
    """Run every replication of a scenario and aggregate per (kind, strategy).

    Replication ``i`` draws from ``RngStream(seed, i)``. In ``plugin`` mode the
    coefficients are re-estimated from each replication's own sample; in
    ``population`` mode they come from the true structure. Results do not
    depend on ``threads``.
    """
    if coefficient_mode not in ("plugin", "population"):
        raise RatioCVError("coefficient_mode must be 'plugin' or 'population'")
    combos = scenario.combinations()
    fixed = _population_coefficients(scenario) if coefficient_mode == "population" else None
    reps = scenario.replications
    estimates = np.empty((reps, len(combos)))

    def work(i):
        estimates[i] = replicate(scenario, seed, i, combos, fixed)

    run_chunked(reps, threads, work)

    base = estimates[:, 0]
    summaries = [summarize_combination(k, s, estimates[:, j], base) for j, (k, s) in enumerate(combos)]
    return ReplicationSummary(
        scenario=scenario,
        seed=seed,
        coefficient_mode=coefficient_mode,
        combinations=summaries,
        estimates=estimates,
    )


def predicted_vs_empirical(scenario: Scenario, summary: ReplicationSummary) -> list:
    """Delta-method variance beside the replication variance for each combination.

    Predictions use the population moments and population coefficients.
    """
    moments = MomentSet.from_structure(scenario.structure)
    rows = []
    for c in summary.combinations:
        if c.kind is Kind.MC_MC:
            predicted = vm.var_mc_mc(moments, scenario.n)
        else:
            predicted = vm.variance_difference(
                moments, c.strategy, scenario.n, kind=c.kind, m=scenario.m
            ).var_estimator
        rows.append(
            {
                "kind": c.kind.value,
                "strategy": c.strategy.value,
                "predicted_variance": predicted,
                "empirical_variance": c.variance,
                "relative_gap": (c.variance - predicted) / predicted if predicted > 0 else math.nan,
            }
        )
    return rows
