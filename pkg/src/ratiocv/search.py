"""Differential-evolution search for extreme covariance scenarios.

Candidates are the six off-diagonal entries of a unit-diagonal covariance
matrix, in printed lower-triangle order (B,A), (C,A), (C,B), (D,A), (D,B),
(D,C). Non positive definite candidates score ``+inf``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import variance_model as vm
from .coefficients import Strategy
from .errors import InfeasibleSearch, NotPositiveDefinite, RatioCVError
from .numerics import CovarianceStructure, MomentSet, RngStream, cholesky
from .simulation import DEFAULT_MU

INFEASIBLE = math.inf
MAX_INIT_ATTEMPTS = 1000

# "bounce" redraws an out-of-range mutant coordinate uniformly between the base
# vector and the violated bound; "clip" projects it onto the bound.
BOUND_HANDLING = ("bounce", "clip")


class Objective(str, Enum):
    MAXIMIZE_REDUCTION = "maximize_reduction"
    MINIMIZE_REDUCTION = "minimize_reduction"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SearchProblem:
    objective: Objective = Objective.MAXIMIZE_REDUCTION
    strategy: Strategy = Strategy.OPTIMAL
    lower: float = -0.995
    upper: float = 0.995
    mu: tuple = DEFAULT_MU
    n: int = 100

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not -1 < self.lower < self.upper < 1:
            raise RatioCVError("bounds must satisfy -1 < lower < upper < 1")
        if self.strategy in (Strategy.NONE, Strategy.LINEAR_CV):
            raise RatioCVError(f"strategy {self.strategy.value} cannot be searched")

    @property
    def ratio(self) -> float:
        return self.mu[0] / self.mu[2]

    def to_dict(self) -> dict:
        return {
            "objective": self.objective.value,
            "strategy": self.strategy.value,
            "lower": self.lower,
            "upper": self.upper,
            "mu": list(self.mu),
            "n": self.n,
        }


@dataclass(frozen=True)
class DEConfig:
    population_size: int = 40
    weight_f: float = 0.7
    crossover_cr: float = 0.9
    generations: int = 200
    seed: int = 0
    bound_handling: str = "bounce"

    def __post_init__(self):
        if self.bound_handling not in BOUND_HANDLING:
            raise RatioCVError(f"bound_handling must be one of {', '.join(BOUND_HANDLING)}")
        if self.population_size < 4:
            raise RatioCVError("population_size must be at least 4")
        if not 0 < self.weight_f < 2:
            raise RatioCVError("weight_f must lie in (0, 2)")
        if not 0 <= self.crossover_cr <= 1:
            raise RatioCVError("crossover_cr must lie in [0, 1]")
        if self.generations < 0:
            raise RatioCVError("generations must be non-negative")

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "weight_f": self.weight_f,
            "crossover_cr": self.crossover_cr,
            "generations": self.generations,
            "seed": self.seed,
            "bound_handling": self.bound_handling,
        }


@dataclass
class SearchResult:
    candidate: np.ndarray
    objective: float
    trace: list
    problem: SearchProblem
    config: DEConfig
    evaluations: int = 0
    structure: CovarianceStructure = field(init=False)

    def __post_init__(self):
        self.structure = CovarianceStructure.from_lower(self.problem.mu, self.candidate)

    def to_dict(self) -> dict:
        return {
            "candidate": [float(v) for v in self.candidate],
            "matrix": self.structure.sigma.tolist(),
            "objective": self.objective,
            "trace": list(self.trace),
            "problem": self.problem.to_dict(),
            "config": self.config.to_dict(),
            "evaluations": self.evaluations,
        }


def objective_value(candidate, problem: SearchProblem) -> float:
    """Signed variance difference to minimize.

    For ``maximize_reduction`` this is Var(estimator) - Var(MC/MC), so the
    best reduction is the most negative value; ``minimize_reduction`` flips
    the sign so the search hunts for variance increases.
    """
    candidate = np.asarray(candidate, dtype=float)
    structure = CovarianceStructure.from_lower(problem.mu, candidate)
    try:
        cholesky(structure.sigma)
    except NotPositiveDefinite:
        return INFEASIBLE
    moments = MomentSet.from_structure(structure)
    try:
        diff = vm.variance_difference(moments, problem.strategy, problem.n).difference
    except RatioCVError:
        return INFEASIBLE
    if problem.objective is Objective.MINIMIZE_REDUCTION:
        diff = -diff
    return diff + 0.0


def _evaluate(population, problem, pool):
    if pool is None:
        return np.array([objective_value(x, problem) for x in population])
    return np.array(list(pool.map(lambda x: objective_value(x, problem), population)))


def _initial_population(problem, config, rng):
    dim = 6
    pop = np.empty((config.population_size, dim))
    scores = np.empty(config.population_size)
    for i in range(config.population_size):
        for _ in range(MAX_INIT_ATTEMPTS):
            x = rng.uniform(problem.lower, problem.upper, dim)
            score = objective_value(x, problem)
            if math.isfinite(score):
                break
        pop[i], scores[i] = x, score
    if not np.isfinite(scores).any():
        raise InfeasibleSearch("no positive definite candidate found for the initial population")
    return pop, scores


def _bounce(mutant, base, lower, upper, rng):
    u = rng.random(mutant.size)
    mutant = np.where(mutant < lower, base + u * (lower - base), mutant)
    return np.where(mutant > upper, base + u * (upper - base), mutant)


def differential_evolution(
    problem: SearchProblem,
    config: DEConfig = DEConfig(),
    initial_population=None,
    threads: int = 1,
) -> SearchResult:
    """DE/rand/1/bin with generational (synchronous) selection.

    Each generation builds one trial per member from three other distinct
    members, ``x_r1 + F * (x_r2 - x_r3)``, repairs coordinates that left the
    box (see ``DEConfig.bound_handling``), applies binomial crossover with at
    least one mutated coordinate, and keeps the trial only if it scores
    strictly better. ``trace[g]`` is the best score after
    generation ``g`` (``trace[0]`` is the initial population).
    """
    rng = RngStream(config.seed, 0).generator
    if initial_population is None:
        pop, scores = _initial_population(problem, config, rng)
    else:
        pop = np.clip(np.array(initial_population, dtype=float), problem.lower, problem.upper)
        if pop.shape != (config.population_size, 6):
            raise RatioCVError(f"initial population must have shape ({config.population_size}, 6)")
        scores = np.array([objective_value(x, problem) for x in pop])
    size, dim = pop.shape
    evaluations = size
    trace = [float(scores.min())]

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for _ in range(config.generations):
            trials = np.empty_like(pop)
            for i in range(size):
                others = [j for j in range(size) if j != i]
                r1, r2, r3 = rng.choice(others, 3, replace=False)
                mutant = pop[r1] + config.weight_f * (pop[r2] - pop[r3])
                if config.bound_handling == "bounce":
                    mutant = _bounce(mutant, pop[r1], problem.lower, problem.upper, rng)
                cross = rng.random(dim) < config.crossover_cr
                cross[rng.integers(dim)] = True
                trials[i] = np.clip(np.where(cross, mutant, pop[i]), problem.lower, problem.upper)
            trial_scores = _evaluate(trials, problem, pool)
            evaluations += size
            better = trial_scores < scores
            pop[better] = trials[better]
            scores[better] = trial_scores[better]
            trace.append(float(scores.min()))
    finally:
        if pool is not None:
            pool.shutdown()

    best = int(np.argmin(scores))
    return SearchResult(
        candidate=pop[best].copy(),
        objective=float(scores[best]),
        trace=trace,
        problem=problem,
        config=config,
        evaluations=evaluations,
    )
