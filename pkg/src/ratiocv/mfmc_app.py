"""Bootstrap study of the ratio estimators on paired multi-fidelity data.

Columns map to the estimator variables as follows: A is the high-fidelity
numerator, B the low-fidelity numerator, C the high-fidelity denominator and
D the low-fidelity denominator. A strut-mass fraction, for instance, uses the
strut mass for A and B and the total mass for C and D.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import coefficients as coef
from .coefficients import Strategy
from .errors import (
    InsufficientRows,
    MissingColumn,
    NonFiniteValue,
    ParseFailure,
    RatioCVError,
)
from .estimators import Kind, ratio_estimate
from .numerics import JointSample, RngStream, cholesky, correlation_matrix, estimate_moments
from .simulation import CombinationSummary, run_chunked, summarize_combination

MIN_ROWS = 4
DELIMITERS = (",", ";", "\t")

# Lower triangle in the order (B,A), (C,A), (C,B), (D,A), (D,B), (D,C).
AIRCRAFT_CORRELATION_LOWER = (0.51, 0.77, 0.4, 0.83, 0.78, 0.74)

# Stand-in magnitudes. The RVR of every strategy is unchanged by rescaling a
# single variable, so only the ratio of the coefficients of variation of A and
# C matters; these give CV(A)/CV(C) = 1.3.
SYNTH_MEANS = (1500.0, 1400.0, 70000.0, 68000.0)
SYNTH_SCALES = (390.0, 400.0, 14000.0, 13500.0)

APPLICATION_COMBINATIONS = (
    (Kind.MC_MC, Strategy.NONE),
    (Kind.ACV_MC, Strategy.CLASSICAL),
    (Kind.ACV_MC, Strategy.NUMERATOR_ONLY),
    (Kind.ACV_ACV, Strategy.CLASSICAL),
    (Kind.ACV_ACV, Strategy.GORDON),
    (Kind.ACV_ACV, Strategy.OPTIMAL),
)


def aircraft_correlation() -> np.ndarray:
    corr = np.eye(4)
    pairs = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))
    for (i, j), v in zip(pairs, AIRCRAFT_CORRELATION_LOWER):
        corr[i, j] = corr[j, i] = v
    return corr


@dataclass(frozen=True)
class ColumnSchema:
    a: str = "hf_strut_mass"
    b: str = "lf_strut_mass"
    c: str = "hf_total_mass"
    d: str = "lf_total_mass"

    @property
    def names(self) -> tuple:
        return (self.a, self.b, self.c, self.d)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d}


@dataclass(frozen=True)
class FidelityDataset:
    """Rows of (A, B, C, D) = (HF numerator, LF numerator, HF denominator, LF denominator)."""

    values: np.ndarray
    source_path: str = "<memory>"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != 4:
            raise RatioCVError("dataset values must have shape (rows, 4)")
        if values.shape[0] < MIN_ROWS:
            raise InsufficientRows(f"need at least {MIN_ROWS} rows, got {values.shape[0]}")
        if not np.isfinite(values).all():
            row, col = np.argwhere(~np.isfinite(values))[0]
            raise NonFiniteValue(int(row) + 1, "abcd"[col])
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def row_count(self) -> int:
        return self.values.shape[0]

    def moments(self):
        return estimate_moments(JointSample(self.values))

    def correlation(self) -> np.ndarray:
        return correlation_matrix(self.moments())


def _detect_delimiter(header: str) -> str:
    counts = {d: header.count(d) for d in DELIMITERS}
    best = max(DELIMITERS, key=lambda d: counts[d])
    return best if counts[best] else ","


def _data_lines(handle):
    # Leading '#' lines carry provenance and are skipped; line numbers are kept.
    for lineno, line in enumerate(handle, start=1):
        if line.startswith("#") or not line.strip():
            continue
        yield lineno, line


def load_dataset(path, schema: ColumnSchema = ColumnSchema(), delimiter: str | None = None) -> FidelityDataset:
    """Read a delimited text file with a header row.

    Columns are picked by name through ``schema``, so their order in the file
    does not matter. The delimiter is detected from the header among comma,
    semicolon and tab unless given. Reported row numbers are file line
    numbers.
    """
    path = str(path)
    with open(path, newline="") as fh:
        lines = list(_data_lines(fh))
    if not lines:
        raise InsufficientRows(f"{path} has no header row")
    if delimiter is None:
        delimiter = _detect_delimiter(lines[0][1])
    records = list(csv.reader((line for _, line in lines), delimiter=delimiter))
    header = [h.strip() for h in records[0]]
    missing = [name for name in schema.names if name not in header]
    if missing:
        raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}; header has {header}")
    positions = [header.index(name) for name in schema.names]

    rows = []
    for (lineno, _), record in zip(lines[1:], records[1:]):
        row = []
        for name, pos in zip(schema.names, positions):
            cell = record[pos].strip() if pos < len(record) else ""
            try:
                value = float(cell)
            except ValueError:
                raise ParseFailure(lineno, name, cell) from None
            if not math.isfinite(value):
                raise NonFiniteValue(lineno, name)
            row.append(value)
        rows.append(row)
    if len(rows) < MIN_ROWS:
        raise InsufficientRows(f"{path}: need at least {MIN_ROWS} data rows, got {len(rows)}")
    return FidelityDataset(np.array(rows), source_path=path)


def synthesize_dataset(
    correlation=None,
    means=SYNTH_MEANS,
    scales=SYNTH_SCALES,
    rows: int = 1252,
    seed: int = 0,
) -> FidelityDataset:
    """Gaussian rows with the given correlation, means and standard deviations.

    ``correlation`` defaults to the aircraft-design matrix.
    """
    corr = aircraft_correlation() if correlation is None else np.asarray(correlation, dtype=float)
    means = np.asarray(means, dtype=float)
    scales = np.asarray(scales, dtype=float)
    if corr.shape != (4, 4) or means.shape != (4,) or scales.shape != (4,):
        raise RatioCVError("need a 4x4 correlation and 4 means and 4 scales")
    if not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
        raise RatioCVError("correlation must be symmetric with unit diagonal")
    if np.any(scales <= 0):
        raise RatioCVError("scales must be positive")
    if rows < MIN_ROWS:
        raise InsufficientRows(f"need at least {MIN_ROWS} rows, got {rows}")
    L = cholesky(corr * np.outer(scales, scales))
    z = RngStream(seed, 0).standard_normal((rows, 4))
    return FidelityDataset(means + z @ L.T, source_path="<synthetic>")


def format_dataset(dataset: FidelityDataset, schema: ColumnSchema = ColumnSchema(), delimiter: str = ",", comment: str | None = None) -> str:
    """Text form of a dataset, floats in shortest round-trip form."""
    lines = []
    if comment is not None:
        lines.append("# " + comment)
    lines.append(delimiter.join(schema.names))
    for row in dataset.values:
        lines.append(delimiter.join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_dataset(dataset: FidelityDataset, path, schema: ColumnSchema = ColumnSchema(), delimiter: str = ",", comment: str | None = None):
    with open(path, "w", newline="") as fh:
        fh.write(format_dataset(dataset, schema, delimiter, comment))


@dataclass
class BootstrapReport:
    n: int
    m: int
    configurations: int
    seed: int
    replace: bool
    source_path: str
    row_count: int
    correlation: np.ndarray
    reference_ratio: float
    combinations: list
    estimates: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)

    @property
    def variance_defined(self) -> bool:
        return self.configurations > 1

    def get(self, kind, strategy) -> CombinationSummary:
        kind, strategy = Kind(kind), Strategy(strategy)
        for c in self.combinations:
            if c.kind is kind and c.strategy is strategy:
                return c
        raise KeyError(f"{kind.value}/{strategy.value} was not evaluated")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "configurations": self.configurations,
            "seed": self.seed,
            "replace": self.replace,
            "source_path": self.source_path,
            "row_count": self.row_count,
            "correlation": self.correlation.tolist(),
            "reference_ratio": self.reference_ratio,
            "variance_defined": self.variance_defined,
            "combinations": [c.to_dict() for c in self.combinations],
        }

    def tsv_rows(self) -> list:
        return [c.to_dict() for c in self.combinations]


def _combinations(strategies) -> list:
    if strategies is None:
        return list(APPLICATION_COMBINATIONS)
    wanted = {Strategy(s) for s in strategies}
    return [(k, s) for k, s in APPLICATION_COMBINATIONS if s is Strategy.NONE or s in wanted]


def configuration_indices(row_count: int, n: int, seed: int, index: int, replace: bool = False) -> np.ndarray:
    """Paired row indices of one bootstrap configuration."""
    rng = RngStream(seed, index).generator
    return rng.choice(row_count, size=n, replace=replace)


def _evaluate_configuration(values, idx, combos, replace, full_lf_means):
    paired = values[idx]
    if replace:
        # Duplicated rows leave no clean complement, so the full-data LF means
        # play the role of the (n+m)-row means directly.
        sample = JointSample(paired)
        known = full_lf_means
        as_cv = {Kind.ACV_MC: Kind.CV_MC, Kind.ACV_ACV: Kind.CV_CV}
    else:
        mask = np.ones(values.shape[0], dtype=bool)
        mask[idx] = False
        sample = JointSample(paired, values[mask][:, [1, 3]])
        known = None
        as_cv = {}

    out = np.full(len(combos), np.nan)
    try:
        moments = estimate_moments(JointSample(paired))
    except RatioCVError:
        moments = None
    for j, (kind, strategy) in enumerate(combos):
        try:
            if strategy is Strategy.NONE:
                coeffs = coef.none()
            elif moments is None:
                continue
            else:
                coeffs = coef.compute(moments, strategy)
            out[j] = ratio_estimate(sample, coeffs, as_cv.get(kind, kind), known_means=known).value
        except RatioCVError:
            pass
    return out


def bootstrap_experiment(
    dataset: FidelityDataset,
    n: int,
    configurations: int = 1000,
    seed: int = 0,
    strategies=None,
    replace: bool = False,
    allow_full: bool = False,
    threads: int = 1,
) -> BootstrapReport:
    """Compare coefficient strategies over random paired subsets of a dataset.

    Configuration ``c`` draws ``n`` row indices from ``RngStream(seed, c)``,
    without replacement by default. Those rows are the paired HF/LF set and
    supply the plug-in coefficients; the low-fidelity means use every row.
    ``n`` must be below the row count unless ``allow_full`` is set, in which
    case ``m = 0`` and every ACV estimator reduces to MC/MC.
    """
    rows = dataset.row_count
    if configurations < 1:
        raise RatioCVError("configurations must be at least 1")
    if n < 2:
        raise InsufficientRows("n must be at least 2 to estimate coefficients")
    if n > rows or (n == rows and not allow_full):
        raise InsufficientRows(
            f"n = {n} leaves no extra rows out of {rows}; pass allow_full to accept m = 0"
        )
    combos = _combinations(strategies)
    values = dataset.values
    full_lf_means = (float(values[:, 1].mean()), float(values[:, 3].mean()))

    estimates = np.empty((configurations, len(combos)))
    indices = np.empty((configurations, n), dtype=np.int64)

    def work(c):
        idx = configuration_indices(rows, n, seed, c, replace)
        indices[c] = idx
        estimates[c] = _evaluate_configuration(values, idx, combos, replace, full_lf_means)

    run_chunked(configurations, threads, work)

    base = estimates[:, 0]
    summaries = [summarize_combination(k, s, estimates[:, j], base) for j, (k, s) in enumerate(combos)]
    return BootstrapReport(
        n=n,
        m=rows - n,
        configurations=configurations,
        seed=seed,
        replace=replace,
        source_path=dataset.source_path,
        row_count=rows,
        correlation=dataset.correlation(),
        reference_ratio=float(values[:, 0].mean() / values[:, 2].mean()),
        combinations=summaries,
        estimates=estimates,
        indices=indices,
    )
