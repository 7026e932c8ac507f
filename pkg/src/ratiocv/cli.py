"""Command-line entry point: ``ratiocv {simulate,analyze,search,apply,synth}``.

Exit codes: 0 success, 2 configuration or input error, 3 a covariance matrix
is not positive definite, 4 every replication of some combination failed.
Artifacts go to ``--out`` (stdout otherwise) and embed the resolved config,
the seed and the tool version. ``--from-config ARTIFACT`` reruns the recorded
config and reproduces the artifact byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from . import coefficients as coef
from . import mfmc_app
from . import search as de
from . import simulation as sim
from . import variance_model as vm
from .coefficients import Strategy
from .errors import AllReplicationsFailed, NotPositiveDefinite, RatioCVError
from .estimators import Kind
from .numerics import CovarianceStructure, MomentSet, cholesky

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_PD = 3
EXIT_ALL_FAILED = 4

COMMANDS = ("simulate", "analyze", "search", "apply", "synth")

_ANALYZE_COMBINATIONS = (
    (Kind.CV_MC, Strategy.CLASSICAL),
    (Kind.CV_MC, Strategy.NUMERATOR_ONLY),
    (Kind.CV_CV, Strategy.CLASSICAL),
    (Kind.CV_CV, Strategy.GORDON),
    (Kind.CV_CV, Strategy.OPTIMAL),
)
_LINEAR_BETAS = (-1.0, 0.0, 1.0, 7.0)


class ConfigError(RatioCVError):
    pass


# Serialization


def _plain(obj):
    """Recursively convert to JSON-ready values; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Strategy | Kind):
        return obj.value
    return obj


def dumps(obj) -> str:
    # json writes floats with repr, the shortest round-trip form.
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def format_tsv(rows: list, columns) -> str:
    def cell(v):
        if isinstance(v, float):
            return repr(v)
        return "" if v is None else str(v)

    lines = ["\t".join(columns)]
    lines += ["\t".join(cell(row.get(c)) for c in columns) for row in rows]
    return "\n".join(lines) + "\n"


def _emit(text: str, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _artifact(command: str, config: dict, result) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": config.get("seed"),
        "config": config,
        "result": result,
    }


# Argument helpers


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(part.strip()) for part in text.split(",") if part.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


def _floats(count):
    def parse(text):
        values = _csv_list(float)(text)
        if len(values) != count:
            raise argparse.ArgumentTypeError(f"expected {count} comma-separated numbers, got {len(values)}")
        return values

    return parse


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _load_structure(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or "mu" not in data or "sigma" not in data:
        raise ConfigError(f"--structure {path}: expected a JSON object with 'mu' and 'sigma'")
    return {"mu": data["mu"], "sigma": data["sigma"]}


def _structure_config(args) -> tuple:
    if args.structure:
        return "custom", _load_structure(args.structure)
    name = args.scenario or "best-case-optimal"
    return name, sim.builtin_structure(name).to_dict()


def _structure_from_config(config) -> CovarianceStructure:
    try:
        structure = CovarianceStructure.from_dict(config["structure"])
    except NotPositiveDefinite:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"structure: {exc}") from None
    cholesky(structure.sigma)
    return structure


def _read_embedded(path, command) -> dict:
    with open(path) as fh:
        text = fh.read()
    if text.startswith("# "):
        text = text.splitlines()[0][2:]
    try:
        artifact = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--from-config {path}: not a ratiocv artifact ({exc})") from None
    if artifact.get("command") != command:
        raise ConfigError(
            f"--from-config {path}: artifact was produced by {artifact.get('command')!r}, not {command!r}"
        )
    return artifact["config"]


# simulate


def config_simulate(args) -> dict:
    name, structure = _structure_config(args)
    return {
        "scenario": name,
        "structure": structure,
        "n": args.n,
        "m": args.m,
        "replications": args.reps,
        "strategies": [Strategy(s).value for s in args.strategies],
        "kinds": [Kind(k).value for k in args.kinds],
        "coefficients": args.coefficients,
        "seed": args.seed,
    }


def run_simulate(config: dict, threads: int = 1):
    scenario = sim.Scenario(
        name=config["scenario"],
        structure=_structure_from_config(config),
        n=config["n"],
        m=config["m"],
        replications=config["replications"],
        strategies=config["strategies"],
        estimator_kinds=config["kinds"],
    )
    summary = sim.run_scenario(scenario, config["seed"], threads=threads, coefficient_mode=config["coefficients"])
    result = {
        "combinations": [c.to_dict() for c in summary.combinations],
        "predicted": sim.predicted_vs_empirical(scenario, summary),
    }
    return result, summary.tsv_rows(), sim.TSV_COLUMNS


# analyze

ANALYZE_COLUMNS = (
    "kind",
    "strategy",
    "alpha",
    "beta",
    "var_mc_mc",
    "var_estimator",
    "difference",
    "rvr",
    "scaling",
    "reduction",
    "error",
)


def config_analyze(args) -> dict:
    name, structure = _structure_config(args)
    return {
        "scenario": name,
        "structure": structure,
        "n": args.n,
        "m": args.m,
        "linear_cv": args.linear_cv,
        "a": args.a,
        "b": args.b,
        "seed": None,
    }


def _analyze_rows(moments, n, m) -> list:
    combos = list(_ANALYZE_COMBINATIONS)
    if m is not None:
        combos += [(Kind.ACV_MC, s) for k, s in _ANALYZE_COMBINATIONS if k is Kind.CV_MC]
        combos += [(Kind.ACV_ACV, s) for k, s in _ANALYZE_COMBINATIONS if k is Kind.CV_CV]
    rows = []
    for kind, strategy in combos:
        row = {"kind": kind.value, "strategy": strategy.value}
        try:
            b = vm.variance_difference(moments, strategy, n, kind=kind, m=m or 0)
        except RatioCVError as exc:
            row["error"] = str(exc)
        else:
            row.update(b.to_dict())
            row["reduction"] = b.difference < 0
        rows.append(row)
    return rows


def _linear_cv_report(moments, n, a, b) -> dict:
    lin = vm.linear_controls_moments(moments, a)
    tau = vm.linear_cv_tau(lin)
    (lo1, hi1), (lo2, _) = vm.linear_cv_sufficient_interval(lin.var_d)
    difference = vm.linear_cv_variance_difference(lin, n)
    variances = {}
    for beta in _LINEAR_BETAS:
        c = coef.linear_cv(lin, a, b, beta)
        variances[repr(beta)] = {"alpha": c.alpha, "var_cv_cv": vm.var_cv_cv(lin, c.alpha, c.beta, n)}
    return {
        "a": a,
        "b": b,
        "tau": tau,
        "var_d": lin.var_d,
        "interval": [[lo1, hi1], [lo2, None]],
        "in_interval": vm.in_sufficient_interval(tau, lin.var_d),
        "difference": difference,
        "var_mc_mc": vm.var_mc_mc(lin, n),
        "reduction": vm.linear_cv_reduction_predicate(lin),
        "minimizers": variances,
    }


def run_analyze(config: dict, threads: int = 1):
    structure = _structure_from_config(config)
    moments = MomentSet.from_structure(structure)
    n, m = config["n"], config["m"]
    rows = _analyze_rows(moments, n, m)
    ok = [r for r in rows if "difference" in r]
    best = min(ok, key=lambda r: r["difference"]) if ok else None
    result = {
        "var_mc_mc": vm.var_mc_mc(moments, n),
        "rows": rows,
        "most_negative": None if best is None else {"kind": best["kind"], "strategy": best["strategy"]},
    }
    if config["linear_cv"]:
        result["linear_cv"] = _linear_cv_report(moments, n, config["a"], config["b"])
    return result, rows, ANALYZE_COLUMNS


# search


def _objective(text: str) -> de.Objective:
    aliases = {"maximize": de.Objective.MAXIMIZE_REDUCTION, "minimize": de.Objective.MINIMIZE_REDUCTION}
    if text in aliases:
        return aliases[text]
    try:
        return de.Objective(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown objective {text!r}") from None


def config_search(args) -> dict:
    return {
        "objective": args.objective.value,
        "strategy": Strategy(args.strategy).value,
        "lower": args.lower,
        "upper": args.upper,
        "n": args.n,
        "mu": list(sim.DEFAULT_MU),
        "population_size": args.population,
        "weight_f": args.weight_f,
        "crossover_cr": args.crossover,
        "generations": args.generations,
        "bound_handling": args.bound_handling,
        "seed": args.seed,
    }


def run_search(config: dict, threads: int = 1):
    problem = de.SearchProblem(
        objective=config["objective"],
        strategy=config["strategy"],
        lower=config["lower"],
        upper=config["upper"],
        mu=tuple(config["mu"]),
        n=config["n"],
    )
    de_config = de.DEConfig(
        population_size=config["population_size"],
        weight_f=config["weight_f"],
        crossover_cr=config["crossover_cr"],
        generations=config["generations"],
        seed=config["seed"],
        bound_handling=config["bound_handling"],
    )
    found = de.differential_evolution(problem, de_config, threads=threads)
    result = found.to_dict()
    result["builtin_objectives"] = {
        name: de.objective_value(lower, problem) for name, lower in sim.BUILTIN_LOWER.items()
    }
    return result, None, None


# apply


def config_apply(args) -> dict:
    return {
        "file": args.file,
        "schema": mfmc_app.ColumnSchema(args.col_a, args.col_b, args.col_c, args.col_d).to_dict(),
        "delimiter": args.delimiter,
        "n": args.n,
        "configurations": args.configs,
        "strategies": [Strategy(s).value for s in args.strategies],
        "replace": args.replace,
        "allow_full": args.allow_full,
        "seed": args.seed,
    }


def run_apply(config: dict, threads: int = 1):
    schema = mfmc_app.ColumnSchema(**config["schema"])
    dataset = mfmc_app.load_dataset(config["file"], schema, config["delimiter"])
    report = mfmc_app.bootstrap_experiment(
        dataset,
        n=config["n"],
        configurations=config["configurations"],
        seed=config["seed"],
        strategies=config["strategies"],
        replace=config["replace"],
        allow_full=config["allow_full"],
        threads=threads,
    )
    return report.to_dict(), report.tsv_rows(), sim.TSV_COLUMNS


# synth


def config_synth(args) -> dict:
    if args.aircraft_corr and args.corr is not None:
        raise ConfigError("--aircraft-corr and --corr are mutually exclusive")
    lower = list(mfmc_app.AIRCRAFT_CORRELATION_LOWER) if args.corr is None else args.corr
    return {
        "correlation_lower": lower,
        "means": args.means,
        "scales": args.scales,
        "rows": args.rows,
        "schema": mfmc_app.ColumnSchema(args.col_a, args.col_b, args.col_c, args.col_d).to_dict(),
        "delimiter": args.delimiter or ",",
        "seed": args.seed,
    }


def run_synth_text(config: dict) -> str:
    corr = CovarianceStructure.from_lower((1.0, 1.0, 1.0, 1.0), config["correlation_lower"]).sigma
    dataset = mfmc_app.synthesize_dataset(corr, config["means"], config["scales"], config["rows"], config["seed"])
    header = json.dumps(_plain(_artifact("synth", config, None)), sort_keys=True, allow_nan=False)
    schema = mfmc_app.ColumnSchema(**config["schema"])
    return mfmc_app.format_dataset(dataset, schema, config["delimiter"], comment=header)


_CONFIG_BUILDERS = {
    "simulate": config_simulate,
    "analyze": config_analyze,
    "search": config_search,
    "apply": config_apply,
    "synth": config_synth,
}
_RUNNERS = {
    "simulate": run_simulate,
    "analyze": run_analyze,
    "search": run_search,
    "apply": run_apply,
}


# Parser


def _add_common(p, tsv=True, threads=True):
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", help="write the artifact here instead of stdout")
    if tsv:
        p.add_argument("--tsv", help="also write a tab-separated summary here")
    if threads:
        p.add_argument("--threads", type=_positive_int, default=1, help="worker threads; results do not depend on it")
    p.add_argument("--from-config", metavar="ARTIFACT", help="rerun the config embedded in an earlier artifact")


def _add_structure(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--scenario", choices=sorted(sim.BUILTIN_LOWER), help="built-in covariance scenario")
    g.add_argument("--structure", help="JSON file with {mu: [4], sigma: [[4x4]]}")
    p.add_argument("--n", type=_positive_int, default=100, help="paired sample size")


def _add_schema(p):
    defaults = mfmc_app.ColumnSchema()
    p.add_argument("--col-a", default=defaults.a, help="HF numerator column")
    p.add_argument("--col-b", default=defaults.b, help="LF numerator column")
    p.add_argument("--col-c", default=defaults.c, help="HF denominator column")
    p.add_argument("--col-d", default=defaults.d, help="LF denominator column")
    p.add_argument("--delimiter", choices=[",", ";", "\t", "tab"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratiocv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo replications on a Gaussian scenario")
    _add_structure(p)
    p.add_argument("--m", type=int, default=0, help="extra control rows for the ACV kinds")
    p.add_argument("--reps", type=_positive_int, default=10_000, help="replications")
    p.add_argument(
        "--strategies",
        type=_csv_list(Strategy),
        default=list(sim.DEFAULT_STRATEGIES),
        help="comma-separated coefficient strategies",
    )
    p.add_argument(
        "--kinds", type=_csv_list(Kind), default=list(sim.DEFAULT_KINDS), help="comma-separated estimator kinds"
    )
    p.add_argument(
        "--coefficients",
        choices=("plugin", "population"),
        default="plugin",
        help="estimate coefficients per replication or use the population values",
    )
    _add_common(p)

    p = sub.add_parser("analyze", help="closed-form delta-method variances, no sampling")
    _add_structure(p)
    p.add_argument("--m", type=int, default=None, help="extra control rows; adds the ACV kinds")
    p.add_argument("--linear-cv", action="store_true", help="also report the linearly related controls case")
    p.add_argument("--a", type=float, default=2.0, help="slope in B = a*D + b")
    p.add_argument("--b", type=float, default=3.0, help="offset in B = a*D + b")
    _add_common(p, threads=False)

    p = sub.add_parser("search", help="differential evolution over unit-diagonal covariances")
    p.add_argument("--objective", type=_objective, default=de.Objective.MAXIMIZE_REDUCTION,
                   help="maximize or minimize the variance reduction")
    p.add_argument("--strategy", type=Strategy, default=Strategy.OPTIMAL)
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--lower", type=float, default=-0.995)
    p.add_argument("--upper", type=float, default=0.995)
    p.add_argument("--population", type=_positive_int, default=40)
    p.add_argument("--weight-f", type=float, default=0.7)
    p.add_argument("--crossover", type=float, default=0.9)
    p.add_argument("--generations", type=int, default=200)
    p.add_argument("--bound-handling", choices=de.BOUND_HANDLING, default="bounce")
    _add_common(p, tsv=False)

    p = sub.add_parser("apply", help="bootstrap study on a paired multi-fidelity dataset")
    p.add_argument("--file", help="delimited text file with a header row")
    p.add_argument("--n", type=_positive_int, default=200, help="paired rows per configuration")
    p.add_argument("--configs", type=_positive_int, default=1000, help="bootstrap configurations")
    p.add_argument(
        "--strategies",
        type=_csv_list(Strategy),
        default=[Strategy.CLASSICAL, Strategy.NUMERATOR_ONLY, Strategy.GORDON, Strategy.OPTIMAL],
    )
    p.add_argument("--replace", action="store_true", help="draw paired rows with replacement")
    p.add_argument("--allow-full", action="store_true", help="accept n equal to the row count (m = 0)")
    _add_schema(p)
    _add_common(p)

    p = sub.add_parser("synth", help="write a Gaussian stand-in dataset")
    p.add_argument("--aircraft-corr", "--paper-corr", action="store_true", help="use the aircraft-design correlation matrix (default)")
    p.add_argument("--corr", type=_floats(6), default=None, help="lower-triangle correlations (ab,ac,bc,ad,bd,cd)")
    p.add_argument("--means", type=_floats(4), default=list(mfmc_app.SYNTH_MEANS))
    p.add_argument("--scales", type=_floats(4), default=list(mfmc_app.SYNTH_SCALES))
    p.add_argument("--rows", type=_positive_int, default=1252)
    _add_schema(p)
    _add_common(p, tsv=False, threads=False)
    return parser


def _execute(args) -> None:
    command = args.command
    if getattr(args, "delimiter", None) == "tab":
        args.delimiter = "\t"
    if args.from_config:
        config = _read_embedded(args.from_config, command)
    else:
        if command == "apply" and not args.file:
            raise ConfigError("--file is required")
        config = _CONFIG_BUILDERS[command](args)

    if command == "synth":
        _emit(run_synth_text(config), args.out)
        return
    result, rows, columns = _RUNNERS[command](config, threads=getattr(args, "threads", 1))
    _emit(dumps(_artifact(command, config, result)), args.out)
    if getattr(args, "tsv", None) and rows is not None:
        _emit(format_tsv(rows, columns), args.tsv)
    if args.out:
        print(f"ratiocv {command}: wrote {args.out}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _execute(args)
    except NotPositiveDefinite as exc:
        print(f"ratiocv {args.command}: {exc} (failing leading minor: {exc.minor})", file=sys.stderr)
        return EXIT_NOT_PD
    except AllReplicationsFailed as exc:
        print(f"ratiocv {args.command}: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"ratiocv {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
