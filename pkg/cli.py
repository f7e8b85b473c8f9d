"""
Batch Command Line Front-End
Parses JSON experiment configs, dispatches the simulate / kde / dependence /
clt / lemma-check / clt-conditions / bias subcommands and writes
deterministic CSV and JSON outputs with provenance headers
"""

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from chains import FiniteReversibleChain, chain_from_spec, simulate_path
from clt_harness import NormalityThresholds, check_clt_conditions, run_clt_experiment, run_lemma_suite
from config import SETTINGS, TOOL_NAME, TOOL_VERSION, configure_logging
from dependence import (
    check_alpha_summability,
    check_eta_decay_condition,
    dependence_profile,
    eta_decay_bound,
    get_slowly_varying,
)
from estimator import (
    BandwidthSchedule,
    CenteringMode,
    RegimeMode,
    bias_second_order,
    bias_sweep,
    centering_vector,
    expected_kde,
    kde_evaluate,
    numerical_second_derivative,
    require_bandwidth_regime,
    studentized_statistic,
)
from kernels import get_kernel
from numerics import RngStream
from schema import SUBCOMMAND_SCHEMAS, validate_config

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_GATE_FAIL = 2

# Keys that never change results; kept out of the echoed and hashed config
EXECUTION_KEYS = ("out", "workers")


class ConfigError(ValueError):
    """Config file missing, unparsable or invalid"""


@dataclass
class ExperimentConfig:
    """A validated config plus execution settings"""
    subcommand: str
    values: Dict[str, Any]
    workers: int = 1
    out_dir: Path = Path("results")

    @property
    def echo(self) -> Dict[str, Any]:
        return {k: v for k, v in self.values.items() if k not in EXECUTION_KEYS}

    @property
    def seed(self) -> int:
        return int(self.values.get("seed", 0))


@dataclass
class RunOutcome:
    """Gate verdict, written files and a one-line summary"""
    passed: bool
    files: List[Path] = field(default_factory=list)
    summary: str = ""


def parse_int_range(value) -> List[int]:
    """'1..30' or a list of ints"""
    if isinstance(value, str):
        low, high = (int(part) for part in value.split(".."))
        if high < low:
            raise ConfigError(f"empty range {value!r}")
        return list(range(low, high + 1))
    return [int(v) for v in value]


def parse_number_list(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def parse_int_list(text: str) -> List[int]:
    return [int(float(part)) for part in text.split(",") if part.strip()]


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}") from exc


# config key -> (flag, argparse type, help)
OVERRIDE_FLAGS: Dict[str, tuple] = {
    "chain": ("--chain", _json_arg, "chain spec as JSON, e.g. '{\"kind\": \"ar1\", \"rho\": 0.5}'"),
    "kernel": ("--kernel", str, "kernel name"),
    "n": ("--n", int, "path length"),
    "points": ("--points", parse_number_list, "comma-separated points (use --points=-1,0,1)"),
    "lags": ("--lags", str, "lag range, e.g. 1..30"),
    "slowly_varying": ("--l", str, "slowly varying function: log | iterated_log | ramp"),
    "tail_model": ("--tail-model", str, "geometric | polynomial | auto"),
    "replicates": ("--replicates", int, "Monte Carlo replicates"),
    "centering_mode": ("--centering-mode", str, "exact_expectation | true_density | zero"),
    "mode": ("--mode", str, "bandwidth regime: theorem1 | corollary"),
    "chains": ("--chains", int, "number of random chains"),
    "states": ("--states", str, "state-count range, e.g. 2..12"),
    "max_lag": ("--max-lag", int, "largest lag"),
    "functions": ("--functions", int, "random centered functions per chain"),
    "n_grid": ("--n-grid", parse_int_list, "comma-separated sample sizes"),
    "weights": ("--weights", parse_number_list, "comma-separated point weights"),
    "bandwidths": ("--bandwidths", parse_number_list, "comma-separated bandwidths"),
    "point": ("--point", float, "evaluation point"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--seed", type=int, help="root seed (overrides config)")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--out", help="output directory")
    common.add_argument("--log-level", default=None, help="DEBUG | INFO | WARNING | ERROR")

    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="KDE for reversible Markov chains")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name, entry in SUBCOMMAND_SCHEMAS.items():
        sub = subparsers.add_parser(name, parents=[common])
        keys = entry["required"] + entry["optional"]
        for key in keys:
            if key in OVERRIDE_FLAGS:
                flag, kind, help_text = OVERRIDE_FLAGS[key]
                sub.add_argument(flag, dest=f"override_{key}", type=kind, help=help_text)
        if "schedule" in keys:
            sub.add_argument("--c", dest="override_c", type=float, help="bandwidth constant c")
            sub.add_argument("--beta", dest="override_beta", type=float, help="bandwidth exponent beta")
    return parser


def load_config(path: Optional[Path]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def apply_overrides(config: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    """Flags win over file values"""
    merged = dict(config)
    for name, value in vars(args).items():
        if not name.startswith("override_") or value is None:
            continue
        key = name[len("override_"):]
        if key in ("c", "beta"):
            schedule = dict(merged.get("schedule", {}))
            schedule[key] = value
            merged["schedule"] = schedule
        else:
            merged[key] = value
    if args.seed is not None:
        merged["seed"] = args.seed
    if args.workers is not None:
        merged["workers"] = args.workers
    if args.out is not None:
        merged["out"] = args.out
    return merged


def prepare_config(subcommand: str, raw: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate and package a merged config

    Raises:
        ConfigError: field-level schema violations
    """
    validation = validate_config(subcommand, raw)
    if not validation["valid"]:
        raise ConfigError("invalid config: " + "; ".join(validation["errors"]))
    values = validation["cleaned_data"]
    return ExperimentConfig(
        subcommand=subcommand,
        values=values,
        workers=int(values.get("workers", SETTINGS.workers)),
        out_dir=Path(values.get("out", SETTINGS.out_dir)),
    )


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(config.echo).encode("utf-8")).hexdigest()


def output_header(config: ExperimentConfig) -> Dict[str, Any]:
    return {
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "subcommand": config.subcommand,
        "config_sha256": config_hash(config),
        "seed": config.seed,
        "config": config.echo,
    }


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in sorted(value.items(), key=lambda item: str(item[0]))}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(payload: Dict[str, Any], path: Path, config: ExperimentConfig) -> Path:
    # header block first, every other key sorted
    document = {"header": _jsonable(output_header(config)), **_jsonable(payload)}
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(document, handle, indent=2, ensure_ascii=False, allow_nan=False)
        handle.write("\n")
    logger.info(f"💾 Wrote {path}")
    return path


def write_csv(frame: pd.DataFrame, path: Path, config: ExperimentConfig) -> Path:
    header = output_header(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"# tool: {header['tool']} {header['version']}\n")
        handle.write(f"# subcommand: {header['subcommand']}\n")
        handle.write(f"# config_sha256: {header['config_sha256']}\n")
        handle.write(f"# seed: {header['seed']}\n")
        handle.write(f"# config: {canonical_json(_jsonable(header['config']))}\n")
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n")
    logger.info(f"💾 Wrote {path}")
    return path


def _chain_with_density(values: Dict[str, Any], purpose: str):
    chain = chain_from_spec(values["chain"])
    if isinstance(chain, FiniteReversibleChain):
        raise ConfigError(f"chain: {purpose} needs a chain with a closed-form marginal density (ar1 or metropolis)")
    return chain


def _second_derivative(chain) -> Callable[[float], float]:
    exact = getattr(chain, "density_second_derivative", None)
    if exact is not None:
        return lambda x: float(exact(x))
    return lambda x: numerical_second_derivative(chain.marginal_density, x)


def _run_simulate(config: ExperimentConfig) -> RunOutcome:
    values = config.values
    chain = chain_from_spec(values["chain"])
    path = simulate_path(chain, int(values["n"]), RngStream(config.seed, 0))
    frame = pd.DataFrame({"index": np.arange(1, path.size + 1), "x": path})
    written = write_csv(frame, config.out_dir / "path.csv", config)
    return RunOutcome(passed=True, files=[written], summary=f"simulated {path.size} states")


def _run_kde(config: ExperimentConfig) -> RunOutcome:
    values = config.values
    chain = _chain_with_density(values, "kde")
    kernel = get_kernel(values["kernel"])
    centering_mode = CenteringMode(values["centering_mode"])
    schedule = BandwidthSchedule(**values["schedule"])
    default_mode = RegimeMode.COROLLARY if centering_mode is CenteringMode.TRUE_DENSITY else RegimeMode.THEOREM1
    require_bandwidth_regime(schedule, values.get("mode", default_mode))

    n = int(values["n"])
    bandwidth = schedule.bandwidth(n)
    points = np.asarray(values["points"], dtype=float)
    path = simulate_path(chain, n, RngStream(config.seed, 0))
    estimate = kde_evaluate(path, kernel, bandwidth, points)
    density = chain.marginal_density
    expected = np.array([expected_kde(density, kernel, bandwidth, float(x)) for x in points])
    f2 = _second_derivative(chain)
    bias_oracle = np.array([bias_second_order(f2(float(x)), bandwidth) for x in points])
    centering = centering_vector(centering_mode, density, kernel, bandwidth, points)
    stat = studentized_statistic(estimate, centering, kernel, centering_mode)
    frame = pd.DataFrame({"point": points, "fhat": estimate.values, "expected": expected,
                          "bias_oracle": bias_oracle, "studentized": stat.values})
    written = write_csv(frame, config.out_dir / "kde.csv", config)
    return RunOutcome(passed=True, files=[written], summary=f"kde at {points.size} points, b={bandwidth:.6g}")


def _run_dependence(config: ExperimentConfig) -> RunOutcome:
    values = config.values
    chain = chain_from_spec(values["chain"])
    lags = parse_int_range(values["lags"])
    spec = get_slowly_varying(values["slowly_varying"])
    profile = dependence_profile(chain, lags)
    decay = check_eta_decay_condition(profile, spec)
    frame = profile.to_frame().drop(columns=["provenance"])
    frame["bound_1_over_k4l"] = eta_decay_bound(profile.lags, spec)
    frame["pass"] = decay.pointwise
    payload: Dict[str, Any] = {
        "decay": {"passed": decay.passed, "first_violation": decay.first_violation,
                  "passes_from_lag": decay.passes_from_lag, "slowly_varying": spec.name},
        "summability": None,
    }
    if profile.has_alpha:
        summability = check_alpha_summability(profile, values["tail_model"])
        payload["summability"] = {"verdict": summability.verdict, "partial_sum": summability.partial_sum,
                                  "model": summability.model, "geometric_rate": summability.geometric_rate,
                                  "polynomial_exponent": summability.polynomial_exponent}
    files = [write_csv(frame, config.out_dir / "dependence.csv", config),
             write_json(payload, config.out_dir / "dependence_report.json", config)]
    summary = ("η decay condition holds at every lag" if decay.passed
               else f"η decay condition first fails at lag {decay.first_violation}")
    return RunOutcome(passed=decay.passed, files=files, summary=summary)


def _run_clt(config: ExperimentConfig) -> RunOutcome:
    values = config.values
    chain = _chain_with_density(values, "clt")
    kernel = get_kernel(values["kernel"])
    thresholds = NormalityThresholds(**values.get("thresholds", {}))
    report = run_clt_experiment(
        chain, kernel, values["points"], int(values["n"]), BandwidthSchedule(**values["schedule"]),
        int(values["replicates"]), config.seed, centering_mode=values["centering_mode"],
        workers=config.workers, thresholds=thresholds,
    )
    samples = pd.DataFrame(report.samples, columns=[f"x{j}" for j in range(report.samples.shape[1])])
    samples.insert(0, "replicate", np.arange(1, report.samples.shape[0] + 1))
    files = [write_json(report.to_dict(), config.out_dir / "clt_report.json", config),
             write_csv(samples, config.out_dir / "clt_samples.csv", config)]
    flags = report.summary.flags if report.summary is not None else {}
    return RunOutcome(passed=report.passed, files=files, summary=f"normality gates {flags}")


def _run_lemma_check(config: ExperimentConfig) -> RunOutcome:
    values = config.values
    states = parse_int_range(values["states"])
    report = run_lemma_suite(n_chains=int(values["chains"]), states=(min(states), max(states)),
                             n_functions=int(values["functions"]), max_lag=int(values["max_lag"]),
                             seed=config.seed)
    written = write_json(report.to_dict(), config.out_dir / "lemma_report.json", config)
    return RunOutcome(passed=report.passed, files=[written],
                      summary=f"{report.checked} chain/function pairs, {len(report.failures)} failures")


def _run_clt_conditions(config: ExperimentConfig) -> RunOutcome:
    values = config.values
    chain = chain_from_spec(values["chain"])
    points = values["points"]
    weights = values.get("weights", [1.0] * len(points))
    sweep = check_clt_conditions(chain, get_kernel(values["kernel"]), points, weights,
                                 values["n_grid"], BandwidthSchedule(**values["schedule"]))
    frame = pd.DataFrame({
        "n": [r.n for r in sweep.reports],
        "bandwidth": [r.bandwidth for r in sweep.reports],
        "second_moment": [r.second_moment for r in sweep.reports],
        "target": [r.target for r in sweep.reports],
        "neglcov": sweep.neglcov_trend,
        "secondcond": sweep.secondcond_trend,
        "truncated_at": [r.truncated_at if r.truncated_at is not None else r.n for r in sweep.reports],
        "truncation_error": [r.truncation_error for r in sweep.reports],
    })
    written = write_csv(frame, config.out_dir / "clt_conditions.csv", config)
    verdict = "decay" if sweep.decaying else "do not decay"
    return RunOutcome(passed=sweep.decaying, files=[written], summary=f"condition sums {verdict} along the n grid")


def _run_bias(config: ExperimentConfig) -> RunOutcome:
    values = config.values
    chain = _chain_with_density(values, "bias")
    kernel = get_kernel(values["kernel"])
    point = float(values["point"])
    sweep = bias_sweep(chain.marginal_density, _second_derivative(chain)(point), kernel, point,
                       values["bandwidths"])
    frame = pd.DataFrame({"bandwidth": sweep.bandwidths, "expected": sweep.expected, "bias": sweep.bias,
                          "oracle": sweep.oracle, "ratio": sweep.ratio})
    smallest = int(np.argmin(sweep.bandwidths))
    gates = {
        "ratio_monotone": sweep.ratio_monotone(),
        "ratio_within_10pct": bool(abs(sweep.ratio[smallest] - 1.0) <= 0.1),
        "slope_near_2": bool(abs(sweep.loglog_slope - 2.0) <= 0.1),
    }
    payload = {"loglog_slope": sweep.loglog_slope, "gates": gates}
    files = [write_csv(frame, config.out_dir / "bias.csv", config),
             write_json(payload, config.out_dir / "bias_report.json", config)]
    return RunOutcome(passed=all(gates.values()), files=files,
                      summary=f"log-log slope {sweep.loglog_slope:.4f}, gates {gates}")


DISPATCH: Dict[str, Callable[[ExperimentConfig], RunOutcome]] = {
    "simulate": _run_simulate,
    "kde": _run_kde,
    "dependence": _run_dependence,
    "clt": _run_clt,
    "lemma-check": _run_lemma_check,
    "clt-conditions": _run_clt_conditions,
    "bias": _run_bias,
}


def run_config(config: ExperimentConfig) -> RunOutcome:
    """Dispatch a validated config to its subcommand"""
    logger.info(f"🚀 {config.subcommand} (seed {config.seed}, config {config_hash(config)[:12]})")
    return DISPATCH[config.subcommand](config)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point

    Returns:
        0 when every gate passes, 2 when a gate fails, 1 on any error
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    subcommand = args.subcommand
    try:
        merged = apply_overrides(load_config(args.config), args)
        outcome = run_config(prepare_config(subcommand, merged))
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"❌ {subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if outcome.passed:
        print(f"✅ {subcommand}: pass: {outcome.summary}", file=sys.stderr)
        return EXIT_PASS
    print(f"⚠️ {subcommand}: gate failed: {outcome.summary}", file=sys.stderr)
    return EXIT_GATE_FAIL


if __name__ == "__main__":
    sys.exit(main())
