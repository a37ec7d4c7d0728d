"""Config-driven experiment runner and command line entry point.

Subcommands:

* ``run <config.yaml>``: execute a sampling experiment and write metrics,
  final samples, the energy-call record, a summary, and a manifest that
  itself loads as a valid config.
* ``enumerate <config.yaml>``: write the exact distribution of the config's
  model as a CSV sorted by descending probability.
* ``ablation <config.yaml> --param eta --grid 0.01,0.1,1,4``: re-run the
  experiment across a grid of one sampler parameter and tabulate the
  outcomes.

Config schema (YAML):

    model:
      kind: bernoulli4d | ising | tsp | binary_mlp
      # ising: side, coupling, field
      # tsp: instance (eil14) or path to a TSPLIB EUC_2D file
      # binary_mlp: hidden, levels, data: {kind: synthetic, num_points,
      #   in_dim, noise, seed} or {kind: csv, path}
    sampler:
      kind: hiss | hiss_gk | hiss_nomh | dmala | gwg | pt_dmala
      step_size, eta, sweeps, refinements, gaussian_sigma2, gaussian_alpha
      pt: {num_temps, swap_interval, beta_min}   # pt_dmala only
    run:
      chains, samples, seed, out_dir, workers
      metrics: subset of [tvd, log_mae, coverage, acceptance]

All run outputs except timings.csv are byte-for-byte reproducible from the
config: the wall_time_s column in metrics.csv is logical time, cumulative
metered energy calls divided by a fixed reference rate of 1e6 calls per
second. Measured wall-clock durations go to timings.csv only.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from .diagnostics import (
    ExactDistribution,
    metric_series,
    predicted_energy_calls,
    tour_diversity,
)
from .domain import MAX_ENUMERABLE_STATES, EnergyModel
from .models import (
    AntidiagonalIsingModel,
    TspModel,
    bernoulli4d,
    binary_mlp,
    load_regression_csv,
)
from .samplers import (
    ChainTrace,
    PTConfig,
    SamplerConfig,
    SAMPLER_NAMES,
    chain_seed,
    run_chain,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunResult",
    "load_config",
    "build_model",
    "run_experiment",
    "enumerate_experiment",
    "ablation_experiment",
    "main",
]

#: Reference rate converting metered energy calls to logical seconds.
CALLS_PER_LOGICAL_SECOND = 1.0e6

VALID_METRICS = ("tvd", "log_mae", "coverage", "acceptance")
EXACT_METRICS = ("tvd", "log_mae", "coverage")

MODEL_KINDS = ("bernoulli4d", "ising", "tsp", "binary_mlp")


class ConfigError(Exception):
    """A configuration file or override cannot be used as given."""


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.0.0+unknown"


def _require_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment description."""

    model: dict
    sampler_name: str
    sampler: SamplerConfig
    pt: PTConfig | None
    chains: int
    samples: int
    seed: int
    out_dir: str
    metrics: tuple
    workers: int

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        _require_keys(data, {"model", "sampler", "run"}, "config root")
        for key in ("model", "sampler", "run"):
            if key not in data or not isinstance(data[key], dict):
                raise ConfigError(f"config needs a {key!r} mapping section")

        model = dict(data["model"])
        kind = model.get("kind")
        if kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {MODEL_KINDS}, got {kind!r}")
        _validate_model_section(model)

        sampler_raw = dict(data["sampler"])
        name = sampler_raw.pop("kind", None)
        if name not in SAMPLER_NAMES:
            raise ConfigError(
                f"sampler.kind must be one of {SAMPLER_NAMES}, got {name!r}"
            )
        pt_raw = sampler_raw.pop("pt", None)
        _require_keys(
            sampler_raw,
            {"step_size", "eta", "sweeps", "refinements", "gaussian_sigma2", "gaussian_alpha"},
            "sampler section",
        )
        try:
            sampler = SamplerConfig(**sampler_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad sampler section: {exc}") from exc

        pt = None
        if name == "pt_dmala":
            pt_raw = pt_raw or {}
            _require_keys(pt_raw, {"num_temps", "swap_interval", "beta_min"}, "sampler.pt")
            try:
                pt = PTConfig(**pt_raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad sampler.pt section: {exc}") from exc
        elif pt_raw is not None:
            raise ConfigError("sampler.pt is only valid with sampler.kind = pt_dmala")

        run = dict(data["run"])
        _require_keys(
            run, {"chains", "samples", "seed", "out_dir", "metrics", "workers"}, "run section"
        )
        chains = int(run.get("chains", 1))
        samples = int(run.get("samples", 1000))
        seed = int(run.get("seed", 0))
        workers = int(run.get("workers", 1))
        if chains < 1 or samples < 1 or workers < 1:
            raise ConfigError("run.chains, run.samples and run.workers must be >= 1")
        out_dir = str(run.get("out_dir", f"runs/{kind}_{name}"))
        metrics = run.get("metrics")
        if metrics is None:
            metrics = list(VALID_METRICS) if _enumerable(model) else ["acceptance"]
        if isinstance(metrics, str):
            metrics = [metrics]
        bad = set(metrics) - set(VALID_METRICS)
        if bad:
            raise ConfigError(f"unknown metrics {sorted(bad)}; valid: {VALID_METRICS}")
        if not metrics:
            raise ConfigError("run.metrics must not be empty")
        if any(m in EXACT_METRICS for m in metrics) and not _enumerable(model):
            raise ConfigError(
                "metrics tvd/log_mae/coverage need an enumerable model; "
                f"{kind!r} with these parameters is too large"
            )

        return cls(
            model=model,
            sampler_name=name,
            sampler=sampler,
            pt=pt,
            chains=chains,
            samples=samples,
            seed=seed,
            out_dir=out_dir,
            metrics=tuple(metrics),
            workers=workers,
        )

    def to_dict(self) -> dict:
        sampler = {
            "kind": self.sampler_name,
            "step_size": self.sampler.step_size,
            "eta": self.sampler.eta,
            "sweeps": self.sampler.sweeps,
            "refinements": self.sampler.refinements,
            "gaussian_sigma2": self.sampler.gaussian_sigma2,
            "gaussian_alpha": self.sampler.gaussian_alpha,
        }
        if self.pt is not None:
            sampler["pt"] = {
                "num_temps": self.pt.num_temps,
                "swap_interval": self.pt.swap_interval,
                "beta_min": self.pt.beta_min,
            }
        return {
            "model": dict(self.model),
            "sampler": sampler,
            "run": {
                "chains": self.chains,
                "samples": self.samples,
                "seed": self.seed,
                "out_dir": self.out_dir,
                "metrics": list(self.metrics),
                "workers": self.workers,
            },
        }


def _validate_model_section(model: dict) -> None:
    kind = model["kind"]
    if kind == "bernoulli4d":
        _require_keys(model, {"kind"}, "model section")
    elif kind == "ising":
        _require_keys(model, {"kind", "side", "coupling", "field"}, "model section")
    elif kind == "tsp":
        _require_keys(model, {"kind", "instance", "path"}, "model section")
        if ("instance" in model) == ("path" in model):
            raise ConfigError("tsp model needs exactly one of 'instance' or 'path'")
        if model.get("instance") not in (None, "eil14"):
            raise ConfigError(f"unknown tsp instance {model['instance']!r}")
    elif kind == "binary_mlp":
        _require_keys(model, {"kind", "hidden", "levels", "data"}, "model section")
        data = model.get("data", {"kind": "synthetic"})
        if not isinstance(data, dict) or data.get("kind") not in ("synthetic", "csv"):
            raise ConfigError("binary_mlp data.kind must be 'synthetic' or 'csv'")
        if data["kind"] == "synthetic":
            _require_keys(
                data, {"kind", "num_points", "in_dim", "noise", "seed"}, "model.data"
            )
        else:
            _require_keys(data, {"kind", "path"}, "model.data")
            if "path" not in data:
                raise ConfigError("binary_mlp csv data needs a 'path'")


def _num_coordinates(model: dict) -> int:
    kind = model["kind"]
    if kind == "bernoulli4d":
        return 4
    if kind == "ising":
        side = int(model.get("side", 3))
        return side * side
    if kind == "tsp":
        return 0  # unknown without reading the file; never enumerable anyway
    hidden = int(model.get("hidden", 10))
    data = model.get("data", {}) or {}
    in_dim = int(data.get("in_dim", 4))
    return hidden * in_dim + hidden


def _enumerable(model: dict) -> bool:
    if model["kind"] == "tsp":
        return False
    return 2 ** _num_coordinates(model) <= MAX_ENUMERABLE_STATES


def build_model(model: dict) -> EnergyModel:
    """Construct a fresh model instance from a validated model section."""
    kind = model["kind"]
    if kind == "bernoulli4d":
        return bernoulli4d()
    if kind == "ising":
        return AntidiagonalIsingModel(
            side=int(model.get("side", 3)),
            coupling=float(model.get("coupling", 0.5)),
            field=float(model.get("field", 0.1)),
        )
    if kind == "tsp":
        if "instance" in model:
            return TspModel.eil14()
        return TspModel.from_tsplib(model["path"])
    data = model.get("data", {"kind": "synthetic"}) or {"kind": "synthetic"}
    hidden = int(model.get("hidden", 10))
    levels = tuple(model.get("levels", (-1.0, 1.0)))
    if data.get("kind", "synthetic") == "synthetic":
        return binary_mlp(
            hidden=hidden,
            levels=levels,
            num_points=int(data.get("num_points", 32)),
            in_dim=int(data.get("in_dim", 4)),
            noise=float(data.get("noise", 0.1)),
            seed=int(data.get("seed", 7)),
        )
    inputs, targets = load_regression_csv(data["path"])
    return binary_mlp(inputs=inputs, targets=targets, hidden=hidden, levels=levels)


def load_config(path) -> ExperimentConfig:
    """Read a YAML config (or a manifest, whose version tag is ignored)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if isinstance(data, dict):
        data.pop("artifact_version", None)
    return ExperimentConfig.from_dict(data)


# --------------------------------------------------------------------------
# experiment runner

@dataclass
class RunResult:
    """Everything a run produced, for callers that stay in process."""

    config: ExperimentConfig
    out_dir: Path
    traces: list
    exact: ExactDistribution | None
    series: list
    summary: dict
    model: EnergyModel


def _acceptance_series(trace: ChainTrace) -> np.ndarray:
    kind = trace.primary_acceptance_kind
    return np.cumsum(trace.accept_counts[kind]) / np.cumsum(trace.proposal_counts[kind])


def _fmt(value) -> str:
    return repr(float(value))


def run_experiment(config: ExperimentConfig, echo=print) -> RunResult:
    """Execute a config end to end and write its output files."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    exact = None
    if any(m in EXACT_METRICS for m in config.metrics):
        exact = ExactDistribution.from_model(build_model(config.model))

    def one_chain(k: int) -> ChainTrace:
        model = build_model(config.model)
        trace = run_chain(
            model,
            config.sampler_name,
            config.sampler,
            config.samples,
            chain_seed(config.seed, k),
            chain_id=k,
            pt_config=config.pt,
        )
        return trace

    started = time.perf_counter()
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            traces = list(pool.map(one_chain, range(config.chains)))
    else:
        traces = [one_chain(k) for k in range(config.chains)]
    for trace in traces:
        echo(
            f"chain {trace.chain_id}: {config.samples} samples, "
            f"acceptance {trace.acceptance_rate(trace.primary_acceptance_kind):.4f}, "
            f"{trace.energy_calls[-1]} energy calls, {trace.wall_time_s:.2f}s"
        )

    series = []
    for trace in traces:
        chain_series = {}
        exact_wanted = [m for m in config.metrics if m in EXACT_METRICS]
        if exact_wanted:
            chain_series.update(metric_series(trace.samples, exact, exact_wanted))
        if "acceptance" in config.metrics:
            chain_series["acceptance"] = _acceptance_series(trace)
        series.append(chain_series)

    model = build_model(config.model)
    summary = _summarize(config, traces, series, model)
    _write_outputs(config, out_dir, traces, series, summary, model)
    echo(f"total wall time {time.perf_counter() - started:.2f}s")
    echo(f"outputs in {out_dir}")
    return RunResult(
        config=config,
        out_dir=out_dir,
        traces=traces,
        exact=exact,
        series=series,
        summary=summary,
        model=model,
    )


def _summarize(config, traces, series, model) -> dict:
    per_chain = []
    for trace, chain_series in zip(traces, series):
        entry = {"chain_id": trace.chain_id}
        for name, values in chain_series.items():
            entry[f"final_{name}"] = float(values[-1])
        entry["acceptance"] = trace.acceptance_rate(trace.primary_acceptance_kind)
        entry["energy_calls"] = int(trace.energy_calls[-1])
        if isinstance(model, TspModel):
            costs = np.array([model.tour_length(model.tour_of(s)) for s in trace.samples])
            entry["best_cost"] = float(costs.min())
            entry["final_cost"] = float(costs[-1])
        per_chain.append(entry)

    aggregate = {}
    for key in per_chain[0]:
        if key == "chain_id":
            continue
        values = np.array([entry[key] for entry in per_chain], dtype=np.float64)
        aggregate[f"{key}_mean"] = float(values.mean())
        if len(values) > 1:
            aggregate[f"{key}_sd"] = float(values.std(ddof=1))

    measured = int(sum(trace.energy_calls[-1] for trace in traces))
    predicted = predicted_energy_calls(
        config.sampler_name, config.chains, config.samples, config.sampler, config.pt
    )
    nfe = {"measured": measured, "predicted": predicted, "match": measured == predicted}

    diversity = None
    if isinstance(model, TspModel):
        best_tours = []
        for trace in traces:
            costs = np.array([model.tour_length(model.tour_of(s)) for s in trace.samples])
            best_tours.append(model.tour_of(trace.samples[int(np.argmin(costs))]))
        diversity = tour_diversity(best_tours, model)

    return {"per_chain": per_chain, "aggregate": aggregate, "nfe": nfe, "diversity": diversity}


def _write_outputs(config, out_dir, traces, series, summary, model) -> None:
    with open(out_dir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "wall_time_s", "metric", "value", "chain_id"])
        for trace, chain_series in zip(traces, series):
            logical = trace.energy_calls / CALLS_PER_LOGICAL_SECOND
            for t in range(config.samples):
                for name in config.metrics:
                    writer.writerow(
                        [t + 1, _fmt(logical[t]), name, _fmt(chain_series[name][t]), trace.chain_id]
                    )

    d = traces[0].samples.shape[1]
    with open(out_dir / "final_samples.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chain_id"] + [f"x{i}" for i in range(d)])
        for trace in traces:
            writer.writerow([trace.chain_id] + [_fmt(v) for v in trace.samples[-1]])

    with open(out_dir / "nfe.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "value"])
        for trace in traces:
            writer.writerow([f"chain_{trace.chain_id}_calls", int(trace.energy_calls[-1])])
        writer.writerow(["measured_total", summary["nfe"]["measured"]])
        writer.writerow(["predicted_total", summary["nfe"]["predicted"]])
        writer.writerow(["match", str(summary["nfe"]["match"]).lower()])

    with open(out_dir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chain_id", "metric", "value"])
        for entry in summary["per_chain"]:
            for key, value in entry.items():
                if key != "chain_id":
                    writer.writerow([entry["chain_id"], key, _fmt(value)])
        for key, value in summary["aggregate"].items():
            writer.writerow(["all", key, _fmt(value)])
        if summary["diversity"] is not None:
            for key, value in summary["diversity"].items():
                writer.writerow(["all", f"diversity_{key}", _fmt(value)])

    # measured durations; the one file that is not reproducible byte for byte
    with open(out_dir / "timings.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chain_id", "wall_time_s"])
        for trace in traces:
            writer.writerow([trace.chain_id, f"{trace.wall_time_s:.6f}"])

    manifest = {"artifact_version": _version(), **config.to_dict()}
    with open(out_dir / "manifest.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)


# --------------------------------------------------------------------------
# enumerate and ablation

def _state_label(exact: ExactDistribution, row: int) -> str:
    indices = exact.domain.level_indices(exact.states[row])
    joiner = "" if exact.domain.num_levels <= 10 else "-"
    return joiner.join(str(int(i)) for i in indices)


def enumerate_experiment(config: ExperimentConfig, echo=print) -> Path:
    """Write the model's exact distribution, most probable state first."""
    if not _enumerable(config.model):
        raise ConfigError(
            f"model {config.model['kind']!r} is too large to enumerate"
        )
    exact = ExactDistribution.from_model(build_model(config.model))
    order = np.argsort(-exact.probs, kind="stable")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "exact_distribution.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["state", "probability"])
        for row in order:
            writer.writerow([_state_label(exact, int(row)), _fmt(exact.probs[row])])
    echo(f"wrote {exact.num_states} states to {path}")
    return path


ABLATION_PARAMS = {
    "eta": float,
    "step_size": float,
    "sweeps": int,
    "refinements": int,
}


def ablation_experiment(config: ExperimentConfig, param: str, grid, echo=print) -> list:
    """Re-run the config over a one-parameter grid and tabulate outcomes.

    Each grid value runs in its own subdirectory of the config's out_dir;
    the table lands in out_dir/ablation_summary.csv.
    """
    if param not in ABLATION_PARAMS:
        raise ConfigError(
            f"ablation parameter must be one of {sorted(ABLATION_PARAMS)}, got {param!r}"
        )
    needed = {"log_mae", "coverage", "acceptance"}
    if not needed.issubset(config.metrics):
        raise ConfigError(f"ablation needs metrics {sorted(needed)} in the config")
    cast = ABLATION_PARAMS[param]
    rows = []
    base_out = Path(config.out_dir)
    for value in grid:
        try:
            value = cast(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"grid value {value!r} is not a valid {cast.__name__} for {param}"
            ) from exc
        sub = replace(
            config,
            sampler=replace(config.sampler, **{param: value}),
            out_dir=str(base_out / f"{param}_{value:g}"),
        )
        echo(f"[ablation] {param} = {value:g}")
        result = run_experiment(sub, echo=echo)
        finals = result.summary["aggregate"]
        rows.append(
            {
                "param": param,
                "value": value,
                "final_log_mae_mean": finals["final_log_mae_mean"],
                "final_log_mae_sd": finals.get("final_log_mae_sd", 0.0),
                "acceptance_mean": finals["acceptance_mean"],
                "final_coverage_mean": finals["final_coverage_mean"],
            }
        )
    base_out.mkdir(parents=True, exist_ok=True)
    with open(base_out / "ablation_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(rows[0].keys()))
        for row in rows:
            writer.writerow(
                [row["param"]] + [_fmt(v) if isinstance(v, float) else v for v in list(row.values())[1:]]
            )
    echo(f"ablation table in {base_out / 'ablation_summary.csv'}")
    return rows


# --------------------------------------------------------------------------
# command line

def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        updates["out_dir"] = args.out_dir
    if getattr(args, "workers", None) is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        updates["workers"] = args.workers
    return replace(config, **updates) if updates else config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiss",
        description="Gradient-informed MCMC benchmarks on discrete spaces.",
    )
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="YAML experiment config")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out-dir", help="override run.out_dir")
        p.add_argument("--workers", type=int, help="override run.workers")

    run_p = sub.add_parser("run", help="execute a sampling experiment")
    add_common(run_p)

    enum_p = sub.add_parser("enumerate", help="write the exact distribution")
    enum_p.add_argument("config", help="YAML experiment config")
    enum_p.add_argument("--out-dir", help="override run.out_dir")

    abl_p = sub.add_parser("ablation", help="sweep one sampler parameter")
    add_common(abl_p)
    abl_p.add_argument("--param", required=True, help="sampler parameter to sweep")
    abl_p.add_argument("--grid", required=True, help="comma-separated values")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _apply_overrides(load_config(args.config), args)
        if args.command == "run":
            run_experiment(config)
        elif args.command == "enumerate":
            enumerate_experiment(config)
        else:
            grid = [token for token in args.grid.split(",") if token.strip()]
            if not grid:
                raise ConfigError("--grid must list at least one value")
            ablation_experiment(config, args.param, grid)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
