"""Declarative experiment runner.

Experiments are YAML documents (JSON works too) with the following keys::

    experiment: sc-toy-demo          # optional name, used in the summary
    problem:
      name: sc_toy                   # sc_toy | mean_quadratic | quadratic_tasks | synthetic_two_task
      seed: 0                        # generation seed for the problem data
      params: {}                     # per-problem size parameters
    variants:                        # one entry per algorithm configuration
      - name: stimulus               # mgd | smgd | stimulus | stimulus_m | stimulus_plus | stimulus_m_plus
        label: stimulus              # optional; must be unique, names the CSVs
        T: 2000                      # iterations (required)
        eta: 0.005                   # learning rate (required)
        alpha: 0.3                   # momentum coefficient; required for _m variants
        q: 32                        # inner-loop length; default ceil(sqrt(n))
        batch_size: 32               # recursive batch |A|; default ceil(sqrt(n))
        c_gamma: 32.0                # adaptive-batch constants (plus variants)
        c_eps: 32.0
        epsilon: 1.0e-3              # target accuracy for adaptive batching / early stop
        sigma2: null                 # gradient-variance bound; default metadata or pilot
        ifo_mode: paper              # paper | strict recursive-step accounting
        grad_noise: 0.0              # std of Gaussian noise injected into estimates
        early_stop: false
    seeds: [0, 1, 2]                 # run seeds; each variant runs once per seed
    metric_cadence: null             # stationarity every k iterations; default auto
    stationarity_threshold: null     # level for iterations-to-threshold summaries
    output_dir: runs/sc-toy-demo     # default runs/<experiment>

One CSV is written per (variant, seed) plus one ``summary.json`` per
experiment. Within a seed every variant starts from the same x0. Exit
codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .optimizers import MOMENTUM_VARIANTS, VARIANTS, OptimizerConfig, run
from .problems import BUILTIN_NAMES, make_builtin
from .records import emit_csv

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "config_to_yaml", "run_experiment", "main"]


class ConfigError(ValueError):
    """A config document violated the documented key set or constraints."""


_VARIANT_KEYS = {
    "name": None,
    "label": None,
    "T": None,
    "eta": None,
    "alpha": None,
    "q": None,
    "batch_size": None,
    "c_gamma": 32.0,
    "c_eps": 32.0,
    "epsilon": 1e-3,
    "sigma2": None,
    "ifo_mode": "paper",
    "grad_noise": 0.0,
    "early_stop": False,
}

_TOP_KEYS = (
    "experiment",
    "problem",
    "variants",
    "seeds",
    "output_dir",
    "metric_cadence",
    "stationarity_threshold",
)


@dataclass
class ExperimentConfig:
    experiment: str
    problem_name: str
    problem_seed: int
    problem_params: dict
    variants: list[dict]
    seeds: list[int]
    output_dir: str | None = None
    metric_cadence: int | None = None
    stationarity_threshold: float | None = None


def _require(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)


def _as_int(value, key: str) -> int:
    _require(
        isinstance(value, int) and not isinstance(value, bool),
        f"key {key!r} must be an integer, got {value!r}",
    )
    return int(value)


def _as_number(value, key: str) -> float:
    _require(
        isinstance(value, (int, float)) and not isinstance(value, bool),
        f"key {key!r} must be a number, got {value!r}",
    )
    return float(value)


def _parse_variant(entry, index: int, n: int) -> dict:
    _require(isinstance(entry, dict), f"variants[{index}] must be a mapping")
    unknown = set(entry) - set(_VARIANT_KEYS)
    _require(not unknown, f"unknown variant key(s) {sorted(unknown)} in variants[{index}]")
    name = entry.get("name")
    _require(name in VARIANTS, f"variants[{index}].name must be one of {VARIANTS}, got {name!r}")
    _require("T" in entry, f"variants[{index}] is missing required key 'T'")
    _require("eta" in entry, f"variants[{index}] is missing required key 'eta'")

    vcfg = dict(_VARIANT_KEYS)
    vcfg.update(entry)
    vcfg["T"] = _as_int(vcfg["T"], "T")
    _require(vcfg["T"] >= 0, "key 'T' must be >= 0")
    vcfg["eta"] = _as_number(vcfg["eta"], "eta")
    _require(vcfg["eta"] > 0, "key 'eta' must be positive")

    if name in MOMENTUM_VARIANTS:
        _require(vcfg["alpha"] is not None, f"variant {name!r} requires key 'alpha'")
    if vcfg["alpha"] is not None:
        vcfg["alpha"] = _as_number(vcfg["alpha"], "alpha")
        _require(0.0 <= vcfg["alpha"] < 1.0, "key 'alpha' must lie in [0, 1)")

    root = math.ceil(math.sqrt(n))
    vcfg["q"] = root if vcfg["q"] is None else _as_int(vcfg["q"], "q")
    _require(vcfg["q"] >= 1, "key 'q' must be >= 1")
    vcfg["batch_size"] = (
        root if vcfg["batch_size"] is None else _as_int(vcfg["batch_size"], "batch_size")
    )
    _require(
        1 <= vcfg["batch_size"] <= n,
        f"key 'batch_size' must lie in [1, {n}], got {vcfg['batch_size']}",
    )

    for key in ("c_gamma", "c_eps", "epsilon", "grad_noise"):
        vcfg[key] = _as_number(vcfg[key], key)
    _require(vcfg["c_gamma"] > 0, "key 'c_gamma' must be positive")
    _require(vcfg["c_eps"] > 0, "key 'c_eps' must be positive")
    _require(vcfg["epsilon"] > 0, "key 'epsilon' must be positive")
    _require(vcfg["grad_noise"] >= 0, "key 'grad_noise' must be non-negative")
    if vcfg["sigma2"] is not None:
        vcfg["sigma2"] = _as_number(vcfg["sigma2"], "sigma2")
        _require(vcfg["sigma2"] >= 0, "key 'sigma2' must be non-negative")
    _require(
        vcfg["ifo_mode"] in ("paper", "strict"),
        f"key 'ifo_mode' must be 'paper' or 'strict', got {vcfg['ifo_mode']!r}",
    )
    _require(isinstance(vcfg["early_stop"], bool), "key 'early_stop' must be a boolean")
    if vcfg["label"] is None:
        vcfg["label"] = name
    _require(isinstance(vcfg["label"], str) and vcfg["label"], "key 'label' must be a non-empty string")
    return vcfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document, applying all defaults.

    Builds the problem once to learn n, so the q = batch_size =
    ceil(sqrt(n)) defaults are resolved here and echoed back by
    ``config_to_yaml``.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    _require(isinstance(doc, dict), "config document must be a mapping")
    unknown = set(doc) - set(_TOP_KEYS)
    _require(not unknown, f"unknown top-level key(s): {sorted(unknown)}")

    problem_block = doc.get("problem")
    _require(isinstance(problem_block, dict), "key 'problem' must be a mapping")
    unknown = set(problem_block) - {"name", "seed", "params"}
    _require(not unknown, f"unknown problem key(s): {sorted(unknown)}")
    problem_name = problem_block.get("name")
    _require(
        problem_name in BUILTIN_NAMES,
        f"problem.name must be one of {BUILTIN_NAMES}, got {problem_name!r}",
    )
    problem_seed = _as_int(problem_block.get("seed", 0), "problem.seed")
    _require(problem_seed >= 0, "key 'problem.seed' must be >= 0")
    problem_params = problem_block.get("params") or {}
    _require(isinstance(problem_params, dict), "key 'problem.params' must be a mapping")
    try:
        problem = make_builtin(problem_name, problem_seed, problem_params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    n = problem.metadata.n

    raw_variants = doc.get("variants")
    _require(
        isinstance(raw_variants, list) and raw_variants,
        "key 'variants' must be a non-empty list",
    )
    variants = [_parse_variant(v, i, n) for i, v in enumerate(raw_variants)]
    labels = [v["label"] for v in variants]
    _require(len(set(labels)) == len(labels), f"variant labels must be unique, got {labels}")

    seeds = doc.get("seeds")
    _require(isinstance(seeds, list) and seeds, "key 'seeds' must be a non-empty list")
    seeds = [_as_int(s, "seeds") for s in seeds]
    _require(all(s >= 0 for s in seeds), "key 'seeds' entries must be >= 0")
    _require(len(set(seeds)) == len(seeds), "key 'seeds' entries must be distinct")

    cadence = doc.get("metric_cadence")
    if cadence is not None:
        cadence = _as_int(cadence, "metric_cadence")
        _require(cadence >= 1, "key 'metric_cadence' must be >= 1")
    threshold = doc.get("stationarity_threshold")
    if threshold is not None:
        threshold = _as_number(threshold, "stationarity_threshold")
        _require(threshold > 0, "key 'stationarity_threshold' must be positive")
    output_dir = doc.get("output_dir")
    if output_dir is not None:
        _require(isinstance(output_dir, str) and output_dir, "key 'output_dir' must be a non-empty string")

    experiment = doc.get("experiment", problem_name)
    _require(isinstance(experiment, str) and experiment, "key 'experiment' must be a non-empty string")

    return ExperimentConfig(
        experiment=experiment,
        problem_name=problem_name,
        problem_seed=problem_seed,
        problem_params=dict(problem_params),
        variants=variants,
        seeds=seeds,
        output_dir=output_dir,
        metric_cadence=cadence,
        stationarity_threshold=threshold,
    )


def config_to_yaml(cfg: ExperimentConfig) -> str:
    """Normalized echo of a parsed config; parse(echo(cfg)) == cfg."""
    doc = {
        "experiment": cfg.experiment,
        "problem": {
            "name": cfg.problem_name,
            "seed": cfg.problem_seed,
            "params": cfg.problem_params,
        },
        "variants": cfg.variants,
        "seeds": cfg.seeds,
        "output_dir": cfg.output_dir,
        "metric_cadence": cfg.metric_cadence,
        "stationarity_threshold": cfg.stationarity_threshold,
    }
    return yaml.safe_dump(doc, sort_keys=False)


def _optimizer_config(vcfg: dict, seed: int, cadence: int | None) -> OptimizerConfig:
    return OptimizerConfig(
        T=vcfg["T"],
        eta=vcfg["eta"],
        seed=seed,
        alpha=vcfg["alpha"],
        q=vcfg["q"],
        batch_size=vcfg["batch_size"],
        c_gamma=vcfg["c_gamma"],
        c_eps=vcfg["c_eps"],
        epsilon=vcfg["epsilon"],
        sigma2=vcfg["sigma2"],
        ifo_mode=vcfg["ifo_mode"],
        grad_noise=vcfg["grad_noise"],
        metric_cadence=cadence,
        early_stop=vcfg["early_stop"],
    )


def run_experiment(cfg: ExperimentConfig, out_dir=None, quiet: bool = False) -> dict:
    """Execute the (variant x seed) grid, emit CSVs and the JSON summary.

    Failed cells are recorded in the summary under ``errors`` and do not
    stop the remaining cells. Returns the summary dict; the caller can
    check ``summary['failures']`` for a non-zero exit.
    """
    out = Path(out_dir or cfg.output_dir or Path("runs") / cfg.experiment)
    out.mkdir(parents=True, exist_ok=True)
    problem = make_builtin(cfg.problem_name, cfg.problem_seed, cfg.problem_params)

    summary_variants = []
    failures = 0
    for vcfg in cfg.variants:
        records = {}
        errors = {}
        for seed in cfg.seeds:
            opt_cfg = _optimizer_config(vcfg, seed, cfg.metric_cadence)
            try:
                record = run(problem, vcfg["name"], opt_cfg)
            except Exception as exc:  # keep the grid going; summarize at the end
                failures += 1
                errors[seed] = f"{type(exc).__name__}: {exc}"
                if not quiet:
                    print(f"[{vcfg['label']} seed={seed}] FAILED: {errors[seed]}")
                continue
            records[seed] = record
            emit_csv(record, out / f"{vcfg['label']}_seed{seed}.csv")
            if not quiet:
                print(
                    f"[{vcfg['label']} seed={seed}] T={vcfg['T']} "
                    f"final_stationarity={record.final_stationarity:.3e} "
                    f"total_ifo={record.total_ifo}"
                )

        entry = {
            "name": vcfg["name"],
            "label": vcfg["label"],
            "seeds": [s for s in cfg.seeds if s in records],
        }
        if records:
            finals = np.array([r.final_stationarity for r in records.values()])
            entry["final_stationarity_mean"] = float(finals.mean())
            entry["final_stationarity_std"] = float(finals.std())
            entry["total_ifo"] = float(np.mean([r.total_ifo for r in records.values()]))
            entry["per_task_final_loss"] = [
                float(v) for v in np.mean([r.final_losses for r in records.values()], axis=0)
            ]
            if cfg.stationarity_threshold is not None:
                hits = [
                    r.first_iteration_at_stationarity(cfg.stationarity_threshold)
                    for r in records.values()
                ]
                entry["iterations_to_threshold"] = (
                    float(np.mean(hits)) if all(h is not None for h in hits) else None
                )
            else:
                entry["iterations_to_threshold"] = None
        if errors:
            entry["errors"] = {str(k): v for k, v in errors.items()}
        summary_variants.append(entry)

    summary = {
        "experiment": cfg.experiment,
        "variants": summary_variants,
        "failures": failures,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _load_config(path: str, seed_override: int | None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    cfg = parse_config(text)
    if seed_override is not None:
        _require(seed_override >= 0, "--seed-override must be >= 0")
        cfg.seeds = [seed_override]
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stimulus-moo",
        description="Benchmark harness for stochastic multi-gradient MOO algorithms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, help_text in (
        ("run", "execute a single-variant, single-seed experiment"),
        ("compare", "execute a multi-variant comparison"),
        ("sweep", "execute a multi-seed sweep"),
        ("print-config", "echo the parsed config with defaults applied"),
    ):
        p = sub.add_parser(command, help=help_text)
        p.add_argument("config", help="path to the YAML experiment config")
        if command != "print-config":
            p.add_argument("--out", default=None, help="output directory override")
            p.add_argument(
                "--seed-override", type=int, default=None, help="replace the seeds list"
            )
            p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config, getattr(args, "seed_override", None))
        if args.command == "print-config":
            sys.stdout.write(config_to_yaml(cfg))
            return 0
        if args.command == "run":
            _require(
                len(cfg.variants) == 1 and len(cfg.seeds) == 1,
                "'run' expects exactly one variant and one seed "
                "(use compare/sweep for grids, or --seed-override)",
            )
        elif args.command == "compare":
            _require(len(cfg.variants) >= 2, "'compare' expects at least two variants")
        elif args.command == "sweep":
            _require(len(cfg.seeds) >= 2, "'sweep' expects at least two seeds")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        summary = run_experiment(cfg, out_dir=args.out, quiet=args.quiet)
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 2 if summary["failures"] else 0


if __name__ == "__main__":
    sys.exit(main())
