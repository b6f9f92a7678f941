"""Experiment driver CLI: gen, log, train, eval, sweep-k, run, verify."""
from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import click
import numpy as np

from . import reports
from .core import (
    BandexError,
    LoggedDataset,
    RestrictedPolicy,
    StageFailure,
    SyntheticProblem,
    load_policy,
    read_dataset_jsonl,
    save_policy,
)
from .datagen import GenConfig, log_interactions, make_logging_policy, make_problem, translate_rewards, unsupported_fraction
from .estimators import build_minsup, conservative_model, dm, dr, ips, augmented_ips, minsup_estimate
from .learning import RewardModel, TrainConfig, train_erm, train_reward_model
from .oracle import exact_policy_value, exact_support_divergence
from .selection import default_grid, sweep_k
from .verify import run_checks

METHODS = ("naive_ips", "action_restricted", "augmented", "conservative", "shifted")


@dataclass
class ExperimentConfig:
    gen: GenConfig
    train: TrainConfig
    estimators: list
    selectors: list
    seeds: list
    output_dir: str
    temperatures: list = None
    n_train: int = 4000
    n_val: int = 2000
    grid_points: int = 11
    reward_offset: float = 0.0

    def __post_init__(self):
        if not self.seeds:
            raise BandexError("seeds must be nonempty")
        if self.temperatures is None:
            self.temperatures = [self.gen.temperature]
        for m in self.estimators:
            if m not in METHODS:
                raise BandexError(f"unknown method {m!r}")

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        return ExperimentConfig(
            gen=GenConfig.from_dict(d["gen"]),
            train=TrainConfig.from_dict(d.get("train", {})),
            estimators=list(d.get("estimators", ["naive_ips", "shifted"])),
            selectors=list(d.get("selectors", ["minsup"])),
            seeds=[int(s) for s in d["seeds"]],
            output_dir=d.get("output_dir", "out"),
            temperatures=d.get("temperatures"),
            n_train=int(d.get("n_train", 4000)),
            n_val=int(d.get("n_val", 2000)),
            grid_points=int(d.get("grid_points", 11)),
            reward_offset=float(d.get("reward_offset", 0.0)),
        )


def _worker_count() -> int:
    env = os.environ.get("BANDEX_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


@click.group()
def main():
    """Off-policy bandit learning under support-deficient logging."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--n", default=4000, show_default=True, help="logged interactions to draw")
@click.option("--seed", default=None, type=int, help="override the config seed")
def gen(config_path, out_dir, n, seed):
    """Generate a problem, a clipped logging policy, and a logged dataset."""
    cfg = GenConfig.from_dict(json.loads(Path(config_path).read_text()))
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        problem = make_problem(cfg)
        logging = make_logging_policy(problem, cfg.temperature, cfg.clip_threshold, cfg.seed)
        dataset = log_interactions(problem, logging, n=n, seed=cfg.seed)
    except BandexError as exc:
        raise StageFailure("gen", str(exc)) from exc
    _dump_json(out / "problem.json", problem.to_dict())
    save_policy(logging, out / "logging_policy.json")
    dataset.write_jsonl(out / "dataset.jsonl")
    click.echo(
        json.dumps(
            {
                "problem": str(out / "problem.json"),
                "logging_policy": str(out / "logging_policy.json"),
                "dataset": str(out / "dataset.jsonl"),
                "unsupported_fraction": unsupported_fraction(logging, problem),
            }
        )
    )


@main.command()
@click.option("--problem", "problem_path", required=True, type=click.Path(exists=True))
@click.option("--policy", "policy_path", required=True, type=click.Path(exists=True))
@click.option("--n", required=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def log(problem_path, policy_path, n, seed, out_path):
    """Draw logged interactions from a problem under a logging policy."""
    problem = SyntheticProblem.from_dict(json.loads(Path(problem_path).read_text()))
    logging = load_policy(policy_path)
    dataset = log_interactions(problem, logging, n=n, seed=seed)
    dataset.write_jsonl(out_path)
    click.echo(json.dumps({"dataset": out_path, "n": n}))


def _load_data(path, problem: SyntheticProblem = None) -> LoggedDataset:
    contexts = None if problem is None else problem.contexts
    return read_dataset_jsonl(path, contexts=contexts)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--problem", "problem_path", required=True, type=click.Path(exists=True))
@click.option("--logging", "logging_path", default=None, type=click.Path(exists=True))
@click.option("--reward-model", "model_path", default=None, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def train(config_path, data_path, problem_path, logging_path, model_path, out_dir):
    """Train a softmax policy with the configured ERM objective."""
    cfg = TrainConfig.from_dict(json.loads(Path(config_path).read_text()))
    problem = SyntheticProblem.from_dict(json.loads(Path(problem_path).read_text()))
    data = _load_data(data_path, problem)
    logging = load_policy(logging_path) if logging_path else None
    model = (
        RewardModel.from_dict(json.loads(Path(model_path).read_text())) if model_path else None
    )
    result = train_erm(data, cfg, logging=logging, reward_model=model)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    policy = result.policy
    base = policy.base if isinstance(policy, RestrictedPolicy) else policy
    save_policy(base, out / "policy.json")
    reports.write_csv(
        out / "trace.csv",
        ["epoch", "objective", "weight_sum"],
        [(t["epoch"], t["objective"], t["weight_sum"]) for t in result.trace],
    )
    click.echo(json.dumps({"policy": str(out / "policy.json"), "trace": str(out / "trace.csv")}))


@main.command(name="eval")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--problem", "problem_path", required=True, type=click.Path(exists=True))
@click.option("--target", "target_path", required=True, type=click.Path(exists=True))
@click.option("--logging", "logging_path", default=None, type=click.Path(exists=True))
@click.option("--reward-model", "model_path", default=None, type=click.Path(exists=True))
@click.option(
    "--estimator",
    "names",
    multiple=True,
    default=("ips",),
    show_default=True,
    type=click.Choice(["ips", "dm", "dr", "augmented", "conservative", "minsup"]),
)
def eval_cmd(data_path, problem_path, target_path, logging_path, model_path, names):
    """Print one estimator report per requested estimator (JSON)."""
    problem = SyntheticProblem.from_dict(json.loads(Path(problem_path).read_text()))
    data = _load_data(data_path, problem)
    target = load_policy(target_path)
    logging = load_policy(logging_path) if logging_path else None
    model = (
        RewardModel.from_dict(json.loads(Path(model_path).read_text())) if model_path else None
    )
    out = {}
    for name in names:
        if name == "ips":
            out[name] = ips(data, target).to_dict()
        elif name == "dm":
            out[name] = {"value": dm(data, target, _require(model, "reward model"))}
        elif name == "dr":
            out[name] = dr(data, target, _require(model, "reward model"), logging=logging).to_dict()
        elif name == "augmented":
            out[name] = augmented_ips(
                data, target, _require(logging, "logging policy"), _require(model, "reward model")
            ).to_dict()
        elif name == "conservative":
            out[name] = augmented_ips(
                data,
                target,
                _require(logging, "logging policy"),
                conservative_model(problem.reward_bounds),
            ).to_dict()
        elif name == "minsup":
            minsup = build_minsup(_require(logging, "logging policy"), problem)
            out[name] = {"value": minsup_estimate(data, target, minsup)}
    click.echo(json.dumps(out, indent=2, sort_keys=True))


def _require(value, what):
    if value is None:
        raise click.UsageError(f"this estimator needs a {what} file")
    return value


@main.command(name="sweep-k")
@click.option("--problem", "problem_path", required=True, type=click.Path(exists=True))
@click.option("--logging", "logging_path", required=True, type=click.Path(exists=True))
@click.option("--train-data", "train_path", required=True, type=click.Path(exists=True))
@click.option("--val-data", "val_path", required=True, type=click.Path(exists=True))
@click.option("--train-config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--selector", "selectors", multiple=True, default=("minsup",), show_default=True)
@click.option("--grid-points", default=11, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
def sweep_k_cmd(problem_path, logging_path, train_path, val_path, config_path, selectors, grid_points, out_dir):
    """Grid search over the reward shift; emits JSON, CSV, and a figure."""
    problem = SyntheticProblem.from_dict(json.loads(Path(problem_path).read_text()))
    logging = load_policy(logging_path)
    train_data = _load_data(train_path, problem)
    val_data = _load_data(val_path, problem)
    cfg = TrainConfig.from_dict(json.loads(Path(config_path).read_text()))
    model = None
    if "dm" in selectors:
        model = train_reward_model(train_data, cfg, n_actions=problem.n_actions)
    result = sweep_k(
        train_data,
        val_data,
        default_grid(problem.reward_bounds, grid_points),
        cfg,
        list(selectors),
        logging,
        problem,
        reward_model=model,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "sweep.json", result.to_dict())
    rows = [
        (e.k, *[e.estimates.get(s, "") for s in selectors], e.exact_value)
        for e in result.entries
        if e.error is None
    ]
    reports.write_csv(out / "sweep.csv", ["k", *selectors, "exact_value"], rows)
    reports.render_sweep_figure(result, out / "sweep.png")
    click.echo(json.dumps({"sweep": str(out / "sweep.json"), "chosen": result.chosen}))


def _run_methods(problem, logging, train_data, val_data, config: ExperimentConfig, seed: int):
    """Train every configured method once and report exact values."""
    model = None
    if "augmented" in config.estimators or "dm" in config.selectors:
        model = train_reward_model(
            train_data, replace(config.train, seed=seed), n_actions=problem.n_actions
        )
    results = {}
    for method in config.estimators:
        cfg = replace(config.train, seed=seed)
        if method == "shifted":
            sweep = sweep_k(
                train_data,
                val_data,
                default_grid(problem.reward_bounds, config.grid_points),
                cfg,
                config.selectors or ["minsup"],
                logging,
                problem,
                reward_model=model,
            )
            selector = (config.selectors or ["minsup"])[0]
            entry = sweep.entry_for(sweep.chosen[selector])
            policy = entry.policy
            extra = {"chosen_k": entry.k, "selector": selector}
        else:
            if method == "conservative":
                cfg = replace(cfg, objective="augmented")
                rm = conservative_model(problem.reward_bounds)
            elif method == "augmented":
                cfg = replace(cfg, objective="augmented")
                rm = model
            else:
                cfg = replace(cfg, objective=method)
                rm = None
            policy = train_erm(train_data, cfg, logging=logging, reward_model=rm).policy
            extra = {}
        results[method] = {
            "exact_value": exact_policy_value(problem, policy),
            "support_divergence": exact_support_divergence(problem, logging, policy),
            **extra,
        }
    return results


def _run_one(config: ExperimentConfig, temperature: float, seed: int, out: Path) -> dict:
    stage = "gen"
    try:
        gen_cfg = replace(config.gen, temperature=temperature)
        problem = make_problem(gen_cfg)
        if config.reward_offset:
            problem = translate_rewards(problem, config.reward_offset)
        logging = make_logging_policy(
            problem, gen_cfg.temperature, gen_cfg.clip_threshold, gen_cfg.seed
        )
        frac = unsupported_fraction(logging, problem)
        stage = "log"
        train_data = log_interactions(problem, logging, n=config.n_train, seed=seed)
        val_data = log_interactions(problem, logging, n=config.n_val, seed=seed + 10_000)
        stage = "train"
        methods = _run_methods(problem, logging, train_data, val_data, config, seed)
    except Exception as exc:
        raise StageFailure(stage, f"seed {seed}, temperature {temperature}: {exc}") from exc
    record = {
        "seed": seed,
        "temperature": temperature,
        "unsupported_fraction": frac,
        "methods": methods,
    }
    _dump_json(out / f"seed_{seed}_tau_{temperature:g}.json", record)
    return record


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default=None, type=click.Path(), help="override output_dir")
def run(config_path, out_dir):
    """Full protocol: generate, log, train every method, aggregate over seeds."""
    config = ExperimentConfig.from_dict(json.loads(Path(config_path).read_text()))
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(t, s) for t in config.temperatures for s in config.seeds]
    records, failures = [], []
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        futures = {pool.submit(_run_one, config, t, s, out): (t, s) for t, s in jobs}
        for fut, (t, s) in futures.items():
            try:
                records.append(fut.result())
            except StageFailure as exc:
                failures.append({"temperature": t, "seed": s, "error": str(exc)})
    aggregate = {}
    rows = []
    for t in config.temperatures:
        batch = [r for r in records if r["temperature"] == t]
        if not batch:
            continue
        frac = float(np.mean([r["unsupported_fraction"] for r in batch]))
        for method in config.estimators:
            vals = np.array([r["methods"][method]["exact_value"] for r in batch])
            key = f"tau={t:g}/{method}"
            aggregate[key] = {"mean": float(vals.mean()), "std": float(vals.std(ddof=0)), "n": len(vals)}
            rows.append((t, round(frac, 6), method, float(vals.mean()), float(vals.std(ddof=0))))
    _dump_json(out / "aggregate.json", {"methods": aggregate, "failures": failures})
    reports.write_csv(
        out / "values_by_deficiency.csv",
        ["temperature", "unsupported_fraction", "method", "mean_exact_value", "std_exact_value"],
        rows,
    )
    if rows:
        reports.render_deficiency_figure(rows, out / "values_by_deficiency.png")
    click.echo(json.dumps({"aggregate": str(out / "aggregate.json"), "failures": len(failures)}))
    if failures:
        sys.exit(1)


@main.command()
@click.option("--level", type=click.Choice(["fast", "full"]), default="fast", show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
def verify(level, out_path):
    """Run the named invariant checks and print one line per check."""
    results = run_checks(level)
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        click.echo(f"[{status}] {res.name}: {res.statistic}")
    if out_path:
        _dump_json(out_path, [r.to_dict() for r in results])
    if not all(r.passed for r in results):
        sys.exit(1)


if __name__ == "__main__":
    main()
