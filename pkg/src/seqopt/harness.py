"""Experiment runner: seeded multi-run execution, CSV curves, comparisons, sweeps.

A JSON experiment config fully determines every output byte of the curve and
summary files. Each seed runs an independent agent; seeds can execute in
parallel worker processes, with all files written by the parent after joins.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import agents, frozen_lm
from .agents import AgentConfig, CurveRecord, make_variant
from .environments import make_environment
from .errors import ConfigError

CSV_HEADER = "iteration,episode_reward,greedy_reward,mean_loss,mean_support_size,buffer_size"

METRICS = ("final_greedy", "best_so_far", "auc")

SWEEP_PARAMETERS = ("prompt_length", "top_k", "reward_scale")


@dataclass
class ModelConfig:
    """Q-model dimensions and optimizer settings."""

    state_dim: int = 32
    embed_dim: int | None = None
    hidden: int = 256
    learning_rate: float = 5e-5
    seed: int = 0
    tabular: bool = False


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a multi-seed run."""

    environment: dict
    model: ModelConfig = field(default_factory=ModelConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    variant: str | None = None
    iterations: int = 500
    seeds: tuple[int, ...] = (1, 2, 3)
    out_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = _build_dataclass(ModelConfig, self.model, "model")
        if isinstance(self.agent, dict):
            self.agent = _build_dataclass(AgentConfig, self.agent, "agent")
        self.seeds = tuple(int(s) for s in self.seeds)

    def validate(self) -> "ExperimentConfig":
        if not isinstance(self.environment, dict) or "kind" not in self.environment:
            raise ConfigError("environment: must be a mapping with a 'kind' field")
        if self.iterations < 1:
            raise ConfigError(f"iterations: must be >= 1, got {self.iterations}")
        if not self.seeds:
            raise ConfigError("seeds: need at least one seed")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")
        if self.variant is not None and self.variant not in agents.VARIANTS:
            raise ConfigError(f"variant: unknown name {self.variant!r}; known: {sorted(agents.VARIANTS)}")
        vocab = self.environment.get("vocab_size")
        resolved_agent(self).validate(vocab_size=vocab)
        return self

    def canonical_dict(self) -> dict:
        data = {
            "environment": self.environment,
            "model": asdict(self.model),
            "agent": asdict(self.agent),
            "variant": self.variant,
            "iterations": self.iterations,
            "seeds": list(self.seeds),
        }
        return data

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _build_dataclass(cls, data: dict, section: str):
    known = {f.name for f in cls.__dataclass_fields__.values()}
    for key in data:
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown field")
    return cls(**data)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config, naming bad fields."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    known = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown config field")
    if "environment" not in raw:
        raise ConfigError("environment: required field missing")
    cfg = ExperimentConfig(**raw)
    return cfg.validate()


def resolved_agent(config: ExperimentConfig) -> AgentConfig:
    """Agent knobs after applying the variant and the environment's length."""
    agent_cfg = config.agent
    if config.variant is not None:
        agent_cfg = make_variant(config.variant, agent_cfg)
    length = config.environment.get("length")
    if length is not None:
        agent_cfg = replace(agent_cfg, prompt_length=int(length))
    return agent_cfg


@dataclass
class RunRecord:
    """Result of one seed: the full curve plus summary metrics."""

    config_hash: str
    seed: int
    rows: list[CurveRecord]
    final_greedy: float
    best_so_far: float
    wall_seconds: float


def _build_model(config: ExperimentConfig, run_seed: int):
    vocab = int(config.environment["vocab_size"])
    m = config.model
    if m.tabular:
        return frozen_lm.make_tabular_model(
            vocab, hidden=m.hidden, encoder_seed=m.seed,
            adapter_seed=run_seed, learning_rate=m.learning_rate)
    return frozen_lm.make_q_model(
        vocab, state_dim=m.state_dim, embed_dim=m.embed_dim, hidden=m.hidden,
        encoder_seed=m.seed, adapter_seed=run_seed, learning_rate=m.learning_rate)


def run_single_seed(config: ExperimentConfig, seed: int) -> RunRecord:
    """One fully deterministic run: env, model, and agent built from the config."""
    start = time.perf_counter()
    env = make_environment(config.environment)
    model = _build_model(config, run_seed=seed)
    agent_cfg = replace(resolved_agent(config), seed=seed)
    state = agents.make_agent(model, agent_cfg, oracle=env)
    rows = agents.train(state, env, config.iterations)
    close = getattr(env, "close", None)
    if close is not None:
        close()
    best = float(np.max([r.greedy_reward for r in rows]))
    return RunRecord(
        config_hash=config.config_hash(),
        seed=seed,
        rows=rows,
        final_greedy=rows[-1].greedy_reward,
        best_so_far=best,
        wall_seconds=time.perf_counter() - start,
    )


def _format_row(row: CurveRecord) -> str:
    return (f"{row.iteration},{float(row.episode_reward)!r},{float(row.greedy_reward)!r},"
            f"{float(row.mean_loss)!r},{float(row.mean_support_size)!r},{row.buffer_size}")


def write_curve_csv(path, rows: list[CurveRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(_format_row(row) + "\n")


def _write_summary(path, config: ExperimentConfig, record: RunRecord) -> None:
    # wall-clock stays in the in-memory record only, so files are byte-reproducible
    summary = {
        "config_hash": record.config_hash,
        "seed": record.seed,
        "variant": config.variant,
        "iterations": config.iterations,
        "final_greedy": record.final_greedy,
        "best_so_far": record.best_so_far,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")


def run_experiment(config: ExperimentConfig) -> list[RunRecord]:
    """One independent agent per seed; optionally across worker processes."""
    config.validate()
    if config.workers > 1 and len(config.seeds) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(run_single_seed, config, s) for s in config.seeds]
            records = [f.result() for f in futures]
    else:
        records = [run_single_seed(config, s) for s in config.seeds]
    if config.out_dir is not None:
        os.makedirs(config.out_dir, exist_ok=True)
        for record in records:
            write_curve_csv(os.path.join(config.out_dir, f"curve_seed{record.seed}.csv"), record.rows)
            _write_summary(os.path.join(config.out_dir, f"summary_seed{record.seed}.json"), config, record)
    return records


# -- metrics and aggregation ---------------------------------------------------


def best_so_far_curve(rows: list[CurveRecord]) -> np.ndarray:
    return np.maximum.accumulate([r.greedy_reward for r in rows])


def run_metric(record: RunRecord, metric: str) -> float:
    if metric == "final_greedy":
        return record.final_greedy
    if metric == "best_so_far":
        return record.best_so_far
    if metric == "auc":
        return float(np.mean(best_so_far_curve(record.rows)))
    raise ConfigError(f"unknown metric {metric!r}; known: {METRICS}")


def mean_and_se(values) -> tuple[float, float]:
    """Sample mean and standard error (ddof=1; zero for a single value)."""
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / np.sqrt(arr.size))


# -- variant comparison ---------------------------------------------------------


@dataclass
class ComparisonRow:
    label: str
    mean: float
    se: float
    per_seed: dict[int, float]


@dataclass
class ComparisonReport:
    metric: str
    rows: list[ComparisonRow]
    long_rows: list[tuple[str, int, int, float]]  # (label, seed, iteration, best-so-far)


def compare_variants(configs: list[ExperimentConfig], metric: str = "best_so_far",
                     out_dir: str | None = None) -> ComparisonReport:
    """Run several configs over shared seeds and aggregate a chosen metric.

    All configs must target the same environment and seed list. The long CSV
    holds the per-iteration best-so-far curve of every (variant, seed) run.
    """
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}; known: {METRICS}")
    if not configs:
        raise ConfigError("compare_variants needs at least one config")
    reference = configs[0]
    for cfg in configs[1:]:
        if cfg.environment != reference.environment:
            raise ConfigError("all compared configs must share the environment spec")
        if cfg.seeds != reference.seeds:
            raise ConfigError("all compared configs must share the seed list")
    labels: list[str] = []
    for i, cfg in enumerate(configs):
        base = cfg.variant or "custom"
        labels.append(base if base not in labels else f"{base}_{i}")

    rows: list[ComparisonRow] = []
    long_rows: list[tuple[str, int, int, float]] = []
    for label, cfg in zip(labels, configs):
        sub = replace(cfg, out_dir=f"{out_dir}/{label}" if out_dir else None)
        records = run_experiment(sub)
        per_seed = {rec.seed: run_metric(rec, metric) for rec in records}
        mean, se = mean_and_se(list(per_seed.values()))
        rows.append(ComparisonRow(label=label, mean=mean, se=se, per_seed=per_seed))
        for rec in records:
            for it, value in enumerate(best_so_far_curve(rec.rows), start=1):
                long_rows.append((label, rec.seed, it, float(value)))
    report = ComparisonReport(metric=metric, rows=rows, long_rows=long_rows)
    if out_dir is not None:
        _write_comparison(out_dir, report)
    return report


def _write_comparison(out_dir: str, report: ComparisonReport) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "comparison.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"variant,{report.metric}_mean,{report.metric}_se\n")
        for row in report.rows:
            fh.write(f"{row.label},{row.mean!r},{row.se!r}\n")
    with open(os.path.join(out_dir, "curves_long.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,seed,iteration,value\n")
        for label, seed, iteration, value in report.long_rows:
            fh.write(f"{label},{seed},{iteration},{value!r}\n")


# -- hyperparameter sweeps -------------------------------------------------------


@dataclass
class SweepRow:
    value: float
    mean: float
    se: float
    per_seed: dict[int, float]


@dataclass
class SweepReport:
    parameter: str
    metric: str
    rows: list[SweepRow]


def apply_sweep_value(config: ExperimentConfig, parameter: str, value) -> ExperimentConfig:
    """Return a config with one swept knob changed (reward_scale means 1/alpha)."""
    if parameter == "prompt_length":
        env = dict(config.environment)
        env["length"] = int(value)
        agent_cfg = replace(config.agent, prompt_length=int(value))
        return replace(config, environment=env, agent=agent_cfg)
    if parameter == "top_k":
        return replace(config, agent=replace(config.agent, top_k=int(value)))
    if parameter == "reward_scale":
        if not (float(value) > 0):
            raise ConfigError(f"reward_scale values must be positive, got {value}")
        return replace(config, agent=replace(config.agent, alpha=1.0 / float(value)))
    raise ConfigError(f"unknown sweep parameter {parameter!r}; known: {SWEEP_PARAMETERS}")


def sweep(config: ExperimentConfig, parameter: str, values: list,
          metric: str = "best_so_far", out_dir: str | None = None) -> SweepReport:
    """Run the experiment once per parameter value and aggregate the metric."""
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}; known: {METRICS}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows: list[SweepRow] = []
    for value in values:
        sub = apply_sweep_value(config, parameter, value)
        sub = replace(sub, out_dir=f"{out_dir}/{parameter}_{value}" if out_dir else None)
        records = run_experiment(sub)
        per_seed = {rec.seed: run_metric(rec, metric) for rec in records}
        mean, se = mean_and_se(list(per_seed.values()))
        rows.append(SweepRow(value=float(value), mean=mean, se=se, per_seed=per_seed))
    report = SweepReport(parameter=parameter, metric=metric, rows=rows)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "sweep.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{parameter},{metric}_mean,{metric}_se\n")
            for row in rows:
                fh.write(f"{row.value!r},{row.mean!r},{row.se!r}\n")
    return report
