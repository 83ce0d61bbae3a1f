"""Experiment orchestration: config parsing, repetition loops, CSV outputs.

Config files are flat ``key = value`` text (``#`` starts a comment).
Every run writes one trace CSV per repetition plus a ``summary.csv`` with
the mean and standard deviation of the final test metric. Identical
config and seed give byte-identical summaries; trace timing columns vary
with the machine.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .baselines import CENTRALIZED_KINDS, centralized_run, distgrad_run
from .datasets import Dataset, load_dataset, load_schema, split_and_partition
from .engine import EngineError, RunConfig, StepSizeSchedule, run
from .metrics import TraceSet
from .mlp import NetArch, neuron_groups, save_weights_csv
from .objectives import GroupPenalty, L1Penalty, L2Penalty, Loss
from .surrogates import Linearization, SurrogateSpec
from .topology import TopologySchedule, random_connected_graph

__all__ = ["ExperimentConfig", "ConfigError", "run_experiment", "summarize", "main"]

ALGORITHMS = ("fl-next", "pl-next", "distgrad", "gd", "adagrad", "pl-sca")
REGS = ("l2", "l1", "group")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    dataset: str
    schema: str
    algorithm: str = "pl-next"
    loss: str = ""               # empty -> derived from the task
    reg: str = "l2"
    lam: float = 0.1
    tau: float = -1.0            # negative -> per-surrogate default
    hidden: tuple[int, ...] = (10,)
    agents: int = 10
    edge_prob: float = 0.2
    alpha0: float = 1.0
    eps: float = 0.01
    eta: float = 0.01
    max_epochs: int = 1000
    tol: float = 1e-8
    metric_every: int = 1
    test_frac: float = 0.2
    repeats: int = 1
    cores: int = 1
    seed: int = 0
    out: str = "runs/out"
    checkpoint: bool = False

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.reg not in REGS:
            raise ConfigError(f"reg must be one of {REGS}, got {self.reg!r}")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if not 0.0 < self.alpha0 <= 1.0 or not 0.0 < self.eps <= 1.0:
            raise ConfigError("alpha0 and eps must lie in (0, 1]")
        if self.alpha0 * self.eps >= 1.0:
            raise ConfigError("alpha0 * eps must stay below 1")
        if self.loss not in ("", "squared", "cross_entropy"):
            raise ConfigError(f"loss must be squared or cross_entropy, got {self.loss!r}")
        if self.agents < 1 or self.repeats < 1 or self.cores < 1 or self.max_epochs < 0:
            raise ConfigError("agents, repeats, and cores must be positive; max_epochs nonnegative")
        if not 0.0 < self.edge_prob <= 1.0:
            raise ConfigError("edge_prob must lie in (0, 1]")
        if not 0.0 < self.test_frac < 1.0:
            raise ConfigError("test_frac must lie in (0, 1)")
        if self.algorithm in ("distgrad", "gd", "adagrad") and self.reg != "l2":
            raise ConfigError(f"{self.algorithm} needs a differentiable penalty (reg = l2)")
        if self.algorithm == "pl-sca" and (self.reg != "l2" or self.loss == "cross_entropy"):
            raise ConfigError("pl-sca supports only the squared loss with the l2 penalty")
        if self.algorithm == "pl-next" and self.reg == "group":
            raise ConfigError("pl-next does not support the group penalty; use fl-next")


CONFIG_PARSERS = {
    "dataset": str, "schema": str, "algorithm": str, "loss": str, "reg": str,
    "lambda": float, "tau": float,
    "hidden": lambda s: tuple(int(t) for t in s.split(",") if t.strip()),
    "agents": int, "edge_prob": float, "alpha0": float, "eps": float, "eta": float,
    "max_epochs": int, "tol": float, "metric_every": int, "test_frac": float,
    "repeats": int, "cores": int, "seed": int, "out": str,
    "checkpoint": lambda s: s.lower() in ("1", "true", "yes"),
}

# "lambda" is a keyword, so the dataclass field is "lam".
KEY_TO_FIELD = {"lambda": "lam"}


def parse_config_file(path) -> ExperimentConfig:
    """Read a flat key=value config file."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[KEY_TO_FIELD.get(key, key)] = CONFIG_PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    if "dataset" not in values or "schema" not in values:
        raise ConfigError(f"{path}: config must set 'dataset' and 'schema'")
    known = {f.name for f in fields(ExperimentConfig)}
    assert set(values) <= known
    return ExperimentConfig(**values)


def _build_problem(cfg: ExperimentConfig):
    """Load data, resolve loss and penalty, and build the architecture."""
    schema = load_schema(cfg.schema)
    data = load_dataset(cfg.dataset, schema)
    task = data.task
    loss_name = cfg.loss or ("cross_entropy" if task == "classification" else "squared")
    loss = Loss.CROSS_ENTROPY if loss_name == "cross_entropy" else Loss.SQUARED
    output_activation = "sigmoid" if task == "classification" else "tanh"
    if loss is Loss.CROSS_ENTROPY and task != "classification":
        raise ConfigError("cross_entropy needs a classification dataset")
    arch = NetArch(data.num_features, cfg.hidden, output_activation)
    if cfg.reg == "l2":
        reg = L2Penalty(cfg.lam)
    elif cfg.reg == "l1":
        reg = L1Penalty(cfg.lam)
    else:
        reg = GroupPenalty(cfg.lam, neuron_groups(arch))
    return data, arch, loss, reg


def _surrogate_for(cfg: ExperimentConfig, loss, reg) -> SurrogateSpec:
    strategy = Linearization.FULL if cfg.algorithm == "fl-next" else Linearization.PARTIAL
    tau = None if cfg.tau < 0 else cfg.tau
    return SurrogateSpec(strategy=strategy, loss=loss, reg=reg, tau=tau)


def _format_row(cells) -> str:
    out = []
    for c in cells:
        out.append(f"{c:.12g}" if isinstance(c, float) else str(c))
    return ",".join(out)


def write_summary(path, algo: str, dataset_name: str, finals) -> str:
    finals = np.asarray(finals, dtype=float)
    mean = float(finals.mean())
    std = float(finals.std(ddof=1)) if finals.size > 1 else 0.0
    text = "algo,dataset,mean,std,repeats\n" + _format_row([algo, dataset_name, mean, std, finals.size]) + "\n"
    Path(path).write_text(text, encoding="utf-8")
    return text


def run_experiment(cfg: ExperimentConfig) -> list[TraceSet]:
    """Run all repetitions, write traces and the summary, return the traces.

    Each repetition draws a fresh data partition and fresh initial
    weights from seeds derived from ``cfg.seed`` and the repetition
    index; the communication graph is generated once from the base seed.
    """
    cfg.validate()
    data, arch, loss, reg = _build_problem(cfg)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    distributed = cfg.algorithm in ("fl-next", "pl-next", "distgrad")
    schedule = None
    if distributed:
        graph = random_connected_graph(cfg.agents, cfg.edge_prob, cfg.seed)
        schedule = TopologySchedule.static(graph)
    steps = StepSizeSchedule(cfg.alpha0, cfg.eps)

    traces = []
    for rep in range(cfg.repeats):
        partition_seed = np.random.SeedSequence([cfg.seed, rep, 0])
        init_seed = np.random.SeedSequence([cfg.seed, rep, 1])
        parts = split_and_partition(data, cfg.test_frac, cfg.agents if distributed else 1,
                                    partition_seed)
        pooled = parts.per_agent[0] if not distributed else None

        if cfg.algorithm in ("fl-next", "pl-next"):
            spec = _surrogate_for(cfg, loss, reg)
            config = RunConfig(surrogate=spec, schedule=schedule, steps=steps,
                               max_epochs=cfg.max_epochs, tol=cfg.tol, seed=init_seed,
                               metric_every=cfg.metric_every, cores=cfg.cores)
            result = run(config, arch, parts.per_agent, parts.test)
            trace, final_ws = result.trace, [s.w for s in result.states]
        elif cfg.algorithm == "distgrad":
            result = distgrad_run(arch, parts.per_agent, parts.test, schedule, steps, loss, reg,
                                  max_epochs=cfg.max_epochs, tol=cfg.tol, seed=init_seed,
                                  metric_every=cfg.metric_every)
            trace, final_ws = result.trace, [s.w for s in result.states]
        else:
            trace, state = centralized_run(cfg.algorithm, arch, pooled, parts.test, loss, reg,
                                           max_epochs=cfg.max_epochs, eta=cfg.eta, steps=steps,
                                           tol=cfg.tol, seed=init_seed,
                                           metric_every=cfg.metric_every)
            final_ws = [state.w]
        trace.to_csv(out_dir / f"trace_rep{rep:03d}.csv")
        if cfg.checkpoint:
            save_weights_csv(out_dir / f"weights_rep{rep:03d}.csv", final_ws)
        traces.append(trace)

    finals = [t.final.test_metric for t in traces]
    text = write_summary(out_dir / "summary.csv", cfg.algorithm, Path(cfg.dataset).stem, finals)
    print(text.strip().splitlines()[-1])
    return traces


def summarize(directory) -> str:
    """Recompute the summary from the trace files in a run directory."""
    out_dir = Path(directory)
    trace_files = sorted(out_dir.glob("trace_rep*.csv"))
    if not trace_files:
        raise FileNotFoundError(f"no trace files in {out_dir}")
    finals = [TraceSet.from_csv(p).final.test_metric for p in trace_files]
    algo, name = "?", out_dir.name
    existing = out_dir / "summary.csv"
    if existing.exists():
        lines = existing.read_text(encoding="utf-8").strip().splitlines()
        if len(lines) >= 2:
            algo, name = lines[1].split(",")[0], lines[1].split(",")[1]
    text = write_summary(existing, algo, name, finals)
    return text


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nextnn",
                                     description="Distributed neural network training experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a config file")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--algo", choices=ALGORITHMS)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--cores", type=int)
    run_p.add_argument("--out")
    run_p.add_argument("--repeats", type=int)
    run_p.add_argument("--max-epochs", type=int, dest="max_epochs")
    run_p.add_argument("--checkpoint", action="store_true", default=None)

    val_p = sub.add_parser("validate", help="check a config file without running")
    val_p.add_argument("--config", required=True)

    sum_p = sub.add_parser("summarize", help="recompute summary.csv from traces")
    sum_p.add_argument("directory")

    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            cfg = parse_config_file(args.config)
            cfg.validate()
            print("config ok")
            return 0
        if args.command == "run":
            cfg = parse_config_file(args.config)
            overrides = {}
            for key, attr in (("algo", "algorithm"), ("seed", "seed"), ("cores", "cores"),
                              ("out", "out"), ("repeats", "repeats"), ("max_epochs", "max_epochs"),
                              ("checkpoint", "checkpoint")):
                value = getattr(args, key)
                if value is not None:
                    overrides[attr] = value
            cfg = replace(cfg, **overrides)
            run_experiment(cfg)
            return 0
        if args.command == "summarize":
            print(summarize(args.directory).strip())
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (EngineError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
