"""Experiment configuration, cell execution, outcome classification and summaries.

A cell is one (algorithm, seed) pair. Each cell builds its own environment and
generator, so cells can run in any order or in parallel and still produce the
same trace rows.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import friendq_run, nashq_run
from .config import SgspConfig
from .environments import (
    HART_MIXED_NE,
    HART_PURE_NE,
    DeltaEnv,
    GameEnv,
    StgEnv,
    build_hart_game,
    build_stg,
)
from .game import ConfigurationError, NumericalFailure, load_game, make_rng
from .off_sgsp import run_off_sgsp
from .on_sgsp import SelfPlayDriver
from .oracle import is_nash
from .trace import RunTrace, config_hash, fmt, read_trace

log = logging.getLogger(__name__)

EXPERIMENTS = ("hart", "stg", "stg-delta", "custom")
ALGORITHMS = ("off-sgsp", "on-sgsp", "nashq", "friendq")
WORKERS_ENV = "SGSP_WORKERS"
NON_NASH = "non-Nash/oscillating"
UNCLASSIFIED = "unclassified"
HART_REFERENCES = (("mixed-NE", HART_MIXED_NE), ("pure-NE", HART_PURE_NE))
# largest STG grid that is still expanded into a dense table for Nash checks
DENSE_STG_LIMIT = 4
STATIONARY_TOL = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    algorithms: tuple
    seeds: tuple
    sgsp: SgspConfig = field(default_factory=SgspConfig)
    output_dir: str = "runs"
    size: int = 3
    discount: float = 0.8
    steps: int | None = None
    game_file: str | None = None
    classify_tol: float = 0.1

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not self.algorithms:
            raise ConfigurationError("at least one algorithm is required")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ConfigurationError(f"unknown algorithm {alg!r}; expected one of {ALGORITHMS}")
        if not self.seeds:
            raise ConfigurationError("seeds must be a non-empty list")
        if self.experiment == "custom" and (self.game_file is None or not Path(self.game_file).is_file()):
            raise ConfigurationError(f"custom experiment needs an existing game_file, got {self.game_file!r}")
        if self.experiment == "stg-delta" and "off-sgsp" in self.algorithms:
            raise ConfigurationError("off-sgsp needs a tabular model; stg-delta has none")
        if self.size < 1:
            raise ConfigurationError("grid size too small")
        if not 0.0 < self.discount < 1.0:
            raise ConfigurationError("discount must lie in (0, 1)")
        if self.steps is not None and self.steps < 0:
            raise ConfigurationError("steps must be >= 0")

    @property
    def n_steps(self) -> int:
        return self.sgsp.max_iters if self.steps is None else self.steps

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["algorithms"] = list(self.algorithms)
        doc["seeds"] = list(self.seeds)
        return doc

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | Path | None = None) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        doc = dict(doc)
        if "algorithm" in doc:
            alg = doc.pop("algorithm")
            doc["algorithms"] = [alg] if isinstance(alg, str) else alg
        doc["sgsp"] = SgspConfig.from_dict(doc.get("sgsp", {}))
        for key in ("algorithms", "seeds"):
            if not isinstance(doc.get(key, []), list):
                raise ConfigurationError(f"{key} must be a list")
            doc[key] = tuple(doc.get(key, ()))
        if base_dir is not None and doc.get("game_file"):
            doc["game_file"] = str(Path(base_dir) / doc["game_file"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc, base_dir=path.parent)


def build_model(cfg: ExperimentConfig):
    """Dense game for the experiment, or None when it has no tabular form."""
    if cfg.experiment == "hart":
        return build_hart_game(cfg.discount)
    if cfg.experiment == "custom":
        return load_game(cfg.game_file)
    if cfg.experiment == "stg" and cfg.size <= DENSE_STG_LIMIT:
        return build_stg(cfg.size, cfg.discount)
    return None


def build_env(cfg: ExperimentConfig, game=None):
    if cfg.experiment == "hart":
        return GameEnv(game or build_hart_game(cfg.discount), start_state=0)
    if cfg.experiment == "custom":
        return GameEnv(game or load_game(cfg.game_file))
    if cfg.experiment == "stg":
        return StgEnv(cfg.size, cfg.discount)
    return DeltaEnv(StgEnv(cfg.size, cfg.discount))


def _matches(pi: Sequence[np.ndarray], reference, tol: float) -> bool:
    for p, ref in zip(pi, reference):
        p = np.asarray(p, dtype=float)
        ref = np.broadcast_to(np.asarray(ref, dtype=float), p.shape)
        if np.abs(p - ref).sum(axis=-1).max() > tol:
            return False
    return True


def classify_outcome(final_pi: Sequence[np.ndarray], references, tol: float = 0.1, recent=None) -> str:
    """Label of the first reference NE within per-player L1 distance ``tol``.

    ``references`` is a sequence of ``(label, profile)`` pairs. ``recent`` holds
    policy snapshots from the last stretch of the run; if any coordinate moved
    by more than ``STATIONARY_TOL`` across them the run counts as oscillating.
    """
    if not references:
        raise ConfigurationError("need at least one reference equilibrium")
    if recent is not None and len(recent) > 1:
        stacked = [np.stack([np.asarray(snap[i], dtype=float) for snap in recent]) for i in range(len(final_pi))]
        if max(float(np.ptp(s, axis=0).max()) for s in stacked) > STATIONARY_TOL:
            return NON_NASH
    for label, profile in references:
        if _matches(final_pi, profile, tol):
            return label
    return NON_NASH


def recent_policies(trace: RunTrace, n_agents: int, shapes, fraction: float = 0.1) -> list:
    """Policy snapshots recorded at or after ``(1 - fraction)`` of the run."""
    table: dict[int, list[np.ndarray]] = {}
    for step, metric, value in trace.rows:
        if not metric.startswith("pi/"):
            continue
        _, i, x, a = metric.split("/")
        snap = table.setdefault(step, [np.zeros(s) for s in shapes])
        snap[int(i)][int(x), int(a)] = value
    if not table:
        return []
    last = max(table)
    cutoff = last * (1.0 - fraction)
    return [table[s] for s in sorted(table) if s >= cutoff]


def _label_cell(cfg: ExperimentConfig, game, policy, trace: RunTrace) -> tuple[str, float | None]:
    if game is None:
        return UNCLASSIFIED, None
    recent = recent_policies(trace, game.n_agents, [p.shape for p in policy])
    ok, gain = is_nash(game, policy, cfg.classify_tol)
    if cfg.experiment == "hart":
        return classify_outcome(policy, HART_REFERENCES, cfg.classify_tol, recent), gain
    if recent and classify_outcome(policy, [("x", policy)], 0.0, recent) == NON_NASH:
        return NON_NASH, gain
    return ("nash" if ok else NON_NASH), gain


def cell_stem(algorithm: str, seed: int) -> str:
    return f"{algorithm}_seed{seed}"


def run_cell(cfg: ExperimentConfig, algorithm: str, seed: int) -> RunTrace:
    """Run one cell and return its trace (nothing is written)."""
    game = build_model(cfg)
    rng = make_rng(seed)
    steps = cfg.n_steps
    sgsp = cfg.sgsp
    started = time.perf_counter()
    if algorithm == "off-sgsp":
        if game is None:
            raise ConfigurationError(f"off-sgsp needs a tabular game; {cfg.experiment} with size {cfg.size} has none")
        v0 = np.zeros((game.n_agents, game.n_states))
        _, policy, trace = run_off_sgsp(game, v0, game.uniform_policy(), sgsp.with_(max_iters=steps), rng)
    else:
        env = build_env(cfg, game)
        if algorithm == "on-sgsp":
            policy, _, trace = SelfPlayDriver(env, sgsp, rng).run(steps)
        elif algorithm == "nashq":
            policy, trace = nashq_run(env, sgsp, rng, steps)
        else:
            policy, trace = friendq_run(env, sgsp, rng, steps)
    elapsed = time.perf_counter() - started
    label, gain = _label_cell(cfg, game, policy, trace) if cfg.experiment != "stg-delta" else (UNCLASSIFIED, None)
    trace.metadata.update(
        experiment=cfg.experiment,
        algorithm=algorithm,
        seed=seed,
        config_hash=config_hash(cfg.to_dict()),
        start_time=datetime.now(timezone.utc).isoformat(),
        wall_clock_s=elapsed,
    )
    trace.final.update(outcome=label, nash_gain=gain)
    return trace


def _execute(args) -> tuple[str, int, str | None]:
    cfg, algorithm, seed = args
    out = Path(cfg.output_dir)
    try:
        trace = run_cell(cfg, algorithm, seed)
    except NumericalFailure as exc:
        failed = RunTrace(
            metadata={"experiment": cfg.experiment, "algorithm": algorithm, "seed": seed,
                      "config_hash": config_hash(cfg.to_dict())},
            final={"outcome": "aborted", "error": str(exc)},
        )
        failed.write(out, cell_stem(algorithm, seed))
        return algorithm, seed, str(exc)
    trace.write(out, cell_stem(algorithm, seed))
    return algorithm, seed, None


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def run_cells(cfg: ExperimentConfig, workers: int | None = None) -> list[tuple[str, int, str | None]]:
    """Run every (algorithm, seed) cell, write traces, then the summary.

    Returns ``(algorithm, seed, error)`` per cell; ``error`` is None on success.
    """
    workers = worker_count() if workers is None else workers
    jobs = [(cfg, alg, seed) for alg in cfg.algorithms for seed in cfg.seeds]
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    (Path(cfg.output_dir) / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, default=str))
    if workers == 1:
        results = [_execute(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute, jobs))
    for alg, seed, err in results:
        if err:
            log.error("cell %s seed %d aborted: %s", alg, seed, err)
    summarize_dir(cfg.output_dir)
    return results


# -- summaries ---------------------------------------------------------------


def _final_metric(trace: RunTrace, metric: str) -> float | None:
    _, values = trace.series(metric)
    return float(values[-1]) if len(values) else None


def summarize(traces: Sequence[RunTrace]) -> list[dict]:
    """Per-algorithm outcome percentages, final-metric mean and stddev, wall clock total."""
    if not traces:
        raise ConfigurationError("nothing to summarize")
    groups: dict[str, list[RunTrace]] = {}
    for tr in traces:
        groups.setdefault(str(tr.metadata.get("algorithm", "unknown")), []).append(tr)
    rows = []
    for alg in sorted(groups):
        group = groups[alg]
        n = len(group)
        labels: dict[str, int] = {}
        for tr in group:
            label = str(tr.final.get("outcome", UNCLASSIFIED))
            labels[label] = labels.get(label, 0) + 1
        rows.append({"algorithm": alg, "quantity": "runs", "value": n, "std": ""})
        for label in sorted(labels):
            rows.append({"algorithm": alg, "quantity": f"outcome % {label}", "value": 100.0 * labels[label] / n, "std": ""})
        metrics = sorted({m for tr in group for m in tr.metrics() if not m.startswith("pi/") and m != "wall_clock_ms"})
        for metric in metrics:
            finals = [v for v in (_final_metric(tr, metric) for tr in group) if v is not None]
            if finals:
                rows.append({"algorithm": alg, "quantity": f"final {metric}",
                             "value": float(np.mean(finals)), "std": float(np.std(finals))})
        wall = sum(float(tr.metadata.get("wall_clock_s", 0.0)) for tr in group)
        rows.append({"algorithm": alg, "quantity": "wall clock total s", "value": wall, "std": ""})
    return rows


def format_summary(rows: list[dict]) -> str:
    lines = []
    for r in rows:
        value = r["value"]
        text = str(value) if isinstance(value, int) else f"{value:.4g}"
        if r["std"] != "":
            text += f" +- {r['std']:.3g}"
        lines.append(f"{r['algorithm']:<10} {r['quantity']:<34} {text}")
    return "\n".join(lines) + "\n"


def write_summary(rows: list[dict], directory: str | Path) -> tuple[Path, Path]:
    directory = Path(directory)
    csv_path = directory / "summary.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["algorithm", "quantity", "value", "std"])
        for r in rows:
            std = "" if r["std"] == "" else fmt(r["std"])
            writer.writerow([r["algorithm"], r["quantity"], r["value"] if isinstance(r["value"], int) else fmt(r["value"]), std])
    txt_path = directory / "summary.txt"
    txt_path.write_text(format_summary(rows))
    return csv_path, txt_path


def load_traces(directory: str | Path) -> list[RunTrace]:
    directory = Path(directory)
    return [read_trace(p) for p in sorted(directory.glob("*.csv")) if p.name != "summary.csv"]


def summarize_dir(directory: str | Path) -> list[dict]:
    rows = summarize(load_traces(directory))
    write_summary(rows, directory)
    return rows
