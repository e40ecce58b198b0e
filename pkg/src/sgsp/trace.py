"""Time-indexed metric records for a single seeded run."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


def fmt(value: float) -> str:
    return format(float(value), ".17g")


def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


@dataclass
class RunTrace:
    metadata: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    final: dict = field(default_factory=dict)

    def record(self, step: int, metric: str, value: float) -> None:
        self.rows.append((int(step), metric, float(value)))

    def series(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        pts = [(s, v) for s, m, v in self.rows if m == metric]
        if not pts:
            return np.zeros(0, dtype=int), np.zeros(0)
        steps, values = zip(*pts)
        return np.asarray(steps), np.asarray(values)

    def metrics(self) -> list[str]:
        return sorted({m for _, m, _ in self.rows})

    def row_lines(self, exclude: Iterable[str] = ("wall_clock_ms",)) -> list[str]:
        """Rows rendered exactly as written to CSV, minus timing metrics."""
        skip = set(exclude)
        return [f"{s},{m},{fmt(v)}" for s, m, v in self.rows if m not in skip]

    def write(self, directory: str | Path, stem: str) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / f"{stem}.csv"
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "metric", "value"])
            for s, m, v in self.rows:
                writer.writerow([s, m, fmt(v)])
        json_path = directory / f"{stem}.json"
        doc = {"metadata": self.metadata, "final": self.final}
        json_path.write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True))
        return csv_path, json_path

    def write_wide(self, path: str | Path, columns: list[str], step_name: str = "iteration") -> Path:
        """One row per step with a column per metric (blank where not recorded)."""
        table: dict[int, dict[str, float]] = {}
        for s, m, v in self.rows:
            table.setdefault(s, {})[m] = v
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([step_name, *columns])
            for s in sorted(table):
                writer.writerow([s, *(fmt(table[s][c]) if c in table[s] else "" for c in columns)])
        return path


def read_trace(csv_path: str | Path) -> RunTrace:
    csv_path = Path(csv_path)
    trace = RunTrace()
    with csv_path.open() as fh:
        for row in csv.DictReader(fh):
            trace.rows.append((int(row["step"]), row["metric"], float(row["value"])))
    sidecar = csv_path.with_suffix(".json")
    if sidecar.exists():
        doc = json.loads(sidecar.read_text())
        trace.metadata = doc.get("metadata", {})
        trace.final = doc.get("final", {})
    return trace
