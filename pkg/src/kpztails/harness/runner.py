"""Run experiments deterministically, serially or on a worker pool.

Point ``j`` of an experiment always draws from ``handle.child(j)``, and every
estimator splits its work into a fixed number of replicates on child streams.
The worker count therefore changes only wall time, never the numbers.
"""

from __future__ import annotations

import contextlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

from .. import __version__
from ..rng import RngHandle
from . import io
from .registry import Experiment, PointResult, Row


@dataclass
class RunManifest:
    experiment: str
    points: list[dict]
    seed: int
    stream: int
    replicas: int
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    wall_time: float = 0.0
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        grid_steps = sorted({p["grid_step"] for p in self.points if "grid_step" in p})
        methods = sorted({p.get("method", "default") for p in self.points})
        return {
            "experiment": self.experiment,
            "points": self.points,
            "seed": self.seed,
            "stream": self.stream,
            "grid_step": grid_steps[0] if len(grid_steps) == 1 else grid_steps,
            "method": methods[0] if len(methods) == 1 else methods,
            "replicas": self.replicas,
            "outputs": self.outputs,
            "version": self.version,
            "wall_time_s": round(self.wall_time, 3),
            "notes": self.notes,
        }


@dataclass
class ExperimentResult:
    experiment: str
    rows: list[Row]
    results: list[PointResult]
    manifest: RunManifest

    @property
    def passed(self) -> bool:
        return all(r.pass_flag for r in self.rows)


@contextlib.contextmanager
def worker_map(replicas: int) -> Iterator[Callable]:
    """Builtin ``map`` for one replica, else an order-preserving process-pool map."""
    if replicas <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=replicas) as pool:
        yield pool.map


def _run_point(args) -> PointResult:
    exp, params, handle = args
    return exp.point(params, handle, map)


def run(
    exp: Experiment,
    points: list[dict],
    handle: RngHandle,
    mapper: Callable = map,
    replicas: int = 1,
) -> ExperimentResult:
    start = time.perf_counter()
    if exp.inner_parallel:
        results = [exp.point(p, handle.child(j), mapper) for j, p in enumerate(points)]
    else:
        results = list(mapper(_run_point, [(exp, p, handle.child(j)) for j, p in enumerate(points)]))
    rows = [r for res in results for r in res.rows]
    if exp.summary is not None:
        rows += exp.summary(results)
    notes = [n for res in results for n in res.notes]
    man = RunManifest(exp.name, points, handle.seed, handle.stream, replicas, notes=notes)
    man.wall_time = time.perf_counter() - start
    return ExperimentResult(exp.name, rows, results, man)


def write_result(res: ExperimentResult, exp: Experiment, out: Path, prefix: str = "") -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    names = [p.name for p in exp.params]
    for r in res.rows:
        names += [k for k in r.params if k not in names]
    paths = [out / f"{prefix}{exp.name}.csv"]
    io.write_experiment_csv(paths[0], exp.name, names, res.rows)
    for j, pr in enumerate(res.results):
        for tag, snap in pr.snapshots.items():
            suffix = f"_p{j}" if len(res.results) > 1 else ""
            paths.append(io.write_snapshot_file(out / f"{prefix}{exp.name}_{tag}{suffix}.csv", snap))
    res.manifest.outputs = [p.name for p in paths]
    man_path = out / f"{prefix}{exp.name}_manifest.json"
    io.write_manifest(man_path, res.manifest.as_dict())
    return paths + [man_path]
