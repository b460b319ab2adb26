"""CSV and JSON output.

Numbers are written with ``repr`` so the files are byte-identical whenever the
underlying floats are, and can be parsed back losslessly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from ..gibbs import EnsembleState, write_snapshot
from .registry import Row

ROW_TAIL = ["quantity", "log_p", "stderr_log", "n", "analytic_lo", "analytic_hi", "pass_flag"]


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def params_string(params: dict) -> str:
    return ";".join(f"{k}={fmt(v)}" for k, v in params.items())


def _row_tail(r: Row) -> list[str]:
    return [r.quantity, fmt(r.estimate), fmt(r.stderr), str(r.n), fmt(r.lo), fmt(r.hi), fmt(r.pass_flag)]


def write_experiment_csv(path: Path, experiment: str, param_names: Sequence[str], rows: Iterable[Row]) -> None:
    """One column per parameter; parameters a row lacks are left empty."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["experiment", *param_names, *ROW_TAIL])
        for r in rows:
            wr.writerow([experiment, *(fmt(r.params[k]) if k in r.params else "" for k in param_names), *_row_tail(r)])


def write_combined_csv(path: Path, tagged_rows: Iterable[tuple[str, Row]]) -> None:
    """Rows of several experiments; parameters packed as ``k=v;k=v``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["experiment", "params", *ROW_TAIL])
        for name, r in tagged_rows:
            wr.writerow([name, params_string(r.params), *_row_tail(r)])


def write_snapshot_file(path: Path, snap) -> Path:
    if isinstance(snap, EnsembleState):
        write_snapshot(snap, path)
    elif isinstance(snap, dict):
        path = path.with_suffix(".json")
        path.write_text(json.dumps(snap, indent=2, sort_keys=True) + "\n")
    else:
        header, rows = snap
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for row in rows:
                wr.writerow([fmt(float(v)) for v in row])
    return path


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def row_passes(d: dict) -> bool:
    """Recompute the pass flag of a CSV row from its own numbers."""
    from .registry import passes

    return passes(float(d["log_p"]), float(d["stderr_log"]), float(d["analytic_lo"]), float(d["analytic_hi"]))


def write_manifest(path: Path, manifest: dict) -> None:
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
