"""Run outputs: per-step CSV report, legacy VTK fields and a JSON summary."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .report import FLIP_CATEGORIES, RunReport, StepRecord
from .solver import DofLayout
from .topology import MixedDimDomain

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    ["t", "dt", "newton_iters", "cum_newton_iters", "wasted_iters", "cuts", "cum_cuts"]
    + [f"flips_{k}" for k in FLIP_CATEGORIES]
    + [f"cum_flips_{k}" for k in FLIP_CATEGORIES]
    + [f"wasted_flips_{k}" for k in FLIP_CATEGORIES]
    + [f"cum_wasted_flips_{k}" for k in FLIP_CATEGORIES]
    + ["mass_phase0", "mass_phase1", "clip_events"]
)
_FLOAT_COLUMNS = {"t", "dt", "mass_phase0", "mass_phase1"}

VALID_VTK_TYPES = {1, 3, 5, 7, 9, 10, 12}


def _rows(report: RunReport) -> Iterable[dict]:
    cum = {"iters": 0, "cuts": 0}
    cum_flips = dict.fromkeys(FLIP_CATEGORIES, 0)
    cum_wasted = dict.fromkeys(FLIP_CATEGORIES, 0)
    for s in report.steps:
        cum["iters"] += s.newton_iters
        cum["cuts"] += s.cuts
        row = {
            "t": s.t,
            "dt": s.dt,
            "newton_iters": s.newton_iters,
            "cum_newton_iters": cum["iters"],
            "wasted_iters": s.wasted_iters,
            "cuts": s.cuts,
            "cum_cuts": cum["cuts"],
            "mass_phase0": s.mass_phase0,
            "mass_phase1": s.mass_phase1,
            "clip_events": s.clip_events,
        }
        for k in FLIP_CATEGORIES:
            cum_flips[k] += s.flips.get(k, 0)
            cum_wasted[k] += s.wasted_flips.get(k, 0)
            row[f"flips_{k}"] = s.flips.get(k, 0)
            row[f"cum_flips_{k}"] = cum_flips[k]
            row[f"wasted_flips_{k}"] = s.wasted_flips.get(k, 0)
            row[f"cum_wasted_flips_{k}"] = cum_wasted[k]
        yield row


def write_report_csv(report: RunReport, path) -> Path:
    """One row per accepted step; floats are written with full precision."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for row in _rows(report):
                writer.writerow({k: repr(float(v)) if k in _FLOAT_COLUMNS else int(v) for k, v in row.items()})
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_report_csv(path) -> List[StepRecord]:
    """Parse a report written by :func:`write_report_csv` back into step records."""
    steps = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            steps.append(
                StepRecord(
                    t=float(row["t"]),
                    dt=float(row["dt"]),
                    newton_iters=int(row["newton_iters"]),
                    wasted_iters=int(row["wasted_iters"]),
                    cuts=int(row["cuts"]),
                    flips={k: int(row[f"flips_{k}"]) for k in FLIP_CATEGORIES},
                    wasted_flips={k: int(row[f"wasted_flips_{k}"]) for k in FLIP_CATEGORIES},
                    mass_phase0=float(row["mass_phase0"]),
                    mass_phase1=float(row["mass_phase1"]),
                    clip_events=int(row["clip_events"]),
                )
            )
    return steps


def write_vtk(path, domain: MixedDimDomain, x: np.ndarray, layout: DofLayout, title: str = "mdflow fields") -> Path:
    """All subdomains in one legacy ASCII unstructured grid.

    Cell data: ``p``, ``S0``, ``subdomain`` (id) and ``dim``.
    """
    points, conn, types, p, s0, sid, dim = [], [], [], [], [], [], []
    offset = 0
    for sd in domain.subdomains:
        g = sd.grid
        points.append(g.nodes)
        for cn in g.cell_nodes:
            conn.append([len(cn)] + [int(i) + offset for i in cn])
        types.append(g.vtk_cell_types())
        p.append(x[layout[("p", sd.id)]])
        s0.append(x[layout[("s0", sd.id)]])
        sid.append(np.full(g.num_cells, sd.id))
        dim.append(np.full(g.num_cells, sd.dim))
        offset += len(g.nodes)
    points = np.vstack(points)
    types = np.concatenate(types)
    n_cells = len(conn)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(points)} double",
    ]
    lines += [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in points]
    lines.append(f"CELLS {n_cells} {sum(len(c) for c in conn)}")
    lines += [" ".join(map(str, c)) for c in conn]
    lines.append(f"CELL_TYPES {n_cells}")
    lines += [str(int(t)) for t in types]
    lines.append(f"CELL_DATA {n_cells}")
    for name, values, fmt in (
        ("p", np.concatenate(p), "double"),
        ("S0", np.concatenate(s0), "double"),
        ("subdomain", np.concatenate(sid), "int"),
        ("dim", np.concatenate(dim), "int"),
    ):
        lines.append(f"SCALARS {name} {fmt} 1")
        lines.append("LOOKUP_TABLE default")
        if fmt == "double":
            lines += [f"{v:.17g}" for v in values]
        else:
            lines += [str(int(v)) for v in values]
    path = Path(path)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write fields to {path}: {exc}") from exc
    return path


def check_vtk(path) -> Dict[str, object]:
    """Structural check of a legacy ASCII unstructured grid.

    Verifies the header, point/cell counts, connectivity bounds, cell types
    and the length of every cell-data array.

    Returns:
        ``{"points": n, "cells": n, "arrays": {name: length}}``.

    Raises:
        ValueError: describing the first inconsistency found.
    """
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk DataFile Version"):
        raise ValueError(f"{path}: missing vtk header")
    if tokens[2].strip() != "ASCII" or tokens[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise ValueError(f"{path}: expected ASCII UNSTRUCTURED_GRID")
    body = " ".join(tokens[4:]).split()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise ValueError(f"{path}: unexpected end of file")
        out = body[pos : pos + n]
        pos += n
        return out

    key, n_points, _ = take(3)
    if key != "POINTS":
        raise ValueError(f"{path}: expected POINTS, got {key}")
    n_points = int(n_points)
    coords = np.array(take(3 * n_points), dtype=float)
    if not np.all(np.isfinite(coords)):
        raise ValueError(f"{path}: non-finite point coordinates")
    key, n_cells, size = take(3)
    if key != "CELLS":
        raise ValueError(f"{path}: expected CELLS, got {key}")
    n_cells, size = int(n_cells), int(size)
    conn = np.array(take(size), dtype=int)
    k, count = 0, 0
    while k < size:
        nn = conn[k]
        ids = conn[k + 1 : k + 1 + nn]
        if len(ids) != nn or np.any(ids < 0) or np.any(ids >= n_points):
            raise ValueError(f"{path}: bad connectivity for cell {count}")
        k += nn + 1
        count += 1
    if count != n_cells:
        raise ValueError(f"{path}: CELLS declares {n_cells} cells, found {count}")
    key, n_types = take(2)
    if key != "CELL_TYPES" or int(n_types) != n_cells:
        raise ValueError(f"{path}: CELL_TYPES count mismatch")
    types = set(int(t) for t in take(n_cells))
    if not types <= VALID_VTK_TYPES:
        raise ValueError(f"{path}: unknown cell types {sorted(types - VALID_VTK_TYPES)}")
    arrays = {}
    if pos < len(body):
        key, n_data = take(2)
        if key != "CELL_DATA" or int(n_data) != n_cells:
            raise ValueError(f"{path}: CELL_DATA count mismatch")
        while pos < len(body):
            key, name, _, comps = take(4)
            if key != "SCALARS":
                raise ValueError(f"{path}: expected SCALARS, got {key}")
            take(2)  # LOOKUP_TABLE default
            values = np.array(take(n_cells * int(comps)), dtype=float)
            if not np.all(np.isfinite(values)):
                raise ValueError(f"{path}: non-finite values in {name}")
            arrays[name] = values.size
    return {"points": n_points, "cells": n_cells, "arrays": arrays}


def write_summary(path, report: RunReport, extra: Optional[dict] = None) -> Path:
    data = report.summary()
    if extra:
        data.update(extra)
    path = Path(path)
    try:
        path.write_text(json.dumps(data, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write summary to {path}: {exc}") from exc
    return path


def field_filename(t: float) -> str:
    return f"fields_{t:.6g}.vtk"


def write_outputs(
    report: RunReport,
    states: Sequence[Tuple[float, np.ndarray]],
    domain: MixedDimDomain,
    layout: DofLayout,
    out_dir,
    num_fields: int = 10,
    extra: Optional[dict] = None,
) -> Dict[str, object]:
    """Write ``report.csv``, ``summary.json`` and up to ``num_fields + 1`` VTK files.

    The VTK snapshots are spread evenly over the accepted states and always
    include the first and the last one.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    files = {"report": write_report_csv(report, out / "report.csv")}
    picks = sorted(set(np.linspace(0, len(states) - 1, min(len(states), num_fields + 1)).round().astype(int)))
    files["fields"] = [write_vtk(out / field_filename(states[i][0]), domain, states[i][1], layout) for i in picks]
    files["summary"] = write_summary(out / "summary.json", report, extra)
    return files
