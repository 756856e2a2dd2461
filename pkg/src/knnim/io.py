"""File formats: unit and distance CSVs in, estimate / simulation / probability reports out.

Unit ids in files are arbitrary strings (1-based integers by convention); internally
units are 0-based positions in the units file.

units.csv       header ``id,treatment,response``
distances.csv   header ``src,dst,distance`` or ``src,dst,rank``; one row per ordered
                pair, row ``src,dst`` is src's view of dst. Missing pairs never interact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .estimators import EffectEstimate
from .model import DistanceMatrix, Exposure, count_grid, neighbor_patterns

UNITS_HEADER = ["id", "treatment", "response"]
DISTANCE_HEADERS = (["src", "dst", "distance"], ["src", "dst", "rank"])
ESTIMATES_HEADER = ["estimator", "assumption", "estimate", "se", "ci_lower", "ci_upper"]
SIM_HEADER = ["estimator", "truth", "emp_ev", "emp_var", "emp_sd", "mean_var_est", "n_floored"]


class InputError(ValueError):
    """Malformed or inconsistent input file."""


def _header(reader: csv.reader, path: Path) -> list[str]:
    try:
        return [h.strip() for h in next(reader)]
    except StopIteration:
        raise InputError(f"{path}: empty file") from None


@dataclass(frozen=True)
class Units:
    ids: list[str]
    w: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ids)

    def index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.ids)}


def read_units(path: str | Path) -> Units:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if _header(reader, path) != UNITS_HEADER:
            raise InputError(f"{path}: header must be {','.join(UNITS_HEADER)}")
        ids, w, y = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise InputError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            uid, t, r = (c.strip() for c in row)
            if t not in ("0", "1"):
                raise InputError(f"{path}:{lineno}: treatment must be 0 or 1, got {t!r}")
            try:
                resp = float(r)
            except ValueError:
                raise InputError(f"{path}:{lineno}: response {r!r} is not a number") from None
            if not math.isfinite(resp):
                raise InputError(f"{path}:{lineno}: response must be finite")
            ids.append(uid)
            w.append(int(t))
            y.append(resp)
    if len(set(ids)) != len(ids):
        raise InputError(f"{path}: duplicate unit ids")
    if len(ids) < 2:
        raise InputError(f"{path}: need at least 2 units")
    return Units(ids, np.array(w, dtype=np.int8), np.array(y))


def read_distance_ids(path: str | Path) -> list[str]:
    """Unit ids in order of first appearance in a distances file."""
    path = Path(path)
    seen: dict[str, None] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        _header(reader, path)
        for row in reader:
            if len(row) >= 2:
                seen.setdefault(row[0].strip())
                seen.setdefault(row[1].strip())
    return list(seen)


def read_distances(path: str | Path, ids: Sequence[str]) -> DistanceMatrix:
    path = Path(path)
    index = {u: i for i, u in enumerate(ids)}
    d = np.full((len(ids), len(ids)), np.inf)
    np.fill_diagonal(d, 0.0)
    filled = np.zeros_like(d, dtype=bool)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if _header(reader, path) not in DISTANCE_HEADERS:
            raise InputError(f"{path}: header must be src,dst,distance or src,dst,rank")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise InputError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            src, dst, val = (c.strip() for c in row)
            if src not in index or dst not in index:
                raise InputError(f"{path}:{lineno}: unknown unit id in ({src}, {dst})")
            i, j = index[src], index[dst]
            if i == j:
                continue
            if filled[i, j]:
                raise InputError(f"{path}:{lineno}: duplicate pair ({src}, {dst})")
            try:
                value = float(val)
            except ValueError:
                raise InputError(f"{path}:{lineno}: distance {val!r} is not a number") from None
            if math.isnan(value) or value < 0:
                raise InputError(f"{path}:{lineno}: distance must be nonnegative")
            d[i, j] = value
            filled[i, j] = True
    return DistanceMatrix(d)


def _fmt(x: float) -> str:
    s = f"{x:.4f}"
    return "0.0000" if s == "-0.0000" else s


def estimate_rows(estimates: Iterable[EffectEstimate], z: float) -> list[dict]:
    return [
        {
            "estimator": e.label,
            "assumption": e.assumption,
            "estimate": e.estimate,
            "se": e.se,
            "ci_lower": e.estimate - z * e.se,
            "ci_upper": e.estimate + z * e.se,
        }
        for e in estimates
    ]


def write_estimates_csv(path: str | Path, rows: list[dict]) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(ESTIMATES_HEADER)
        for r in rows:
            out.writerow([r["estimator"], r["assumption"]] + [_fmt(r[h]) for h in ESTIMATES_HEADER[2:]])


def read_estimates_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for h in ESTIMATES_HEADER[2:]:
            r[h] = float(r[h])
    return rows


def count_rows(counts: dict[Exposure, int], k: int) -> list[list]:
    return [[name, *vals] for name, vals in count_grid(counts, k)]


def write_counts_csv(path: str | Path, counts: dict[Exposure, int], k: int) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["direct"] + neighbor_patterns(k))
        out.writerows(count_rows(counts, k))


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def write_sim_csv(path: str | Path, summary) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(SIM_HEADER)
        for r in summary.rows:
            out.writerow(
                [r.label, _fmt(r.truth), _fmt(r.emp_ev), _fmt(r.emp_var), _fmt(r.emp_sd),
                 _fmt(r.mean_var_est), r.n_floored]
            )


def read_sim_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for h in SIM_HEADER[1:-1]:
            r[h] = float(r[h])
        r["n_floored"] = int(r["n_floored"])
    return rows
