"""Pareto dominance, front filtering, convex coverage sets and hypervolume (maximisation)."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import List, NamedTuple, Sequence

import numpy as np

TOL = 1e-9

STRICT = "strict"
WEAK = "weak"
NONE = "none"


class ReturnPoint(NamedTuple):
    value: tuple
    label: str = ""


def _as_array(points) -> np.ndarray:
    arr = np.asarray([p.value if isinstance(p, ReturnPoint) else p for p in points], dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2:
        raise ValueError("points must be a sequence of equal-length vectors")
    if not np.isfinite(arr).all():
        raise ValueError("return points must be finite")
    return arr


def dominates(a, b, tol: float = TOL) -> str:
    """``"strict"``, ``"weak"`` (equal within ``tol``) or ``"none"``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if np.all(a >= b - tol):
        return STRICT if np.any(a > b + tol) else WEAK
    return NONE


def _unique_rows(arr: np.ndarray, tol: float) -> List[int]:
    keep: List[int] = []
    for i, p in enumerate(arr):
        if not any(np.all(np.abs(arr[k] - p) <= tol) for k in keep):
            keep.append(i)
    return keep


def pareto_indices(points, tol: float = TOL) -> List[int]:
    """Indices of the non-dominated points, one representative per duplicate group."""
    arr = _as_array(points)
    idx = _unique_rows(arr, tol)
    out = []
    for i in idx:
        if not any(j != i and dominates(arr[j], arr[i], tol) == STRICT for j in idx):
            out.append(i)
    return out


def pareto_front(points, tol: float = TOL) -> list:
    pts = list(points)
    return [pts[i] for i in pareto_indices(pts, tol)]


def ccs_indices(points, tol: float = TOL) -> List[int]:
    """Indices of the Pareto points on the upper-right convex envelope (two objectives).

    Points lying on a hull segment within ``tol`` are kept since they attain
    the optimum at the supporting weight.
    """
    arr = _as_array(points)
    if arr.shape[1] != 2:
        raise ValueError("convex coverage set is implemented for two objectives")
    front = pareto_indices(arr, tol)
    # ascending in the first objective means descending in the second
    front.sort(key=lambda i: (arr[i, 0], -arr[i, 1]))
    hull: List[int] = []
    for i in front:
        while len(hull) >= 2 and _below_chord(arr[hull[-2]], arr[hull[-1]], arr[i], tol):
            hull.pop()
        hull.append(i)
    return hull


def _below_chord(a: np.ndarray, b: np.ndarray, c: np.ndarray, tol: float) -> bool:
    """True when ``b`` is strictly worse than the chord ``a-c`` under its normal weight."""
    dx, dy = c[0] - a[0], c[1] - a[1]
    w = np.array([-dy, dx]) / (dx - dy)
    return float(w @ b) < float(w @ a) - tol


def ccs(points, tol: float = TOL) -> list:
    pts = list(points)
    return [pts[i] for i in ccs_indices(pts, tol)]


def hypervolume(points, reference) -> float:
    """Area dominated by ``points`` and bounded below by ``reference``."""
    arr = _as_array(points)
    ref = np.asarray(reference, dtype=float)
    if len(arr) == 0:
        return 0.0
    if arr.shape[1] != 2 or ref.shape != (2,):
        raise ValueError("hypervolume is implemented for two objectives")
    if (arr < ref).any():
        raise ValueError("every point must weakly dominate the reference point")
    order = np.lexsort((-arr[:, 1], -arr[:, 0]))
    area, y_top = 0.0, ref[1]
    for x, y in arr[order]:
        if y > y_top:
            area += (x - ref[0]) * (y - y_top)
            y_top = y
    return float(area)


def read_points(path) -> List[ReturnPoint]:
    """Load ``R_tran``/``R_tele`` rows from a CSV, labelled by file and ω when present."""
    path = Path(path)
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"R_tran", "R_tele"} <= set(reader.fieldnames):
            raise ValueError(f"{path} lacks R_tran/R_tele columns")
        for k, row in enumerate(reader):
            omega = row.get("omega_tran")
            label = f"{path.stem}:omega={omega}" if omega not in (None, "") else f"{path.stem}:{k}"
            out.append(ReturnPoint((float(row["R_tran"]), float(row["R_tele"])), label))
    return out


def write_points(path, points: Sequence[ReturnPoint]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "R_tran", "R_tele"])
        for p in points:
            writer.writerow([p.label, repr(float(p.value[0])), repr(float(p.value[1]))])
