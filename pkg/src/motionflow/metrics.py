"""Oracle-based evaluation metrics and the metrics report container."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size < 2:
        raise ShapeError("pearson needs two equal-length vectors of size >= 2")
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def _pairwise_mean_distance(x: np.ndarray, y: np.ndarray) -> float:
    d2 = (np.sum(x**2, axis=1)[:, None] + np.sum(y**2, axis=1)[None, :]
          - 2.0 * x @ y.T)
    return float(np.mean(np.sqrt(np.maximum(d2, 0.0))))


def _within_mean_distance(x: np.ndarray) -> float:
    """Unbiased within-sample mean distance (diagonal excluded)."""
    n = len(x)
    d2 = (np.sum(x**2, axis=1)[:, None] + np.sum(x**2, axis=1)[None, :]
          - 2.0 * x @ x.T)
    d = np.sqrt(np.maximum(d2, 0.0))
    return float((d.sum() - np.trace(d)) / (n * (n - 1)))


def energy_distance(x: np.ndarray, y: np.ndarray, max_points: int = 2000,
                    seed: int = 0) -> float:
    """Two-sample energy distance sqrt(2 E|x-y| - E|x-x'| - E|y-y'|).

    Within-sample means use the unbiased (off-diagonal) estimator; tiny
    negative estimates are clipped at zero. Large inputs are subsampled
    deterministically.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"expected matching sample matrices, got {x.shape} vs {y.shape}")
    if len(x) < 2 or len(y) < 2:
        raise ShapeError("energy distance needs at least 2 samples per side")
    rng = np.random.default_rng(seed)
    if len(x) > max_points:
        x = x[rng.choice(len(x), size=max_points, replace=False)]
    if len(y) > max_points:
        y = y[rng.choice(len(y), size=max_points, replace=False)]
    stat = (2.0 * _pairwise_mean_distance(x, y)
            - _within_mean_distance(x) - _within_mean_distance(y))
    return float(np.sqrt(max(stat, 0.0)))


def sliced_wasserstein(x: np.ndarray, y: np.ndarray, n_projections: int = 64,
                       seed: int = 0) -> float:
    """Cross-check metric: mean 1-D Wasserstein over random projections."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        n = min(len(x), len(y))
        rng0 = np.random.default_rng(seed)
        x = x[rng0.choice(len(x), size=n, replace=False)]
        y = y[rng0.choice(len(y), size=n, replace=False)]
    rng = np.random.default_rng(seed + 1)
    dims = x.shape[1]
    total = 0.0
    for _ in range(n_projections):
        u = rng.standard_normal(dims)
        u /= np.linalg.norm(u)
        total += np.mean(np.abs(np.sort(x @ u) - np.sort(y @ u)))
    return float(total / n_projections)


def coefficient_correlation(generated: list[np.ndarray],
                            oracle: list[np.ndarray]) -> float:
    """Mean over directions of the Pearson correlation between generated and
    oracle coefficient trajectories, pooled over clips and frames."""
    if not generated or len(generated) != len(oracle):
        raise ShapeError("need matching non-empty trajectory lists")
    gen = np.concatenate(generated, axis=0)
    orc = np.concatenate(oracle, axis=0)
    if gen.shape != orc.shape:
        raise ShapeError(f"pooled shapes differ: {gen.shape} vs {orc.shape}")
    return float(np.mean([pearson(gen[:, m], orc[:, m]) for m in range(gen.shape[1])]))


def boundary_jump_stats(windows: list[np.ndarray]) -> dict:
    """Continuity statistic for consecutive generated windows.

    Jump = distance between the first frame of a window and the last frame
    of its predecessor; baseline = median within-window frame-to-frame
    distance. Returns medians and their ratio.
    """
    if len(windows) < 2:
        raise ShapeError("need at least two consecutive windows")
    jumps = []
    intra = []
    for prev_win, win in zip(windows[:-1], windows[1:]):
        jumps.append(float(np.linalg.norm(win[0] - prev_win[-1])))
    for win in windows:
        intra.extend(np.linalg.norm(np.diff(win, axis=0), axis=1).tolist())
    median_jump = float(np.median(jumps))
    median_intra = float(np.median(intra))
    ratio = median_jump / median_intra if median_intra > 0 else np.inf
    return {"median_jump": median_jump, "median_intra_delta": median_intra,
            "jump_ratio": float(ratio)}


def velocity_error(generated: np.ndarray, oracle: np.ndarray) -> float:
    """Mean absolute mismatch of one-frame differences (temporal fidelity)."""
    generated = np.asarray(generated, dtype=np.float64)
    oracle = np.asarray(oracle, dtype=np.float64)
    if generated.shape != oracle.shape or generated.shape[0] < 2:
        raise ShapeError("need two equal sequences with >= 2 frames")
    return float(np.mean(np.abs(np.diff(generated, axis=0) - np.diff(oracle, axis=0))))


@dataclass
class MetricsReport:
    """Per-run scalar metrics tagged with provenance."""

    config_hash: str
    seed: int
    scalars: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {"config_hash": self.config_hash, "seed": self.seed}
        out.update(self.scalars)
        return out

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.row(), indent=1, sort_keys=True))


def write_report_table(rows: list[dict], csv_path, json_path):
    """Write the same rows as CSV and JSON (scalar-for-scalar identical)."""
    if not rows:
        raise DataError("no rows to write")
    keys = list(rows[0].keys())
    for row in rows:
        if list(row.keys()) != keys:
            raise DataError("inconsistent row keys in report table")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    Path(json_path).write_text(json.dumps(rows, indent=1))


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = []
        for raw in csv.DictReader(fh):
            row = {}
            for key, val in raw.items():
                try:
                    row[key] = int(val)
                except ValueError:
                    try:
                        row[key] = float(val)
                    except ValueError:
                        row[key] = val
            rows.append(row)
        return rows
