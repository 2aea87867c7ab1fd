"""k-means type alternating minimization of the empirical objective.

Each Lloyd step assigns every observation to its nearest trajectory (smallest
index on ties) and refits every trajectory on its own points with the exact
banded smoother.  Because both half-steps minimize the same objective, the
objective never increases; the assignment space is finite, so iteration stops
once an assignment repeats.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DataError, EmptyCluster, ShapeError, TooFewPoints
from .smoother import SmootherConfig, WeightedPoints, fit_values
from .trajectory import TrajectorySet, penalty_values, separation_check

log = logging.getLogger(__name__)

MAX_ITERATIONS = 100
REL_TOL = 1e-12
INIT_STRATEGIES = ("perturbed-global", "random-points")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Unlabeled observations: ``times`` (n,) in [0, 1] and ``targets`` (n, d)."""

    times: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=np.float64).reshape(-1)
        y = np.array(self.targets, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[0] != t.shape[0]:
            raise DataError(f"times ({t.shape[0]}) and targets {y.shape} disagree")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise DataError("non-finite observation")
        if np.any((t < 0.0) | (t > 1.0)):
            raise DataError("observation time outside [0, 1]")
        t.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "targets", y)

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def d(self) -> int:
        return self.targets.shape[1]

    def subset(self, mask) -> WeightedPoints:
        return WeightedPoints(self.times[mask], self.targets[mask])


@dataclass(frozen=True)
class SolveReport:
    objective_trace: list
    iterations: int
    converged: bool
    restarts_used: int
    separation_ok: bool
    min_gap: float
    labels: np.ndarray = field(repr=False, default=None)

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def as_dict(self) -> dict:
        return {
            "objective": self.objective,
            "objective_trace": list(self.objective_trace),
            "iterations": self.iterations,
            "converged": self.converged,
            "restarts_used": self.restarts_used,
            "separation_ok": self.separation_ok,
            "min_gap": self.min_gap,
        }


def _check_shapes(tset: TrajectorySet, data: Dataset) -> None:
    if tset.d != data.d:
        raise ShapeError(f"trajectories live in R^{tset.d} but data in R^{data.d}")


def assign(tset: TrajectorySet, data: Dataset) -> np.ndarray:
    """Index of the nearest trajectory for every observation (0-based, ties to the smallest)."""
    _check_shapes(tset, data)
    labels, _ = _kernels.assign_nearest(tset.values, data.times, data.targets)
    return labels


def objective_empirical(tset: TrajectorySet, data: Dataset, lam: float) -> float:
    _check_shapes(tset, data)
    if data.n == 0:
        raise DataError("empty dataset")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    _, sq = _kernels.assign_nearest(tset.values, data.times, data.targets)
    return float(np.sum(sq) / data.n + lam * sum(penalty_values(v, tset.s) for v in tset.values))


def _reseed_empty(old: np.ndarray, values: np.ndarray, labels: np.ndarray, data: Dataset,
                  empty: list) -> None:
    # empty trajectories become constants at the observations farthest from
    # the center they were assigned to
    fitted = _kernels.interp_values(old, data.times)[labels, np.arange(data.n)]
    sq = np.sum((data.targets - fitted) ** 2, axis=1)
    order = np.argsort(-sq, kind="stable")
    for j, i in zip(empty, order):
        values[j] = data.targets[i]


def lloyd_step(tset: TrajectorySet, data: Dataset, cfg: SmootherConfig):
    """One assignment + refit sweep; returns (new set, assignment used for the refit)."""
    _check_shapes(tset, data)
    if cfg.m != tset.m or cfg.s != tset.s:
        raise ShapeError(f"smoother grid/order ({cfg.m}, {cfg.s}) != set ({tset.m}, {tset.s})")
    labels = assign(tset, data)
    return _refit(tset, labels, data, cfg), labels


def _refit(tset: TrajectorySet, labels: np.ndarray, data: Dataset, cfg: SmootherConfig) -> TrajectorySet:
    values = np.array(tset.values)
    empty = []
    for j in range(tset.k):
        mask = labels == j
        try:
            values[j] = fit_values(data.subset(mask), data.n, cfg)
        except EmptyCluster:
            empty.append(j)
    if empty:
        log.debug("reseeding empty clusters %s", empty)
        _reseed_empty(tset.values, values, labels, data, empty)
    return tset.with_values(values)


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(points.shape[0])]]
    sq = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = sq.sum()
        if total > 0:
            idx = rng.choice(points.shape[0], p=sq / total)
        else:
            idx = rng.integers(points.shape[0])
        centers.append(points[idx])
        sq = np.minimum(sq, np.sum((points - points[idx]) ** 2, axis=1))
    return np.array(centers)


def initialize(data: Dataset, k: int, cfg: SmootherConfig, delta: float,
               rng: np.random.Generator, strategy: str = "perturbed-global") -> TrajectorySet:
    """Starting trajectories for one restart.

    ``perturbed-global`` fits one smoother to all data and offsets k copies of
    it by k-means++ seeds drawn from the residuals; ``random-points`` uses k
    constant trajectories at randomly chosen observations.
    """
    if strategy == "perturbed-global":
        base = fit_values(data.subset(slice(None)), data.n, cfg)
        resid = data.targets - _kernels.interp_values(base[None], data.times)[0]
        offsets = _kmeanspp(resid, k, rng)
        values = base[None, :, :] + offsets[:, None, :]
    elif strategy == "random-points":
        idx = rng.choice(data.n, size=k, replace=False)
        values = np.repeat(data.targets[idx][:, None, :], cfg.m, axis=1)
    else:
        raise ValueError(f"unknown initialization {strategy!r}; expected one of {INIT_STRATEGIES}")
    return TrajectorySet(values, s=cfg.s, delta=delta)


def from_labels(labels, data: Dataset, k: int, cfg: SmootherConfig, delta: float) -> TrajectorySet:
    """Trajectories refitted on a given assignment (empty clusters reseeded)."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (data.n,) or labels.min() < 0 or labels.max() >= k:
        raise ShapeError("labels must be a length-n array of indices in [0, k)")
    start = TrajectorySet(np.zeros((k, cfg.m, data.d)), s=cfg.s, delta=delta)
    return _refit(start, labels, data, cfg)


def iterate(tset: TrajectorySet, data: Dataset, cfg: SmootherConfig,
            max_iter: int = MAX_ITERATIONS):
    """Lloyd iterations from ``tset``; returns (set, labels, trace, iterations, converged)."""
    trace = [objective_empirical(tset, data, cfg.lam)]
    labels = assign(tset, data)
    converged = False
    it = 0
    while it < max_iter:
        tset = _refit(tset, labels, data, cfg)
        it += 1
        trace.append(objective_empirical(tset, data, cfg.lam))
        new_labels = assign(tset, data)
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
        if trace[-2] - trace[-1] <= REL_TOL * abs(trace[-2]):
            break
    return tset, labels, trace, it, converged


def solve(data: Dataset, k: int, cfg: SmootherConfig, delta: float = 1.0, restarts: int = 5,
          seed: int = 0, init: str = "perturbed-global", initial_labels=None):
    """Best of several Lloyd runs; returns (TrajectorySet, SolveReport).

    Restart r draws from its own stream ``default_rng([seed, r])``.  When
    ``initial_labels`` (an iterable of assignments) is given, each assignment
    seeds one restart instead and ``restarts`` is ignored.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if data.n < k:
        raise TooFewPoints(f"{data.n} observations cannot fill {k} trajectories")
    if initial_labels is None and restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")

    if initial_labels is not None:
        starts = (from_labels(lab, data, k, cfg, delta) for lab in initial_labels)
    else:
        starts = (initialize(data, k, cfg, delta, np.random.default_rng([seed, r]), init)
                  for r in range(restarts))

    best = None
    used = 0
    for start in starts:
        used += 1
        result = iterate(start, data, cfg)
        if best is None or result[2][-1] < best[2][-1]:
            best = result
    tset, labels, trace, iterations, converged = best
    ok, gap = separation_check(tset)
    report = SolveReport(
        objective_trace=[float(v) for v in trace],
        iterations=iterations,
        converged=converged,
        restarts_used=used,
        separation_ok=bool(ok),
        min_gap=float(gap),
        labels=labels,
    )
    return tset, report


# ---------------------------------------------------------------------------
# dataset CSV: t,y1..yd[,label]
# ---------------------------------------------------------------------------

def write_dataset_csv(data: Dataset, path, labels=None) -> None:
    header = ["t"] + [f"y{c + 1}" for c in range(data.d)]
    if labels is not None:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(data.times[i]))] + [repr(float(v)) for v in data.targets[i]]
            if labels is not None:
                row.append(int(labels[i]))
            writer.writerow(row)


def read_dataset_csv(path):
    """Returns (Dataset, labels or None)."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_label = header[-1] == "label"
    ycols = header[1:-1] if has_label else header[1:]
    d = len(ycols)
    if header[0] != "t" or d < 1 or ycols != [f"y{c + 1}" for c in range(d)]:
        raise DataError(f"{path}: expected header t,y1..yd[,label], got {','.join(header)}")
    width = len(header)
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        try:
            body.append([float(x) for x in row])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not body:
        raise DataError(f"{path}: no observations")
    arr = np.array(body)
    labels = arr[:, -1].astype(np.int64) if has_label else None
    data = Dataset(arr[:, 0], arr[:, 1 : 1 + d])
    return data, labels
