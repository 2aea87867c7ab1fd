"""Grid trajectories, Sobolev-type norms and trajectory sets.

A trajectory is stored as its values on the uniform grid ``t_g = g/(m-1)``
and evaluated between nodes by linear interpolation.  Derivative penalties
use scaled forward differences, so the penalty of order ``s`` vanishes on
grid samples of polynomials of degree below ``s``.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import comb

from . import _kernels
from .errors import DataError, DomainError, GridTooCoarse, ShapeError

DEFAULT_GRID_SIZE = 201


def grid(m: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, m)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _check_order(m: int, s: int) -> None:
    if s < 1:
        raise ValueError(f"penalty order must be >= 1, got {s}")
    if m <= s:
        raise GridTooCoarse(f"grid of {m} nodes cannot carry order-{s} differences")


@dataclass(frozen=True, eq=False)
class GridTrajectory:
    """One trajectory: ``values`` has shape (m, d)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ShapeError(f"trajectory values must have shape (m>=2, d), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("trajectory values must be finite")
        object.__setattr__(self, "values", _frozen(arr))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def grid(self) -> np.ndarray:
        return grid(self.m)

    @classmethod
    def from_function(cls, fn, m: int = DEFAULT_GRID_SIZE) -> "GridTrajectory":
        """Sample a vectorized ``fn(t) -> (m,) or (m, d)`` on the grid."""
        return cls(np.asarray(fn(grid(m)), dtype=np.float64))

    def __call__(self, t):
        return eval_at(self, t)


def eval_at(traj: GridTrajectory, t):
    """Piecewise-linear value of ``traj`` at ``t`` (scalar or array in [0, 1])."""
    tt = np.asarray(t, dtype=np.float64)
    if np.any(~(tt >= 0.0) | ~(tt <= 1.0)):
        raise DomainError("evaluation time outside [0, 1]")
    flat = tt.reshape(-1)
    out = _kernels.interp_values(traj.values[None], flat)[0]
    # nodes are reproduced exactly, not through (1-w)*a + w*b rounding
    scaled = flat * (traj.m - 1)
    on_node = np.abs(scaled - np.round(scaled)) <= 1e-9
    if np.any(on_node):
        out[on_node] = traj.values[np.round(scaled[on_node]).astype(np.int64)]
    return out.reshape(tt.shape + (traj.d,))


def difference_matrix(m: int, s: int) -> np.ndarray:
    """Dense (m-s, m) operator of s-th forward differences scaled by 1/dt^s."""
    _check_order(m, s)
    dt = 1.0 / (m - 1)
    stencil = np.array([(-1.0) ** (s - r) * comb(s, r, exact=True) for r in range(s + 1)])
    mat = np.zeros((m - s, m))
    for r, c in enumerate(stencil):
        mat[np.arange(m - s), np.arange(m - s) + r] = c
    return mat / dt**s


def scaled_differences(values: np.ndarray, s: int) -> np.ndarray:
    m = values.shape[0]
    _check_order(m, s)
    return np.diff(values, n=s, axis=0) * float(m - 1) ** s


def penalty_values(values: np.ndarray, s: int) -> float:
    diffs = scaled_differences(values, s)
    return float(np.sum(diffs * diffs) / (values.shape[0] - 1))


def penalty(traj: GridTrajectory, s: int) -> float:
    """Riemann approximation of the integrated squared s-th derivative."""
    return penalty_values(traj.values, s)


def penalty_inner(a: np.ndarray, b: np.ndarray, s: int) -> float:
    """Bilinear form whose diagonal is :func:`penalty_values`."""
    return float(np.sum(scaled_differences(a, s) * scaled_differences(b, s)) / (a.shape[0] - 1))


def penalty_band(m: int, s: int) -> np.ndarray:
    """Lower band storage (s+1, m) of ``dt * D^T D`` for the order-s penalty."""
    _check_order(m, s)
    dt = 1.0 / (m - 1)
    stencil = np.array([(-1.0) ** (s - r) * comb(s, r, exact=True) for r in range(s + 1)])
    scale = dt ** (1 - 2 * s)
    band = np.zeros((s + 1, m))
    # each difference row contributes stencil outer product on nodes row..row+s
    for off in range(s + 1):
        prod = stencil[off:] * stencil[: s + 1 - off]
        for r, c in enumerate(prod):
            # entry (row + r + off, row + r) for every difference row
            band[off, r : r + m - s] += c
    return band * scale


def _derivative_weights(s: int) -> np.ndarray:
    """Rows i < s: weights on nodes 0..s giving the i-th derivative at 0 (unit spacing)."""
    nodes = np.arange(s + 1, dtype=np.float64)
    factorial = np.array([math.factorial(i) for i in range(s + 1)], dtype=np.float64)
    vander = nodes[:, None] ** np.arange(s + 1)[None, :] / factorial[None, :]
    return np.linalg.inv(vander)[:s]


def h0_norm_values(values: np.ndarray, s: int) -> float:
    m = values.shape[0]
    _check_order(m, s)
    derivs = _derivative_weights(s) @ values[: s + 1]
    derivs *= (float(m - 1) ** np.arange(s))[:, None]
    total = 0.0
    for i in range(s):
        total += float(np.linalg.norm(derivs[i])) / math.factorial(i)
    return total


def h0_norm(traj: GridTrajectory, s: int) -> float:
    """Norm of the Taylor polynomial at 0: sum of |i-th derivative| / i!, i < s.

    Derivatives come from the interpolating polynomial through the first s+1
    nodes, which is exact for polynomial data of degree <= s.
    """
    return h0_norm_values(traj.values, s)


@dataclass(frozen=True)
class SobolevNorms:
    h0: float
    h1: float

    @property
    def hs(self) -> float:
        return self.h0 + self.h1


def sobolev_norms_values(values: np.ndarray, s: int) -> SobolevNorms:
    return SobolevNorms(h0_norm_values(values, s), math.sqrt(penalty_values(values, s)))


def sobolev_norms(traj: GridTrajectory, s: int) -> SobolevNorms:
    return sobolev_norms_values(traj.values, s)


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """k trajectories on a shared grid; ``values`` has shape (k, m, d)."""

    values: np.ndarray
    s: int = 2
    delta: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise ShapeError(f"trajectory set values must have shape (k, m, d), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("trajectory values must be finite")
        if int(self.s) != self.s or self.s < 1:
            raise ValueError(f"penalty order must be an integer >= 1, got {self.s}")
        if not self.delta > 0:
            raise ValueError(f"separation parameter must be positive, got {self.delta}")
        _check_order(arr.shape[1], int(self.s))
        object.__setattr__(self, "values", _frozen(arr))
        object.__setattr__(self, "s", int(self.s))
        object.__setattr__(self, "delta", float(self.delta))

    @classmethod
    def from_trajectories(cls, trajs, s: int = 2, delta: float = 1.0) -> "TrajectorySet":
        trajs = list(trajs)
        shapes = {t.values.shape for t in trajs}
        if len(shapes) != 1:
            raise ShapeError(f"trajectories disagree in (m, d): {sorted(shapes)}")
        return cls(np.stack([t.values for t in trajs]), s=s, delta=delta)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    @property
    def trajectories(self) -> list[GridTrajectory]:
        return [GridTrajectory(v) for v in self.values]

    def __getitem__(self, j: int) -> GridTrajectory:
        return GridTrajectory(self.values[j])

    def __len__(self) -> int:
        return self.k

    def with_values(self, values) -> "TrajectorySet":
        return TrajectorySet(values, s=self.s, delta=self.delta)

    def permuted(self, order) -> "TrajectorySet":
        return self.with_values(self.values[list(order)])

    def penalties(self) -> np.ndarray:
        return np.array([penalty_values(v, self.s) for v in self.values])

    def evaluate(self, t) -> np.ndarray:
        """Values of all trajectories at ``t``; shape (k, len(t), d)."""
        tt = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if np.any(~(tt >= 0.0) | ~(tt <= 1.0)):
            raise DomainError("evaluation time outside [0, 1]")
        return _kernels.interp_values(self.values, tt)


def _check_aligned(a: TrajectorySet, b: TrajectorySet) -> None:
    if a.values.shape != b.values.shape or a.s != b.s:
        raise ShapeError(
            f"cannot compare sets of shape {a.values.shape}/s={a.s} and {b.values.shape}/s={b.s}"
        )


def hs_distance(a: TrajectorySet, b: TrajectorySet) -> float:
    """Sum over tracks of ``||a_j - b_rho(j)||_0 + ||grad^s (a_j - b_rho(j))||``,
    minimized over label permutations ``rho``."""
    _check_aligned(a, b)
    k = a.k
    cost = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            cost[i, j] = sobolev_norms_values(a.values[i] - b.values[j], a.s).hs
    best = math.inf
    for perm in itertools.permutations(range(k)):
        total = float(sum(cost[i, perm[i]] for i in range(k)))
        if total < best:
            best = total
    return best


def separation_check(tset: TrajectorySet) -> tuple[bool, float]:
    """(min gap >= delta, min over nodes and pairs of the pointwise distance)."""
    if tset.k < 2:
        return True, math.inf
    gap = math.inf
    for j, l in itertools.combinations(range(tset.k), 2):
        dist = np.linalg.norm(tset.values[j] - tset.values[l], axis=1)
        gap = min(gap, float(dist.min()))
    return gap >= tset.delta, gap


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def write_trajectories_csv(tset: TrajectorySet, path) -> None:
    """One row per (grid node, track): ``t,track,y1..yd``; tracks are 0-based."""
    header = ["t", "track"] + [f"y{c + 1}" for c in range(tset.d)]
    t = grid(tset.m)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for g in range(tset.m):
            for j in range(tset.k):
                writer.writerow([repr(float(t[g])), j] + [repr(float(v)) for v in tset.values[j, g]])


def read_trajectories_csv(path, s: int = 2, delta: float = 1.0) -> TrajectorySet:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    d = len(header) - 2
    if d < 1 or header[:2] != ["t", "track"] or header[2:] != [f"y{c + 1}" for c in range(d)]:
        raise DataError(f"{path}: expected header t,track,y1..yd, got {','.join(header)}")
    try:
        body = np.array([[float(x) for x in row] for row in rows[1:]])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from exc
    if body.ndim != 2 or body.shape[1] != d + 2:
        raise DataError(f"{path}: ragged rows")
    tracks = body[:, 1].astype(np.int64)
    k = int(tracks.max()) + 1
    m = body.shape[0] // k
    if m * k != body.shape[0]:
        raise DataError(f"{path}: row count not a multiple of the track count")
    values = np.empty((k, m, d))
    for j in range(k):
        rows_j = body[tracks == j]
        if rows_j.shape[0] != m:
            raise DataError(f"{path}: track {j} has {rows_j.shape[0]} rows, expected {m}")
        values[j] = rows_j[np.argsort(rows_j[:, 0], kind="stable"), 2:]
    return TrajectorySet(values, s=s, delta=delta)
