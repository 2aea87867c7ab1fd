"""Single-trajectory penalized least squares on the grid.

For one cluster of points the objective

    (1/n_total) * sum_i |y_i - mu(t_i)|^2 + lam * penalty(mu, s)

is quadratic in the grid values of ``mu``.  Its normal equations are banded
(bandwidth ``2s+1``) and are solved by a banded Cholesky factorization, one
factorization shared by all d coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DataError, DegenerateDesign, EmptyCluster, GridTooCoarse
from .trajectory import DEFAULT_GRID_SIZE, GridTrajectory, grid, penalty_band, penalty_values


@dataclass(frozen=True)
class SmootherConfig:
    s: int = 2
    lam: float = 1e-3
    m: int = DEFAULT_GRID_SIZE
    ridge: float = 1e-12

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise ValueError(f"penalty order must be an integer >= 1, got {self.s}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.m <= self.s:
            raise GridTooCoarse(f"grid of {self.m} nodes cannot carry order-{self.s} differences")
        if not self.ridge >= 0:
            raise ValueError(f"ridge must be nonnegative, got {self.ridge}")


@dataclass(frozen=True, eq=False)
class WeightedPoints:
    """Observations (times in [0, 1], targets in R^d) handed to one trajectory."""

    times: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64).reshape(-1)
        y = np.asarray(self.targets, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[0] != t.shape[0]:
            raise DataError(f"times ({t.shape[0]}) and targets {y.shape} disagree")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise DataError("non-finite observation")
        if np.any((t < 0.0) | (t > 1.0)):
            raise DataError("observation time outside [0, 1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "targets", y)

    @property
    def count(self) -> int:
        return self.times.shape[0]

    @property
    def d(self) -> int:
        return self.targets.shape[1]


def normal_equations(points: WeightedPoints, n_total: int, cfg: SmootherConfig):
    """Lower band storage and right-hand side of the smoothing system in node values.

    Only used for inspection and testing; :func:`fit_values` never forms the
    full penalty on polynomial directions (see there).
    """
    diag, off, aty = _kernels.interp_gram(points.times, points.targets, cfg.m)
    ab = cfg.lam * penalty_band(cfg.m, cfg.s)
    ab[0] += diag / n_total + cfg.ridge
    ab[1, : cfg.m - 1] += off / n_total
    return ab, aty / n_total


def fit_values(points: WeightedPoints, n_total: int, cfg: SmootherConfig) -> np.ndarray:
    if points.count == 0:
        raise EmptyCluster("no points to smooth")
    if n_total < 1 or n_total < points.count:
        raise DataError(f"n_total={n_total} must be >= the cluster size {points.count}")
    m, s = cfg.m, cfg.s
    diag, off, aty = _kernels.interp_gram(points.times, points.targets, m)
    diag = diag / n_total
    off = off / n_total
    rhs = aty / n_total

    # Write c = N a + E b: N holds the monomials t^i/i! (i < s) on the grid,
    # E selects nodes s..m-1.  The penalty annihilates N exactly, so a large
    # lambda never swamps the polynomial directions with rounding error.
    poly = monomial_design(grid(m), s)
    gram_poly = diag[:, None] * poly
    gram_poly[:-1] += off[:, None] * poly[1:]
    gram_poly[1:] += off[:, None] * poly[:-1]

    tail_band = cfg.lam * penalty_band(m, s)[:, s:]
    tail_band[0] += diag[s:] + cfg.ridge
    tail_band[1, : m - s - 1] += off[s:]
    cross = gram_poly[s:] + cfg.ridge * poly[s:]           # (m-s, s)
    head = poly.T @ gram_poly + cfg.ridge * (poly.T @ poly)  # (s, s)

    d = rhs.shape[1]
    solved = _kernels.banded_cholesky_solve(tail_band, np.hstack([rhs[s:], cross]))
    y_tail, z_tail = solved[:, :d], solved[:, d:]
    schur = head - cross.T @ z_tail
    try:
        a = np.linalg.solve(schur, poly.T @ rhs - cross.T @ y_tail)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDesign("polynomial part of the fit is undetermined") from exc
    values = poly @ a
    values[s:] += y_tail - z_tail @ a
    return values


def fit_single(points: WeightedPoints, n_total: int, cfg: SmootherConfig) -> GridTrajectory:
    """Grid minimizer of the single-trajectory penalized least-squares objective.

    The data term is normalized by ``n_total`` (the whole sample, not just this
    cluster) so cluster objectives add up to the k-trajectory objective.
    """
    return GridTrajectory(fit_values(points, n_total, cfg))


def cluster_objective(values: np.ndarray, points: WeightedPoints, n_total: int,
                      lam: float, s: int) -> float:
    values = np.asarray(values, dtype=np.float64)
    fit = _kernels.interp_values(values[None], points.times)[0]
    resid = points.targets - fit
    return float(np.sum(resid * resid) / n_total + lam * penalty_values(values, s))


def monomial_design(times: np.ndarray, s: int) -> np.ndarray:
    """Columns t^i / i! for i < s."""
    return np.stack([times**i / math.factorial(i) for i in range(s)], axis=1)


def polynomial_limit_fit(points: WeightedPoints, s: int, m: int = DEFAULT_GRID_SIZE) -> GridTrajectory:
    """Least-squares polynomial of degree s-1 sampled on the grid.

    This is the large-lambda limit of :func:`fit_single`: the penalty leaves
    only its null space, the polynomials of degree below ``s``.
    """
    if np.unique(points.times).shape[0] < s:
        raise DegenerateDesign(f"need at least {s} distinct times for a degree-{s - 1} fit")
    coef, *_ = np.linalg.lstsq(monomial_design(points.times, s), points.targets, rcond=None)
    return GridTrajectory(monomial_design(grid(m), s) @ coef)
