"""Population objective, its directional derivative and the Y_n statistic.

The data term

    int_0^1 int min_j |y - mu_j(t)|^2 phi_Y(y|t) phi_T(t) dy dt

is evaluated per mixture component in noise coordinates, e = y - mu_dagger_l(t),
so the noise density is always centered at the origin.  In time we use
composite Gauss-Legendre on the panels between grid nodes (all trajectories
are linear there).  In noise space the rule is a tensor Gauss-Legendre rule on
[-R, R]^d whose first axis is split at nearest-trajectory cell boundaries:
exactly for d = 1 (any k) and for k = 2 (any d, after rotating the first axis
onto c_1 - c_2).  For k >= 3 and d >= 2 the boundaries are not aligned with
the rule and accuracy drops to low algebraic order.  Dimensions above 3 use
Monte Carlo instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import QuadratureError, ShapeError
from .solver import Dataset
from .synth import MixtureModel, sample
from .trajectory import TrajectorySet, grid, penalty_inner, penalty_values

TRUNCATION_MASS = 1e-10
MAX_TENSOR_DIM = 3


@dataclass(frozen=True)
class QuadratureSpec:
    """Rule sizes: ``t_nodes`` Gauss-Legendre nodes per grid panel in time,
    ``y_nodes`` per noise axis (per piece on the split axis), truncation
    radius ``y_radius`` (None picks one from the noise law)."""

    t_nodes: int = 8
    y_nodes: int = 32
    y_radius: float | None = None
    mc_samples: int = 400_000
    mc_seed: int = 0

    def __post_init__(self):
        if self.t_nodes < 8:
            raise ValueError(f"t_nodes must be >= 8, got {self.t_nodes}")
        if self.y_nodes < 16:
            raise ValueError(f"y_nodes must be >= 16, got {self.y_nodes}")
        if self.y_radius is not None and not self.y_radius > 0:
            raise ValueError(f"y_radius must be positive, got {self.y_radius}")

    def refined(self) -> "QuadratureSpec":
        return replace(self, t_nodes=2 * self.t_nodes, y_nodes=2 * self.y_nodes)


def truncation_radius(model: MixtureModel, quad: QuadratureSpec) -> float:
    noise = model.noise
    if noise.degenerate:
        raise QuadratureError("no truncation radius for point-mass noise")
    d = model.d
    if quad.y_radius is not None:
        radius = quad.y_radius
    elif noise.family == "gaussian":
        radius = 8.0 * noise.sigma
    else:
        target = TRUNCATION_MASS / 10
        hi = noise.scale
        while noise.radial_tail(hi, d) > target:
            hi *= 2
        radius = brentq(lambda r: noise.radial_tail(r, d) - target, hi / 2, hi)
    mass = noise.radial_tail(radius, d)
    if not mass < TRUNCATION_MASS:
        raise QuadratureError(f"noise mass {mass:.3g} outside radius {radius:.4g} exceeds "
                              f"{TRUNCATION_MASS:g}")
    return radius


def time_rule(m_values: list[int], nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre on the union of the given uniform grids."""
    return composite_rule(np.unique(np.concatenate([grid(m) for m in m_values])), nodes)


def axis_breaks(model: MixtureModel, radius: float) -> np.ndarray:
    """Fixed piece boundaries on each noise axis.

    Heavy-tailed noise needs a wide radius; geometric breakpoints keep nodes
    dense where the density lives.
    """
    breaks = [-radius, radius]
    if model.noise.family != "gaussian":
        b = 2.0 * model.noise.width
        while b < radius:
            breaks += [-b, b]
            b *= 4.0
    return np.unique(np.array(breaks))


def composite_rule(breaks: np.ndarray, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    return (0.5 * (lo + hi) + 0.5 * (hi - lo) * x).reshape(-1), (0.5 * (hi - lo) * w).reshape(-1)


def _frames_and_edges(centers: np.ndarray, radius: float, breaks: np.ndarray):
    frames, edges = _cell_frames_and_edges(centers, radius)
    if breaks.shape[0] > 2:
        inner = np.broadcast_to(breaks[1:-1], (edges.shape[0], breaks.shape[0] - 2))
        edges = np.sort(np.concatenate([edges, inner], axis=1), axis=1)
    return frames, edges


def _cell_frames_and_edges(centers: np.ndarray, radius: float):
    npairs, k, d = centers.shape
    frames = np.broadcast_to(np.eye(d), (npairs, d, d)).copy()
    if k == 1:
        edges = np.tile([-radius, radius], (npairs, 1)).astype(np.float64)
        return frames, edges
    if d == 1:
        mids = np.sort(centers[:, :, 0], axis=1)
        mids = 0.5 * (mids[:, 1:] + mids[:, :-1])
        inner = np.clip(mids, -radius, radius)
        edges = np.concatenate([np.full((npairs, 1), -radius), inner,
                                np.full((npairs, 1), radius)], axis=1)
        return frames, edges
    # Householder frame taking the first axis onto the unit vector c_0 - c_1
    gap = centers[:, 0] - centers[:, 1]
    norm = np.linalg.norm(gap, axis=1)
    split = np.zeros(npairs)
    ok = norm > 1e-300
    unit = np.zeros_like(gap)
    unit[ok] = gap[ok] / norm[ok, None]
    v = unit.copy()
    v[:, 0] -= 1.0
    vnorm2 = np.sum(v * v, axis=1)
    refl = ok & (vnorm2 > 1e-24)
    frames[refl] -= 2.0 * v[refl, :, None] * v[refl, None, :] / vnorm2[refl, None, None]
    split[ok] = np.sum(unit[ok] * 0.5 * (centers[ok, 0] + centers[ok, 1]), axis=1)
    edges = np.stack([np.full(npairs, -radius), np.clip(split, -radius, radius),
                      np.full(npairs, radius)], axis=1)
    return frames, edges


@dataclass(frozen=True, eq=False)
class PopulationMoments:
    """Per-node integrals shared by the objective and its derivative."""

    t: np.ndarray            # (T,) time nodes
    wt: np.ndarray           # (T,) time weights times phi_T
    data_term: float
    grad_density: np.ndarray | None  # (k, T, d): sum_l p_l G[t, l, j] * wt
    stderr: float = 0.0


def _check(tset: TrajectorySet, model: MixtureModel) -> None:
    if tset.d != model.d:
        raise ShapeError(f"trajectories live in R^{tset.d} but the model in R^{model.d}")


def population_moments(tset: TrajectorySet, model: MixtureModel, quad: QuadratureSpec,
                       want_grad: bool = True) -> PopulationMoments:
    _check(tset, model)
    if model.d > MAX_TENSOR_DIM and not model.noise.degenerate:
        return _monte_carlo_moments(tset, model, quad, want_grad)
    t, wt = time_rule([tset.m, model.truth.m], quad.t_nodes)
    wt = wt * model.time.pdf(t)
    mu = tset.evaluate(t)                 # (k, T, d)
    truth = model.truth.evaluate(t)       # (L, T, d)
    L, T = truth.shape[0], t.shape[0]
    centers = mu[None, :, :, :] - truth[:, None, :, :]      # (L, k, T, d)
    centers = np.ascontiguousarray(centers.transpose(2, 0, 1, 3).reshape(T * L, tset.k, tset.d))
    if model.noise.degenerate:
        f, g = _point_mass_moments(centers, want_grad)
        return _assemble(t, wt, model.weights, f, g, tset.k, tset.d, want_grad)
    radius = truncation_radius(model, quad)
    breaks = axis_breaks(model, radius)
    frames, edges = _frames_and_edges(centers, radius, breaks)
    gx, gw = np.polynomial.legendre.leggauss(quad.y_nodes)
    ox, ow = composite_rule(breaks, quad.y_nodes)
    noise = model.noise
    if noise.family == "gaussian":
        family, par1, par2 = 0, noise.sigma, 0.0
    else:
        family, par1, par2 = 1, noise.dof, noise.scale
    f, g = _kernels.population_moments(centers, frames, edges, gx, gw, ox, ow, family, par1,
                                       par2, noise.log_norm(tset.d), want_grad)
    return _assemble(t, wt, model.weights, f, g, tset.k, tset.d, want_grad)


def _point_mass_moments(centers: np.ndarray, want_grad: bool):
    # noise-free model: every observation sits on its track, e = 0
    sq = np.sum(centers * centers, axis=2)           # (P, k)
    nearest = np.argmin(sq, axis=1)                   # first minimum on ties
    rows = np.arange(centers.shape[0])
    g = np.zeros_like(centers)
    if want_grad:
        g[rows, nearest] = centers[rows, nearest]
    return sq[rows, nearest], g


def _assemble(t, wt, p, f, g, k, d, want_grad) -> PopulationMoments:
    T, L = t.shape[0], p.shape[0]
    weights = (wt[:, None] * p[None, :]).reshape(-1)  # pair order (t, l)
    data = float(np.dot(weights, f))
    grad = None
    if want_grad:
        grad = np.einsum("tl,tljc->jtc", weights.reshape(T, L), g.reshape(T, L, k, d))
    return PopulationMoments(t, wt, data, grad)


def _monte_carlo_moments(tset, model, quad, want_grad):
    data, _ = sample(model, quad.mc_samples, quad.mc_seed)
    labels, sq = _kernels.assign_nearest(tset.values, data.times, data.targets)
    n = data.n
    grad = None
    if want_grad:
        # derivative weights live on the samples themselves: t nodes = sample times
        fitted = _kernels.interp_values(tset.values, data.times)[labels, np.arange(n)]
        grad = np.zeros((tset.k, n, tset.d))
        grad[labels, np.arange(n)] = (fitted - data.targets) / n
    return PopulationMoments(data.times, np.full(n, 1.0 / n), float(sq.mean()), grad,
                             float(sq.std(ddof=1) / math.sqrt(n)))


def objective_population(tset: TrajectorySet, model: MixtureModel,
                         quad: QuadratureSpec | None = None, lam: float = 0.0) -> float:
    """Population data term plus ``lam`` times the summed penalties."""
    quad = quad or QuadratureSpec()
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    mom = population_moments(tset, model, quad, want_grad=False)
    return mom.data_term + lam * float(sum(penalty_values(v, tset.s) for v in tset.values))


class GateauxForm:
    """Directional derivative of the population objective at a fixed set.

    The integrals are computed once; each call with a direction is cheap.
    """

    def __init__(self, tset: TrajectorySet, model: MixtureModel,
                 quad: QuadratureSpec | None = None, lam: float = 0.0):
        if lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {lam}")
        self.tset = tset
        self.lam = lam
        self.moments = population_moments(tset, model, quad or QuadratureSpec(), want_grad=True)

    def __call__(self, direction: TrajectorySet) -> float:
        nu = direction.values if isinstance(direction, TrajectorySet) else np.asarray(direction)
        if nu.shape != self.tset.values.shape:
            raise ShapeError(f"direction shape {nu.shape} != set shape {self.tset.values.shape}")
        nu_t = _kernels.interp_values(nu, self.moments.t)   # (k, T, d)
        data = 2.0 * float(np.sum(self.moments.grad_density * nu_t))
        reg = 2.0 * self.lam * sum(penalty_inner(nu[j], self.tset.values[j], self.tset.s)
                                   for j in range(self.tset.k))
        return data + reg


def gateaux_derivative(tset: TrajectorySet, direction: TrajectorySet, model: MixtureModel,
                       quad: QuadratureSpec | None = None, lam: float = 0.0) -> float:
    return GateauxForm(tset, model, quad, lam)(direction)


def yn_statistic(tset: TrajectorySet, data: Dataset, model: MixtureModel,
                 quad: QuadratureSpec | None = None, lam: float = 0.0,
                 population: float | None = None) -> float:
    """sqrt(n) * (empirical - population objective); penalties cancel exactly.

    Replicate loops can pass the population data term once via ``population``.
    """
    _check(tset, model)
    if tset.d != data.d:
        raise ShapeError(f"trajectories live in R^{tset.d} but data in R^{data.d}")
    _, sq = _kernels.assign_nearest(tset.values, data.times, data.targets)
    empirical = float(np.sum(sq) / data.n)
    if population is None:
        population = population_moments(tset, model, quad or QuadratureSpec(), want_grad=False).data_term
    return math.sqrt(data.n) * (empirical - population)
