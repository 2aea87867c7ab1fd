import numpy as np
import pytest

import oracles
from sdasmooth.errors import DataError, DegenerateDesign, EmptyCluster, GridTooCoarse
from sdasmooth.smoother import (
    SmootherConfig,
    WeightedPoints,
    cluster_objective,
    fit_single,
    fit_values,
    normal_equations,
    polynomial_limit_fit,
)
from sdasmooth.trajectory import grid


def test_constant_targets_reproduced():
    rng = np.random.default_rng(0)
    t = rng.random(30)
    for s in (1, 2, 3):
        for lam in (1e-6, 1.0, 1e4):
            traj = fit_single(WeightedPoints(t, np.full(30, 2.5)), 30, SmootherConfig(s, lam, 21))
            assert np.allclose(traj.values, 2.5, atol=1e-9)


def test_single_point_s1_is_constant():
    cfg = SmootherConfig(s=1, lam=0.1, m=11, ridge=0.0)
    traj = fit_single(WeightedPoints([0.5], [4.0]), 1, cfg)
    assert np.allclose(traj.values, 4.0, atol=1e-12)


def test_noise_free_line_s2():
    t = np.linspace(0, 1, 50)
    traj = fit_single(WeightedPoints(t, t), 50, SmootherConfig(s=2, lam=1.0, m=201))
    assert np.max(np.abs(traj.values[:, 0] - grid(201))) < 1e-8


def test_small_instance_matches_dense_solve():
    rng = np.random.default_rng(11)
    t, y = rng.random(6), rng.standard_normal(6)
    cfg = SmootherConfig(s=1, lam=0.5, m=7)
    got = fit_values(WeightedPoints(t, y), 6, cfg)
    want = oracles.smoother(t, y, 6, 0.5, 7, 1, cfg.ridge)
    assert np.max(np.abs(got - want)) <= 1e-10 * np.max(np.abs(want))


def test_normal_equations_band_matches_dense():
    rng = np.random.default_rng(2)
    t, y = rng.random(12), rng.standard_normal((12, 2))
    cfg = SmootherConfig(s=2, lam=0.3, m=9)
    ab, rhs = normal_equations(WeightedPoints(t, y), 20, cfg)
    a = oracles.hat_matrix(t, 9)
    d = oracles.scaled_difference(9, 2)
    dense = a.T @ a / 20 + 0.3 * d.T @ d / 8 + cfg.ridge * np.eye(9)
    for i in range(ab.shape[0]):
        assert np.allclose(ab[i, : 9 - i], np.diag(dense, -i))
    assert np.allclose(rhs, a.T @ y / 20)


def test_fit_minimizes_cluster_objective():
    rng = np.random.default_rng(5)
    t, y = rng.random(40), rng.standard_normal((40, 2))
    cfg = SmootherConfig(s=2, lam=1e-2, m=31)
    pts = WeightedPoints(t, y)
    best = fit_values(pts, 60, cfg)
    base = cluster_objective(best, pts, 60, cfg.lam, cfg.s)
    for _ in range(20):
        bumped = best + 1e-3 * rng.standard_normal(best.shape)
        assert cluster_objective(bumped, pts, 60, cfg.lam, cfg.s) >= base - 1e-14


def test_large_lambda_tends_to_polynomial():
    rng = np.random.default_rng(8)
    t, y = rng.random(20), rng.standard_normal(20)
    pts = WeightedPoints(t, y)
    limit = polynomial_limit_fit(pts, 2, 201)
    traj = fit_single(pts, 20, SmootherConfig(s=2, lam=1e8, m=201))
    assert np.max(np.abs(traj.values - limit.values)) < 1e-4


def test_polynomial_limit_line():
    t = np.linspace(0, 1, 7)
    fit = polynomial_limit_fit(WeightedPoints(t, 1 - 2 * t), 2, 11)
    assert np.allclose(fit.values[:, 0], 1 - 2 * grid(11))


def test_polynomial_limit_mean():
    fit = polynomial_limit_fit(WeightedPoints([0.0, 1.0], [0.0, 2.0]), 1, 5)
    assert np.allclose(fit.values, 1.0)


def test_polynomial_limit_degenerate():
    with pytest.raises(DegenerateDesign):
        polynomial_limit_fit(WeightedPoints([0.3, 0.3], [1.0, 2.0]), 2)


def test_empty_cluster():
    with pytest.raises(EmptyCluster):
        fit_values(WeightedPoints(np.zeros(0), np.zeros((0, 1))), 5, SmootherConfig())


def test_nonfinite_rejected():
    with pytest.raises(DataError):
        WeightedPoints([0.1, 0.2], [1.0, np.inf])


def test_n_total_smaller_than_cluster():
    with pytest.raises(DataError):
        fit_values(WeightedPoints([0.1, 0.2], [1.0, 2.0]), 1, SmootherConfig(m=11))


def test_underdetermined_polynomial_part():
    # one time value cannot pin down a line when nothing else regularizes it
    cfg = SmootherConfig(s=2, lam=1.0, m=11, ridge=0.0)
    with pytest.raises(DegenerateDesign):
        fit_values(WeightedPoints([0.5, 0.5], [1.0, 2.0]), 2, cfg)


@pytest.mark.parametrize("kwargs, exc", [
    ({"lam": 0.0}, ValueError),
    ({"s": 0}, ValueError),
    ({"m": 2, "s": 2}, GridTooCoarse),
    ({"ridge": -1.0}, ValueError),
])
def test_config_validation(kwargs, exc):
    with pytest.raises(exc):
        SmootherConfig(**kwargs)
