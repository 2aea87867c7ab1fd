import numpy as np
import pytest
from scipy import stats

from sdasmooth.errors import AssumptionViolated, InvalidWeights, SeparationViolated
from sdasmooth.synth import (
    NoiseSpec,
    Primitive,
    TimeSpec,
    Track,
    default_scenario,
    make_model,
    sample,
)
from sdasmooth.trajectory import grid, separation_check

ZERO = NoiseSpec.gaussian(0.0, allow_degenerate=True)


def test_constants_valid():
    model = make_model([{"kind": "constant", "value": [0.0]}, {"kind": "constant", "value": [1.0]}],
                       delta=0.5)
    assert model.k == 2 and model.d == 1


def test_crossing_tracks_rejected():
    with pytest.raises(SeparationViolated):
        make_model([{"kind": "affine", "slope": [1.0]},
                    {"kind": "affine", "intercept": [1.0], "slope": [-1.0]}], delta=0.1)


def test_student_t_dimension_rule():
    tracks = [{"kind": "constant", "value": [0.0, 0.0]}, {"kind": "constant", "value": [5.0, 0.0]}]
    with pytest.raises(AssumptionViolated, match="dof > 5"):
        make_model(tracks, noise=NoiseSpec.student_t(3.5))
    make_model(tracks, noise=NoiseSpec.student_t(5.5))


@pytest.mark.parametrize("weights", [[0.5], [0.7, 0.7], [1.0, 0.0], [-0.5, 1.5]])
def test_bad_weights(weights):
    tracks = [{"kind": "constant", "value": [0.0]}, {"kind": "constant", "value": [5.0]}]
    with pytest.raises(InvalidWeights):
        make_model(tracks, weights)


@pytest.mark.parametrize("kwargs", [
    {"family": "gaussian", "sigma": 0.0},
    {"family": "student_t", "dof": 3.0},
    {"family": "student_t", "dof": 6.0, "scale": 0.0},
    {"family": "laplace"},
])
def test_bad_noise(kwargs):
    with pytest.raises(AssumptionViolated):
        NoiseSpec(**kwargs)


def test_bad_time_density():
    with pytest.raises(AssumptionViolated):
        TimeSpec("beta", 0.5, 2.0)


def test_zero_noise_on_tracks():
    model = default_scenario(sigma=0.25)
    model = make_model(model.tracks, noise=ZERO, delta=1.0)
    data, labels = sample(model, 500, seed=0)
    expected = model.truth.evaluate(data.times)[labels, np.arange(500)]
    assert np.array_equal(data.targets, expected)


def test_label_frequencies():
    tracks = [{"kind": "constant", "value": [0.0]}, {"kind": "constant", "value": [5.0]}]
    model = make_model(tracks, [0.3, 0.7])
    _, labels = sample(model, 100_000, seed=1)
    freq = np.bincount(labels) / labels.size
    assert np.all(np.abs(freq - [0.3, 0.7]) < 0.01)


def test_sampling_deterministic():
    model = default_scenario()
    a, la = sample(model, 1000, seed=42)
    b, lb = sample(model, 1000, seed=42)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.targets, b.targets)
    assert np.array_equal(la, lb)
    c, _ = sample(model, 1000, seed=43)
    assert not np.array_equal(a.times, c.times)


def test_default_scenario_geometry():
    model = default_scenario()
    assert (model.k, model.d, model.truth.m) == (2, 2, 201)
    ok, gap = separation_check(model.truth)
    assert ok and gap == pytest.approx(1.0, abs=1e-12)
    t = grid(201)
    assert np.allclose(model.truth.values[0, :, 0], (np.sin(2 * np.pi * t) + 2) / 2)
    assert np.allclose(model.truth.values[1, :, 0], -(np.sin(2 * np.pi * t) + 2) / 2)
    assert np.allclose(model.truth.values[:, :, 1], t)


def test_gaussian_noise_moments():
    eps = NoiseSpec.gaussian(0.5).sample(np.random.default_rng(0), 200_000, 2)
    assert np.allclose(eps.mean(axis=0), 0, atol=5e-3)
    assert np.allclose(eps.var(axis=0), 0.25, rtol=2e-2)


def test_student_t_noise_marginals():
    noise = NoiseSpec.student_t(7.0, 2.0)
    eps = noise.sample(np.random.default_rng(0), 100_000, 2)
    # marginals of a multivariate t are univariate t with the same dof
    assert stats.kstest(eps[:, 0] / 2.0, stats.t(7.0).cdf).pvalue > 1e-3
    assert noise.coordinate_variance() == pytest.approx(4.0 * 7 / 5)


@pytest.mark.parametrize("noise", [NoiseSpec.gaussian(0.7), NoiseSpec.student_t(6.0, 1.3)])
def test_density_normalized_d1(noise):
    from scipy.integrate import quad
    val, _ = quad(lambda e: float(noise.pdf(np.array([[e]]))[0]), -np.inf, np.inf)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_density_normalized_d2():
    from scipy.integrate import quad
    noise = NoiseSpec.student_t(7.0, 0.8)
    # radial integral: 2 pi r f(r)
    val, _ = quad(lambda r: 2 * np.pi * r * float(noise.pdf(np.array([[r, 0.0]]))[0]), 0, np.inf)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_beta_times():
    spec = TimeSpec("beta", 2.0, 3.0)
    t = spec.sample(np.random.default_rng(0), 50_000)
    assert stats.kstest(t, stats.beta(2, 3).cdf).pvalue > 1e-3


def test_primitives():
    t = np.array([0.0, 0.25, 1.0])
    sin = Primitive("sinusoid", {"offset": 1.0, "amplitude": 2.0, "frequency": 1.0, "phase": 0.0})
    assert np.allclose(sin(t, 1)[:, 0], 1 + 2 * np.sin(2 * np.pi * t))
    cubic = Primitive("cubic", {"coeffs": [1.0, 0.0, 0.0, 2.0]})
    assert np.allclose(cubic(t, 1)[:, 0], 1 + 2 * t**3)
    track = Track.parse([{"kind": "constant", "value": [1.0, 2.0]}, {"kind": "affine", "slope": [0.0, 1.0]}])
    assert track.d == 2
    assert np.allclose(track(t), np.c_[np.ones(3), 2 + t])


def test_unknown_primitive():
    with pytest.raises(ValueError):
        Primitive("spline", {})
    with pytest.raises(ValueError):
        Primitive("constant", {"level": 1.0})


def test_callable_tracks():
    model = make_model([lambda t: np.sin(t), lambda t: 3 + np.sin(t)], m=11)
    assert model.k == 2 and model.d == 1


def test_fingerprint_stable_and_sensitive():
    assert default_scenario().fingerprint() == default_scenario().fingerprint()
    assert default_scenario().fingerprint() != default_scenario(sigma=0.3).fingerprint()
