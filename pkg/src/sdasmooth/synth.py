"""Ground-truth mixture models and sampling.

An observation is produced by picking a track j with probability p_j, a time
t from the time density, isotropic noise e, and reporting (t, mu_j(t) + e).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import AssumptionViolated, InvalidWeights, SeparationViolated
from .solver import Dataset
from .trajectory import DEFAULT_GRID_SIZE, TrajectorySet, grid, separation_check

# slack for separation validation: samples of analytic tracks touching the
# threshold exactly should not be rejected over one ulp
SEPARATION_RTOL = 1e-9


@dataclass(frozen=True)
class NoiseSpec:
    """Isotropic noise: ``gaussian`` (sigma) or multivariate ``student_t`` (dof, scale)."""

    family: str = "gaussian"
    sigma: float = 1.0
    dof: float = 0.0
    scale: float = 1.0
    allow_degenerate: bool = False  # sigma = 0 for zero-noise tests only

    def __post_init__(self):
        if self.family == "gaussian":
            if self.sigma < 0 or (self.sigma == 0 and not self.allow_degenerate):
                raise AssumptionViolated(f"gaussian noise needs sigma > 0, got {self.sigma}")
        elif self.family == "student_t":
            if not self.scale > 0:
                raise AssumptionViolated(f"student_t noise needs scale > 0, got {self.scale}")
            if not self.dof > 3:
                raise AssumptionViolated(f"student_t noise needs dof > 3, got {self.dof}")
        else:
            raise AssumptionViolated(f"unknown noise family {self.family!r}")

    @classmethod
    def gaussian(cls, sigma: float, allow_degenerate: bool = False) -> "NoiseSpec":
        return cls("gaussian", sigma=sigma, allow_degenerate=allow_degenerate)

    @classmethod
    def student_t(cls, dof: float, scale: float = 1.0) -> "NoiseSpec":
        return cls("student_t", dof=dof, scale=scale)

    def check_dimension(self, d: int) -> None:
        # polynomial tail |y|^-(dof+d) must decay faster than |y|^-(2d+3)
        if self.family == "student_t" and not self.dof > d + 3:
            raise AssumptionViolated(
                f"student_t noise in R^{d} needs dof > {d + 3} for the tail bound, got {self.dof}"
            )

    @property
    def degenerate(self) -> bool:
        return self.family == "gaussian" and self.sigma == 0

    @property
    def width(self) -> float:
        return self.sigma if self.family == "gaussian" else self.scale

    def coordinate_variance(self) -> float:
        if self.family == "gaussian":
            return self.sigma**2
        return self.scale**2 * self.dof / (self.dof - 2)

    def sample(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        z = rng.standard_normal((n, d))
        if self.family == "gaussian":
            return self.sigma * z
        w = rng.chisquare(self.dof, size=n)
        return self.scale * z / np.sqrt(w / self.dof)[:, None]

    def log_norm(self, d: int) -> float:
        if self.family == "gaussian":
            return -0.5 * d * math.log(2 * math.pi) - d * math.log(self.sigma)
        nu = self.dof
        return (special.gammaln((nu + d) / 2) - special.gammaln(nu / 2)
                - 0.5 * d * math.log(nu * math.pi) - d * math.log(self.scale))

    def pdf_radial(self, r2, d: int):
        """Density as a function of the squared radius |e|^2."""
        r2 = np.asarray(r2, dtype=np.float64)
        if self.family == "gaussian":
            return np.exp(self.log_norm(d) - 0.5 * r2 / self.sigma**2)
        nu = self.dof
        return np.exp(self.log_norm(d) - 0.5 * (nu + d) * np.log1p(r2 / (nu * self.scale**2)))

    def pdf(self, eps) -> np.ndarray:
        eps = np.atleast_2d(np.asarray(eps, dtype=np.float64))
        return self.pdf_radial(np.sum(eps * eps, axis=-1), eps.shape[-1])

    def radial_tail(self, radius: float, d: int) -> float:
        """P(|e| > radius)."""
        if self.family == "gaussian":
            return float(stats.chi2.sf((radius / self.sigma) ** 2, d))
        return float(stats.f.sf(radius**2 / (d * self.scale**2), d, self.dof))

    def as_dict(self) -> dict:
        if self.family == "gaussian":
            return {"family": "gaussian", "sigma": self.sigma}
        return {"family": "student_t", "dof": self.dof, "scale": self.scale}


@dataclass(frozen=True)
class TimeSpec:
    """Observation-time density on [0, 1]: ``uniform`` or ``beta`` (a, b >= 1)."""

    family: str = "uniform"
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.family == "beta":
            # a, b >= 1 keeps the density continuous (bounded) on the closed interval
            if not (self.a >= 1 and self.b >= 1):
                raise AssumptionViolated(f"beta time density needs a, b >= 1, got ({self.a}, {self.b})")
        elif self.family != "uniform":
            raise AssumptionViolated(f"unknown time family {self.family!r}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == "uniform":
            return rng.random(n)
        return rng.beta(self.a, self.b, size=n)

    def pdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.family == "uniform":
            return np.ones_like(t)
        return stats.beta.pdf(t, self.a, self.b)

    def as_dict(self) -> dict:
        if self.family == "uniform":
            return {"family": "uniform"}
        return {"family": "beta", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Primitive:
    """Analytic track used to build ground truth.

    kinds and parameters (vectors broadcast over the d coordinates):
      constant  value
      affine    intercept + slope * t
      sinusoid  offset + amplitude * sin(2 pi frequency t + phase)
      cubic     coeffs[0] + coeffs[1] t + coeffs[2] t^2 + coeffs[3] t^3
    """

    kind: str
    params: dict = field(default_factory=dict)

    _KEYS = {
        "constant": {"value"},
        "affine": {"intercept", "slope"},
        "sinusoid": {"offset", "amplitude", "frequency", "phase"},
        "cubic": {"coeffs"},
    }

    def __post_init__(self):
        if self.kind not in self._KEYS:
            raise ValueError(f"unknown primitive {self.kind!r}; expected one of {sorted(self._KEYS)}")
        extra = set(self.params) - self._KEYS[self.kind]
        if extra:
            raise ValueError(f"primitive {self.kind!r} got unknown parameters {sorted(extra)}")

    def _vec(self, key, default=0.0):
        return np.atleast_1d(np.asarray(self.params.get(key, default), dtype=np.float64))

    @property
    def d(self) -> int:
        if self.kind == "cubic":
            coeffs = np.asarray(self.params["coeffs"], dtype=np.float64)
            return 1 if coeffs.ndim == 1 else coeffs.shape[1]
        return max((self._vec(key).shape[0] for key in self._KEYS[self.kind] if key in self.params),
                   default=1)

    def __call__(self, t, d: int | None = None) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)[:, None]
        d = d or self.d
        if self.kind == "constant":
            out = self._vec("value") + 0 * t
        elif self.kind == "affine":
            out = self._vec("intercept") + self._vec("slope") * t
        elif self.kind == "sinusoid":
            out = self._vec("offset") + self._vec("amplitude", 1.0) * np.sin(
                2 * np.pi * self._vec("frequency", 1.0) * t + self._vec("phase"))
        else:
            coeffs = np.asarray(self.params["coeffs"], dtype=np.float64)
            if coeffs.ndim == 1:
                coeffs = coeffs[:, None]
            out = sum(coeffs[p] * t**p for p in range(coeffs.shape[0]))
        return np.broadcast_to(out, (t.shape[0], d)).copy()

    def as_dict(self) -> dict:
        return {"kind": self.kind, **{k: np.asarray(v).tolist() for k, v in self.params.items()}}


@dataclass(frozen=True)
class Track:
    """Sum of primitives."""

    parts: tuple

    @classmethod
    def parse(cls, spec) -> "Track":
        if isinstance(spec, Track):
            return spec
        if isinstance(spec, (Primitive, dict)):
            spec = [spec]
        parts = []
        for p in spec:
            if isinstance(p, dict):
                p = Primitive(p["kind"], {k: v for k, v in p.items() if k != "kind"})
            if not isinstance(p, Primitive):
                raise ValueError(f"cannot interpret {p!r} as a track primitive")
            parts.append(p)
        if not parts:
            raise ValueError("empty track")
        return cls(tuple(parts))

    @property
    def d(self) -> int:
        return max(p.d for p in self.parts)

    def __call__(self, t, d: int | None = None) -> np.ndarray:
        d = d or self.d
        return sum(p(t, d) for p in self.parts)

    def as_list(self) -> list:
        return [p.as_dict() for p in self.parts]


@dataclass(frozen=True, eq=False)
class MixtureModel:
    truth: TrajectorySet
    weights: np.ndarray
    noise: NoiseSpec
    time: TimeSpec
    tracks: tuple = ()

    @property
    def k(self) -> int:
        return self.truth.k

    @property
    def d(self) -> int:
        return self.truth.d

    def as_dict(self) -> dict:
        return {
            "tracks": [t.as_list() for t in self.tracks],
            "weights": np.asarray(self.weights).tolist(),
            "noise": self.noise.as_dict(),
            "time": self.time.as_dict(),
            "delta": self.truth.delta,
            "m": self.truth.m,
            "s": self.truth.s,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob + self.truth.values.tobytes()).hexdigest()


def _validate_weights(weights, k: int) -> np.ndarray:
    p = np.asarray(weights, dtype=np.float64).reshape(-1)
    if p.shape[0] != k:
        raise InvalidWeights(f"{p.shape[0]} weights for {k} tracks")
    if np.any(~(p > 0)) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidWeights(f"weights must be positive and sum to 1, got {p.tolist()}")
    return p / p.sum()


def make_model(tracks, weights=None, noise: NoiseSpec | None = None,
               time: TimeSpec | None = None, delta: float = 1.0,
               m: int = DEFAULT_GRID_SIZE, s: int = 2, d: int | None = None) -> MixtureModel:
    """Sample the tracks on the grid and validate the model assumptions.

    Each entry of ``tracks`` is a :class:`Primitive`, a primitive dict (with a
    ``kind`` key), a list of those (summed), or a plain callable
    ``f(t) -> (len(t), d)``.
    """
    parsed = [x if callable(x) and not isinstance(x, (Primitive, Track)) else Track.parse(x)
              for x in tracks]
    if not parsed:
        raise ValueError("need at least one track")
    if d is None:
        dims = [x.d for x in parsed if isinstance(x, Track)]
        d = max(dims) if dims else None
    t = grid(m)
    sampled = []
    for x in parsed:
        vals = x(t, d) if isinstance(x, Track) else np.asarray(x(t), dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        sampled.append(vals)
    values = np.stack(sampled)
    k, _, d = values.shape
    noise = noise or NoiseSpec.gaussian(1.0)
    noise.check_dimension(d)
    time = time or TimeSpec()
    p = _validate_weights(np.full(k, 1.0 / k) if weights is None else weights, k)
    truth = TrajectorySet(values, s=s, delta=delta)
    _, gap = separation_check(truth)
    if gap < delta * (1 - SEPARATION_RTOL):
        raise SeparationViolated(f"true tracks come within {gap:.6g} < delta = {delta}")
    return MixtureModel(truth, p, noise, time, tuple(x for x in parsed if isinstance(x, Track)))


def sample(model: MixtureModel, n: int, seed: int):
    """Draw n observations; returns (Dataset, true labels).  Deterministic in ``seed``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    labels = rng.choice(model.k, size=n, p=model.weights)
    times = model.time.sample(rng, n)
    eps = model.noise.sample(rng, n, model.d)
    centers = model.truth.evaluate(times)[labels, np.arange(n)]
    return Dataset(times, centers + eps), labels


DEFAULT_TRACKS = (
    [{"kind": "sinusoid", "offset": [1.0, 0.0], "amplitude": [0.5, 0.0]},
     {"kind": "affine", "intercept": [0.0, 0.0], "slope": [0.0, 1.0]}],
    [{"kind": "sinusoid", "offset": [-1.0, 0.0], "amplitude": [-0.5, 0.0]},
     {"kind": "affine", "intercept": [0.0, 0.0], "slope": [0.0, 1.0]}],
)


def default_scenario(m: int = DEFAULT_GRID_SIZE, sigma: float = 0.25, s: int = 2) -> MixtureModel:
    """Two planar tracks +-(sin(2 pi t) + 2)/2 sharing a drift t; closest gap 1 at t = 3/4."""
    return make_model(DEFAULT_TRACKS, [0.5, 0.5], NoiseSpec.gaussian(sigma), TimeSpec(),
                      delta=1.0, m=m, s=s)
