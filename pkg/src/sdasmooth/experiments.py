"""Experiment drivers behind the command-line tools.

Each driver is a pure function of a :class:`~sdasmooth.config.Config`: every
random stream is derived from the config seed and the job coordinates, so the
output does not depend on how jobs are scheduled.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy import stats

from . import _kernels
from .config import Config
from .errors import ConfigError
from .population import GateauxForm, objective_population, population_moments
from .solver import Dataset, solve
from .synth import MixtureModel, sample
from .trajectory import TrajectorySet, hs_distance

THREADS_ENV = "SDASMOOTH_THREADS"

# stream tags for derive_seed
_DATA, _SOLVER, _REFERENCE, _DIRECTIONS, _GAMMA = 1, 2, 3, 4, 5


def derive_seed(*keys: int) -> int:
    """A 32-bit seed determined by the integer key tuple."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def resolve_threads(flag: int | None) -> int:
    if flag is not None:
        value, where = flag, "--threads"
    else:
        raw = os.environ.get(THREADS_ENV, "1")
        where = THREADS_ENV
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{where}: thread count must be >= 1, got {value}")
    return value


def _map(fn, jobs: list, threads: int) -> list:
    # results come back in job order whatever the completion order
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def loglog_slope(sizes, values) -> dict:
    """OLS fit of log(values) on log(sizes)."""
    x = np.log(np.asarray(sizes, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    fit = stats.linregress(x, y)
    return {"slope": float(fit.slope), "slope_stderr": float(fit.stderr),
            "intercept": float(fit.intercept)}


def label_agreement(labels, truth, k: int) -> float:
    """Best fraction of matching labels over relabelings."""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    kk = max(k, int(truth.max()) + 1)
    best = 0
    for perm in itertools.permutations(range(kk), k):
        best = max(best, int(np.sum(np.asarray(perm)[labels] == truth)))
    return best / labels.shape[0]


# ---------------------------------------------------------------------------
# generate / fit
# ---------------------------------------------------------------------------

def run_generate(cfg: Config):
    """Returns (Dataset, labels, sidecar metadata)."""
    model = cfg.model()
    n = cfg.sample_size()
    data, labels = sample(model, n, cfg.seed)
    meta = {
        "seed": cfg.seed,
        "n": n,
        "k": model.k,
        "d": model.d,
        "model_sha256": model.fingerprint(),
        "model": model.as_dict(),
    }
    return data, labels, meta


def run_fit(data: Dataset, cfg: Config, labels=None):
    """Returns (fitted TrajectorySet, report dict)."""
    smoother = cfg.smoother()
    solver = cfg.solver()
    tset, rep = solve(data, solver["k"], smoother, delta=solver["delta"],
                      restarts=solver["restarts"], seed=cfg.seed, init=solver["init"])
    report = {
        "n": data.n,
        "d": data.d,
        "k": solver["k"],
        "s": smoother.s,
        "lam": smoother.lam,
        "m": smoother.m,
        "seed": cfg.seed,
        "restarts": solver["restarts"],
        "init": solver["init"],
        "delta": solver["delta"],
        **rep.as_dict(),
        "cluster_sizes": np.bincount(rep.labels, minlength=solver["k"]).tolist(),
    }
    if labels is not None:
        report["label_agreement"] = label_agreement(rep.labels, labels, solver["k"])
    return tset, report


# ---------------------------------------------------------------------------
# rate study
# ---------------------------------------------------------------------------

def _rate_job(job):
    cfg, model, reference, n, rep = job
    smoother = cfg.smoother()
    solver = cfg.solver()
    data_seed = derive_seed(cfg.seed, _DATA, n, rep)
    solver_seed = derive_seed(cfg.seed, _SOLVER, n, rep)
    data, _ = sample(model, n, data_seed)
    tset, report = solve(data, solver["k"], smoother, delta=solver["delta"],
                         restarts=solver["restarts"], seed=solver_seed, init=solver["init"])
    return {
        "n": n,
        "replicate": rep,
        "data_seed": data_seed,
        "solver_seed": solver_seed,
        "error": hs_distance(tset, reference),
        "objective": report.objective,
        "iterations": report.iterations,
        "converged": report.converged,
        "separation_ok": report.separation_ok,
        "min_gap": report.min_gap,
    }


RATE_COLUMNS = ("n", "replicate", "data_seed", "solver_seed", "error", "objective",
                "iterations", "converged", "separation_ok", "min_gap")


def reference_fit(cfg: Config, model: MixtureModel):
    """Large-sample surrogate for the population minimizer."""
    study = cfg.rate_study()
    smoother = cfg.smoother()
    solver = cfg.solver()
    n_ref = study["reference_n"]
    data, _ = sample(model, n_ref, derive_seed(cfg.seed, _REFERENCE, n_ref, 0))
    return solve(data, solver["k"], smoother, delta=solver["delta"],
                 restarts=study["reference_restarts"],
                 seed=derive_seed(cfg.seed, _REFERENCE, n_ref, 1), init=solver["init"])


def run_rate_study(cfg: Config, threads: int = 1):
    """Returns (per-run rows in (n, replicate) order, summary dict)."""
    study = cfg.rate_study()
    model = cfg.model()
    reference, ref_report = reference_fit(cfg, model)
    jobs = [(cfg, model, reference, n, rep)
            for n in study["n_grid"] for rep in range(study["replicates"])]
    rows = _map(_rate_job, jobs, threads)

    grid = study["n_grid"]
    medians = [float(np.median([r["error"] for r in rows if r["n"] == n])) for n in grid]
    flagged = [(r["n"], r["replicate"]) for r in rows if not r["separation_ok"]]
    summary = {
        "seed": cfg.seed,
        "model_sha256": model.fingerprint(),
        "n_grid": grid,
        "replicates": study["replicates"],
        "reference_n": study["reference_n"],
        "reference_objective": ref_report.objective,
        "reference_separation_ok": ref_report.separation_ok,
        "reference_min_gap": ref_report.min_gap,
        "median_error": medians,
        "all_errors_positive": all(r["error"] > 0 for r in rows),
        "median_decreasing": all(b < a for a, b in zip(medians, medians[1:])),
        "separation_failures": len(flagged),
        "separation_failed_runs": [list(x) for x in flagged],
        **loglog_slope(grid, medians),
    }
    return rows, summary


# ---------------------------------------------------------------------------
# derivative check
# ---------------------------------------------------------------------------

def random_direction(rng: np.random.Generator, k: int, m: int, d: int, terms: int = 3) -> np.ndarray:
    """Smooth random trajectories: a constant plus a few Fourier modes, (k, m, d)."""
    t = np.linspace(0.0, 1.0, m)[None, :, None]
    out = rng.standard_normal((k, 1, d)) * np.ones((1, m, 1))
    for f in range(1, terms + 1):
        a = rng.standard_normal((k, 1, d)) / f
        b = rng.standard_normal((k, 1, d)) / f
        out = out + a * np.cos(2 * np.pi * f * t) + b * np.sin(2 * np.pi * f * t)
    return out


def relative_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    return 0.0 if scale == 0.0 else abs(analytic - numeric) / scale


def run_grad_check(cfg: Config) -> dict:
    """Analytic directional derivative against central differences."""
    sec = cfg.grad_check()
    model = cfg.model()
    quad = cfg.quadrature()
    rng = np.random.default_rng(derive_seed(cfg.seed, _DIRECTIONS))
    truth = model.truth
    base = truth.values + sec["perturbation"] * random_direction(rng, truth.k, truth.m, truth.d)
    mu = truth.with_values(base)
    lam, step = sec["lam"], sec["step"]
    form = GateauxForm(mu, model, quad, lam)
    checks = []
    for _ in range(sec["directions"]):
        nu = random_direction(rng, mu.k, mu.m, mu.d)
        analytic = form(nu)
        plus = objective_population(mu.with_values(base + step * nu), model, quad, lam)
        minus = objective_population(mu.with_values(base - step * nu), model, quad, lam)
        numeric = (plus - minus) / (2 * step)
        checks.append({"analytic": analytic, "numeric": numeric,
                       "relative_error": relative_error(analytic, numeric)})
    worst = max(c["relative_error"] for c in checks)
    return {
        "seed": cfg.seed,
        "model_sha256": model.fingerprint(),
        "lam": lam,
        "step": step,
        "directions": sec["directions"],
        "max_relative_error": worst,
        "tolerance": sec["tolerance"],
        "passed": worst < sec["tolerance"],
        "checks": checks,
    }


# ---------------------------------------------------------------------------
# empirical vs population objective
# ---------------------------------------------------------------------------

def _gamma_job(job):
    values, s, delta, model, seed, n, rep = job
    data_seed = derive_seed(seed, _GAMMA, n, rep)
    data, _ = sample(model, n, data_seed)
    _, sq = _kernels.assign_nearest(values, data.times, data.targets)
    return {"n": n, "replicate": rep, "data_seed": data_seed, "f_n": float(sq.mean())}


GAMMA_COLUMNS = ("n", "replicate", "data_seed", "f_n", "f_inf", "abs_error")


def gamma_trajectories(cfg: Config, model: MixtureModel) -> TrajectorySet:
    sec = cfg.gamma_check()
    truth = model.truth
    if sec["perturbation"] == 0:
        return truth
    rng = np.random.default_rng(derive_seed(cfg.seed, _GAMMA))
    return truth.with_values(truth.values + sec["perturbation"]
                             * random_direction(rng, truth.k, truth.m, truth.d))


def run_gamma_check(cfg: Config, threads: int = 1):
    """|f_n(mu) - f_inf(mu)| over a grid of n at a fixed mu.

    The penalty is common to both objectives and cancels, so only data terms
    are compared.
    """
    sec = cfg.gamma_check()
    model = cfg.model()
    mu = gamma_trajectories(cfg, model)
    f_inf = population_moments(mu, model, cfg.quadrature(), want_grad=False).data_term
    jobs = [(mu.values, mu.s, mu.delta, model, cfg.seed, n, rep)
            for n in sec["n_grid"] for rep in range(sec["replicates"])]
    rows = _map(_gamma_job, jobs, threads)
    for r in rows:
        r["f_inf"] = f_inf
        r["abs_error"] = abs(r["f_n"] - f_inf)
    grid = sec["n_grid"]
    rms = [math.sqrt(float(np.mean([r["abs_error"] ** 2 for r in rows if r["n"] == n])))
           for n in grid]
    summary = {
        "seed": cfg.seed,
        "model_sha256": model.fingerprint(),
        "n_grid": grid,
        "replicates": sec["replicates"],
        "f_inf": f_inf,
        "rms_error": rms,
        **loglog_slope(grid, rms),
    }
    return rows, summary
