"""Hot numeric kernels.

Each kernel has two implementations with the same signature: a loop version
compiled with numba and a vectorized numpy/scipy version.  The loop versions
are used when numba imports and ``SDASMOOTH_DISABLE_NUMBA`` is unset (or
``0``); otherwise the numpy versions are used.  Both paths are kept importable
so tests and ``benchmarks/bench_kernels.py`` can compare them directly.
"""
from __future__ import annotations

import os

import numpy as np
import scipy.linalg

from .errors import NumericalError

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    flag = os.environ.get("SDASMOOTH_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def _jit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# cell lookup shared by the interpolation kernels
# ---------------------------------------------------------------------------

def cell_index(times: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Left node index and fractional offset of each time on the uniform grid."""
    scaled = np.asarray(times, dtype=np.float64) * (m - 1)
    idx = np.minimum(np.floor(scaled).astype(np.int64), m - 2)
    idx = np.maximum(idx, 0)
    return idx, scaled - idx


# ---------------------------------------------------------------------------
# symmetric positive definite banded solve
# ---------------------------------------------------------------------------

def _banded_cholesky_solve_loops(ab, rhs):
    # ab is LAPACK lower band storage: ab[i - j, j] = A[i, j]; overwritten by L.
    p = ab.shape[0] - 1
    m = ab.shape[1]
    for j in range(m):
        acc = ab[0, j]
        for k in range(max(0, j - p), j):
            acc -= ab[j - k, k] * ab[j - k, k]
        if not acc > 0.0:
            return j + 1
        ljj = np.sqrt(acc)
        ab[0, j] = ljj
        for i in range(j + 1, min(m, j + p + 1)):
            acc = ab[i - j, j]
            for k in range(max(0, i - p), j):
                acc -= ab[i - k, k] * ab[j - k, k]
            ab[i - j, j] = acc / ljj
    ncol = rhs.shape[1]
    for c in range(ncol):
        for i in range(m):
            acc = rhs[i, c]
            for k in range(max(0, i - p), i):
                acc -= ab[i - k, k] * rhs[k, c]
            rhs[i, c] = acc / ab[0, i]
        for i in range(m - 1, -1, -1):
            acc = rhs[i, c]
            for k in range(i + 1, min(m, i + p + 1)):
                acc -= ab[k - i, i] * rhs[k, c]
            rhs[i, c] = acc / ab[0, i]
    return 0


_banded_cholesky_solve_jit = _jit(_banded_cholesky_solve_loops)


def banded_cholesky_solve_numba(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    work = np.array(ab, dtype=np.float64, order="C", copy=True)
    out = np.array(rhs, dtype=np.float64, order="C", copy=True)
    info = _banded_cholesky_solve_jit(work, out)
    if info != 0:
        raise NumericalError(f"banded matrix not positive definite (pivot {info})")
    return out


def banded_cholesky_solve_numpy(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        factor = scipy.linalg.cholesky_banded(ab, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"banded matrix not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve_banded((factor, True), rhs, check_finite=False)


def banded_cholesky_solve(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``A x = rhs`` for SPD ``A`` given in lower band storage.

    ``rhs`` has shape (m, ncol); all columns share one factorization.
    """
    if USE_NUMBA:
        return banded_cholesky_solve_numba(ab, rhs)
    return banded_cholesky_solve_numpy(ab, rhs)


# ---------------------------------------------------------------------------
# normal equations of the piecewise-linear interpolation operator
# ---------------------------------------------------------------------------

def _interp_gram_loops(times, targets, m, diag, off, aty):
    scale = m - 1
    n = times.shape[0]
    d = targets.shape[1]
    for i in range(n):
        x = times[i] * scale
        g = int(np.floor(x))
        if g > m - 2:
            g = m - 2
        if g < 0:
            g = 0
        w = x - g
        a0 = 1.0 - w
        diag[g] += a0 * a0
        diag[g + 1] += w * w
        off[g] += a0 * w
        for c in range(d):
            aty[g, c] += a0 * targets[i, c]
            aty[g + 1, c] += w * targets[i, c]


_interp_gram_jit = _jit(_interp_gram_loops)


def interp_gram_numba(times, targets, m):
    diag = np.zeros(m)
    off = np.zeros(m - 1)
    aty = np.zeros((m, targets.shape[1]))
    _interp_gram_jit(np.ascontiguousarray(times, dtype=np.float64),
                     np.ascontiguousarray(targets, dtype=np.float64), m, diag, off, aty)
    return diag, off, aty


def interp_gram_numpy(times, targets, m):
    idx, w = cell_index(times, m)
    a0 = 1.0 - w
    diag = np.bincount(idx, a0 * a0, minlength=m) + np.bincount(idx + 1, w * w, minlength=m)
    off = np.bincount(idx, a0 * w, minlength=m - 1)[: m - 1]
    d = targets.shape[1]
    aty = np.empty((m, d))
    for c in range(d):
        aty[:, c] = (np.bincount(idx, a0 * targets[:, c], minlength=m)
                     + np.bincount(idx + 1, w * targets[:, c], minlength=m))
    return diag[:m], off, aty


def interp_gram(times: np.ndarray, targets: np.ndarray, m: int):
    """Tridiagonal ``A^T A`` (diag, off-diag) and ``A^T y`` for linear interpolation."""
    if USE_NUMBA:
        return interp_gram_numba(times, targets, m)
    return interp_gram_numpy(times, targets, m)


# ---------------------------------------------------------------------------
# nearest-trajectory assignment
# ---------------------------------------------------------------------------

def _assign_loops(values, times, targets, labels, sqdist):
    k, m, d = values.shape
    scale = m - 1
    for i in range(times.shape[0]):
        x = times[i] * scale
        g = int(np.floor(x))
        if g > m - 2:
            g = m - 2
        if g < 0:
            g = 0
        w = x - g
        best = np.inf
        arg = 0
        for j in range(k):
            acc = 0.0
            for c in range(d):
                diff = targets[i, c] - ((1.0 - w) * values[j, g, c] + w * values[j, g + 1, c])
                acc += diff * diff
            if acc < best:
                best = acc
                arg = j
        labels[i] = arg
        sqdist[i] = best


_assign_jit = _jit(_assign_loops)


def assign_numba(values, times, targets):
    n = times.shape[0]
    labels = np.empty(n, dtype=np.int64)
    sqdist = np.empty(n)
    _assign_jit(np.ascontiguousarray(values, dtype=np.float64),
                np.ascontiguousarray(times, dtype=np.float64),
                np.ascontiguousarray(targets, dtype=np.float64), labels, sqdist)
    return labels, sqdist


def interp_values(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Evaluate all k trajectories at ``times``; returns shape (k, n, d)."""
    m = values.shape[1]
    idx, w = cell_index(times, m)
    w = w[None, :, None]
    return (1.0 - w) * values[:, idx, :] + w * values[:, idx + 1, :]


def assign_numpy(values, times, targets):
    resid = targets[None, :, :] - interp_values(values, times)
    sq = np.einsum("jnc,jnc->jn", resid, resid)
    labels = np.argmin(sq, axis=0).astype(np.int64)  # first occurrence on ties
    return labels, sq[labels, np.arange(sq.shape[1])]


def assign_nearest(values: np.ndarray, times: np.ndarray, targets: np.ndarray):
    """Smallest-index nearest trajectory and the squared distance to it."""
    if USE_NUMBA:
        return assign_numba(values, times, targets)
    return assign_numpy(values, times, targets)


# ---------------------------------------------------------------------------
# population integrals over the noise variable
# ---------------------------------------------------------------------------
#
# For every (time node, true component) pair p the caller supplies the
# centers c_j = mu_j(t) - mu_dagger_l(t), an orthogonal frame H (noise
# e = H u) and breakpoints along u[0] that put cell boundaries on piece
# edges.  The kernel returns
#   F[p]    = int min_j |e - c_j|^2 phi0(e) de
#   G[p, j] = int_{cell j} (c_j - e) phi0(e) de
# with a tensor rule: Gauss-Legendre (gx, gw on [-1, 1]) on each piece of
# u[0] and the fixed 1-D rule (ox, ow) on every other axis.
# Density family 0: gaussian(par=sigma); 1: isotropic student t(par=dof, scale).

def _noise_density(r2, family, par1, par2, lognorm, d):
    if family == 0:
        return np.exp(lognorm - 0.5 * r2 / (par1 * par1))
    return np.exp(lognorm - 0.5 * (par1 + d) * np.log1p(r2 / (par1 * par2 * par2)))


_noise_density_jit = _jit(_noise_density)


def _population_moments_loops(centers, frames, edges, gx, gw, ox, ow, family, par1, par2,
                              lognorm, want_grad, f_out, g_out):
    npairs, k, d = centers.shape
    nq = gx.shape[0]
    no = ox.shape[0]
    npieces = edges.shape[1] - 1
    nother = 1
    for _ in range(1, d):
        nother *= no
    u = np.empty(d)
    e = np.empty(d)
    for p in range(npairs):
        total = 0.0
        for pc in range(npieces):
            lo = edges[p, pc]
            hi = edges[p, pc + 1]
            if hi <= lo:
                continue
            half = 0.5 * (hi - lo)
            mid = 0.5 * (hi + lo)
            for q in range(nq):
                u[0] = mid + half * gx[q]
                w0 = half * gw[q]
                for r in range(nother):
                    w = w0
                    rr = r
                    for ax in range(1, d):
                        qi = rr % no
                        rr //= no
                        u[ax] = ox[qi]
                        w *= ow[qi]
                    r2 = 0.0
                    for ax in range(d):
                        r2 += u[ax] * u[ax]
                    w *= _noise_density_jit(r2, family, par1, par2, lognorm, d)
                    for a1 in range(d):
                        acc = 0.0
                        for b1 in range(d):
                            acc += frames[p, a1, b1] * u[b1]
                        e[a1] = acc
                    best = np.inf
                    arg = 0
                    for j in range(k):
                        acc = 0.0
                        for c in range(d):
                            diff = e[c] - centers[p, j, c]
                            acc += diff * diff
                        if acc < best:
                            best = acc
                            arg = j
                    total += w * best
                    if want_grad:
                        for c in range(d):
                            g_out[p, arg, c] += w * (centers[p, arg, c] - e[c])
        f_out[p] = total


_population_moments_jit = _jit(_population_moments_loops)


def population_moments_numba(centers, frames, edges, gx, gw, ox, ow, family, par1, par2,
                             lognorm, want_grad):
    npairs, k, d = centers.shape
    f_out = np.zeros(npairs)
    g_out = np.zeros((npairs, k, d))
    _population_moments_jit(np.ascontiguousarray(centers), np.ascontiguousarray(frames),
                            np.ascontiguousarray(edges), gx, gw, ox, ow, int(family),
                            float(par1), float(par2), float(lognorm), bool(want_grad), f_out, g_out)
    return f_out, g_out


def _sum_squares(cols):
    acc = cols[0] * cols[0]
    for col in cols[1:]:
        acc += col * col
    return acc


def population_moments_numpy(centers, frames, edges, gx, gw, ox, ow, family, par1, par2,
                             lognorm, want_grad, chunk=64):
    npairs, k, d = centers.shape
    if d > 1:
        # axis 1 varies slowest, matching the loop kernel's digit order reversed
        other = np.stack(np.meshgrid(*([ox] * (d - 1)), indexing="ij"), -1).reshape(-1, d - 1)
        w_other = np.prod(np.stack(np.meshgrid(*([ow] * (d - 1)), indexing="ij"), -1)
                          .reshape(-1, d - 1), axis=1)
    else:
        other, w_other = np.zeros((1, 0)), np.ones(1)
    f_out = np.zeros(npairs)
    g_out = np.zeros((npairs, k, d))
    for start in range(0, npairs, chunk):
        sl = slice(start, min(npairs, start + chunk))
        ed = edges[sl]
        half = 0.5 * np.maximum(ed[:, 1:] - ed[:, :-1], 0.0)
        mid = 0.5 * (ed[:, 1:] + ed[:, :-1])
        u0 = (mid[:, :, None] + half[:, :, None] * gx).reshape(ed.shape[0], -1)
        w0 = (half[:, :, None] * gw).reshape(ed.shape[0], -1)
        nb = u0.shape[0]
        u = np.empty((nb, u0.shape[1], other.shape[0], d))
        u[..., 0] = u0[:, :, None]
        u[..., 1:] = other[None, None]
        w = w0[:, :, None] * w_other[None, None]
        u = u.reshape(nb, -1, d)
        w = w.reshape(nb, -1)
        # reductions over the short coordinate axis are slow; sum coordinates by hand
        w = w * _noise_density(_sum_squares(np.moveaxis(u, 2, 0)), family, par1, par2, lognorm, d)
        e = u @ np.swapaxes(frames[sl], 1, 2)
        cols = np.ascontiguousarray(np.moveaxis(e, 2, 0))
        c = centers[sl]
        # strict < keeps the smallest index on ties
        best = _sum_squares(cols - c[:, 0, :].T[:, :, None])
        arg = np.zeros(best.shape, dtype=np.int64)
        for j in range(1, k):
            sq = _sum_squares(cols - c[:, j, :].T[:, :, None])
            better = sq < best
            best = np.where(better, sq, best)
            arg[better] = j
        f_out[sl] = np.sum(w * best, axis=1)
        if want_grad:
            for j in range(k):
                wj = np.where(arg == j, w, 0.0)
                g_out[sl, j] = wj.sum(axis=1)[:, None] * c[:, j] - (wj[:, None, :] @ e)[:, 0]
    return f_out, g_out


def population_moments(centers, frames, edges, gx, gw, ox, ow, family, par1, par2, lognorm,
                       want_grad=True):
    if USE_NUMBA:
        return population_moments_numba(centers, frames, edges, gx, gw, ox, ow, family,
                                        par1, par2, lognorm, want_grad)
    return population_moments_numpy(centers, frames, edges, gx, gw, ox, ow, family,
                                    par1, par2, lognorm, want_grad)
