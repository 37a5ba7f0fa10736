"""Hit-and-run with slice sampling along the chord.

One step of a chain at ``z``: draw a uniform direction ``u``, a slice level
``y = logp(z) - Exp(1)``, step out a bracket of width ``w`` (at most ``m``
widths) and shrink it until a point of the slice is hit.  For a flat target on
a convex body this is exactly hit-and-run; for a log-concave target the slice
is an interval, so the bracket procedure is exact.

Random numbers are drawn by the caller from a numpy generator and handed to
the kernel, so the numba kernel and the vectorized numpy kernel consume
identical streams.  Per step and chain the kernel reads ``d`` normals and
``3 + MAX_SHRINK`` uniforms.  A chain that exhausts its shrink budget stays
put, which keeps the move reversible.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import NUMBA_ENABLED, is_jitted, njit

MAX_SHRINK = 48
N_UNIFORMS = 3 + MAX_SHRINK


@njit
def _advance_jit(logp, z, lp, normals, unif, width, max_out):
    n_steps, n_chains, d = normals.shape
    u = np.empty(d)
    trial = np.empty(d)
    for c in range(n_chains):
        for s in range(n_steps):
            norm = 0.0
            for j in range(d):
                u[j] = normals[s, c, j]
                norm += u[j] * u[j]
            norm = math.sqrt(norm)
            for j in range(d):
                u[j] /= norm
            level = lp[c] + math.log(1.0 - unif[s, c, 0])
            left = -width * unif[s, c, 1]
            right = left + width
            jl = int(math.floor(max_out * unif[s, c, 2]))
            jr = max_out - 1 - jl
            while jl > 0:
                for j in range(d):
                    trial[j] = z[c, j] + left * u[j]
                if logp(trial) <= level:
                    break
                left -= width
                jl -= 1
            while jr > 0:
                for j in range(d):
                    trial[j] = z[c, j] + right * u[j]
                if logp(trial) <= level:
                    break
                right += width
                jr -= 1
            for k in range(MAX_SHRINK):
                a = left + unif[s, c, 3 + k] * (right - left)
                for j in range(d):
                    trial[j] = z[c, j] + a * u[j]
                val = logp(trial)
                if val > level:
                    for j in range(d):
                        z[c, j] = trial[j]
                    lp[c] = val
                    break
                if a < 0.0:
                    left = a
                else:
                    right = a


def _advance_numpy(logp_batch, z, lp, normals, unif, width, max_out):
    n_steps, n_chains, d = normals.shape
    rows = np.arange(n_chains)
    for s in range(n_steps):
        u = normals[s] / np.linalg.norm(normals[s], axis=1, keepdims=True)
        level = lp + np.log1p(-unif[s, :, 0])
        left = -width * unif[s, :, 1]
        right = left + width
        jl = np.floor(max_out * unif[s, :, 2]).astype(np.int64)
        jr = max_out - 1 - jl
        active = jl > 0
        while np.any(active):
            idx = rows[active]
            vals = logp_batch(z[idx] + left[idx, None] * u[idx])
            grow = vals > level[idx]
            left[idx[grow]] -= width
            jl[idx[grow]] -= 1
            active[idx[~grow]] = False
            active &= jl > 0
        active = jr > 0
        while np.any(active):
            idx = rows[active]
            vals = logp_batch(z[idx] + right[idx, None] * u[idx])
            grow = vals > level[idx]
            right[idx[grow]] += width
            jr[idx[grow]] -= 1
            active[idx[~grow]] = False
            active &= jr > 0
        pending = np.ones(n_chains, dtype=bool)
        for k in range(MAX_SHRINK):
            idx = rows[pending]
            if idx.size == 0:
                break
            a = left[idx] + unif[s, idx, 3 + k] * (right[idx] - left[idx])
            trial = z[idx] + a[:, None] * u[idx]
            vals = logp_batch(trial)
            hit = vals > level[idx]
            z[idx[hit]] = trial[hit]
            lp[idx[hit]] = vals[hit]
            pending[idx[hit]] = False
            miss = idx[~hit]
            am = a[~hit]
            neg = am < 0
            left[miss[neg]] = am[neg]
            right[miss[~neg]] = am[~neg]


def use_jit(logp_scalar) -> bool:
    return NUMBA_ENABLED and logp_scalar is not None and is_jitted(logp_scalar)


def advance(z, lp, gen, n_steps, width, max_out, logp_batch, logp_scalar=None, force_numpy=False):
    """Advance all chains in place by ``n_steps`` hit-and-run slice steps."""
    n_chains, d = z.shape
    normals = gen.standard_normal((n_steps, n_chains, d))
    unif = gen.random((n_steps, n_chains, N_UNIFORMS))
    if not force_numpy and use_jit(logp_scalar):
        _advance_jit(logp_scalar, z, lp, normals, unif, float(width), int(max_out))
    else:
        _advance_numpy(logp_batch, z, lp, normals, unif, float(width), int(max_out))


def run_chains(start, gen, n_keep, thin, burn, width, logp_batch, logp_scalar=None,
               max_out=16, force_numpy=False, block=256):
    """Run ``len(start)`` chains; return draws of shape ``(chains, n_keep, d)``."""
    z = np.array(start, dtype=np.float64, copy=True)
    lp = np.asarray(logp_batch(z), dtype=np.float64).copy()
    if not np.all(np.isfinite(lp)):
        raise ValueError("starting points must have finite log-density")
    remaining = burn
    while remaining > 0:
        k = min(block, remaining)
        advance(z, lp, gen, k, width, max_out, logp_batch, logp_scalar, force_numpy)
        remaining -= k
    out = np.empty((z.shape[0], n_keep, z.shape[1]))
    for i in range(n_keep):
        advance(z, lp, gen, thin, width, max_out, logp_batch, logp_scalar, force_numpy)
        out[:, i, :] = z
    return out


def integrated_autocorr_time(series, c=5.0):
    """Chain-averaged integrated autocorrelation time with Sokal's window.

    ``series`` has shape ``(chains, length)``.
    """
    x = np.atleast_2d(np.asarray(series, dtype=np.float64))
    n = x.shape[1]
    if n < 4:
        return 1.0
    x = x - x.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, n=nfft, axis=1)
    acf = np.fft.irfft(f * np.conj(f), n=nfft, axis=1)[:, :n].mean(axis=0)
    if acf[0] <= 0:
        return 1.0
    acf = acf / acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * taus
    m = int(np.argmax(window)) if np.any(window) else n - 1
    return float(max(taus[m], 1.0))
