"""Inverse-CDF sampling from a tabulated, unnormalized 1-D log-density."""
from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import PchipInterpolator

N_NODES = 2048
TAIL_MASS = 1e-12
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class TabulationError(RuntimeError):
    pass


def _cell_masses(logpdf, nodes, shift):
    a, b = nodes[:-1], nodes[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    x = mid[:, None] + half[:, None] * _GL_X[None, :]
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.exp(logpdf(x) - shift)
    vals = np.where(np.isfinite(vals), vals, 0.0)
    return half * (vals @ _GL_W)


class InverseCDF:
    """Monotone-cubic interpolant of the quantile function.

    The CDF is tabulated on ``nodes`` by 8-point Gauss-Legendre quadrature per
    cell; the quantile is the PCHIP interpolant through ``(cdf, nodes)``.
    """

    def __init__(self, nodes, cdf):
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        self.nodes = np.asarray(nodes)[keep]
        self.cdf = np.asarray(cdf)[keep]
        if self.nodes.size < 2:
            raise TabulationError("degenerate CDF table")
        self._interp = PchipInterpolator(self.cdf, self.nodes, extrapolate=False)

    def __call__(self, u):
        u = np.clip(np.asarray(u, dtype=np.float64), self.cdf[0], self.cdf[-1])
        return self._interp(u)

    @classmethod
    def from_logpdf(cls, logpdf, lo, hi, n_nodes=N_NODES, log_spaced=False):
        """Table over ``[lo, hi]``; ``logpdf`` must be vectorized and may return -inf."""
        if log_spaced:
            lo_pos = max(lo, hi * 1e-300)
            nodes = np.geomspace(lo_pos, hi, n_nodes)
            if lo == 0.0:
                nodes[0] = 0.0
        else:
            nodes = np.linspace(lo, hi, n_nodes)
        probe = np.linspace(lo, hi, 4097)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = logpdf(probe)
        finite = lp[np.isfinite(lp)]
        if finite.size == 0:
            raise TabulationError("density vanishes on the tabulation range")
        shift = float(np.max(finite))
        with np.errstate(divide="ignore", invalid="ignore"):
            masses = _cell_masses(logpdf, nodes, shift)
        cdf = np.concatenate([[0.0], np.cumsum(masses)])
        if not cdf[-1] > 0:
            raise TabulationError("zero total mass on the tabulation range")
        return cls(nodes, cdf / cdf[-1])

    def sample(self, gen: np.random.Generator, count: int) -> np.ndarray:
        return self(gen.random(count))


def radial_table(log_density, scale, n_nodes=N_NODES, tail_mass=TAIL_MASS, cutoff=math.inf):
    """Table for a density on (0, cutoff) with light tails.

    The upper end doubles from ``scale`` until the mass beyond it is below
    ``tail_mass``; the lower end halves likewise.  Nodes are log-spaced.
    """
    hi = float(scale)
    if math.isfinite(cutoff):
        hi = cutoff
    else:
        for _ in range(200):
            x = np.geomspace(hi * 1e-12, 64 * hi, 8193)
            with np.errstate(divide="ignore", invalid="ignore"):
                lv = log_density(x)
            finite = np.isfinite(lv)
            w = np.where(finite, np.exp(lv - np.max(lv[finite])), 0.0) * np.gradient(x)
            tail = np.sum(w[x > hi]) / np.sum(w)
            if tail < tail_mass:
                break
            hi *= 2.0
        else:
            raise TabulationError("could not find an upper quantile with tail mass below tolerance")
    lo = hi * 1e-3
    for _ in range(400):
        x = np.geomspace(lo * 1e-6, hi, 8193)
        with np.errstate(divide="ignore", invalid="ignore"):
            lv = log_density(x)
        finite = np.isfinite(lv)
        if not np.any(finite):
            raise TabulationError("density vanishes on the tabulation range")
        w = np.where(finite, np.exp(lv - np.max(lv[finite])), 0.0) * np.gradient(x)
        head = np.sum(w[x < lo]) / np.sum(w)
        if head < tail_mass:
            break
        lo *= 0.5
    if lo < 1e-280:
        lo = 0.0
    return InverseCDF.from_logpdf(log_density, lo, hi, n_nodes=n_nodes, log_spaced=lo > 0)
