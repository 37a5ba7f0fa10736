"""Moment summaries, isotropy diagnostics, whitening and moment identities.

Point estimates come from exact power sums: every float is split into an
integer mantissa and exponent and summed without rounding, so summaries
depend only on the multiset of samples.  Merging partial accumulators is
therefore exactly associative and commutative.  Standard errors come from
batch means over contiguous blocks.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .batch import SampleBatch

N_BATCHES = 32
SE_GATE = 4.0
_CHUNK = 1 << 25


def exact_sum(values) -> Fraction:
    """Exact sum of float64 values as a Fraction."""
    a = np.asarray(values, dtype=np.float64).ravel()
    a = a[a != 0.0]
    if a.size == 0:
        return Fraction(0)
    if not np.all(np.isfinite(a)):
        raise ValueError("exact_sum of non-finite values")
    m, e = np.frexp(a)
    mant = np.ldexp(m, 53).astype(np.int64)
    e = e.astype(np.int64) - 53
    hi = mant >> 26
    lo = mant - (hi << 26)
    emin = int(e.min())
    idx = e - emin
    nbins = int(idx.max()) + 1
    total = 0
    for start in range(0, a.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        shi = np.bincount(idx[sl], weights=hi[sl].astype(np.float64), minlength=nbins)
        slo = np.bincount(idx[sl], weights=lo[sl].astype(np.float64), minlength=nbins)
        for b in np.flatnonzero((shi != 0) | (slo != 0)):
            total += ((int(shi[b]) << 26) + int(slo[b])) << int(b)
    return Fraction(total) * Fraction(2) ** emin


@dataclass(frozen=True)
class _Block:
    count: int
    mean: np.ndarray
    cov: np.ndarray
    second: float
    var_norm_sq: float


@dataclass
class MomentAccumulator:
    """Streaming exact power sums of x, x x^T, |x|^2 and |x|^4."""

    dim: int
    count: int = 0
    s1: list = field(default_factory=list)
    s2: dict = field(default_factory=dict)
    q1: Fraction = Fraction(0)
    q2: Fraction = Fraction(0)
    blocks: tuple = ()

    def __post_init__(self):
        if not self.s1:
            self.s1 = [Fraction(0)] * self.dim
        if not self.s2:
            self.s2 = {(i, j): Fraction(0) for i in range(self.dim) for j in range(i, self.dim)}

    def push(self, x) -> "MomentAccumulator":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None] if self.dim == 1 else x[None, :]
        if x.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} columns, got {x.shape[1]}")
        if x.shape[0] == 0:
            return self
        sq = np.einsum("ij,ij->i", x, x)
        for i in range(self.dim):
            self.s1[i] += exact_sum(x[:, i])
            for j in range(i, self.dim):
                self.s2[i, j] += exact_sum(x[:, i] * x[:, j])
        self.q1 += exact_sum(sq)
        self.q2 += exact_sum(sq * sq)
        self.count += x.shape[0]
        mean = x.mean(axis=0)
        cov = np.atleast_2d(np.cov(x, rowvar=False, bias=True)) if x.shape[0] > 1 else np.zeros((self.dim,) * 2)
        self.blocks = self.blocks + (_Block(x.shape[0], mean, cov, float(sq.mean()), float(sq.var())),)
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch in merge")
        return MomentAccumulator(
            self.dim, self.count + other.count,
            [a + b for a, b in zip(self.s1, other.s1)],
            {key: self.s2[key] + other.s2[key] for key in self.s2},
            self.q1 + other.q1, self.q2 + other.q2, self.blocks + other.blocks,
        )

    __add__ = merge

    def exact_state(self) -> tuple:
        return (self.count, tuple(self.s1), tuple(sorted(self.s2.items())), self.q1, self.q2)

    def summary(self) -> "MomentSummary":
        n = self.count
        if n < 1:
            raise ValueError("empty accumulator")
        N = Fraction(n)
        mean_f = [s / N for s in self.s1]
        cov = np.empty((self.dim, self.dim))
        for (i, j), s in self.s2.items():
            cov[i, j] = cov[j, i] = float(s / N - mean_f[i] * mean_f[j])
        second_f = self.q1 / N
        var_nsq = float(self.q2 / N - second_f * second_f)
        return MomentSummary(
            mean=np.array([float(m) for m in mean_f]), covariance=cov, second_moment=float(second_f),
            var_norm_sq=var_nsq, count=n, std_errors=_batch_means_se(self.blocks, self.dim),
        )


def _batch_means_se(blocks, dim):
    if len(blocks) < 2:
        nan = float("nan")
        return {"mean": np.full(dim, nan), "covariance": np.full((dim, dim), nan),
                "second_moment": nan, "var_norm_sq": nan}
    b = len(blocks)
    root = math.sqrt(b)
    return {
        "mean": np.std([blk.mean for blk in blocks], axis=0, ddof=1) / root,
        "covariance": np.std([blk.cov for blk in blocks], axis=0, ddof=1) / root,
        "second_moment": float(np.std([blk.second for blk in blocks], ddof=1) / root),
        "var_norm_sq": float(np.std([blk.var_norm_sq for blk in blocks], ddof=1) / root),
    }


@dataclass
class MomentSummary:
    mean: np.ndarray
    covariance: np.ndarray
    second_moment: float
    var_norm_sq: float
    count: int
    std_errors: dict

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_json(self) -> dict:
        def enc(v):
            arr = np.asarray(v, dtype=np.float64)
            return {"decimal": arr.tolist(), "hex": [float(x).hex() for x in arr.ravel()]}
        return {
            "count": self.count,
            "mean": enc(self.mean),
            "covariance": enc(self.covariance),
            "second_moment": enc(self.second_moment),
            "var_norm_sq": enc(self.var_norm_sq),
            "std_errors": {k: enc(v) for k, v in self.std_errors.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MomentSummary":
        def dec(entry, shape=None):
            arr = np.array([float.fromhex(h) for h in entry["hex"]])
            return arr.reshape(shape) if shape is not None else arr
        mean = dec(obj["mean"])
        n = mean.shape[0]
        se = obj["std_errors"]
        return cls(
            mean=mean, covariance=dec(obj["covariance"], (n, n)),
            second_moment=float(dec(obj["second_moment"])[0]), var_norm_sq=float(dec(obj["var_norm_sq"])[0]),
            count=int(obj["count"]),
            std_errors={"mean": dec(se["mean"]), "covariance": dec(se["covariance"], (n, n)),
                        "second_moment": float(dec(se["second_moment"])[0]),
                        "var_norm_sq": float(dec(se["var_norm_sq"])[0])},
        )


def _data(batch):
    return batch.data if isinstance(batch, SampleBatch) else np.atleast_2d(np.asarray(batch, dtype=np.float64))


def accumulate(batch, n_batches=N_BATCHES) -> MomentAccumulator:
    x = _data(batch)
    acc = MomentAccumulator(x.shape[1])
    for chunk in np.array_split(x, min(n_batches, x.shape[0])):
        acc.push(chunk)
    return acc


def summarize(batch, n_batches=N_BATCHES) -> MomentSummary:
    x = _data(batch)
    if x.shape[0] < 2:
        raise ValueError("summarize needs at least two draws")
    return accumulate(x, n_batches).summary()


# -- isotropy ------------------------------------------------------------------

@dataclass
class IsotropyDiagnostic:
    mean_norm: float
    diag_spread: float
    offdiag_ratio: float
    max_mean_z: float
    max_diag_z: float
    max_offdiag_z: float
    isotropic: bool


def isotropy_check(summary: MomentSummary, se_gate: float = SE_GATE) -> IsotropyDiagnostic:
    cov, se = summary.covariance, summary.std_errors
    eig = np.linalg.eigvalsh(cov)
    diag = np.diag(cov)
    avg = float(diag.mean())
    off = cov - np.diag(diag)
    n = summary.dim
    mean_z = np.max(np.abs(summary.mean) / _nz(se["mean"]))
    diag_z = np.max(np.abs(diag - avg) / _nz(np.diag(se["covariance"]))) if n > 1 else 0.0
    off_z = np.max(np.abs(off) / _nz(se["covariance"] + np.eye(n))) if n > 1 else 0.0
    ok = mean_z <= se_gate and diag_z <= se_gate and off_z <= se_gate
    return IsotropyDiagnostic(
        mean_norm=float(np.linalg.norm(summary.mean)),
        diag_spread=float(eig[-1] / eig[0]) if eig[0] > 0 else math.inf,
        offdiag_ratio=float(np.max(np.abs(off)) / avg) if avg > 0 else math.inf,
        max_mean_z=float(mean_z), max_diag_z=float(diag_z), max_offdiag_z=float(off_z),
        isotropic=bool(ok),
    )


def _nz(se):
    se = np.asarray(se, dtype=np.float64)
    return np.where(se > 0, se, np.inf)


@dataclass(frozen=True)
class LinearMap:
    """y = matrix @ (x - center)."""

    center: np.ndarray
    matrix: np.ndarray

    def __call__(self, x):
        return (np.asarray(x, dtype=np.float64) - self.center) @ self.matrix.T


def whiten(batch: SampleBatch):
    """Recenter and transform so the empirical covariance is (E|X|^2 / n) I."""
    x = batch.data
    center = x.mean(axis=0)
    y = x - center
    cov = (y.T @ y) / x.shape[0]
    eig, vec = np.linalg.eigh(cov)
    if not eig[0] > 1e-10 * eig[-1]:
        raise ValueError("covariance is (numerically) singular; cannot whiten")
    level = float(np.sum(eig)) / x.shape[1]
    matrix = (vec * np.sqrt(level / eig)) @ vec.T
    mapping = LinearMap(center, matrix)
    return batch.with_data(y @ matrix.T, generator=batch.provenance.generator + "+whitened"), mapping


# -- identities used by the experiments -----------------------------------------------

def _block_se(values, n_batches=N_BATCHES):
    v = np.asarray(values, dtype=np.float64)
    parts = np.array_split(v, min(n_batches, v.shape[0]))
    means = np.array([p.mean() for p in parts])
    return float(np.std(means, ddof=1) / math.sqrt(len(means)))


def radial_variance_ratio(r, n: int):
    """n Var(R) / E(R^2) with a delta-method standard error (i.i.d. draws)."""
    r = np.asarray(r, dtype=np.float64).ravel()
    m = r.size
    m1, m2 = r.mean(), np.mean(r * r)
    cov = np.cov(np.vstack([r, r * r]), bias=False) / m
    ratio = n * (m2 - m1 * m1) / m2
    grad = np.array([-2 * n * m1 / m2, n * m1 * m1 / (m2 * m2)])
    return float(ratio), float(math.sqrt(max(grad @ cov @ grad, 0.0)))


def scale_identity_gap(r, s, n: int):
    """E(R^2) (n+2)/n - E(S^2) with the combined standard error of independent samples."""
    r2 = np.asarray(r, dtype=np.float64).ravel() ** 2
    s2 = np.asarray(s, dtype=np.float64).ravel() ** 2
    k = (n + 2) / n
    gap = k * r2.mean() - s2.mean()
    se = math.sqrt(k * k * r2.var(ddof=1) / r2.size + s2.var(ddof=1) / s2.size)
    return float(gap), float(se)


@dataclass
class BlockIsotropyReport:
    labels: list
    ratios: list
    std_errors: list
    max_discrepancy_z: float
    worst_pair: tuple
    u_second_moments: list
    consistent: bool


def block_isotropy_check(x0, scales, uniforms, dims, se_gate: float = SE_GATE) -> BlockIsotropyReport:
    """Compare E(S_i^2)/n_i, E|X0|^2/n0 and E|X|^2/N on paired draws.

    ``x0`` is an ``(m, n0)`` array (or None when n0 = 0), ``scales`` a list of
    ``(m,)`` arrays and ``uniforms`` a list of ``(m, n_i)`` arrays with
    E|U_i|^2 = 1.  ``dims`` = [n0, n_1, ..., n_k].
    """
    n0, block_dims = dims[0], list(dims[1:])
    N = n0 + sum(block_dims)
    per_sample, labels = [], []
    total = np.zeros(np.asarray(scales[0]).shape[0])
    if n0 > 0:
        x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64).reshape(len(total), n0))
        sq0 = np.sum(x0 * x0, axis=1)
        per_sample.append(sq0 / n0)
        labels.append("X0")
        total += sq0
    u_moments = []
    for i, (s, u, ni) in enumerate(zip(scales, uniforms, block_dims)):
        s = np.asarray(s, dtype=np.float64).ravel()
        u = np.asarray(u, dtype=np.float64).reshape(len(s), ni)
        usq = np.sum(u * u, axis=1)
        u_moments.append(float(usq.mean()))
        per_sample.append(s * s / ni)
        labels.append(f"S{i + 1}")
        total += s * s * usq
    per_sample.append(total / N)
    labels.append("X")
    ratios = [float(q.mean()) for q in per_sample]
    ses = [_block_se(q) for q in per_sample]
    worst, worst_pair = 0.0, (labels[0], labels[0])
    for a, b in itertools.combinations(range(len(per_sample)), 2):
        d = per_sample[a] - per_sample[b]
        se = _block_se(d)
        z = abs(d.mean()) / se if se > 0 else (0.0 if d.mean() == 0 else math.inf)
        if z > worst:
            worst, worst_pair = z, (labels[a], labels[b])
    return BlockIsotropyReport(labels, ratios, ses, float(worst), worst_pair, u_moments, bool(worst <= se_gate))


# -- two-sample comparisons ------------------------------------------------------

def multi_indices(dim: int, max_order: int):
    """All exponent tuples with 1 <= total order <= max_order."""
    for order in range(1, max_order + 1):
        for combo in itertools.combinations_with_replacement(range(dim), order):
            yield combo


@dataclass
class MomentComparison:
    n_moments: int
    max_z: float
    worst: tuple
    exact_ok: bool = True


def compare_mixed_moments(a, b, max_order: int = 4, se_gate: float = SE_GATE) -> MomentComparison:
    """z-scores of E[x^alpha] between two independent i.i.d. samples, all |alpha| <= max_order."""
    a, b = _data(a), _data(b)
    worst_z, worst, count = 0.0, (), 0
    cache_a, cache_b = {(): None}, {(): None}
    for combo in multi_indices(a.shape[1], max_order):
        prev = combo[:-1]
        last = combo[-1]
        ma = a[:, last] if not prev else cache_a[prev] * a[:, last]
        mb = b[:, last] if not prev else cache_b[prev] * b[:, last]
        if len(combo) < max_order:
            cache_a[combo], cache_b[combo] = ma, mb
        ea, eb = ma.mean(), mb.mean()
        va = np.dot(ma, ma) / ma.size - ea * ea
        vb = np.dot(mb, mb) / mb.size - eb * eb
        se = math.sqrt(max(va, 0.0) / ma.size + max(vb, 0.0) / mb.size)
        z = abs(ea - eb) / se if se > 0 else (0.0 if ea == eb else math.inf)
        count += 1
        if z > worst_z:
            worst_z, worst = z, combo
    return MomentComparison(count, float(worst_z), worst, worst_z <= se_gate)


def ks_critical_value(n: int, m: int, alpha: float = 0.001) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))


def ks_two_sample(a, b, alpha: float = 0.001):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    stat = float(stats.ks_2samp(a, b).statistic)
    crit = ks_critical_value(a.size, b.size, alpha)
    return stat, crit, stat < crit


def mean_with_se(values):
    """Mean and i.i.d. standard error."""
    v = np.asarray(values, dtype=np.float64).ravel()
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
