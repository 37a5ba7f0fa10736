"""Poincare-constant lower bounds from Rayleigh quotients of test functions.

Any smooth ``f`` gives ``C_P >= Var f / E|grad f|^2``; the best quotient over
a dictionary is a Monte Carlo lower bound.  Only lower bounds are produced.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .batch import SampleBatch
from .geometry import ConvexBody

MIN_COUNT = 1000
N_BATCHES = 32
FD_TOL = 1e-4
SINGULAR_MARGIN = 1e-8


class ZeroGradientError(ValueError):
    """The test function has vanishing gradient on the sample (it is constant on the support)."""


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Vectorized test function: ``value(x)`` -> (m,), ``gradient(x)`` -> (m, n).

    ``grad_sup_norm`` is an analytic bound on sup |grad f| (``inf`` if unbounded).
    ``singular`` optionally returns a margin to the set where ``f`` is not
    differentiable; gradient checks skip points with margin below 1e-8.
    """

    __test__ = False  # not a pytest class

    name: str
    value: Callable
    gradient: Callable
    grad_sup_norm: float = math.inf
    kind: str = "other"
    singular: Callable | None = None
    finite_difference: bool = False

    def __call__(self, x):
        return self.value(x)


def _fd_gradient(value, x, h):
    grad = np.empty_like(x)
    for j in range(x.shape[1]):
        step = np.zeros(x.shape[1])
        step[j] = h
        grad[:, j] = (value(x + step) - value(x - step)) / (2.0 * h)
    return grad


@dataclass
class GradientCheck:
    checked: int
    skipped: int
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error <= FD_TOL


def gradient_check(f: TestFunction, points, scale: float = 1.0) -> GradientCheck:
    """Compare ``f.gradient`` with central differences (h = 1e-6 * scale)."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    skipped = 0
    if f.singular is not None:
        keep = np.asarray(f.singular(x)) > SINGULAR_MARGIN + 1e-6 * scale
        skipped = int(np.sum(~keep))
        x = x[keep]
    if x.shape[0] == 0:
        return GradientCheck(0, skipped, math.nan)
    exact = f.gradient(x)
    fd = _fd_gradient(f.value, x, 1e-6 * scale)
    err = np.linalg.norm(exact - fd, axis=1)
    ref = np.maximum(np.linalg.norm(exact, axis=1), 1e-3)
    return GradientCheck(x.shape[0], skipped, float(np.max(err / ref)))


# -- quotients -----------------------------------------------------------------------

def _points(batch):
    return batch.data if isinstance(batch, SampleBatch) else np.atleast_2d(np.asarray(batch, dtype=np.float64))


@dataclass(frozen=True)
class Quotient:
    value: float
    se: float


def _blocked(values, grad_sq, n_batches):
    parts_v = np.array_split(values, n_batches)
    parts_g = np.array_split(grad_sq, n_batches)
    return np.array([v.var() / g.mean() if g.mean() > 0 else np.nan for v, g in zip(parts_v, parts_g)])


def rayleigh_quotient(f: TestFunction, batch, n_batches: int = N_BATCHES) -> Quotient:
    """Var(f) / E|grad f|^2 with a batch-means standard error."""
    x = _points(batch)
    if x.shape[0] < MIN_COUNT:
        raise ValueError(f"rayleigh_quotient needs at least {MIN_COUNT} draws")
    values = np.asarray(f.value(x), dtype=np.float64)
    grad = np.asarray(f.gradient(x), dtype=np.float64)
    grad_sq = np.einsum("ij,ij->i", grad, grad)
    energy = grad_sq.mean()
    scale = max(float(np.mean(values * values)), 1.0)
    if not energy > 1e-300 or np.ptp(values) <= 1e-14 * math.sqrt(scale):
        raise ZeroGradientError(f"{f.name}: zero gradient energy on the sample")
    value = float(values.var() / energy)
    blocks = _blocked(values, grad_sq, n_batches)
    se = float(np.nanstd(blocks, ddof=1) / math.sqrt(np.sum(np.isfinite(blocks))))
    return Quotient(value, se)


def supnorm_quotient(f: TestFunction, batch) -> float:
    """Var(f) / sup|grad f|^2 using the analytic sup-norm bound."""
    if not math.isfinite(f.grad_sup_norm):
        raise ValueError(f"{f.name}: gradient is unbounded")
    if f.grad_sup_norm <= 0:
        raise ValueError(f"{f.name}: grad_sup_norm must be positive")
    values = np.asarray(f.value(_points(batch)), dtype=np.float64)
    return float(values.var() / f.grad_sup_norm ** 2)


def multiblock_variance_ratio(f: TestFunction, xs_batch, second_moment_x: float, dims) -> float:
    """Var(f(X0, S)) N / ((n0 + k^2) E|X|^2 sup|grad f|^2).

    ``xs_batch`` holds draws of (X0, S_1, ..., S_k); ``dims`` = [n0, n_1, ..., n_k]
    and N = sum(dims).  The result is the empirical constant in the variance
    bound for functions of the block scales.
    """
    n0, k = dims[0], len(dims) - 1
    N = sum(dims)
    return supnorm_quotient(f, xs_batch) * N / ((n0 + k * k) * second_moment_x)


@dataclass
class PoincareEstimate:
    lower_bound: float
    argmax_function: str
    argmax_kind: str
    kls_ratio: float
    comparison_bounds: dict
    std_errors: dict
    quotients: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "lower_bound": self.lower_bound, "argmax_function": self.argmax_function,
            "argmax_kind": self.argmax_kind, "kls_ratio": self.kls_ratio,
            "comparison_bounds": dict(self.comparison_bounds), "std_errors": dict(self.std_errors),
            "quotients": {k: [q.value, q.se] for k, q in self.quotients.items()},
        }


def poincare_lower_bound(dictionary, batch, n_batches: int = N_BATCHES) -> PoincareEstimate:
    """Best Rayleigh quotient over ``dictionary`` plus KLS ratio and comparison bounds."""
    dictionary = list(dictionary)
    if not dictionary:
        raise ValueError("empty dictionary")
    x = _points(batch)
    n = x.shape[1]
    names = {f.name for f in dictionary}
    missing = [f"x{i + 1}" for i in range(n) if f"x{i + 1}" not in names]
    if missing:
        raise ValueError(f"dictionary lacks coordinate functions {missing}")
    quotients = {}
    best, best_f = -math.inf, None
    for f in dictionary:
        q = rayleigh_quotient(f, x, n_batches)
        quotients[f.name] = q
        if q.value > best:
            best, best_f = q.value, f
    sq = np.einsum("ij,ij->i", x, x)
    second = float(sq.mean())
    sum_var = float(np.sum(x.var(axis=0)))
    centered = x - x.mean(axis=0)
    dim_bound = float(np.mean(np.einsum("ij,ij->i", centered, centered)))
    se = quotients[best_f.name].se
    return PoincareEstimate(
        lower_bound=best, argmax_function=best_f.name, argmax_kind=best_f.kind,
        kls_ratio=best * n / second,
        comparison_bounds={"sum_var": sum_var, "bobkov_sqrt": float(math.sqrt(sq.var())),
                           "dim_bound": dim_bound},
        std_errors={"lower_bound": se, "kls_ratio": se * n / second},
        quotients=quotients,
    )


# -- dictionaries ---------------------------------------------------------------

def coordinate(i: int) -> TestFunction:
    def value(x):
        return x[:, i]

    def gradient(x):
        g = np.zeros_like(x)
        g[:, i] = 1.0
        return g

    return TestFunction(f"x{i + 1}", value, gradient, 1.0, "linear")


def linear_form(theta, name: str) -> TestFunction:
    theta = np.asarray(theta, dtype=np.float64)
    norm = float(np.linalg.norm(theta))
    return TestFunction(name, lambda x: x @ theta, lambda x: np.broadcast_to(theta, x.shape).copy(),
                        norm, "linear")


def product(i: int, j: int) -> TestFunction:
    def value(x):
        return x[:, i] * x[:, j]

    def gradient(x):
        g = np.zeros_like(x)
        g[:, i] += x[:, j]
        g[:, j] += x[:, i]
        return g

    return TestFunction(f"x{i + 1}*x{j + 1}", value, gradient, math.inf, "quadratic")


def centered_norm_sq(center: float = 0.0) -> TestFunction:
    return TestFunction("|x|^2-E|x|^2", lambda x: np.einsum("ij,ij->i", x, x) - center,
                        lambda x: 2.0 * x, math.inf, "quadratic")


def coordinate_sine(i: int, half_width: float = 1.0) -> TestFunction:
    """sin(pi x_i / (2 a)): the first Neumann eigenfunction of [-a, a]."""
    k = math.pi / (2.0 * half_width)

    def gradient(x):
        g = np.zeros_like(x)
        g[:, i] = k * np.cos(k * x[:, i])
        return g

    return TestFunction(f"sin(x{i + 1})", lambda x: np.sin(k * x[:, i]), gradient, k, "other")


def _euclid_gauge():
    def gauge(x):
        return np.linalg.norm(x, axis=1)

    def grad(x):
        r = np.linalg.norm(x, axis=1, keepdims=True)
        return x / np.where(r > 0, r, 1.0)

    return gauge, grad, 1.0, gauge


def radial(name, g, g_prime, g_sup, body: ConvexBody | None = None) -> TestFunction:
    """x -> g(|x|_B); the gauge gradient is closed-form where known, else finite differences."""
    fd = False
    if body is None:
        gauge, ggrad, lip, singular = _euclid_gauge()
    else:
        gauge = body.gauge
        lip = 1.0 / body.inner_radius
        singular = body.gauge_singular_distance
        probe = body.gauge_gradient(np.ones((1, body.dim)) * 0.1)
        if probe is None:
            fd = True
            scale = body.bounding_radius

            def ggrad(x):
                return _fd_gradient(body.gauge, x, 1e-6 * scale)
        else:
            ggrad = body.gauge_gradient

    def value(x):
        return g(gauge(x))

    def gradient(x):
        return g_prime(gauge(x))[:, None] * ggrad(x)

    return TestFunction(name, value, gradient, g_sup * lip, "radial", singular, fd)


def builtin_dictionary(n: int, body: ConvexBody | None = None, cutoff_scale: float = 1.0,
                       seed: int = 0, center_sq: float = 0.0):
    """Coordinates, pairwise products, centered |x|^2, three radial entries and eight linear forms.

    ``body`` defines the gauge for radial entries (Euclidean when ``None``);
    ``cutoff_scale`` sets the period of the radial sine.
    """
    if body is not None and body.dim != n:
        raise ValueError("body dimension does not match n")
    out = [coordinate(i) for i in range(n)]
    out += [product(i, j) for i in range(n) for j in range(i, n)]
    out.append(centered_norm_sq(center_sq))
    k = math.pi / (2.0 * cutoff_scale)
    out.append(radial("g=s", lambda s: s, np.ones_like, 1.0, body))
    out.append(radial("g=s^2", lambda s: s * s, lambda s: 2.0 * s, math.inf, body))
    out.append(radial("g=sin", lambda s: np.sin(k * s), lambda s: k * np.cos(k * s), k, body))
    gen = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x7E57,)))
    for m in range(8):
        theta = gen.standard_normal(n)
        out.append(linear_form(theta / np.linalg.norm(theta), f"<theta{m + 1},x>"))
    return out


def radial_cutoff_scale(body: ConvexBody | None, points, cutoff: float = math.inf) -> float:
    """Period scale for the radial sine: the profile cutoff, else the median gauge."""
    if math.isfinite(cutoff):
        return float(cutoff)
    x = _points(points)
    g = np.linalg.norm(x, axis=1) if body is None else body.gauge(x)
    return float(np.median(g))


def rescaled(f: TestFunction, lam: float) -> TestFunction:
    """x -> f(x / lam)."""
    return TestFunction(
        f"{f.name}(x/{lam:g})", lambda x: f.value(x / lam), lambda x: f.gradient(x / lam) / lam,
        f.grad_sup_norm / lam, f.kind,
        None if f.singular is None else (lambda x: f.singular(x / lam)), f.finite_difference,
    )
