"""Samplers for uniform, radial, scale, S*U, polar, revolution and multi-block laws.

All samplers are pure functions of their parameters and an :class:`RngStream`.
Samplers that combine independent pieces draw each piece from its own child
stream, recorded in the batch provenance.
"""
from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from ._accel import njit
from .batch import Provenance, SampleBatch
from .geometry import ConvexBody, Family, RevolutionBody
from .inverse_cdf import InverseCDF, radial_table
from .profiles import NormalizedPair, ProfileFamily
from .rng import as_stream

N_CHAINS = 32
BURN_PER_DIM = 1000


class ConvergenceWarning(UserWarning):
    """MCMC effective sample size fell below the requested threshold."""


def _batch(data, name, stream, approximate=False, **extra):
    return SampleBatch(data, Provenance(name, stream, approximate, extra))


def _check_count(count):
    count = int(count)
    if count < 1:
        raise ValueError("count must be positive")
    return count


# -- uniform on B --------------------------------------------------------------

def _uniform_exact(body: ConvexBody, count: int, gen: np.random.Generator):
    fam, n = body.family, body.dim
    if fam is Family.LP:
        p = body.params["p"]
        mag = gen.standard_gamma(1.0 / p, size=(count, n)) ** (1.0 / p)
        sign = np.where(gen.random((count, n)) < 0.5, -1.0, 1.0)
        g = sign * mag
        norm = body.gauge(g)
        radius = gen.random(count) ** (1.0 / n)
        return g * (radius / norm)[:, None]
    if fam is Family.HYPERCUBE:
        return gen.uniform(-1.0, 1.0, size=(count, n))
    if fam is Family.SIMPLEX:
        w = gen.standard_exponential((count, n + 1))
        w /= w.sum(axis=1, keepdims=True)
        return w @ body.params["vertices"]
    if fam is Family.PRODUCT:
        return np.concatenate([_uniform_exact(part, count, gen) for part in body.parts], axis=1)
    if fam is Family.DILATED:
        return body.params["scale"] * _uniform_exact(body.parts[0], count, gen)
    return None


def _flat_logp(body):
    contains = body.contains

    def logp(z):
        return np.where(contains(z), 0.0, -np.inf)

    scalar = body.params.get("contains_scalar")
    logp_scalar = None
    if scalar is not None:
        logp_scalar = _flat_scalar(scalar)
    return logp, logp_scalar


@functools.lru_cache(maxsize=None)
def _flat_scalar(contains_scalar):
    @njit
    def logp(z):
        return 0.0 if contains_scalar(z) else -np.inf
    return logp


def sample_uniform_body(body: ConvexBody, count, rng, *, min_ess=None, chains=N_CHAINS):
    """Uniform draws on B; exact for closed-form families, hit-and-run otherwise."""
    count = _check_count(count)
    stream = as_stream(rng)
    gen = stream.generator()
    if body.family is Family.REVOLUTION and "revolution" in body.params:
        return sample_revolution(body.params["revolution"], count, stream)
    exact = _uniform_exact(body, count, gen)
    if exact is not None:
        return _batch(exact, "uniform-exact", stream, family=body.family.value)
    logp, logp_scalar = _flat_logp(body)
    draws, info = _mcmc(logp, logp_scalar, np.zeros(body.dim), count, gen, chains,
                        width=body.bounding_radius, stat=body.gauge, min_ess=min_ess)
    return _batch(draws, "uniform-hit-and-run", stream, approximate=True, **info)


def _mcmc(logp, logp_scalar, start, count, gen, chains, width, stat, min_ess=None, max_out=8):
    d = start.shape[0]
    per_chain = -(-count // chains)
    burn = BURN_PER_DIM * d
    out = kernels.run_chains(np.tile(start, (chains, 1)), gen, per_chain, d, burn, width,
                             logp, logp_scalar, max_out=max_out)
    series = np.stack([np.asarray(stat(out[c])) for c in range(chains)])
    tau = kernels.integrated_autocorr_time(series)
    draws = out.reshape(chains * per_chain, d)[:count]
    ess = chains * per_chain / tau
    threshold = min(1000.0, 0.1 * count) if min_ess is None else float(min_ess)
    converged = bool(ess >= threshold)
    if not converged:
        warnings.warn(f"hit-and-run ESS {ess:.0f} below threshold {threshold:.0f}", ConvergenceWarning,
                      stacklevel=3)
    info = {"chains": chains, "burn_in": burn, "thin": d, "tau": tau, "ess": ess,
            "ess_threshold": threshold, "converged": converged,
            "jit": kernels.use_jit(logp_scalar)}
    return draws, info


def sample_cone_measure(body: ConvexBody, count, rng):
    """theta = U / |U|_B for U uniform on B: the normalized cone measure on the boundary."""
    count = _check_count(count)
    stream = as_stream(rng)
    u = sample_uniform_body(body, count, stream.child(0)).data
    g = body.gauge(u)
    redraw = 1
    while np.any(g <= 0):
        bad = g <= 0
        extra = sample_uniform_body(body, int(bad.sum()), stream.child(redraw)).data
        u = u.copy()
        u[bad] = extra
        g = body.gauge(u)
        redraw += 1
    return _batch(u / g[:, None], "cone-measure", stream)


# -- radial and scale laws -----------------------------------------------------

def _radial_logpdf(log_rho, power):
    def logpdf(r):
        r = np.asarray(r, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            base = log_rho(r) + (power * np.log(r) if power else 0.0)
        return np.where(r > 0, base, -np.inf) if power else np.where(r >= 0, base, -np.inf)
    return logpdf


@functools.lru_cache(maxsize=256)
def _radius_table(profile, n):
    return radial_table(_radial_logpdf(profile.log_rho, n - 1), profile.scale * max(1.0, n),
                        cutoff=profile.cutoff)


@functools.lru_cache(maxsize=256)
def _scale_table(profile, n):
    if profile.rho_prime is None:
        raise ValueError("the law of S needs rho_prime")

    def log_minus_prime(s):
        s = np.asarray(s, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(-np.asarray(profile.rho_prime(s), dtype=np.float64))

    return radial_table(_radial_logpdf(log_minus_prime, n), profile.scale * max(1.0, n),
                        cutoff=profile.cutoff)


def _check_dim(n, pair):
    if n != pair.dim:
        raise ValueError(f"n={n} does not match the body dimension {pair.dim}")


def _radius_draws(pair, count, gen, method):
    prof, n = pair.profile, pair.dim
    fam, p = prof.family, prof.params
    if method == "auto":
        if fam is ProfileFamily.EXPONENTIAL:
            return gen.gamma(n, 1.0 / p["beta"], size=count)
        if fam is ProfileFamily.GAUSSIAN:
            return p["sigma"] * np.sqrt(gen.chisquare(n, size=count))
        if fam is ProfileFamily.UNIFORM:
            return p["cutoff"] * gen.random(count) ** (1.0 / n)
    return _radius_table(prof, n).sample(gen, count)


def sample_radius_R(n, pair: NormalizedPair, count, rng, method="auto"):
    """R = |X|_B, with density n Vol(B) r^(n-1) rho(r) on R+."""
    _check_dim(n, pair)
    count = _check_count(count)
    stream = as_stream(rng)
    draws = _radius_draws(pair, count, stream.generator(), method)
    return _batch(draws, f"radius-R[{method}]", stream)


def _scale_draws(pair, count, gen, method):
    prof, n = pair.profile, pair.dim
    fam, p = prof.family, prof.params
    if method == "auto":
        if fam is ProfileFamily.EXPONENTIAL:
            return gen.gamma(n + 1, 1.0 / p["beta"], size=count)
        if fam is ProfileFamily.GAUSSIAN:
            return p["sigma"] * np.sqrt(gen.chisquare(n + 2, size=count))
        if fam is ProfileFamily.UNIFORM:
            return np.full(count, p["cutoff"])
    if prof.rho_prime is None:
        raise ValueError("the law of S needs rho_prime")
    atom = 0.0
    if prof.has_terminal_atom:
        c = prof.cutoff
        atom = math.exp(pair.body.log_volume + pair.log_norm_const + n * math.log(c)
                        + float(prof.log_rho(np.array([c]))[0]))
        atom = min(max(atom, 0.0), 1.0)
    u = gen.random(count)
    if atom >= 1.0 - 1e-12:
        return np.full(count, prof.cutoff)
    cont = _scale_table(prof, n).sample(gen, count)
    return np.where(u < atom, prof.cutoff, cont)


def sample_scale_S(n, pair: NormalizedPair, count, rng, method="auto"):
    """S with law -Vol(B) s^n rho'(s) ds; a terminal jump of rho adds an atom at the cutoff."""
    _check_dim(n, pair)
    count = _check_count(count)
    stream = as_stream(rng)
    draws = _scale_draws(pair, count, stream.generator(), method)
    return _batch(draws, f"scale-S[{method}]", stream)


def sample_SU(pair: NormalizedPair, count, rng, method="auto"):
    count = _check_count(count)
    stream = as_stream(rng)
    s_stream, u_stream = stream.child(0), stream.child(1)
    s = _scale_draws(pair, count, s_stream.generator(), method)
    u = sample_uniform_body(pair.body, count, u_stream).data
    return _batch(s[:, None] * u, "SU", stream,
                  substreams={"S": s_stream.snapshot(), "U": u_stream.snapshot()})


def sample_polar(pair: NormalizedPair, count, rng, method="auto"):
    count = _check_count(count)
    stream = as_stream(rng)
    r_stream, t_stream = stream.child(0), stream.child(1)
    r = _radius_draws(pair, count, r_stream.generator(), method)
    theta = sample_cone_measure(pair.body, count, t_stream).data
    return _batch(r[:, None] * theta, "polar", stream,
                  substreams={"R": r_stream.snapshot(), "theta": t_stream.snapshot()})


# -- bodies of revolution ------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _section_table(K: RevolutionBody):
    n = K.base.dim

    def logpdf(t):
        with np.errstate(divide="ignore"):
            return n * np.log(K.radius(t))

    return InverseCDF.from_logpdf(logpdf, K.t_lo, K.t_hi)


def sample_revolution_su(K: RevolutionBody, count, rng):
    """(t, S, U) with t having density proportional to R(t)^n, S = R(t), U uniform on the base."""
    count = _check_count(count)
    stream = as_stream(rng)
    t = _section_table(K).sample(stream.child(0).generator(), count)
    u = sample_uniform_body(K.base, count, stream.child(1)).data
    return t, K.radius(t), u


def sample_revolution(K: RevolutionBody, count, rng):
    count = _check_count(count)
    stream = as_stream(rng)
    t, s, u = sample_revolution_su(K, count, stream)
    return _batch(np.column_stack([t, s[:, None] * u]), "revolution", stream, profile=K.profile)


# -- multi-block measures ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JointDensity:
    """rho(x0, r_1, ..., r_k) on R^n0 x (R+)^k, evaluated on points z = (x0, r).

    ``log_rho`` is vectorized over rows; ``log_rho_scalar`` is an optional
    numba-compiled single-point version enabling the accelerated chain kernel.
    """

    n0: int
    k: int
    log_rho: Callable
    log_rho_scalar: Callable | None = None
    start: np.ndarray | None = None
    width: float = 1.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def arity(self) -> int:
        return self.n0 + self.k

    def rho(self, z):
        return np.exp(self.log_rho(np.atleast_2d(np.asarray(z, dtype=np.float64))))

    def initial_point(self):
        if self.start is not None:
            return np.asarray(self.start, dtype=np.float64)
        return np.concatenate([np.zeros(self.n0), np.full(self.k, 0.5)])


@functools.lru_cache(maxsize=None)
def _product_scalar(n0, k, beta, kind):
    @njit
    def f(z):
        acc = 0.0
        for i in range(n0):
            acc -= 0.5 * z[i] * z[i]
        for i in range(k):
            r = z[n0 + i]
            if kind == 0:
                acc -= beta * r
            else:
                acc -= 0.5 * beta * r * r
        return acc
    return f


def product_density(n0: int, k: int, radial: str = "exp", beta: float = 1.0) -> JointDensity:
    """exp(-|x0|^2/2 - sum phi(r_i)) with phi(r) = beta r ('exp') or beta r^2/2 ('gauss')."""
    if radial not in ("exp", "gauss"):
        raise ValueError("radial must be 'exp' or 'gauss'")
    kind = 0 if radial == "exp" else 1
    beta = float(beta)

    def log_rho(z):
        z = np.atleast_2d(z)
        x0, r = z[:, :n0], z[:, n0:]
        rad = beta * r if kind == 0 else 0.5 * beta * r * r
        return -0.5 * np.sum(x0 * x0, axis=1) - np.sum(rad, axis=1)

    return JointDensity(n0, k, log_rho, _product_scalar(n0, k, beta, kind), width=2.0,
                        name=f"product-{radial}", params={"beta": beta})


@functools.lru_cache(maxsize=None)
def _sq_sum_scalar(n0, k):
    @njit
    def f(z):
        acc = 0.0
        for i in range(n0):
            acc -= 0.5 * z[i] * z[i]
        s = 0.0
        for i in range(k):
            s += z[n0 + i]
        return acc - s * s
    return f


def squared_sum_density(n0: int, k: int) -> JointDensity:
    """exp(-|x0|^2/2 - (r_1 + ... + r_k)^2): log-concave, but violates the mixed-sign condition."""
    def log_rho(z):
        z = np.atleast_2d(z)
        return -0.5 * np.sum(z[:, :n0] ** 2, axis=1) - np.sum(z[:, n0:], axis=1) ** 2
    return JointDensity(n0, k, log_rho, _sq_sum_scalar(n0, k), width=1.0, name="squared-sum")


@functools.lru_cache(maxsize=None)
def _revolution_scalar(lo, hi, profile, params):
    p = dict(params)
    if profile == "constant":
        c = p["c"]

        @njit
        def radius(t):
            return c
    elif profile == "linear":
        a, b = p["a"], p["b"]

        @njit
        def radius(t):
            return max(a + b * t, 0.0)
    elif profile == "semicircle":
        rr = p["radius"] ** 2

        @njit
        def radius(t):
            return math.sqrt(max(rr - t * t, 0.0))
    elif profile == "truncated-parabola":
        a, c = p["a"], p["c"]

        @njit
        def radius(t):
            return max(a - c * t * t, 0.0)
    else:
        return None

    @njit
    def f(z):
        t = z[0]
        if t < lo or t > hi:
            return -np.inf
        return 0.0 if z[1] <= radius(t) else -np.inf
    return f


def revolution_density(K: RevolutionBody) -> JointDensity:
    """rho(t, r) = 1{t in I, r <= R(t)}: the uniform measure on K as a 1+1 block density."""
    def log_rho(z):
        z = np.atleast_2d(z)
        t, r = z[:, 0], z[:, 1]
        ok = (t >= K.t_lo) & (t <= K.t_hi)
        ok &= r <= K.radius(np.clip(t, K.t_lo, K.t_hi))
        return np.where(ok, 0.0, -np.inf)

    scalar = None
    if K.profile is not None:
        scalar = _revolution_scalar(K.t_lo, K.t_hi, K.profile, tuple(sorted(K.profile_params.items())))
    mid = 0.5 * (K.t_lo + K.t_hi)
    start = np.array([mid, 0.5 * float(K.radius(mid))])
    return JointDensity(1, 1, log_rho, scalar, start=start, width=K.t_hi - K.t_lo,
                        name=f"revolution-{K.profile or 'custom'}")


def _nu_logp(joint: JointDensity, dims):
    n0 = joint.n0
    expo = np.array([d - 1.0 for d in dims])

    def logp(z):
        z = np.atleast_2d(z)
        r = z[:, n0:]
        with np.errstate(divide="ignore", invalid="ignore"):
            jac = np.where(expo > 0, expo * np.log(np.where(r > 0, r, 1.0)), 0.0).sum(axis=1)
        bad = np.any(r < 0, axis=1) | np.any((r == 0) & (expo > 0), axis=1)
        return np.where(bad, -np.inf, joint.log_rho(z) + jac)

    scalar = None
    if joint.log_rho_scalar is not None:
        scalar = _nu_scalar(joint.log_rho_scalar, n0, tuple(expo))
    return logp, scalar


@functools.lru_cache(maxsize=None)
def _nu_scalar(log_rho_scalar, n0, expo):
    k = len(expo)
    e = np.array(expo)

    @njit
    def f(z):
        acc = 0.0
        for i in range(k):
            r = z[n0 + i]
            if r < 0.0:
                return -np.inf
            if e[i] > 0.0:
                if r == 0.0:
                    return -np.inf
                acc += e[i] * math.log(r)
        return acc + log_rho_scalar(z)
    return f


def sample_multiblock(rho_joint: JointDensity, bodies, n0: int, count, rng, *,
                      return_nu=False, min_ess=None, chains=N_CHAINS):
    """X = (X0, R_1 theta_1, ..., R_k theta_k).

    (X0, R) is drawn by hit-and-run from nu ~ rho(x0, r) prod r_i^(n_i - 1);
    theta_i are independent cone-measure draws on B_i.
    """
    bodies = list(bodies)
    if n0 != rho_joint.n0 or len(bodies) != rho_joint.k:
        raise ValueError("block structure does not match the joint density")
    count = _check_count(count)
    stream = as_stream(rng)
    dims = [b.dim for b in bodies]
    logp, scalar = _nu_logp(rho_joint, dims)
    start = rho_joint.initial_point()
    nu, info = _mcmc(logp, scalar, start, count, stream.child(0).generator(), chains,
                     width=rho_joint.width, stat=lambda z: logp(z), min_ess=min_ess)
    blocks = [nu[:, :n0]]
    for i, body in enumerate(bodies):
        theta = sample_cone_measure(body, count, stream.child(1 + i)).data
        blocks.append(nu[:, n0 + i, None] * theta)
    batch = _batch(np.concatenate(blocks, axis=1), "multiblock", stream, approximate=True,
                   density=rho_joint.name, dims=[n0] + dims, **info)
    if return_nu:
        return batch, _batch(nu, "multiblock-nu", stream.child(0), approximate=True, **info)
    return batch


# -- smoothness conditions on rho ----------------------------------------------

def _mixed_partial(rho, z, coords, h):
    """Central-difference estimate of d^|coords| rho / prod d z_c at rows of z."""
    total = np.zeros(z.shape[0])
    for signs in itertools.product((1.0, -1.0), repeat=len(coords)):
        shifted = z.copy()
        for c, s in zip(coords, signs):
            shifted[:, c] += s * h
        total += np.prod(signs) * rho(shifted)
    return total / (2.0 * h) ** len(coords)


@dataclass
class ConditionReport:
    points: int
    monotone_violations: list       # fraction of grid points with d_j rho > tol, per j
    alternating_violations: list    # fraction with (-1)^j d^j_{k-j+1..k} rho < -tol, per j
    tol: float

    @property
    def passed(self) -> bool:
        return not any(self.monotone_violations) and not any(self.alternating_violations)


def check_mixed_partial_signs(rho_joint: JointDensity, domain_box, grid: int = 50, tol: float = 1e-6,
                              h: float | None = None) -> ConditionReport:
    """Finite-difference check of d_j rho <= 0 and (-1)^j d^j_{k-j+1,...,k} rho >= 0 on a grid."""
    box = np.asarray(domain_box, dtype=np.float64)
    if box.shape != (rho_joint.arity, 2):
        raise ValueError(f"domain_box must have shape ({rho_joint.arity}, 2)")
    width = float(np.max(box[:, 1] - box[:, 0]))
    h = 1e-4 * max(width, 1.0) if h is None else h
    axes = [np.linspace(lo, hi, grid) for lo, hi in box]
    z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, rho_joint.arity)
    rho = rho_joint.rho
    n0, k = rho_joint.n0, rho_joint.k
    mono = []
    for j in range(k):
        d = _mixed_partial(rho, z, [n0 + j], h)
        mono.append(float(np.mean(d > tol)))
    alt = []
    for j in range(1, k + 1):
        coords = [n0 + c for c in range(k - j, k)]
        d = (-1) ** j * _mixed_partial(rho, z, coords, h)
        alt.append(float(np.mean(d < -tol)))
    return ConditionReport(z.shape[0], mono, alt, tol)


def xs_density_unnormalized(rho_joint: JointDensity, bodies, z, h=1e-4):
    """(-1)^k prod Vol(B_i) s_i^(n_i) d^k_{1..k} rho(x0, s), by finite differences.

    The unnormalized density of (X0, S); used only as a cross-check.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    n0, k = rho_joint.n0, rho_joint.k
    coords = list(range(n0, n0 + k))
    deriv = _mixed_partial(rho_joint.rho, z, coords, h)
    logvol = sum(b.log_volume for b in bodies)
    pw = np.prod([z[:, n0 + i] ** b.dim for i, b in enumerate(bodies)], axis=0)
    return (-1) ** k * math.exp(logvol) * pw * deriv
