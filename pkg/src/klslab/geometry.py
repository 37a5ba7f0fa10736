"""Convex bodies described by their gauge (Minkowski functional).

Every body contains the origin in its interior.  ``gauge`` is vectorized over
leading axes: an ``(..., n)`` array maps to an ``(...)`` array.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .rng import RngStream

GAUGE_RTOL = 1e-12
_CONCAVITY_TESTS = 1000
_CONCAVITY_TOL = 1e-9


class Family(str, enum.Enum):
    LP = "lp"
    HYPERCUBE = "hypercube"
    SIMPLEX = "simplex"
    PRODUCT = "product"
    REVOLUTION = "revolution"
    DILATED = "dilated"
    GENERIC = "generic"


def _check_points(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class ConvexBody:
    """A convex body B with 0 in its interior.

    Closed-form families carry their parameters in ``params``; products and
    dilations keep their constituents in ``parts``.  Generic bodies are given
    by a vectorized membership predicate and use bisection for the gauge.
    """

    dim: int
    family: Family
    log_volume: float
    bounding_radius: float
    inner_radius: float
    symmetric: bool
    params: dict = field(default_factory=dict)
    parts: tuple = ()
    contains_fn: Callable | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if not self.inner_radius > 0:
            raise ValueError("the origin must lie in the interior of the body")
        if self.inner_radius > self.bounding_radius * (1 + 1e-12):
            raise ValueError("inner_radius exceeds bounding_radius")

    @property
    def volume(self) -> float:
        return math.exp(self.log_volume)

    # -- gauge ---------------------------------------------------------------
    def gauge(self, x) -> np.ndarray:
        x = _check_points(x, self.dim)
        fam = self.family
        if fam is Family.LP:
            return _lp_norm(x, self.params["p"])
        if fam is Family.HYPERCUBE:
            return np.max(np.abs(x), axis=-1)
        if fam is Family.SIMPLEX:
            return np.maximum(np.max(x @ self.params["facet_normals"].T, axis=-1), 0.0)
        if fam is Family.PRODUCT:
            out, start = None, 0
            for part in self.parts:
                g = part.gauge(x[..., start:start + part.dim])
                out = g if out is None else np.maximum(out, g)
                start += part.dim
            return out
        if fam is Family.DILATED:
            return self.parts[0].gauge(x) / self.params["scale"]
        return bisect_gauge(self.contains, x, self.bounding_radius, self.inner_radius)

    def gauge_gradient(self, x):
        """Gradient of the gauge, or ``None`` when no closed form is known.

        The gradient exists off a null set (axes for l1, ridges for polytopes);
        on that set an arbitrary subgradient is returned.
        """
        x = _check_points(x, self.dim)
        fam = self.family
        if fam is Family.LP:
            p = self.params["p"]
            g = _lp_norm(x, p)[..., None]
            safe = np.where(g > 0, g, 1.0)
            if p == 1:
                return np.sign(x)
            return np.sign(x) * (np.abs(x) / safe) ** (p - 1)
        if fam is Family.HYPERCUBE:
            idx = np.argmax(np.abs(x), axis=-1)
            out = np.zeros_like(x)
            np.put_along_axis(out, idx[..., None], np.sign(np.take_along_axis(x, idx[..., None], -1)), -1)
            return out
        if fam is Family.SIMPLEX:
            normals = self.params["facet_normals"]
            idx = np.argmax(x @ normals.T, axis=-1)
            return normals[idx]
        if fam is Family.PRODUCT:
            grads, gauges, start = [], [], 0
            for part in self.parts:
                sl = x[..., start:start + part.dim]
                grad = part.gauge_gradient(sl)
                if grad is None:
                    return None
                grads.append((start, grad))
                gauges.append(part.gauge(sl))
                start += part.dim
            winner = np.argmax(np.stack(gauges, axis=-1), axis=-1)
            out = np.zeros_like(x)
            for j, (s, grad) in enumerate(grads):
                mask = (winner == j)[..., None]
                out[..., s:s + grad.shape[-1]] = np.where(mask, grad, 0.0)
            return out
        if fam is Family.DILATED:
            scale = self.params["scale"]
            grad = self.parts[0].gauge_gradient(x / scale)
            return None if grad is None else grad / scale
        return None

    def gauge_singular_distance(self, x) -> np.ndarray:
        """Distance-like margin to the set where the gauge is not differentiable."""
        x = _check_points(x, self.dim)
        fam = self.family
        if fam is Family.LP:
            if self.params["p"] == 2:
                return np.linalg.norm(x, axis=-1)
            return np.min(np.abs(x), axis=-1)
        if fam in (Family.HYPERCUBE, Family.SIMPLEX):
            vals = np.abs(x) if fam is Family.HYPERCUBE else x @ self.params["facet_normals"].T
            top = np.sort(vals, axis=-1)
            if top.shape[-1] < 2:
                return np.abs(x[..., 0])
            return top[..., -1] - top[..., -2]
        if fam is Family.DILATED:
            return self.parts[0].gauge_singular_distance(x / self.params["scale"])
        if fam is Family.PRODUCT:
            gauges, margins, start = [], [], 0
            for part in self.parts:
                sl = x[..., start:start + part.dim]
                gauges.append(part.gauge(sl))
                margins.append(part.gauge_singular_distance(sl))
                start += part.dim
            g = np.sort(np.stack(gauges, axis=-1), axis=-1)
            tie = g[..., -1] - g[..., -2] if g.shape[-1] > 1 else np.inf
            return np.minimum(np.min(np.stack(margins, axis=-1), axis=-1), tie)
        return np.full(x.shape[:-1], np.inf)

    def contains(self, x) -> np.ndarray:
        if self.family is Family.GENERIC or (self.family is Family.REVOLUTION and self.contains_fn):
            x = _check_points(x, self.dim)
            return np.asarray(self.contains_fn(x), dtype=bool)
        return self.gauge(x) <= 1.0

    # -- descriptors ---------------------------------------------------------
    def descriptor(self) -> dict:
        fam = self.family
        if fam is Family.LP:
            p = self.params["p"]
            return {"family": "lp", "n": self.dim, "p": "inf" if math.isinf(p) else p}
        if fam is Family.HYPERCUBE:
            return {"family": "hypercube", "n": self.dim}
        if fam is Family.SIMPLEX:
            return {"family": "simplex", "n": self.dim}
        if fam is Family.PRODUCT:
            return {"family": "product", "factors": [p.descriptor() for p in self.parts]}
        if fam is Family.DILATED:
            return {"family": "dilated", "scale": self.params["scale"], "base": self.parts[0].descriptor()}
        if fam is Family.REVOLUTION and "revolution" in self.params:
            return self.params["revolution"].descriptor()
        raise ValueError("generic bodies have no JSON descriptor")

    @property
    def label(self) -> str:
        fam = self.family
        if fam is Family.LP:
            p = self.params["p"]
            return f"l{'inf' if math.isinf(p) else format(p, 'g')}"
        if fam is Family.DILATED:
            return f"{self.parts[0].label}x{self.params['scale']:g}"
        if fam is Family.PRODUCT:
            return "*".join(p.label for p in self.parts)
        if fam is Family.REVOLUTION and "revolution" in self.params:
            return self.params["revolution"].label
        return fam.value


def _lp_norm(x, p):
    a = np.abs(x)
    if math.isinf(p):
        return np.max(a, axis=-1)
    if p == 1:
        return np.sum(a, axis=-1)
    if p == 2:
        return np.sqrt(np.sum(a * a, axis=-1))
    m = np.max(a, axis=-1, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    return (safe * np.sum((a / safe) ** p, axis=-1, keepdims=True) ** (1.0 / p))[..., 0] * (m[..., 0] > 0)


def bisect_gauge(contains, x, bounding_radius, inner_radius, rtol=GAUGE_RTOL):
    """Gauge from a membership predicate, vectorized bisection on the scale.

    ``x / lam`` lies in the body iff ``lam >= gauge(x)``.  The initial bracket
    ``[|x|/bounding_radius, |x|/inner_radius]`` is widened if the radii are
    only estimates.
    """
    x = np.asarray(x, dtype=np.float64)
    shape = x.shape[:-1]
    pts = x.reshape(-1, x.shape[-1])
    norm = np.linalg.norm(pts, axis=-1)
    out = np.zeros(norm.shape)
    nz = norm > 0
    if not np.any(nz):
        return out.reshape(shape)
    p = pts[nz]
    r = norm[nz]
    lo = r / bounding_radius
    hi = r / inner_radius
    for _ in range(64):
        bad = contains(p / lo[:, None])  # lo must be infeasible (strictly below the gauge)
        if not np.any(bad):
            break
        lo = np.where(bad, lo * 0.5, lo)
    for _ in range(64):
        bad = ~contains(p / hi[:, None])
        if not np.any(bad):
            break
        hi = np.where(bad, hi * 2.0, hi)
    while True:
        active = (hi - lo) > rtol * hi
        if not np.any(active):
            break
        mid = 0.5 * (lo + hi)
        inside = contains(p / mid[:, None])
        hi = np.where(active & inside, mid, hi)
        lo = np.where(active & ~inside, mid, lo)
    out[nz] = hi
    return out.reshape(shape)


def gauge_eval(body, x):
    """``|x|_B``; ``x`` may be a single point or an ``(m, n)`` array."""
    return body.gauge(x)


# -- constructors -------------------------------------------------------------

def make_lp_ball(n: int, p: float) -> ConvexBody:
    if n < 1:
        raise ValueError("n must be >= 1")
    p = float(p)
    if not p >= 1:
        raise ValueError(f"p must be >= 1 for a convex ball, got {p}")
    if math.isinf(p):
        return make_hypercube(n)
    log_vol = n * math.log(2 * math.gamma(1 + 1 / p)) - special.gammaln(1 + n / p)
    expo = 0.5 - 1.0 / p
    return ConvexBody(
        dim=n, family=Family.LP, log_volume=float(log_vol),
        bounding_radius=n ** max(expo, 0.0), inner_radius=n ** min(expo, 0.0),
        symmetric=True, params={"p": p},
    )


def make_hypercube(n: int) -> ConvexBody:
    """The cube [-1, 1]^n, i.e. the unit l-infinity ball."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return ConvexBody(
        dim=n, family=Family.HYPERCUBE, log_volume=n * math.log(2.0),
        bounding_radius=math.sqrt(n), inner_radius=1.0, symmetric=True,
        params={"p": math.inf},
    )


def simplex_vertices(n: int) -> np.ndarray:
    """Vertices of a regular simplex on the unit sphere with barycenter 0."""
    e = np.eye(n + 1) - 1.0 / (n + 1)
    # orthonormal basis of the hyperplane sum(x) = 0
    q, _ = np.linalg.qr(e[:, :n])
    v = e @ q
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def make_simplex(n: int) -> ConvexBody:
    if n < 1:
        raise ValueError("n must be >= 1")
    verts = simplex_vertices(n)
    # facet opposite v_i is {<x, -v_i> = 1/n}
    normals = -verts * n
    _, logdet = np.linalg.slogdet(verts[1:] - verts[0])
    body = ConvexBody(
        dim=n, family=Family.SIMPLEX, log_volume=float(logdet - special.gammaln(n + 1)),
        bounding_radius=1.0, inner_radius=1.0 / n, symmetric=(n == 1),
        params={"vertices": verts, "facet_normals": normals},
    )
    return body


def make_product(factors) -> ConvexBody:
    factors = tuple(factors)
    if not factors:
        raise ValueError("product of zero bodies")
    return ConvexBody(
        dim=sum(f.dim for f in factors), family=Family.PRODUCT,
        log_volume=sum(f.log_volume for f in factors),
        bounding_radius=math.sqrt(sum(f.bounding_radius ** 2 for f in factors)),
        inner_radius=min(f.inner_radius for f in factors),
        symmetric=all(f.symmetric for f in factors), parts=factors,
    )


def dilate(body: ConvexBody, lam: float) -> ConvexBody:
    lam = float(lam)
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    if lam == 1.0:
        return body
    if body.family is Family.DILATED:
        base, lam = body.parts[0], lam * body.params["scale"]
    else:
        base = body
    return ConvexBody(
        dim=base.dim, family=Family.DILATED,
        log_volume=base.log_volume + base.dim * math.log(lam),
        bounding_radius=base.bounding_radius * lam, inner_radius=base.inner_radius * lam,
        symmetric=base.symmetric, params={"scale": lam}, parts=(base,),
    )


def make_generic(n, contains, bounding_radius, inner_radius, log_volume=math.nan, symmetric=False,
                 contains_scalar=None):
    """Body known only through a vectorized predicate ``contains((m, n)) -> bool[m]``.

    ``contains_scalar`` is an optional numba-compiled single-point predicate;
    when given, hit-and-run runs in the compiled kernel.
    """
    params = {} if contains_scalar is None else {"contains_scalar": contains_scalar}
    return ConvexBody(
        dim=n, family=Family.GENERIC, log_volume=float(log_volume),
        bounding_radius=float(bounding_radius), inner_radius=float(inner_radius),
        symmetric=symmetric, params=params, contains_fn=contains,
    )


# -- bodies of revolution ------------------------------------------------------

def _profile_constant(c=1.0):
    return lambda t: np.full_like(np.asarray(t, dtype=np.float64), c)


def _profile_linear(a=1.0, b=-1.0):
    return lambda t: np.maximum(a + b * np.asarray(t, dtype=np.float64), 0.0)


def _profile_semicircle(radius=1.0):
    return lambda t: np.sqrt(np.maximum(radius ** 2 - np.asarray(t, dtype=np.float64) ** 2, 0.0))


def _profile_parabola(a=1.0, c=1.0):
    return lambda t: np.maximum(a - c * np.asarray(t, dtype=np.float64) ** 2, 0.0)


RADIUS_PROFILES = {
    "constant": (_profile_constant, {"c": 1.0}),
    "linear": (_profile_linear, {"a": 1.0, "b": -1.0}),
    "semicircle": (_profile_semicircle, {"radius": 1.0}),
    "truncated-parabola": (_profile_parabola, {"a": 1.0, "c": 1.0}),
}


@dataclass(frozen=True, eq=False)
class RevolutionBody:
    """K = {(t, x) : t in [t_lo, t_hi], |x|_B <= R(t)} in R^(1+n)."""

    t_lo: float
    t_hi: float
    radius_fn: Callable
    base: ConvexBody
    profile: str | None = None
    profile_params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return 1 + self.base.dim

    @property
    def total_dim(self) -> int:
        return self.dim

    @property
    def interval(self) -> tuple[float, float]:
        return (self.t_lo, self.t_hi)

    @property
    def label(self) -> str:
        name = {"constant": "cylinder", "linear": "cone", "semicircle": "revball"}.get(self.profile, "revolution")
        return name

    def radius(self, t) -> np.ndarray:
        return np.asarray(self.radius_fn(np.asarray(t, dtype=np.float64)), dtype=np.float64)

    def contains(self, pts) -> np.ndarray:
        pts = _check_points(pts, self.dim)
        t = pts[..., 0]
        inside_t = (t >= self.t_lo) & (t <= self.t_hi)
        r = self.radius(np.clip(t, self.t_lo, self.t_hi))
        return inside_t & (self.base.gauge(pts[..., 1:]) <= r)

    def log_section_integral(self) -> float:
        n = self.base.dim
        val, _ = integrate.quad(lambda t: float(self.radius(t)) ** n, self.t_lo, self.t_hi,
                                epsabs=0.0, epsrel=1e-10, limit=200)
        return math.log(val)

    @property
    def log_volume(self) -> float:
        return self.base.log_volume + self.log_section_integral()

    @property
    def volume(self) -> float:
        return math.exp(self.log_volume)

    def origin_interior(self) -> bool:
        return self.t_lo < 0 < self.t_hi and float(self.radius(0.0)) > 0

    def as_convex_body(self) -> ConvexBody:
        """Gauge-bearing view of K; requires the origin in the interior."""
        if not self.origin_interior():
            raise ValueError("origin is not interior to this body of revolution; gauge undefined")
        a = min(-self.t_lo, self.t_hi)
        c = self.base.inner_radius * float(self.radius(0.0))
        inner = a * c / (a + c)
        ts = np.linspace(self.t_lo, self.t_hi, 4097)
        bound = float(np.max(np.hypot(ts, self.radius(ts) * self.base.bounding_radius))) * (1 + 1e-6)
        return ConvexBody(
            dim=self.dim, family=Family.REVOLUTION, log_volume=self.log_volume,
            bounding_radius=bound, inner_radius=min(inner, bound), symmetric=False,
            params={"revolution": self}, contains_fn=self.contains,
        )

    def gauge(self, pts) -> np.ndarray:
        return self.as_convex_body().gauge(pts)

    def descriptor(self) -> dict:
        if self.profile is None:
            raise ValueError("revolution bodies with a custom radius function have no descriptor")
        return {"family": "revolution", "interval": [self.t_lo, self.t_hi], "profile": self.profile,
                "params": dict(self.profile_params), "base": self.base.descriptor()}


def check_concave(fn, lo, hi, tests=_CONCAVITY_TESTS, tol=_CONCAVITY_TOL, seed=0):
    """Midpoint concavity on random pairs; returns the first violating pair or None."""
    g = RngStream(seed, 0xC0C).generator()
    a = g.uniform(lo, hi, tests)
    b = g.uniform(lo, hi, tests)
    fa, fb, fm = fn(a), fn(b), fn(0.5 * (a + b))
    scale = np.maximum(1.0, np.maximum(np.abs(fa), np.abs(fb)))
    bad = fm < 0.5 * (fa + fb) - tol * scale
    if np.any(bad):
        i = int(np.argmax(bad))
        return float(a[i]), float(b[i])
    return None


def make_revolution(t_lo, t_hi, radius_fn, base: ConvexBody, *, profile=None, profile_params=None):
    """Body of revolution around the t-axis with concave radius profile.

    ``radius_fn`` may be a callable or the name of a catalog profile
    (constant, linear, semicircle, truncated-parabola).
    """
    t_lo, t_hi = float(t_lo), float(t_hi)
    if not t_lo < t_hi:
        raise ValueError("need t_lo < t_hi")
    if isinstance(radius_fn, str):
        profile = radius_fn
        try:
            factory, defaults = RADIUS_PROFILES[profile]
        except KeyError:
            raise ValueError(f"unknown radius profile {profile!r}") from None
        profile_params = {**defaults, **(profile_params or {})}
        radius_fn = factory(**profile_params)
    fn = lambda t: np.asarray(radius_fn(np.asarray(t, dtype=np.float64)), dtype=np.float64)  # noqa: E731
    grid = np.linspace(t_lo, t_hi, 1001)
    vals = fn(grid)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("radius function must be finite and nonnegative on the interval")
    bad = check_concave(fn, t_lo, t_hi)
    if bad is not None:
        raise ValueError(f"radius function is not concave: midpoint test fails on {bad}")
    return RevolutionBody(t_lo, t_hi, radius_fn, base, profile, dict(profile_params or {}))


def make_cone(n_base: int, base: ConvexBody | None = None) -> RevolutionBody:
    base = base or make_lp_ball(n_base, 2)
    return make_revolution(0.0, 1.0, "linear", base)


def make_cylinder(n_base: int, base: ConvexBody | None = None) -> RevolutionBody:
    base = base or make_lp_ball(n_base, 2)
    return make_revolution(-1.0, 1.0, "constant", base)


# -- descriptors ---------------------------------------------------------------

def body_from_descriptor(desc: dict, n: int | None = None):
    """Inverse of ``descriptor()``; ``n`` fills in a missing dimension."""
    desc = dict(desc)
    fam = desc.get("family")
    dim = desc.get("n", n)
    if fam == "lp":
        p = desc.get("p", 2)
        p = math.inf if str(p).lower() in {"inf", "infinity"} else float(p)
        return make_lp_ball(int(dim), p)
    if fam == "hypercube":
        return make_hypercube(int(dim))
    if fam == "simplex":
        return make_simplex(int(dim))
    if fam == "product":
        return make_product(body_from_descriptor(f) for f in desc["factors"])
    if fam == "dilated":
        return dilate(body_from_descriptor(desc["base"], n), desc["scale"])
    if fam == "revolution":
        base_desc = desc.get("base", {"family": "lp", "p": 2})
        base_n = None if dim is None else int(dim) - 1
        base = body_from_descriptor(base_desc, base_n)
        lo, hi = desc["interval"]
        return make_revolution(lo, hi, desc["profile"], base, profile_params=desc.get("params"))
    raise ValueError(f"unknown body family {fam!r}")


BODY_CATALOG = {
    "lp": "unit l^p ball, lp:<p>[:<scale>] (p may be 'inf')",
    "cube": "hypercube [-1,1]^n, cube[:<scale>]",
    "simplex": "regular simplex, barycenter at 0, vertices on the unit sphere",
    "cone": "cone of revolution, I=[0,1], R(t)=1-t, Euclidean base of dim n-1",
    "cylinder": "cylinder, I=[-1,1], R(t)=1, Euclidean base of dim n-1",
    "revball": "Euclidean ball as a body of revolution, R(t)=sqrt(1-t^2)",
    "parabolic": "truncated paraboloid of revolution, I=[-1,1], R(t)=1-t^2",
}


def parse_body_spec(spec: str, n: int):
    """Compact CLI form, e.g. ``lp:2``, ``lp:1.5:2`` (dilated by 2), ``cube``, ``cone``."""
    parts = spec.split(":")
    name, args = parts[0], parts[1:]
    if name == "lp":
        if not args:
            raise ValueError("lp body needs a p, e.g. lp:2")
        body = make_lp_ball(n, math.inf if args[0].lower() == "inf" else float(args[0]))
        return dilate(body, float(args[1])) if len(args) > 1 else body
    if name == "cube":
        body = make_hypercube(n)
        return dilate(body, float(args[0])) if args else body
    if name == "simplex":
        return make_simplex(n)
    if n < 2 and name in {"cone", "cylinder", "revball", "parabolic"}:
        raise ValueError("bodies of revolution need n >= 2")
    if name == "cone":
        return make_cone(n - 1)
    if name == "cylinder":
        return make_cylinder(n - 1)
    if name == "revball":
        return make_revolution(-1.0, 1.0, "semicircle", make_lp_ball(n - 1, 2))
    if name == "parabolic":
        return make_revolution(-1.0, 1.0, "truncated-parabola", make_lp_ball(n - 1, 2))
    raise ValueError(f"unknown body {spec!r}; known: {', '.join(BODY_CATALOG)}")
