"""Log-concave non-increasing radial profiles and normalization against a body."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .geometry import ConvexBody
from .rng import RngStream

_SHAPE_TESTS = 1000
_SHAPE_TOL = 1e-9
_FD_POINTS = 100
_FD_TOL = 1e-4
MASS_TOL = 1e-8


class ProfileFamily(str, enum.Enum):
    UNIFORM = "uniform"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"
    POWER_EXP = "powexp"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Profile rho on R+, given through ``log_rho`` and the derivative ``rho_prime``.

    ``log_rho`` and ``rho_prime`` are vectorized.  They need not be normalized;
    :func:`normalize` computes the constant for a given body.
    """

    family: ProfileFamily
    log_rho: Callable
    rho_prime: Callable | None
    cutoff: float = math.inf
    has_terminal_atom: bool = False
    params: dict = field(default_factory=dict)
    scale: float = 1.0

    def rho(self, s):
        return np.exp(self.log_rho(np.asarray(s, dtype=np.float64)))

    @property
    def label(self) -> str:
        p = self.params
        if self.family is ProfileFamily.UNIFORM:
            return f"uniform({p['cutoff']:g})"
        if self.family is ProfileFamily.EXPONENTIAL:
            return f"exp({p['beta']:g})"
        if self.family is ProfileFamily.GAUSSIAN:
            return f"gauss({p['sigma']:g})"
        if self.family is ProfileFamily.POWER_EXP:
            return f"powexp({p['p']:g},{p['beta']:g})"
        return "custom"

    def descriptor(self) -> dict:
        f = self.family
        if f is ProfileFamily.CUSTOM:
            raise ValueError("custom profiles are programmatic only")
        return {"family": {"uniform": "uniform", "exponential": "exponential", "gaussian": "gaussian",
                           "powexp": "powexp"}[f.value], **self.params}


def uniform_cutoff(cutoff: float = 1.0) -> RadialProfile:
    """rho = 1 on [0, cutoff]; the law of S is the point mass at ``cutoff``."""
    c = float(cutoff)
    if not c > 0:
        raise ValueError("cutoff must be positive")

    def log_rho(s):
        s = np.asarray(s, dtype=np.float64)
        return np.where(s <= c, 0.0, -np.inf)

    return RadialProfile(ProfileFamily.UNIFORM, log_rho, lambda s: np.zeros_like(np.asarray(s, float)),
                         cutoff=c, has_terminal_atom=True, params={"cutoff": c}, scale=c)


def exponential(beta: float = 1.0) -> RadialProfile:
    b = float(beta)
    if not b > 0:
        raise ValueError("beta must be positive")
    return RadialProfile(
        ProfileFamily.EXPONENTIAL,
        lambda s: -b * np.asarray(s, dtype=np.float64),
        lambda s: -b * np.exp(-b * np.asarray(s, dtype=np.float64)),
        params={"beta": b}, scale=1.0 / b,
    )


def gaussian(sigma: float = 1.0) -> RadialProfile:
    sg = float(sigma)
    if not sg > 0:
        raise ValueError("sigma must be positive")

    def rho_prime(s):
        s = np.asarray(s, dtype=np.float64)
        return -(s / sg ** 2) * np.exp(-0.5 * (s / sg) ** 2)

    return RadialProfile(
        ProfileFamily.GAUSSIAN,
        lambda s: -0.5 * (np.asarray(s, dtype=np.float64) / sg) ** 2,
        rho_prime, params={"sigma": sg}, scale=sg,
    )


def power_exponential(p: float, beta: float = 1.0) -> RadialProfile:
    """rho(s) = exp(-beta s^p); log-concave iff p >= 1."""
    p, b = float(p), float(beta)
    if not (p > 0 and b > 0):
        raise ValueError("p and beta must be positive")

    def rho_prime(s):
        s = np.asarray(s, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -b * p * s ** (p - 1) * np.exp(-b * s ** p)
        return np.where(s > 0, out, -b if p == 1 else (0.0 if p > 1 else -np.inf))

    return RadialProfile(
        ProfileFamily.POWER_EXP,
        lambda s: -b * np.asarray(s, dtype=np.float64) ** p,
        rho_prime, params={"p": p, "beta": b}, scale=b ** (-1.0 / p),
    )


def custom(log_rho, rho_prime, cutoff=math.inf, scale=1.0) -> RadialProfile:
    """User profile; ``rho_prime`` is mandatory (it drives the law of S).

    With a finite ``cutoff`` where rho has not decayed to zero, the jump to 0
    becomes an atom of S at ``cutoff``.
    """
    if rho_prime is None:
        raise ValueError("custom profiles must supply rho_prime")
    cutoff = float(cutoff)
    atom = math.isfinite(cutoff) and bool(np.isfinite(log_rho(np.array([cutoff]))[0]))
    return RadialProfile(ProfileFamily.CUSTOM, log_rho, rho_prime, cutoff=cutoff,
                         has_terminal_atom=atom, scale=float(scale))


def profile_from_descriptor(desc: dict) -> RadialProfile:
    fam = desc.get("family")
    if fam == "uniform":
        return uniform_cutoff(desc.get("cutoff", 1.0))
    if fam in ("exponential", "exp"):
        return exponential(desc.get("beta", 1.0))
    if fam in ("gaussian", "gauss"):
        return gaussian(desc.get("sigma", 1.0))
    if fam == "powexp":
        return power_exponential(desc["p"], desc.get("beta", 1.0))
    raise ValueError(f"unknown profile family {fam!r} (custom profiles are programmatic only)")


PROFILE_CATALOG = {
    "uniform": "uniform:<cutoff>   rho = 1 on [0, cutoff] (uniform measure on cutoff*B)",
    "exp": "exp:<beta>         rho = exp(-beta s)",
    "gauss": "gauss:<sigma>      rho = exp(-s^2 / (2 sigma^2))",
    "powexp": "powexp:<p>:<beta>  rho = exp(-beta s^p), p >= 1",
}


def parse_profile_spec(spec: str) -> RadialProfile:
    name, *args = spec.split(":")
    vals = [float(a) for a in args]
    if name == "uniform":
        return uniform_cutoff(*vals)
    if name == "exp":
        return exponential(*vals)
    if name == "gauss":
        return gaussian(*vals)
    if name == "powexp":
        return power_exponential(*vals)
    raise ValueError(f"unknown profile {spec!r}; known: {', '.join(PROFILE_CATALOG)}")


# -- validation ---------------------------------------------------------------

@dataclass
class ProfileReport:
    log_concave: bool
    monotone: bool
    derivative_ok: bool | None = None
    violation: tuple | None = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.log_concave and self.monotone and self.derivative_ok is not False


def _test_range(profile):
    return profile.cutoff if math.isfinite(profile.cutoff) else 10.0 * profile.scale


def validate_profile(profile: RadialProfile, seed: int = 0) -> ProfileReport:
    """Randomized shape checks: log-concavity, monotonicity, and rho' consistency."""
    g = RngStream(seed, 0x9F0).generator()
    hi = _test_range(profile)
    a = g.uniform(0.0, hi, _SHAPE_TESTS)
    b = g.uniform(0.0, hi, _SHAPE_TESTS)
    la, lb, lm = profile.log_rho(a), profile.log_rho(b), profile.log_rho(0.5 * (a + b))
    if not (np.all(np.isfinite(la)) and np.all(np.isfinite(lb))):
        return ProfileReport(False, False, None, None, "log_rho not finite inside the support (interior jump)")
    scale = np.maximum(1.0, np.maximum(np.abs(la), np.abs(lb)))
    bad = lm < 0.5 * (la + lb) - _SHAPE_TOL * scale
    violation = None
    log_concave = not np.any(bad)
    if not log_concave:
        i = int(np.argmax(bad))
        violation = (float(a[i]), float(0.5 * (a[i] + b[i])), float(b[i]))

    c = g.uniform(0.0, hi, _SHAPE_TESTS)
    d = g.uniform(0.0, hi, _SHAPE_TESTS)
    lo_pt, hi_pt = np.minimum(c, d), np.maximum(c, d)
    l_lo, l_hi = profile.log_rho(lo_pt), profile.log_rho(hi_pt)
    mono_bad = l_hi > l_lo + _SHAPE_TOL * np.maximum(1.0, np.abs(l_lo))
    monotone = not np.any(mono_bad)
    if not monotone and violation is None:
        i = int(np.argmax(mono_bad))
        violation = (float(lo_pt[i]), float(hi_pt[i]))

    derivative_ok = None
    if profile.family is ProfileFamily.CUSTOM:
        derivative_ok = _check_derivative(profile, g, hi)
    detail = "" if log_concave and monotone else ("log-concavity" if not log_concave else "monotonicity")
    return ProfileReport(log_concave, monotone, derivative_ok, violation, detail)


def _check_derivative(profile, g, hi):
    h = 1e-6 * profile.scale
    s = g.uniform(2 * h, hi - 2 * h, _FD_POINTS)
    fd = (profile.rho(s + h) - profile.rho(s - h)) / (2 * h)
    exact = np.asarray(profile.rho_prime(s), dtype=np.float64)
    ref = np.maximum(np.abs(exact), 1e-8 * np.max(np.abs(exact)) + 1e-300)
    return bool(np.all(np.abs(fd - exact) <= _FD_TOL * ref))


# -- normalization ------------------------------------------------------------

def log_radial_integral(profile: RadialProfile, n: int, power: float | None = None) -> float:
    """log of int_0^inf r^(power) rho(r) dr, with ``power`` defaulting to n - 1."""
    k = n - 1 if power is None else power
    fam, p = profile.family, profile.params
    if fam is ProfileFamily.UNIFORM:
        return (k + 1) * math.log(p["cutoff"]) - math.log(k + 1)
    if fam is ProfileFamily.EXPONENTIAL:
        return special.gammaln(k + 1) - (k + 1) * math.log(p["beta"])
    if fam is ProfileFamily.GAUSSIAN:
        sg = p["sigma"]
        return (k - 1) / 2 * math.log(2) + (k + 1) * math.log(sg) + special.gammaln((k + 1) / 2)
    if fam is ProfileFamily.POWER_EXP:
        q, b = p["p"], p["beta"]
        return special.gammaln((k + 1) / q) - math.log(q) - (k + 1) / q * math.log(b)
    return math.log(_quad_radial(profile, k))


def _quad_radial(profile, k):
    # integrate in the log domain around the mode to keep large powers stable
    hi = profile.cutoff
    f = lambda r: math.exp(k * math.log(r) + float(profile.log_rho(r))) if r > 0 else 0.0  # noqa: E731
    if not math.isfinite(hi):
        far = profile.scale * np.array([1e3, 1e4])
        tail = k * np.log(far) + profile.log_rho(far)
        if not tail[1] < tail[0] - 10.0:
            raise ValueError("radial integral diverges; rho does not decay")
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, 0.0, hi, epsabs=0.0, epsrel=1e-12, limit=400)
        except integrate.IntegrationWarning as exc:
            raise ValueError(f"radial integral did not converge: {exc}") from exc
    if not np.isfinite(val) or val <= 0:
        raise ValueError("radial integral diverges or vanishes; profile is not integrable")
    return val


@dataclass(frozen=True, eq=False)
class NormalizedPair:
    """mu(dx) = c * rho(|x|_B) dx with total mass one."""

    body: ConvexBody
    profile: RadialProfile
    log_norm_const: float

    @property
    def dim(self) -> int:
        return self.body.dim

    def log_density(self, x):
        return self.log_norm_const + self.profile.log_rho(self.body.gauge(x))

    def total_mass(self) -> float:
        """Independent quadrature of n Vol(B) c int r^(n-1) rho(r) dr."""
        n = self.body.dim
        log_c, prof = self.log_norm_const, self.profile
        pre = math.log(n) + self.body.log_volume + log_c
        hi = prof.cutoff
        if not math.isfinite(hi):
            hi = _tail_point(prof, n)
        f = lambda r: math.exp(pre + (n - 1) * math.log(r) + float(prof.log_rho(r))) if r > 0 else 0.0  # noqa: E731
        mode = _radial_mode(prof, n, hi)
        pts = [p for p in (mode,) if 0 < p < hi]
        val, _ = integrate.quad(f, 0.0, hi, epsabs=0.0, epsrel=1e-12, limit=400, points=pts or None)
        return val

    @property
    def label(self) -> str:
        return f"{self.body.label}/{self.profile.label}"


def _radial_mode(profile, n, hi):
    r = np.linspace(0, hi, 4001)[1:]
    with np.errstate(divide="ignore"):
        lv = (n - 1) * np.log(r) + profile.log_rho(r)
    return float(r[np.argmax(lv)])


def _tail_point(profile, n):
    # mass beyond returned point is negligible against 1e-12 relative tolerance
    hi = profile.scale
    total = math.exp(log_radial_integral(profile, n))
    while True:
        f = lambda r: math.exp((n - 1) * math.log(r) + float(profile.log_rho(r)))  # noqa: E731
        tail, _ = integrate.quad(f, hi, np.inf, limit=200)
        if tail < 1e-14 * total:
            return hi
        hi *= 2.0


def normalize(body: ConvexBody, profile: RadialProfile, check: bool = True) -> NormalizedPair:
    """Attach the normalizing constant that makes rho(|x|_B) dx a probability."""
    if check:
        report = validate_profile(profile)
        if not report.passed:
            raise ValueError(f"profile fails validation ({report.detail or 'derivative check'}): {report.violation}")
    n = body.dim
    log_int = log_radial_integral(profile, n)
    log_c = -(math.log(n) + body.log_volume + log_int)
    if not math.isfinite(log_c):
        raise ValueError("normalizing constant is not finite")
    return NormalizedPair(body, profile, float(log_c))
