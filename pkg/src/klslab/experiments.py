"""Experiment runner: configs, per-case tasks, reports and plot data.

Every experiment expands into independent cases.  A case draws from the
stream ``RngStream(seed, stream_id)`` where ``stream_id`` is a checksum of the
case label, so rows do not depend on case order or on the worker count.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy
from scipy import integrate, special

from . import __version__
from .batch import Provenance, SampleBatch
from .geometry import RevolutionBody, body_from_descriptor, make_lp_ball, parse_body_spec
from .moments import (block_isotropy_check, compare_mixed_moments, ks_two_sample, mean_with_se,
                      radial_variance_ratio, scale_identity_gap, whiten)
from .poincare import (TestFunction, builtin_dictionary, poincare_lower_bound, radial_cutoff_scale,
                       supnorm_quotient, multiblock_variance_ratio)
from .profiles import ProfileFamily, normalize, parse_profile_spec, profile_from_descriptor
from .rng import RngStream
from .samplers import (ConvergenceWarning, check_mixed_partial_signs, product_density, revolution_density,
                       sample_multiblock, sample_polar, sample_radius_R, sample_revolution,
                       sample_revolution_su, sample_scale_S, sample_SU, sample_uniform_body,
                       squared_sum_density, xs_density_unnormalized)

EXPERIMENTS = (
    "verify-radial", "verify-decomposition", "verify-scale-identity", "kls-table",
    "revolution-suite", "multiblock-suite", "bounds-comparison", "condition-check",
)
MIN_COUNT = 10_000
NO_SAMPLING = {"condition-check"}
DEFAULT_GATES = {"ratio_gate": 10.0, "se_gate": 4.0}

_DEFAULTS = {
    "verify-radial": (["lp:2"], ["exp:1", "gauss:1", "uniform:1"], [1, 2, 3, 5, 10, 20, 50]),
    "verify-decomposition": (["lp:1", "lp:2", "lp:inf"], ["exp:1", "gauss:1", "uniform:1"], [2, 3, 5]),
    "verify-scale-identity": (["lp:2"], ["exp:1", "gauss:1", "uniform:1"], [1, 2, 3, 5, 10, 20, 50]),
    "kls-table": (["lp:1", "lp:2", "lp:inf", "simplex", "cone", "cylinder"],
                  ["uniform:1", "exp:1", "gauss:1"], [2, 3, 4, 5, 6, 7, 8]),
    "revolution-suite": (["cone", "cylinder", "revball", "parabolic"], ["uniform:1"], [2, 3, 5]),
    "multiblock-suite": (["lp:2"], ["gauss:1"], [2, 3, 5]),
    "bounds-comparison": (["lp:1", "lp:2", "lp:inf", "simplex"], ["uniform:1", "exp:1", "gauss:1"], [2, 4, 8]),
    "condition-check": ([], [], [2]),
}
_REVOLUTION_NAMES = {"cone", "cylinder", "revball", "parabolic"}

GENERIC_COLUMNS = ["experiment", "case", "body", "profile", "n", "count", "seed", "stream",
                   "quantity", "value", "se", "reference", "verdict"]
KLS_COLUMNS = ["body", "profile", "n", "count", "seed", "lower_bound", "se", "kls_ratio",
               "argmax_function", "sum_var_bound", "bobkov_bound", "argmax_kind", "verdict"]
PLOT_COLUMNS = ["experiment", "series", "x", "y", "se"]


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


# -- configuration -------------------------------------------------------------------

def _spec_label(spec) -> str:
    return spec if isinstance(spec, str) else json.dumps(spec, sort_keys=True, separators=(",", ":"))


def resolve_body(spec, n: int):
    if isinstance(spec, str):
        return parse_body_spec(spec, n)
    return body_from_descriptor(spec, n)


def resolve_profile(spec):
    if isinstance(spec, str):
        return parse_profile_spec(spec)
    return profile_from_descriptor(spec)


def _is_revolution(spec) -> bool:
    if isinstance(spec, str):
        return spec.split(":")[0] in _REVOLUTION_NAMES
    return spec.get("family") == "revolution"


@dataclass
class ExperimentConfig:
    experiment: str
    bodies: list | None = None
    profiles: list | None = None
    dims: list | None = None
    count: int = 100_000
    seed: int = 0
    workers: int = 1
    output_path: str = "report"
    gates: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        bodies, profiles, dims = _DEFAULTS[self.experiment]
        self.bodies = list(bodies if self.bodies is None else self.bodies)
        self.profiles = list(profiles if self.profiles is None else self.profiles)
        self.dims = list(dims if self.dims is None else self.dims)
        self.gates = {**DEFAULT_GATES, **(self.gates or {})}
        self.options = dict(self.options or {})
        try:
            self.count = int(self.count)
            self.seed = int(self.seed)
            self.workers = int(self.workers)
            self.dims = [int(d) for d in self.dims]
            self.gates = {k: float(v) for k, v in self.gates.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed numeric field: {exc}") from exc
        unknown = set(self.gates) - set(DEFAULT_GATES)
        if unknown:
            raise ConfigError(f"unknown gates {sorted(unknown)}")
        if any(v <= 0 for v in self.gates.values()):
            raise ConfigError("gates must be positive")
        if self.experiment not in NO_SAMPLING and self.count < MIN_COUNT:
            raise ConfigError(f"count must be >= {MIN_COUNT} for {self.experiment}, got {self.count}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.dims or any(d < 1 for d in self.dims):
            raise ConfigError("dims must be a non-empty list of positive integers")
        self._validate_specs()

    def _validate_specs(self):
        for spec in self.bodies:
            for n in self.dims:
                try:
                    resolve_body(spec, n)
                except (ValueError, KeyError, TypeError) as exc:
                    raise ConfigError(f"bad body {_spec_label(spec)!r} at n={n}: {exc}") from exc
        for spec in self.profiles:
            try:
                resolve_profile(spec)
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"bad profile {_spec_label(spec)!r}: {exc}") from exc

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if "experiment" not in obj:
            raise ConfigError("config needs an 'experiment'")
        return cls(**obj)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        return asdict(self)

    def effective_workers(self) -> int:
        env = os.environ.get("KLSLAB_WORKERS")
        if env:
            try:
                value = int(env)
            except ValueError as exc:
                raise ConfigError(f"KLSLAB_WORKERS must be an integer, got {env!r}") from exc
            if value < 1:
                raise ConfigError("KLSLAB_WORKERS must be >= 1")
            return value
        return self.workers


# -- tasks ------------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    experiment: str
    case: str
    params: dict
    count: int
    seed: int
    gates: dict
    options: dict

    @property
    def stream_id(self) -> int:
        return zlib.crc32(f"{self.experiment}/{self.case}".encode())

    @property
    def stream(self) -> RngStream:
        return RngStream(self.seed, self.stream_id)


def build_tasks(config: ExperimentConfig) -> list[Task]:
    exp = config.experiment
    cases = []
    if exp in ("verify-radial", "verify-scale-identity"):
        body = config.bodies[0] if config.bodies else "lp:2"
        for prof in config.profiles:
            for n in config.dims:
                cases.append((f"{_spec_label(prof)}/n={n}", {"body": body, "profile": prof, "n": n}))
    elif exp in ("verify-decomposition", "kls-table", "bounds-comparison"):
        for body in config.bodies:
            profiles = ["uniform:1"] if _is_revolution(body) else config.profiles
            for prof in profiles:
                for n in config.dims:
                    cases.append((f"{_spec_label(body)}/{_spec_label(prof)}/n={n}",
                                  {"body": body, "profile": prof, "n": n}))
    elif exp == "revolution-suite":
        for body in config.bodies:
            for n in config.dims:
                cases.append((f"{_spec_label(body)}/n={n}", {"body": body, "n": n}))
    elif exp == "multiblock-suite":
        models = config.options.get("models", ["gaussian-product", "cone-whitened", "nu-mcmc", "xs-density"])
        for model in models:
            for n in config.dims:
                cases.append((f"{model}/n={n}", {"model": model, "n": n}))
    elif exp == "condition-check":
        for entry in config.options.get("densities", _DEFAULT_DENSITIES):
            cases.append((entry["density"], dict(entry)))
    opts = dict(sorted(config.options.items()))
    return [Task(exp, label, params, config.count, config.seed, dict(config.gates), opts)
            for label, params in cases]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _row(task: Task, quantity, value, se=None, reference=None, verdict="info", **extra):
    p = task.params
    row = {
        "experiment": task.experiment, "case": task.case,
        "body": _spec_label(p["body"]) if "body" in p else "",
        "profile": _spec_label(p["profile"]) if "profile" in p else "",
        "n": p.get("n", ""), "count": task.count, "seed": task.seed, "stream": task.stream_id,
        "quantity": quantity, "value": value, "se": se, "reference": reference, "verdict": verdict,
    }
    row.update(extra)
    return row


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def _z_row(task, quantity, value, se, reference):
    gate = task.gates["se_gate"]
    diff = abs(value - reference)
    ok = diff <= gate * se if se > 0 else diff <= 1e-12 * max(1.0, abs(reference))
    return _row(task, quantity, value, se, reference, _verdict(ok))


# -- closed forms used as references in reports ------------------------------------------

def radial_ratio_exact(profile, n: int):
    """n Var(R) / E(R^2) for catalog profiles, or None."""
    fam = profile.family
    if fam is ProfileFamily.EXPONENTIAL:
        return n / (n + 1)
    if fam is ProfileFamily.GAUSSIAN:
        m1 = math.sqrt(2.0) * math.exp(special.gammaln((n + 1) / 2) - special.gammaln(n / 2))
        return n - m1 * m1
    if fam is ProfileFamily.UNIFORM:
        return n / (n + 1) ** 2
    return None


def second_moments_exact(profile, n: int):
    """(E R^2, E S^2) for catalog profiles, or None."""
    fam, p = profile.family, profile.params
    if fam is ProfileFamily.EXPONENTIAL:
        b = p["beta"]
        return n * (n + 1) / b ** 2, (n + 1) * (n + 2) / b ** 2
    if fam is ProfileFamily.GAUSSIAN:
        s = p["sigma"]
        return n * s * s, (n + 2) * s * s
    if fam is ProfileFamily.UNIFORM:
        c = p["cutoff"]
        return c * c * n / (n + 2), c * c
    return None


# -- experiment bodies ---------------------------------------------------------------

def _verify_radial(task: Task):
    n = task.params["n"]
    profile = resolve_profile(task.params["profile"])
    pair = normalize(resolve_body(task.params["body"], n), profile)
    method = task.options.get("method", "auto")
    r = sample_radius_R(n, pair, task.count, task.stream, method=method).data[:, 0]
    ratio, se = radial_variance_ratio(r, n)
    rows = [_row(task, "n*Var(R)/E(R^2)", ratio, se, 1.0,
                 _verdict(ratio <= 1.0 + task.gates["se_gate"] * se))]
    exact = radial_ratio_exact(profile, n)
    if exact is not None:
        rows.append(_z_row(task, "ratio-vs-exact", ratio, se, exact))
    return rows


def _verify_scale_identity(task: Task):
    n = task.params["n"]
    profile = resolve_profile(task.params["profile"])
    pair = normalize(resolve_body(task.params["body"], n), profile)
    method = task.options.get("method", "auto")
    r = sample_radius_R(n, pair, task.count, task.stream.child(0), method=method).data[:, 0]
    s = sample_scale_S(n, pair, task.count, task.stream.child(1), method=method).data[:, 0]
    gap, se = scale_identity_gap(r, s, n)
    rows = [_z_row(task, "E(R^2)(n+2)/n-E(S^2)", gap, se, 0.0)]
    exact = second_moments_exact(profile, n)
    if exact is not None:
        er2, es2 = mean_with_se(r * r), mean_with_se(s * s)
        rows.append(_z_row(task, "E(R^2)", er2[0], er2[1], exact[0]))
        rows.append(_z_row(task, "E(S^2)", es2[0], es2[1], exact[1]))
    return rows


def _verify_decomposition(task: Task):
    n = task.params["n"]
    body = resolve_body(task.params["body"], n)
    profile = resolve_profile(task.params["profile"])
    pair = normalize(body, profile)
    a = sample_SU(pair, task.count, task.stream.child(0)).data
    b = sample_polar(pair, task.count, task.stream.child(1)).data
    gate = task.gates["se_gate"]
    cmp = compare_mixed_moments(a, b, 4, gate)
    rows = [_row(task, "mixed-moments-max-z", cmp.max_z, None, gate, _verdict(cmp.exact_ok))]
    alpha = float(task.options.get("ks_alpha", 0.001))
    stat, crit, ok = ks_two_sample(body.gauge(a), body.gauge(b), alpha)
    rows.append(_row(task, "ks-gauge", stat, None, crit, _verdict(ok)))
    if body.label == "l2" and profile.family is ProfileFamily.GAUSSIAN and profile.params["sigma"] == 1.0:
        for tag, x in (("SU", a), ("polar", b)):
            for power, ref in ((2, 1.0), (4, 3.0)):
                m, se = mean_with_se(x[:, 0] ** power)
                rows.append(_z_row(task, f"E X1^{power} [{tag}]", m, se, ref))
    return rows


def _kls_sample(task: Task):
    """Draws in isotropic position, the body whose gauge drives radial entries, and the sine scale."""
    n = task.params["n"]
    spec = task.params["body"]
    body = resolve_body(spec, n)
    if isinstance(body, RevolutionBody):
        batch = sample_revolution(body, task.count, task.stream)
        white, _ = whiten(batch)
        x = white.data
        return x, None, radial_cutoff_scale(None, x)
    profile = resolve_profile(task.params["profile"])
    x = sample_SU(normalize(body, profile), task.count, task.stream).data
    return x, body, radial_cutoff_scale(body, x, profile.cutoff)


def _kls_table(task: Task):
    x, body, scale = _kls_sample(task)
    n = x.shape[1]
    est = poincare_lower_bound(builtin_dictionary(n, body, scale, seed=task.seed), x)
    p = task.params
    return [{
        "body": _spec_label(p["body"]), "profile": _spec_label(p["profile"]), "n": n,
        "count": task.count, "seed": task.seed, "lower_bound": est.lower_bound,
        "se": est.std_errors["lower_bound"], "kls_ratio": est.kls_ratio,
        "argmax_function": est.argmax_function, "sum_var_bound": est.comparison_bounds["sum_var"],
        "bobkov_bound": est.comparison_bounds["bobkov_sqrt"], "argmax_kind": est.argmax_kind,
        "verdict": _verdict(est.kls_ratio <= task.gates["ratio_gate"]),
    }]


def _bounds_comparison(task: Task):
    x, body, scale = _kls_sample(task)
    n = x.shape[1]
    est = poincare_lower_bound(builtin_dictionary(n, body, scale, seed=task.seed), x)
    gate = task.gates["ratio_gate"]
    lb, se = est.lower_bound, est.std_errors["lower_bound"]
    second = float(np.mean(np.einsum("ij,ij->i", x, x)))
    cb = est.comparison_bounds
    rows = [
        _row(task, "lower_bound", lb, se, None, "info", argmax=est.argmax_function),
        _row(task, "lower_bound/sum_var", lb / cb["sum_var"], se / cb["sum_var"], gate,
             _verdict(lb / cb["sum_var"] <= gate)),
        _row(task, "lower_bound/E|X|^2", lb / second, se / second, gate, _verdict(lb / second <= gate)),
        _row(task, "lower_bound/sqrt(Var|X|^2)", lb / cb["bobkov_sqrt"], se / cb["bobkov_sqrt"], None, "info"),
        _row(task, "kls_ratio", est.kls_ratio, est.std_errors["kls_ratio"], gate,
             _verdict(est.kls_ratio <= gate)),
    ]
    if body is not None:
        profile = resolve_profile(task.params["profile"])
        if profile.family is not ProfileFamily.UNIFORM:
            # one-dimensional scale variance against sup|f'|^2 E(S^2)/n with f(s) = s
            pair = normalize(body, profile)
            s = sample_scale_S(n, pair, task.count, task.stream.child(7)).data
            ident = TestFunction("s", lambda z: z[:, 0], lambda z: np.ones_like(z), 1.0, "linear")
            c_emp = supnorm_quotient(ident, s) * n / float(np.mean(s * s))
            rows.append(_row(task, "Var(S)n/E(S^2)", c_emp, None, 12.0, "info"))
    return rows


def _t_mean_exact(K: RevolutionBody) -> float:
    n = K.base.dim
    num, _ = integrate.quad(lambda t: t * float(K.radius(t)) ** n, K.t_lo, K.t_hi, epsrel=1e-12)
    den, _ = integrate.quad(lambda t: float(K.radius(t)) ** n, K.t_lo, K.t_hi, epsrel=1e-12)
    return num / den


def _revolution_suite(task: Task):
    n = task.params["n"]
    K = resolve_body(task.params["body"], n)
    if not isinstance(K, RevolutionBody):
        raise ConfigError(f"{task.params['body']!r} is not a body of revolution")
    batch = sample_revolution(K, task.count, task.stream.child(0))
    t = batch.data[:, 0]
    m, se = mean_with_se(t)
    rows = [_z_row(task, "E t", m, se, _t_mean_exact(K))]
    white, _ = whiten(batch)
    x = white.data
    est = poincare_lower_bound(builtin_dictionary(n, None, radial_cutoff_scale(None, x), seed=task.seed), x)
    rows.append(_row(task, "kls_ratio", est.kls_ratio, est.std_errors["kls_ratio"],
                     task.gates["ratio_gate"], _verdict(est.kls_ratio <= task.gates["ratio_gate"])))
    rows.append(_row(task, "argmax", est.argmax_function, None, None, "info"))
    mcmc_count = int(task.options.get("mcmc_count", 20_000))
    if mcmc_count > 0:
        joint = revolution_density(K)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            _, nu = sample_multiblock(joint, [K.base], 1, mcmc_count, task.stream.child(1), return_nu=True)
        info = nu.provenance.extra
        tm = nu.data[:, 0]
        # chains are stored contiguously, so 32 blocks are per-chain means
        blocks = np.array([b.mean() for b in np.array_split(tm, info["chains"])])
        se_mc = float(blocks.std(ddof=1) / math.sqrt(len(blocks)))
        cs = math.hypot(se_mc, se)
        gap = float(tm.mean() - m)
        rows.append(_row(task, "E t [nu-mcmc] - E t [exact]", gap, cs, 0.0,
                         _verdict(abs(gap) <= task.gates["se_gate"] * cs)))
        rows.append(_row(task, "mcmc-ess", info["ess"], None, info["ess_threshold"], "info"))
    return rows


def _gaussian_product(task: Task):
    n = task.params["n"]
    gate = task.gates["se_gate"]
    pair = normalize(make_lp_ball(n, 2), resolve_profile("gauss:1"))
    lam = math.sqrt((n + 2) / n)  # E|U|^2 = n/(n+2) for U uniform on the Euclidean ball
    x0 = task.stream.child(0).generator().standard_normal((task.count, 1))
    s = sample_scale_S(n, pair, task.count, task.stream.child(1)).data[:, 0] / lam
    u = sample_uniform_body(pair.body, task.count, task.stream.child(2)).data * lam
    rep = block_isotropy_check(x0, [s], [u], [1, n], gate)
    rows = [_row(task, f"E(.)/dim [{lab}]", r, e, 1.0, "info")
            for lab, r, e in zip(rep.labels, rep.ratios, rep.std_errors)]
    rows.append(_row(task, "max-pairwise-z", rep.max_discrepancy_z, None, gate, _verdict(rep.consistent)))
    x = np.column_stack([x0, s[:, None] * u])
    second = float(np.mean(np.einsum("ij,ij->i", x, x)))
    xs = np.column_stack([x0, s])
    for name, col in (("f=x0", 0), ("f=s", 1)):
        f = TestFunction(name, lambda z, c=col: z[:, c],
                         lambda z, c=col: np.eye(2)[np.full(len(z), c)], 1.0, "linear")
        rows.append(_row(task, f"block-variance-ratio {name}",
                         multiblock_variance_ratio(f, xs, second, [1, n]), None, None, "info"))
    est = poincare_lower_bound(builtin_dictionary(n + 1, seed=task.seed), x)
    rows.append(_row(task, "C_P N/((n0+k)E|X|^2)", est.lower_bound * (n + 1) / (2 * second), None, None, "info"))
    return rows


def _cone_whitened(task: Task):
    n = task.params["n"]  # base dimension; the body lives in R^(1+n)
    gate = task.gates["se_gate"]
    K = parse_body_spec("cone", n + 1)
    t, s, u = sample_revolution_su(K, task.count, task.stream)
    lam = math.sqrt((n + 2) / n)
    batch_x = np.column_stack([t, s[:, None] * u])
    _, mapping = whiten(SampleBatch(batch_x, Provenance("cone", task.stream)))
    a = mapping.matrix[0, 0]
    b = float(np.mean(np.diag(mapping.matrix)[1:]))
    x0 = (a * (t - mapping.center[0]))[:, None]
    rep = block_isotropy_check(x0, [b * s / lam], [lam * u], [1, n], gate)
    rows = [_row(task, f"E(.)/dim [{lab}]", r, e, None, "info")
            for lab, r, e in zip(rep.labels, rep.ratios, rep.std_errors)]
    rows.append(_row(task, "max-pairwise-z", rep.max_discrepancy_z, None, gate, _verdict(rep.consistent)))
    return rows


def _nu_mcmc(task: Task):
    n = task.params["n"]
    joint = product_density(1, 1, "exp", 1.0)
    body = make_lp_ball(n, 2)
    count = int(task.options.get("mcmc_count", min(task.count, 50_000)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        _, nu = sample_multiblock(joint, [body], 1, count, task.stream, return_nu=True)
    info = nu.provenance.extra
    rows = []
    for quantity, values, ref in (("E x0^2", nu.data[:, 0] ** 2, 1.0), ("E r", nu.data[:, 1], float(n)),
                                  ("E r^2", nu.data[:, 1] ** 2, float(n * (n + 1)))):
        blocks = np.array([b.mean() for b in np.array_split(values, info["chains"])])
        se = float(blocks.std(ddof=1) / math.sqrt(len(blocks)))
        rows.append(_z_row(task, quantity + " [nu-mcmc]", float(values.mean()), se, ref))
    rows.append(_row(task, "mcmc-ess", info["ess"], None, info["ess_threshold"], "info"))
    return rows


def _xs_density(task: Task):
    n = task.params["n"]
    joint = product_density(1, 1, "exp", 1.0)
    body = make_lp_ball(n, 2)
    xg, sg = np.meshgrid(np.linspace(-2.0, 2.0, 21), np.linspace(0.5, 3.0 * n, 41), indexing="ij")
    z = np.column_stack([xg.ravel(), sg.ravel()])
    got = xs_density_unnormalized(joint, [body], z)
    ref = body.volume * z[:, 1] ** n * np.exp(-z[:, 1] - 0.5 * z[:, 0] ** 2)
    err = float(np.max(np.abs(got / ref - 1.0)))
    return [_row(task, "max-rel-error (X0,S) density", err, None, 1e-4, _verdict(err <= 1e-4))]


_MULTIBLOCK = {"gaussian-product": _gaussian_product, "cone-whitened": _cone_whitened,
               "nu-mcmc": _nu_mcmc, "xs-density": _xs_density}

_DEFAULT_DENSITIES = [
    {"density": "exp-sum", "expect": "pass"},
    {"density": "squared-sum", "expect": "fail"},
]


def _multiblock_suite(task: Task):
    model = task.params["model"]
    if model not in _MULTIBLOCK:
        raise ConfigError(f"unknown multiblock model {model!r}")
    return _MULTIBLOCK[model](task)


def _condition_check(task: Task):
    p = task.params
    k = int(p.get("k", 2))
    name = p["density"]
    if name == "exp-sum":
        joint = product_density(0, k, "exp", 1.0)
    elif name == "squared-sum":
        joint = squared_sum_density(0, k)
    else:
        raise ConfigError(f"unknown density {name!r}")
    grid = int(task.options.get("grid", 50))
    hi = float(p.get("box", 3.0))
    rep = check_mixed_partial_signs(joint, [[0.0, hi]] * k, grid=grid)
    expect = p.get("expect", "pass")
    got = "pass" if rep.passed else "fail"
    rows = [_row(task, f"monotone-violation-fraction j={j + 1}", v, None, 0.0, "info")
            for j, v in enumerate(rep.monotone_violations)]
    rows += [_row(task, f"alternating-violation-fraction j={j + 1}", v, None, 0.0, "info")
             for j, v in enumerate(rep.alternating_violations)]
    rows.append(_row(task, "condition-verdict", got, None, expect, _verdict(got == expect)))
    return rows


_RUNNERS = {
    "verify-radial": _verify_radial,
    "verify-decomposition": _verify_decomposition,
    "verify-scale-identity": _verify_scale_identity,
    "kls-table": _kls_table,
    "revolution-suite": _revolution_suite,
    "multiblock-suite": _multiblock_suite,
    "bounds-comparison": _bounds_comparison,
    "condition-check": _condition_check,
}


def execute_task(task: Task) -> list[dict]:
    return _RUNNERS[task.experiment](task)


# -- reports ----------------------------------------------------------------------

@dataclass
class ExperimentReport:
    experiment: str
    rows: list
    metadata: dict = field(default_factory=dict)

    @property
    def columns(self) -> list:
        return KLS_COLUMNS if self.experiment == "kls-table" else GENERIC_COLUMNS

    @property
    def passed(self) -> bool:
        return all(r.get("verdict") != "fail" for r in self.rows)

    def failures(self) -> list:
        return [r for r in self.rows if r.get("verdict") == "fail"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [{k: (v.item() if isinstance(v, np.generic) else v) for k, v in r.items()} for r in self.rows]
        return json.dumps({"experiment": self.experiment, "passed": self.passed, "rows": rows,
                           "metadata": self.metadata}, indent=2, sort_keys=True, default=str)

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out / f"{self.experiment}.csv", "json": out / f"{self.experiment}.json",
                 "plotdata": out / f"{self.experiment}.plotdata.csv"}
        paths["csv"].write_text(self.to_csv())
        paths["json"].write_text(self.to_json())
        paths["plotdata"].write_text(emit_plotdata(self))
        return paths


def _versions() -> dict:
    import numba
    return {"klslab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def run(config: ExperimentConfig, write: bool = True) -> ExperimentReport:
    """Run every case of ``config``; optionally write CSV, JSON and plot data."""
    tasks = build_tasks(config)
    workers = config.effective_workers()
    start = time.perf_counter()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(execute_task, tasks))
    else:
        results = [execute_task(t) for t in tasks]
    rows = [row for chunk in results for row in chunk]
    report = ExperimentReport(config.experiment, rows, {
        "config": config.to_dict(), "workers": workers, "wall_time_s": time.perf_counter() - start,
        "versions": _versions(), "streams": {t.case: t.stream_id for t in tasks},
    })
    if write:
        report.write(config.output_path)
    return report


def emit_plotdata(report: ExperimentReport) -> str:
    """Long-format CSV (experiment, series, x, y, se) for external plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PLOT_COLUMNS)
    for row in report.rows:
        if report.experiment == "kls-table":
            lb = row["lower_bound"]
            se = row["se"] * row["kls_ratio"] / lb if lb > 0 else math.nan
            writer.writerow([report.experiment, f"{row['body']}/{row['profile']}", _fmt(row["n"]),
                             _fmt(row["kls_ratio"]), _fmt(se)])
            continue
        value = row.get("value")
        if not isinstance(value, (int, float, np.integer, np.floating)) or isinstance(value, bool):
            continue
        series = row["quantity"] if not row.get("profile") else f"{row['profile']}:{row['quantity']}"
        if report.experiment not in ("verify-radial", "verify-scale-identity"):
            series = f"{row['case'].rsplit('/n=', 1)[0]}:{row['quantity']}"
        writer.writerow([report.experiment, series, _fmt(row.get("n")), _fmt(value), _fmt(row.get("se"))])
    return buf.getvalue()
