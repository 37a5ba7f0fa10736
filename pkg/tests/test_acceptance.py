"""Exit criteria at full size.  Each test records a one-line detail for the PASS/FAIL summary."""
import math
import time

import numpy as np
import pytest

from klslab.experiments import ExperimentConfig, run
from klslab.geometry import dilate, make_hypercube, make_lp_ball, make_product, make_simplex
from klslab.moments import MomentAccumulator
from klslab.poincare import builtin_dictionary, coordinate_sine, gradient_check, poincare_lower_bound
from klslab.rng import RngStream
from klslab.samplers import sample_cone_measure

pytestmark = pytest.mark.acceptance

FULL = 10**6


def gated(report):
    return [r for r in report.rows if r["verdict"] in ("pass", "fail")]


def test_criterion_1_radial_variance(record_property):
    start = time.perf_counter()
    report = run(ExperimentConfig("verify-radial", count=FULL), write=False)
    elapsed = time.perf_counter() - start
    bound = [r for r in report.rows if r["quantity"] == "n*Var(R)/E(R^2)"]
    exact = [r for r in report.rows if r["quantity"] == "ratio-vs-exact" and r["profile"] == "exp:1"]
    record_property("detail", f"{len(bound)} cases, {len(exact)} exact anchors, {elapsed:.1f} s")
    assert len(bound) == 21 and len(exact) == 7
    assert all(r["value"] <= 1.0 + 4.0 * r["se"] for r in bound)
    assert all(abs(r["value"] - r["reference"]) <= 4.0 * r["se"] for r in exact)
    assert all(r["reference"] == pytest.approx(r["n"] / (r["n"] + 1), rel=1e-12) for r in exact)
    assert report.passed
    assert elapsed < 30.0


def test_criterion_2_scale_identity(record_property):
    start = time.perf_counter()
    report = run(ExperimentConfig("verify-scale-identity", count=FULL), write=False)
    elapsed = time.perf_counter() - start
    rows = gated(report)
    gaps = [r for r in rows if r["quantity"].startswith("E(R^2)(n+2)/n-E(S^2)")]
    record_property("detail", f"{len(gaps)} gap rows, {len(rows)} gated rows, {elapsed:.1f} s")
    assert len(gaps) == 21
    assert all(abs(r["value"]) <= 4.0 * r["se"] for r in gaps)
    assert report.passed
    assert elapsed < 30.0


def test_criterion_3_su_equals_polar(record_property):
    report = run(ExperimentConfig("verify-decomposition", count=FULL), write=False)
    rows = gated(report)
    cases = {r["case"] for r in rows}
    normal = [r for r in rows if r["profile"] == "gauss:1" and r["body"] == "lp:2" and "X1" in r["quantity"]]
    record_property("detail", f"{len(cases)} cases, {len(rows)} gated rows, {len(report.failures())} failures")
    # E X1^2 and E X1^4 for both samplers in each of the three dimensions
    assert len(cases) == 27 and len(normal) == 12
    assert all(abs(r["value"] - r["reference"]) <= 4.0 * r["se"] for r in normal)
    assert len([r for r in rows if r["quantity"] == "mixed-moments-max-z"]) == 27
    assert len([r for r in rows if r["quantity"] == "ks-gauge"]) == 27
    assert report.passed, report.failures()


def test_criterion_4_poincare_calibration(record_property):
    start = time.perf_counter()
    u = np.random.default_rng(np.random.SeedSequence(4, spawn_key=(1,))).uniform(-1.0, 1.0, (FULL, 1))
    interval = poincare_lower_bound(builtin_dictionary(1) + [coordinate_sine(0)], u)
    gauss = []
    for n in range(1, 9):
        x = np.random.default_rng(np.random.SeedSequence(4, spawn_key=(2, n))).standard_normal((FULL, n))
        gauss.append(poincare_lower_bound(builtin_dictionary(n, seed=n), x))
    elapsed = time.perf_counter() - start
    lows = [g.lower_bound for g in gauss]
    record_property("detail", f"interval {interval.lower_bound:.4f} vs {4 / math.pi ** 2:.4f}; "
                              f"gaussian n=1..8 in [{min(lows):.3f}, {max(lows):.3f}]; {elapsed:.1f} s")
    assert abs(interval.lower_bound / (4 / math.pi ** 2) - 1.0) <= 0.02
    assert all(0.95 <= g.lower_bound <= 1.05 for g in gauss)
    assert all(g.argmax_kind == "linear" for g in gauss)
    assert elapsed < 60.0


def test_criterion_5_kls_table(record_property):
    report = run(ExperimentConfig("kls-table", count=100_000), write=False)
    ratios = [r["kls_ratio"] for r in report.rows]
    kinds = sorted({r["argmax_kind"] for r in report.rows})
    bodies = sorted({r["body"] for r in report.rows})
    record_property("detail", f"{len(ratios)} rows, max kls_ratio {max(ratios):.3f}, argmax kinds {kinds}")
    assert bodies == ["cone", "cylinder", "lp:1", "lp:2", "lp:inf", "simplex"]
    assert sorted({r["n"] for r in report.rows}) == list(range(2, 9))
    assert all(0.0 < k <= 10.0 for k in ratios)
    assert all(r["argmax_function"] for r in report.rows)
    assert report.passed


def test_criterion_6_block_ratios(record_property):
    cfg = ExperimentConfig("multiblock-suite", count=FULL, options={"models": ["gaussian-product", "cone-whitened"]})
    report = run(cfg, write=False)
    z = [r for r in report.rows if r["quantity"] == "max-pairwise-z"]
    record_property("detail", f"{len(z)} models x dims, worst pairwise z {max(r['value'] for r in z):.2f}")
    assert len(z) == 6
    assert all(r["value"] <= 4.0 for r in z)
    assert report.passed


def test_criterion_7_condition_checker(record_property):
    report = run(ExperimentConfig("condition-check", count=1), write=False)
    exp_sum = [r for r in report.rows if r["case"] == "exp-sum" and "violation" in r["quantity"]]
    verdict = {r["case"]: r["value"] for r in report.rows if r["quantity"] == "condition-verdict"}
    record_property("detail", f"exp-sum {verdict['exp-sum']}, squared-sum {verdict['squared-sum']}")
    assert all(r["value"] == 0.0 for r in exp_sum) and len(exp_sum) == 4
    assert verdict == {"exp-sum": "pass", "squared-sum": "fail"}
    assert report.passed


DETERMINISM_CONFIGS = [
    dict(experiment="verify-radial", profiles=["exp:1", "gauss:1"], dims=[2, 7]),
    dict(experiment="verify-decomposition", bodies=["lp:1", "lp:inf"], profiles=["gauss:1"], dims=[3]),
    dict(experiment="kls-table", bodies=["simplex", "cone"], profiles=["exp:1"], dims=[3, 4]),
    dict(experiment="multiblock-suite", dims=[2, 3]),
    dict(experiment="revolution-suite", bodies=["cylinder", "parabolic"], dims=[3]),
]


def test_criterion_8_determinism(record_property, tmp_path, monkeypatch):
    monkeypatch.delenv("KLSLAB_WORKERS", raising=False)
    checked = 0
    for i, base in enumerate(DETERMINISM_CONFIGS):
        outputs = []
        for label, workers in (("a", 1), ("b", 1), ("c", 8)):
            out = tmp_path / f"{i}{label}"
            run(ExperimentConfig(**base, count=10_000, seed=2024, workers=workers, output_path=str(out)))
            outputs.append((out / f"{base['experiment']}.csv").read_bytes())
        assert outputs[0] == outputs[1], base["experiment"]
        assert outputs[0] == outputs[2], base["experiment"]
        checked += 1
    record_property("detail", f"{checked} configs: repeat and 1 vs 8 workers byte-identical")


def test_criterion_9_property_suites(record_property):
    g = np.random.default_rng(np.random.SeedSequence(9))
    bodies = [make_lp_ball(n, p) for n in (2, 3, 5) for p in (1.0, 1.5, 2.0, 4.0)]
    bodies += [make_hypercube(n) for n in (2, 4)] + [make_simplex(n) for n in (2, 3, 5)]
    bodies += [make_product([make_lp_ball(2, 1), make_simplex(2)]), dilate(make_lp_ball(3, 3), 2.0)]

    worst_h = worst_s = worst_fd = worst_cone = 0.0
    for body in bodies:
        x = g.standard_normal((10**4, body.dim))
        y = g.standard_normal((10**4, body.dim))
        t = g.uniform(0.01, 100.0, 10**4)
        gx, gy = body.gauge(x), body.gauge(y)
        worst_h = max(worst_h, float(np.max(np.abs(body.gauge(t[:, None] * x) - t * gx) / (t * gx))))
        worst_s = max(worst_s, float(np.max((body.gauge(x + y) - gx - gy) / (gx + gy))))
        theta = sample_cone_measure(body, 10**4, RngStream(9, len(bodies))).data
        worst_cone = max(worst_cone, float(np.max(np.abs(body.gauge(theta) - 1.0))))
        pts = g.standard_normal((100, body.dim)) * body.bounding_radius
        for f in builtin_dictionary(body.dim, body, cutoff_scale=1.3):
            chk = gradient_check(f, pts, scale=1.0)
            assert chk.checked > 0, f.name
            worst_fd = max(worst_fd, chk.max_rel_error)

    exact = True
    for _ in range(50):
        parts = [g.standard_normal((int(g.integers(1, 40)), 3)) * 10.0 ** g.integers(-8, 8) for _ in range(3)]
        a, b, c = (MomentAccumulator(3).push(p) for p in parts)
        exact &= ((a + b) + c).exact_state() == (a + (b + c)).exact_state() == (c + (b + a)).exact_state()

    record_property("detail", f"homogeneity {worst_h:.1e}, subadditivity excess {max(worst_s, 0.0):.1e}, "
                              f"gradient fd {worst_fd:.1e}, cone measure {worst_cone:.1e}, merge exact {exact}")
    assert worst_h <= 1e-9
    assert worst_s <= 1e-9
    assert worst_fd <= 1e-4
    assert worst_cone <= 1e-9
    assert exact
