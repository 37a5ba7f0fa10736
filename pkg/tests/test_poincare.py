import json
import math

import numpy as np
import pytest

from klslab.geometry import make_hypercube, make_lp_ball, make_simplex
from klslab.poincare import (
    TestFunction, ZeroGradientError, builtin_dictionary, coordinate, coordinate_sine, gradient_check,
    linear_form, multiblock_variance_ratio, poincare_lower_bound, product, radial, radial_cutoff_scale,
    rayleigh_quotient, rescaled, supnorm_quotient,
)
from klslab.rng import RngStream
from klslab.samplers import sample_uniform_body


def constant():
    return TestFunction("c", lambda x: np.full(x.shape[0], 3.0), lambda x: np.zeros_like(x), 1.0)


def test_gaussian_linear_quotient():
    x = np.random.default_rng(1).standard_normal((10**6, 2))
    q = rayleigh_quotient(coordinate(0), x)
    assert abs(q.value - 1.0) <= 4 * q.se and q.se < 0.01


def test_interval_sine_quotient():
    x = np.random.default_rng(2).uniform(-1, 1, (10**6, 1))
    q = rayleigh_quotient(coordinate_sine(0), x)
    assert abs(q.value - 4 / math.pi ** 2) <= 4 * q.se
    assert rayleigh_quotient(coordinate(0), x).value == pytest.approx(1 / 3, rel=0.01)


def test_constant_function_rejected():
    x = np.random.default_rng(3).standard_normal((2000, 2))
    with pytest.raises(ZeroGradientError):
        rayleigh_quotient(constant(), x)
    with pytest.raises(ValueError):
        rayleigh_quotient(coordinate(0), x[:999])


def test_dictionary_size_and_gradients():
    d = builtin_dictionary(2, make_lp_ball(2, 2))
    assert len(d) == 17
    names = [f.name for f in d]
    assert len(set(names)) == 17 and {"x1", "x2", "x1*x2"} <= set(names)
    pts = np.random.default_rng(4).standard_normal((100, 2))
    for f in d:
        assert gradient_check(f, pts).passed, f.name


def test_product_gradient():
    f = product(0, 1)
    x = np.array([[2.0, 3.0], [-1.0, 0.5]])
    np.testing.assert_array_equal(f.gradient(x), [[3.0, 2.0], [0.5, -1.0]])


@pytest.mark.parametrize("body", [make_lp_ball(3, 1), make_hypercube(3), make_simplex(3), make_lp_ball(3, 3)],
                         ids=lambda b: b.label)
def test_radial_gradients_off_singular_set(body):
    pts = np.random.default_rng(5).standard_normal((100, 3))
    for f in builtin_dictionary(3, body, cutoff_scale=1.7):
        chk = gradient_check(f, pts)
        assert chk.passed, (f.name, chk)
        assert not f.finite_difference


def test_l1_singular_points_skipped():
    f = radial("g=s", lambda s: s, np.ones_like, 1.0, make_lp_ball(2, 1))
    pts = np.array([[0.0, 1.0], [0.3, -0.7], [1e-12, 2.0]])
    chk = gradient_check(f, pts)
    assert chk.skipped == 2 and chk.checked == 1 and chk.passed


def test_gradient_check_catches_wrong_gradient():
    bad = TestFunction("bad", lambda x: x[:, 0] ** 2, lambda x: np.column_stack([x[:, 0], 0 * x[:, 1]]))
    assert not gradient_check(bad, np.random.default_rng(6).standard_normal((50, 2))).passed


def test_gaussian_lower_bound_linear_argmax():
    x = np.random.default_rng(7).standard_normal((200_000, 5))
    est = poincare_lower_bound(builtin_dictionary(5), x)
    assert 0.95 <= est.lower_bound <= 1.05
    assert est.argmax_kind == "linear"
    assert est.kls_ratio == pytest.approx(est.lower_bound * 5 / np.mean(np.sum(x * x, axis=1)))
    assert est.comparison_bounds["sum_var"] == pytest.approx(5.0, rel=0.02)
    # Var |X|^2 = 2n for a standard Gaussian
    assert est.comparison_bounds["bobkov_sqrt"] == pytest.approx(math.sqrt(10), rel=0.02)
    json.dumps(est.to_json())


def test_interval_lower_bound_beats_linear():
    x = np.random.default_rng(8).uniform(-1, 1, (10**6, 1))
    d = builtin_dictionary(1) + [coordinate_sine(0)]
    est = poincare_lower_bound(d, x)
    assert est.lower_bound == pytest.approx(4 / math.pi ** 2, rel=0.02)
    assert est.lower_bound > est.quotients["x1"].value


def test_lower_bound_requires_coordinates():
    x = np.random.default_rng(9).standard_normal((2000, 2))
    with pytest.raises(ValueError):
        poincare_lower_bound([coordinate(0)], x)
    with pytest.raises(ValueError):
        poincare_lower_bound([], x)


def test_monotone_in_dictionary():
    x = sample_uniform_body(make_simplex(3), 50_000, RngStream(10)).data
    d = builtin_dictionary(3, make_simplex(3))
    bounds = [poincare_lower_bound(d[:k], x).lower_bound for k in range(3, len(d) + 1)]
    assert all(b2 >= b1 for b1, b2 in zip(bounds, bounds[1:]))


def test_scaling_by_lambda_squared():
    lam = 2.5
    x = sample_uniform_body(make_lp_ball(2, 1), 20_000, RngStream(11)).data
    for f in builtin_dictionary(2, make_lp_ball(2, 1)):
        q = rayleigh_quotient(f, x).value
        q_scaled = rayleigh_quotient(rescaled(f, lam), lam * x).value
        assert q_scaled == pytest.approx(lam ** 2 * q, rel=1e-12)


def test_product_tensorization():
    g = np.random.default_rng(12)
    a = g.uniform(-1, 1, (200_000, 1))
    b = g.standard_normal((200_000, 1))
    xy = np.hstack([a, b])
    da = [coordinate(0), coordinate_sine(0)]
    db = [coordinate(0)]
    lift_b = [TestFunction("y1", lambda x: x[:, 1], lambda x: np.column_stack([0 * x[:, 0], 1 + 0 * x[:, 1]]),
                           1.0, "linear")]
    lb_a = poincare_lower_bound(da, a).lower_bound
    lb_b = poincare_lower_bound(db, b).lower_bound
    joint = poincare_lower_bound([coordinate(0), coordinate_sine(0), coordinate(1)] + lift_b, xy)
    assert joint.lower_bound == max(lb_a, lb_b)


def test_supnorm_examples():
    n = 4
    s = np.random.default_rng(13).gamma(n + 1, size=(10**6, 1))
    q = supnorm_quotient(coordinate(0), s)
    assert q == pytest.approx(n + 1, rel=0.01)
    assert q * n / np.mean(s ** 2) == pytest.approx(n / (n + 2), rel=0.01)
    cube = sample_uniform_body(make_hypercube(3), 10**6, RngStream(14)).data
    theta = np.array([1.0, 2.0, -2.0]) / 3.0
    assert supnorm_quotient(linear_form(theta, "t"), cube) == pytest.approx(1 / 3, rel=0.01)
    assert supnorm_quotient(constant(), cube) == 0.0
    with pytest.raises(ValueError):
        supnorm_quotient(product(0, 1), cube)


def test_multiblock_variance_ratio_examples():
    g = np.random.default_rng(15)
    m = 10**6
    t = g.standard_normal(m)
    # one exponential block in dimension 2: S ~ Gamma(3), E|X|^2 = 1 + E S^2 E|U|^2
    s = g.gamma(3, size=m)
    xs = np.column_stack([t, s])
    second = 1.0 + 12.0 * 0.5
    N = 3
    r_t = multiblock_variance_ratio(coordinate(0), xs, second, [1, 2])
    assert r_t == pytest.approx(1.0 * N / (2 * second), rel=0.01)
    r_s = multiblock_variance_ratio(coordinate(1), xs, second, [1, 2])
    assert r_s == pytest.approx(3.0 * N / (2 * second), rel=0.01)
    assert multiblock_variance_ratio(constant(), xs, second, [1, 2]) == 0.0


def test_radial_cutoff_scale():
    x = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 0.0]])
    assert radial_cutoff_scale(None, x) == 2.0
    assert radial_cutoff_scale(make_lp_ball(2, 1), x, 5.0) == 5.0
