import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from klslab.batch import Provenance, SampleBatch
from klslab.geometry import make_cylinder, make_hypercube, make_lp_ball, make_simplex
from klslab.moments import (
    MomentAccumulator, MomentSummary, accumulate, block_isotropy_check, compare_mixed_moments, exact_sum,
    isotropy_check, ks_two_sample, multi_indices, radial_variance_ratio, scale_identity_gap, summarize, whiten,
)
from klslab.rng import RngStream
from klslab.samplers import sample_revolution_su, sample_uniform_body


def as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return SampleBatch(x, Provenance("test", RngStream(0)))


def test_exact_sum_is_exact():
    assert exact_sum([1e100, 1.0, -1e100]) == 1
    assert exact_sum([0.1] * 10) == 10 * Fraction(0.1)
    assert exact_sum([]) == 0
    with pytest.raises(ValueError):
        exact_sum([np.inf])


def test_cube_covariance():
    s = summarize(sample_uniform_body(make_hypercube(3), 10**6, RngStream(1)))
    np.testing.assert_allclose(s.covariance, np.eye(3) / 3, atol=4 * 0.0006)
    assert np.all(np.abs(s.covariance - np.eye(3) / 3) <= 4 * s.std_errors["covariance"] + 1e-12)


@pytest.mark.parametrize("n", [2, 5])
def test_ball_second_moment(n):
    s = summarize(sample_uniform_body(make_lp_ball(n, 2), 10**6, RngStream(2)))
    assert abs(s.second_moment - n / (n + 2)) <= 4 * s.std_errors["second_moment"]


def test_constant_batch():
    s = summarize(np.tile([1.5, -2.0], (100, 1)))
    np.testing.assert_array_equal(s.mean, [1.5, -2.0])
    assert np.all(s.covariance == 0.0)


def test_summarize_needs_two_draws():
    with pytest.raises(ValueError):
        summarize(np.ones((1, 2)))


def test_trace_identity():
    x = np.random.default_rng(3).standard_normal((5000, 4)) * [1, 2, 3, 4] + 7.0
    s = summarize(x)
    np.testing.assert_allclose(s.covariance, s.covariance.T, rtol=0, atol=0)
    assert np.all(np.diag(s.covariance) >= 0)
    lhs = np.trace(s.covariance) + float(s.mean @ s.mean)
    assert lhs == pytest.approx(s.second_moment, rel=1e-9)


@pytest.mark.parametrize("body", [make_lp_ball(3, 1), make_lp_ball(3, 2), make_lp_ball(3, 4), make_hypercube(4),
                                  make_simplex(3)], ids=lambda b: b.label)
def test_isotropic_bodies_pass(body):
    s = summarize(sample_uniform_body(body, 200_000, RngStream(4)))
    diag = isotropy_check(s)
    assert diag.isotropic
    assert diag.diag_spread < 1.05 and diag.offdiag_ratio < 0.02


def test_anisotropic_ellipse_fails():
    x = sample_uniform_body(make_lp_ball(2, 2), 200_000, RngStream(5)).data * [1.0, 2.0]
    diag = isotropy_check(summarize(x))
    assert not diag.isotropic
    assert diag.diag_spread == pytest.approx(4.0, rel=0.03)


def test_whiten_examples():
    g = np.random.default_rng(6)
    iso = as_batch(g.standard_normal((100_000, 3)))
    _, m = whiten(iso)
    np.testing.assert_allclose(m.matrix, np.eye(3), atol=0.02)
    aniso = as_batch(g.standard_normal((100_000, 2)) * [1.0, 2.0])
    out, m = whiten(aniso)
    c = m.matrix[0, 0]
    np.testing.assert_allclose(m.matrix, np.diag([c, c / 2]), atol=0.02 * c)
    cov = np.cov(out.data, rowvar=False, bias=True)
    np.testing.assert_allclose(cov, np.trace(cov) / 2 * np.eye(2), atol=1e-12)
    assert out.provenance.generator.endswith("+whitened")


def test_whiten_singular():
    x = np.random.default_rng(7).standard_normal((1000, 1))
    with pytest.raises(ValueError):
        whiten(as_batch(np.hstack([x, 2 * x])))


def test_whiten_idempotent():
    x = sample_uniform_body(make_simplex(3), 50_000, RngStream(8))
    once, _ = whiten(as_batch(x.data * [1, 3, 0.5]))
    twice, m = whiten(once)
    np.testing.assert_allclose(m.matrix, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(twice.data, once.data, atol=1e-10)


# -- exact merge ----------------------------------------------------------------------------------

rows = hnp.arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)),
                  elements=st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False))


@settings(max_examples=60, deadline=None)
@given(a=rows, b=rows, c=rows)
def test_merge_associative_and_commutative(a, b, c):
    A, B, C = (MomentAccumulator(3).push(v) for v in (a, b, c))
    left = (A + B) + C
    right = A + (B + C)
    assert left.exact_state() == right.exact_state()
    assert (B + A).exact_state() == (A + B).exact_state()
    whole = MomentAccumulator(3).push(np.vstack([a, b, c]))
    assert whole.exact_state() == left.exact_state()
    assert np.array_equal(whole.summary().mean, left.summary().mean)


def test_split_independent_summary():
    x = np.random.default_rng(9).standard_normal((10_000, 2))
    a = accumulate(x)
    b = MomentAccumulator(2).push(x[::-1][:3000]).merge(MomentAccumulator(2).push(x[::-1][3000:]))
    assert a.summary().covariance.tobytes() == b.summary().covariance.tobytes()


def test_summary_json_hex_roundtrip():
    s = summarize(np.random.default_rng(10).standard_normal((1000, 3)))
    again = MomentSummary.from_json(json.loads(json.dumps(s.to_json())))
    assert again.mean.tobytes() == s.mean.tobytes()
    assert again.covariance.tobytes() == s.covariance.tobytes()
    assert again.second_moment == s.second_moment and again.count == s.count
    assert again.std_errors["covariance"].tobytes() == s.std_errors["covariance"].tobytes()


# -- identities -------------------------------------------------------------------------------------

def test_radial_variance_ratio_gamma():
    # R ~ Gamma(n): n Var R / E R^2 = n / (n + 1)
    n = 5
    r = np.random.default_rng(11).gamma(n, size=10**6)
    ratio, se = radial_variance_ratio(r, n)
    assert abs(ratio - n / (n + 1)) <= 4 * se


def test_scale_identity_gap_chi():
    g = np.random.default_rng(12)
    n = 3
    r = np.sqrt(g.chisquare(n, 10**6))
    s = np.sqrt(g.chisquare(n + 2, 10**6))
    gap, se = scale_identity_gap(r, s, n)
    assert abs(gap) <= 4 * se


def test_block_isotropy_gaussian_product():
    g = np.random.default_rng(13)
    m = 200_000
    x0 = g.standard_normal((m, 1))
    z = g.standard_normal((m, 2))
    # Gaussian block with |U| = 1 on the sphere: S ~ chi(2), E S^2 / 2 = 1
    s = np.linalg.norm(z, axis=1)
    u = z / s[:, None]
    rep = block_isotropy_check(x0, [s], [u], [1, 2])
    assert rep.labels == ["X0", "S1", "X"]
    assert rep.consistent and all(abs(r - 1.0) < 0.02 for r in rep.ratios)


def test_block_isotropy_unscaled_flagged():
    g = np.random.default_rng(14)
    m = 100_000
    x0 = 2.0 * g.standard_normal((m, 1))
    z = g.standard_normal((m, 2))
    s = np.linalg.norm(z, axis=1)
    u = z / s[:, None]
    rep = block_isotropy_check(x0, [s], [u], [1, 2])
    assert not rep.consistent and rep.max_discrepancy_z > 4


def test_block_isotropy_cylinder_whitened():
    K = make_cylinder(2)
    t, s, u = sample_revolution_su(K, 200_000, RngStream(15))
    # isotropic position: t and the disc coordinates must share E x_j^2
    x = np.column_stack([t, s[:, None] * u])
    _, m = whiten(as_batch(x))
    a, b = m.matrix[0, 0], m.matrix[1, 1]
    c_u = 1.0 / math.sqrt(np.mean(np.sum(u * u, axis=1)))
    rep = block_isotropy_check(a * t[:, None], [b * s / c_u], [u * c_u], [1, 2])
    assert rep.consistent
    assert abs(rep.u_second_moments[0] - 1.0) < 1e-12


# -- comparisons -------------------------------------------------------------------------------------

def test_multi_indices_count():
    # number of monomials of degree 1..4 in 3 variables = C(7,3) - 1
    assert len(list(multi_indices(3, 4))) == math.comb(7, 3) - 1


def test_compare_mixed_moments_detects_shift():
    g = np.random.default_rng(16)
    a = g.standard_normal((50_000, 2))
    assert compare_mixed_moments(a, g.standard_normal((50_000, 2)), 4).max_z < 4.5
    assert not compare_mixed_moments(a, g.standard_normal((50_000, 2)) * 1.1, 4).exact_ok


def test_ks_two_sample():
    g = np.random.default_rng(17)
    assert ks_two_sample(g.random(20_000), g.random(20_000))[2]
    assert not ks_two_sample(g.random(20_000), g.random(20_000) ** 1.2)[2]
