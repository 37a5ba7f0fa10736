import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klslab.geometry import (
    body_from_descriptor, check_concave, dilate, gauge_eval, make_cone, make_cylinder, make_generic,
    make_hypercube, make_lp_ball, make_product, make_revolution, make_simplex, parse_body_spec,
    simplex_vertices,
)


def catalog_bodies():
    bodies = []
    for n in (1, 2, 3, 5):
        bodies += [make_lp_ball(n, 1), make_lp_ball(n, 1.5), make_lp_ball(n, 2), make_lp_ball(n, 4),
                   make_hypercube(n), make_simplex(n)]
    bodies.append(make_product([make_lp_ball(2, 1), make_simplex(2)]))
    bodies.append(dilate(make_lp_ball(3, 3), 2.5))
    bodies.append(make_generic(3, lambda x: np.linalg.norm(x, axis=-1) <= 2.0, 2.0, 2.0))
    bodies.append(make_revolution(-1.0, 1.0, "semicircle", make_lp_ball(2, 2)).as_convex_body())
    return bodies


BODIES = catalog_bodies()


def rejection_volume(body, points=10**6, seed=0):
    """Monte Carlo volume oracle: hits in the bounding box [-R, R]^n."""
    g = np.random.default_rng(seed)
    R = body.bounding_radius
    x = g.uniform(-R, R, size=(points, body.dim))
    hits = body.contains(x)
    frac = hits.mean()
    box = (2 * R) ** body.dim
    return frac * box, math.sqrt(frac * (1 - frac) / points) * box


# -- gauge values -----------------------------------------------------------------

def test_gauge_examples():
    assert gauge_eval(make_lp_ball(2, 2), np.array([3.0, 4.0])) == pytest.approx(5.0, rel=1e-15)
    assert gauge_eval(make_hypercube(2), np.array([0.5, -0.25])) == 0.5
    assert float(make_lp_ball(4, 1).gauge(np.zeros(4))) == 0.0


def test_gauge_dimension_mismatch():
    with pytest.raises(ValueError):
        make_lp_ball(3, 2).gauge(np.ones(2))


def test_dilation_divides_gauge():
    body = make_simplex(3)
    x = np.random.default_rng(1).standard_normal((50, 3))
    np.testing.assert_allclose(dilate(body, 2.0).gauge(x), body.gauge(x) / 2.0, rtol=1e-15)


def test_dilate_examples():
    ball = make_lp_ball(2, 2)
    assert dilate(ball, 1.0) is ball
    assert dilate(ball, 2.0).log_volume == pytest.approx(math.log(4 * math.pi), rel=1e-14)
    cube = make_hypercube(3)
    assert dilate(cube, 0.5).bounding_radius == pytest.approx(cube.bounding_radius / 2)
    with pytest.raises(ValueError):
        dilate(ball, 0.0)


@pytest.mark.parametrize("body", BODIES, ids=lambda b: f"{b.label}-{b.dim}")
def test_gauge_homogeneous_and_subadditive(body):
    g = np.random.default_rng(7)
    x = g.standard_normal((10**4, body.dim))
    y = g.standard_normal((10**4, body.dim))
    t = g.uniform(0.01, 100.0, size=10**4)
    gx, gy = body.gauge(x), body.gauge(y)
    np.testing.assert_allclose(body.gauge(t[:, None] * x), t * gx, rtol=1e-9)
    assert np.all(body.gauge(x + y) <= (gx + gy) * (1 + 1e-9))


@pytest.mark.parametrize("body", BODIES, ids=lambda b: f"{b.label}-{b.dim}")
def test_gauge_radius_sandwich(body):
    x = np.random.default_rng(3).standard_normal((2000, body.dim))
    r = np.linalg.norm(x, axis=1)
    g = body.gauge(x)
    assert body.inner_radius <= body.bounding_radius
    assert np.all(r / body.bounding_radius <= g * (1 + 1e-9))
    assert np.all(g <= r / body.inner_radius * (1 + 1e-9))


@pytest.mark.parametrize("body", BODIES, ids=lambda b: f"{b.label}-{b.dim}")
def test_gauge_matches_membership(body):
    x = np.random.default_rng(4).uniform(-1.5, 1.5, (4000, body.dim)) * body.bounding_radius
    g = body.gauge(x)
    clear = np.abs(g - 1.0) > 1e-9
    assert np.array_equal((g <= 1.0)[clear], body.contains(x)[clear])


@settings(max_examples=60, deadline=None)
@given(p=st.floats(1.0, 8.0), n=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_lp_gauge_property(p, n, seed):
    body = make_lp_ball(n, p)
    g = np.random.default_rng(seed)
    x, y = g.standard_normal((2, 64, n))
    t = g.uniform(0.1, 10.0)
    np.testing.assert_allclose(body.gauge(t * x), t * body.gauge(x), rtol=1e-9)
    assert np.all(body.gauge(x + y) <= (body.gauge(x) + body.gauge(y)) * (1 + 1e-9))


# -- volumes ----------------------------------------------------------------------

def test_lp_volume_closed_forms():
    assert make_lp_ball(2, 2).log_volume == pytest.approx(math.log(math.pi), rel=1e-14)
    for p in (1.0, 2.0, 3.5, math.inf):
        assert make_lp_ball(1, p).log_volume == pytest.approx(math.log(2.0), rel=1e-14)
    cube = make_lp_ball(3, math.inf)
    assert cube.label == "hypercube"
    assert cube.log_volume == pytest.approx(math.log(8.0))
    with pytest.raises(ValueError):
        make_lp_ball(3, 0.5)


@pytest.mark.parametrize("body", [make_lp_ball(2, 2), make_lp_ball(3, 1), make_lp_ball(4, 3),
                                  make_lp_ball(6, 2), make_simplex(2), make_simplex(3), make_simplex(5),
                                  make_hypercube(6), make_product([make_lp_ball(2, 1), make_lp_ball(1, 2)])],
                         ids=lambda b: f"{b.label}-{b.dim}")
def test_volume_against_rejection(body):
    est, se = rejection_volume(body)
    assert abs(body.volume - est) <= 3 * se


def test_simplex_geometry():
    v = simplex_vertices(3)
    np.testing.assert_allclose(v.sum(axis=0), 0.0, atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, rtol=1e-14)
    d = np.linalg.norm(v[:, None] - v[None], axis=-1)[np.triu_indices(4, 1)]
    np.testing.assert_allclose(d, d[0], rtol=1e-12)
    tri = make_simplex(2)
    np.testing.assert_allclose(tri.gauge(simplex_vertices(2)), 1.0, rtol=1e-12)
    assert not tri.symmetric
    seg = make_simplex(1)
    assert seg.gauge(np.array([[1.0]]))[0] == pytest.approx(1.0)
    assert seg.gauge(np.array([[-1.0]]))[0] == pytest.approx(1.0)
    # regular tetrahedron with circumradius 1: edge sqrt(8/3)
    edge = math.sqrt(8.0 / 3.0)
    assert make_simplex(3).volume == pytest.approx(edge ** 3 / (6 * math.sqrt(2)), rel=1e-12)


def test_gauge_gradient_matches_finite_differences():
    g = np.random.default_rng(11)
    for body in (make_lp_ball(3, 1), make_lp_ball(3, 2), make_lp_ball(3, 3), make_hypercube(3),
                 make_simplex(3), dilate(make_lp_ball(3, 3), 2.0)):
        x = g.standard_normal((200, 3))
        x = x[body.gauge_singular_distance(x) > 1e-3]
        h = 1e-6
        fd = np.stack([(body.gauge(x + h * e) - body.gauge(x - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
        np.testing.assert_allclose(body.gauge_gradient(x), fd, rtol=1e-5, atol=1e-7)


# -- bodies of revolution -----------------------------------------------------------

def test_revolution_volumes():
    disc = make_lp_ball(2, 2)
    assert make_cylinder(2).volume == pytest.approx(2 * math.pi, rel=1e-10)
    assert make_cone(2).volume == pytest.approx(math.pi / 3, rel=1e-10)
    ball = make_revolution(-1.0, 1.0, "semicircle", disc)
    assert ball.volume == pytest.approx(4 * math.pi / 3, rel=1e-10)


def test_revolution_gauge_is_euclidean_for_semicircle():
    K = make_revolution(-1.0, 1.0, "semicircle", make_lp_ball(3, 2))
    x = np.random.default_rng(2).standard_normal((500, 4))
    np.testing.assert_allclose(K.gauge(x), np.linalg.norm(x, axis=1), rtol=1e-9)


def test_revolution_membership_and_validation():
    K = make_cone(2)
    pts = np.array([[0.5, 0.4, 0.0], [0.5, 0.6, 0.0], [-0.1, 0.0, 0.0], [0.0, 0.99, 0.0]])
    assert K.contains(pts).tolist() == [True, False, False, True]
    with pytest.raises(ValueError):
        K.as_convex_body()  # origin lies on the boundary of the cone
    with pytest.raises(ValueError):
        make_revolution(-1.0, 1.0, lambda t: t * t, make_lp_ball(2, 2))
    with pytest.raises(ValueError):
        make_revolution(-1.0, 1.0, lambda t: t - 2.0, make_lp_ball(2, 2))
    with pytest.raises(ValueError):
        make_revolution(1.0, -1.0, "constant", make_lp_ball(2, 2))


def test_check_concave():
    assert check_concave(np.sqrt, 0.0, 4.0) is None
    assert check_concave(np.exp, 0.0, 1.0) is not None


# -- descriptors ------------------------------------------------------------------

@pytest.mark.parametrize("body", [make_lp_ball(4, 1.5), make_hypercube(3), make_simplex(2),
                                  make_product([make_lp_ball(2, 1), make_hypercube(1)]),
                                  dilate(make_lp_ball(3, 2), 3.0)], ids=lambda b: b.label)
def test_descriptor_roundtrip(body):
    again = body_from_descriptor(body.descriptor())
    x = np.random.default_rng(0).standard_normal((100, body.dim))
    np.testing.assert_array_equal(again.gauge(x), body.gauge(x))
    assert again.log_volume == body.log_volume


def test_revolution_descriptor_roundtrip():
    K = make_cone(3)
    again = body_from_descriptor(K.descriptor())
    assert again.volume == pytest.approx(K.volume, rel=1e-12)


def test_parse_body_spec():
    assert parse_body_spec("lp:2", 3).label == "l2"
    b = parse_body_spec("lp:2:2", 4)
    assert b.dim == 4 and b.params["scale"] == 2.0
    assert parse_body_spec("lp:inf", 2).label == "hypercube"
    assert parse_body_spec("cone", 3).dim == 3
    with pytest.raises(ValueError):
        parse_body_spec("torus", 3)
    with pytest.raises(ValueError):
        parse_body_spec("cylinder", 1)
