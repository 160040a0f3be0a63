import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perfpred._validation import DomainError
from perfpred.domain import (Ball, Hypercube, Polygon2D, contains, diameter, domain_from_json,
                             project, support_gap)

from conftest import SAMPLE_DOMAINS, regular_polygon, sample_in

coords = st.floats(-10, 10, allow_nan=False)


# worked examples ------------------------------------------------------------

def test_projection_examples():
    assert np.array_equal(project(Hypercube.unit(2), [1.5, -0.2]), [1.0, 0.0])
    assert np.allclose(project(Ball([0, 0], 1), [3, 4]), [0.6, 0.8])
    tri = Polygon2D([[0, 0], [1, 0], [0, 1]])
    assert np.allclose(project(tri, [1, 1]), [0.5, 0.5])


def test_support_gap_examples():
    assert support_gap(Hypercube.unit(2), [1, 0], [1, -1]) == pytest.approx(2.0)
    v = np.array([0.3, -1.2])
    assert support_gap(Ball([0, 0], 1), [0, 0], v) == pytest.approx(np.linalg.norm(v))
    for dom in SAMPLE_DOMAINS:
        assert support_gap(dom, dom.center, np.zeros(dom.dim)) == 0.0


def test_contains_and_diameter():
    assert contains(Ball([0, 0], 1), [0.5, 0.5], 0.0)
    assert not contains(Ball([0, 0], 1), [0.8, 0.8], 0.0)
    assert diameter(Hypercube.unit(3)) == pytest.approx(math.sqrt(3))
    assert diameter(Ball([0, 0], 2)) == 4.0
    assert diameter(Polygon2D([[0, 0], [2, 0], [0, 1]])) == pytest.approx(math.sqrt(5))


def test_point_inside_is_unchanged():
    p = np.array([0.25, 0.5])
    for dom in (Hypercube.unit(2), Ball([0, 0], 1), Polygon2D([[0, 0], [1, 0], [0, 1]])):
        assert np.array_equal(dom.project(p), p)


# invariants --------------------------------------------------------------------

@pytest.mark.parametrize("dom", SAMPLE_DOMAINS, ids=lambda d: f"{d.kind}{d.dim}")
@given(data=st.data())
def test_projection_idempotent_and_nonexpansive(dom, data):
    p = np.array(data.draw(st.lists(coords, min_size=dom.dim, max_size=dom.dim)))
    q = np.array(data.draw(st.lists(coords, min_size=dom.dim, max_size=dom.dim)))
    pp = dom.project(p)
    assert dom.contains(pp)
    assert np.array_equal(dom.project(pp), pp)
    assert np.linalg.norm(pp - dom.project(q)) <= np.linalg.norm(p - q) + 1e-12


@pytest.mark.parametrize("dom", SAMPLE_DOMAINS, ids=lambda d: f"{d.kind}{d.dim}")
def test_projection_is_nearest_point(dom, rng):
    # nearest among many domain samples, and the variational characterisation
    X = sample_in(dom, rng, 400)
    for p in rng.uniform(-5, 5, (20, dom.dim)):
        pp = dom.project(p)
        d = np.linalg.norm(p - pp)
        assert np.all(np.linalg.norm(X - p, axis=1) >= d - 1e-12)
        assert np.all((X - pp) @ (p - pp) <= 1e-9)


@pytest.mark.parametrize("dom", SAMPLE_DOMAINS, ids=lambda d: f"{d.kind}{d.dim}")
def test_support_gap_dominates_samples(dom, rng):
    X = sample_in(dom, rng, 300)
    for _ in range(10):
        x = X[rng.integers(len(X))]
        v = rng.normal(size=dom.dim)
        gap = dom.support_gap(x, v)
        assert np.all((x - X) @ v <= gap + 1e-9)
        xs = dom.support_point(v)
        assert dom.contains(xs)
        assert np.dot(x - xs, v) == pytest.approx(gap, abs=1e-12)


@pytest.mark.parametrize("dom", SAMPLE_DOMAINS, ids=lambda d: f"{d.kind}{d.dim}")
def test_well_bounded_radii(dom):
    R1, R2 = dom.well_bounded_radii()
    assert 0 < R1 <= R2
    c = np.asarray(dom.center)
    if dom.dim == 2:
        ang = 2 * np.pi * np.arange(64) / 64
        U = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        U = np.random.default_rng(0).normal(size=(64, dom.dim))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
    for u in U:
        inner = c + R1 * u * (1 - 1e-12)
        assert np.allclose(dom.project(inner), inner)
        # the boundary point along u lies within R2 of the center
        far = dom.project(c + 10 * R2 * u)
        assert np.linalg.norm(far - c) <= R2 + 1e-9


@pytest.mark.parametrize("dom", SAMPLE_DOMAINS, ids=lambda d: f"{d.kind}{d.dim}")
def test_diameter_matches_samples(dom, rng):
    X = np.vstack([sample_in(dom, rng, 200), dom.test_points()])
    X = X[[dom.contains(x, 1e-9) for x in X]]
    gaps = np.linalg.norm(X[:, None] - X[None], axis=-1).max()
    assert gaps <= dom.diameter() + 1e-9


@pytest.mark.parametrize("dom", SAMPLE_DOMAINS, ids=lambda d: f"{d.kind}{d.dim}")
def test_json_round_trip_and_recentering(dom):
    back = domain_from_json(dom.to_json())
    assert back.to_json() == dom.to_json()
    moved, offset = dom.recentered()
    assert np.allclose(moved.center, 0)
    p = np.ones(dom.dim) * 0.3
    assert np.allclose(moved.project(p - offset) + offset, dom.project(p))


def test_invalid_domains():
    with pytest.raises(ValueError):
        Hypercube([0, 1], [1, 1])
    with pytest.raises(ValueError):
        Ball([0, 0], 0)
    with pytest.raises(ValueError):
        Polygon2D([[0, 0], [0, 1], [1, 0]])  # clockwise
    with pytest.raises(ValueError):
        Polygon2D([[0, 0], [1, 0], [2, 0], [0, 1]])  # collinear
    with pytest.raises(ValueError):
        domain_from_json({"type": "simplex"})


def test_errors():
    with pytest.raises(ValueError):
        project(Hypercube.unit(2), [1, 2, 3])
    with pytest.raises(DomainError):
        support_gap(Hypercube.unit(2), [2, 0], [1, 0])


def test_regular_polygon_inscribed_radius():
    poly = regular_polygon(6)
    assert poly.inner_radius == pytest.approx(math.cos(math.pi / 6))
    assert poly.outer_radius == pytest.approx(1.0)
