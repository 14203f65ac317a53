from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kleinian.quad_space import (
    InversiveVector,
    NotOnHyperboloidError,
    NotOrthogonalError,
    OrientedSphere,
    apply_group,
    bend,
    bend_center,
    check_group_element,
    cobend,
    q_norm,
    sphere_to_vector,
    standard_form,
    vector_to_sphere,
)

TOL = 1e-9


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_signature_and_normalization(n):
    space = standard_form(n)
    assert space.signature() == (n + 1, 1)
    assert space.dual_product(space.b_star, space.bhat_star) == -2
    assert space.normalization == 1


def test_exact_form_keeps_fractions():
    space = standard_form(3, exact=True)
    assert all(isinstance(x, Fraction) for x in space.gram.ravel())
    v = sphere_to_vector(space, OrientedSphere.ball([Fraction(1, 3), 0, 0], Fraction(1, 2)))
    assert q_norm(space, v) == 1


def test_unit_sphere_coordinates():
    space = standard_form(2)
    v = sphere_to_vector(space, OrientedSphere.ball([0.0, 0.0], 1.0))
    assert np.allclose(v, [1, 0, 0, -1])
    assert bend(space, v) == 1 and cobend(space, v) == -1


def test_orientation_flip_negates_vector():
    space = standard_form(2)
    a = sphere_to_vector(space, OrientedSphere.ball([0.3, -0.2], 0.5))
    b = sphere_to_vector(space, OrientedSphere.ball([0.3, -0.2], -0.5))
    assert np.allclose(a, -b)


def test_plane_coordinates():
    space = standard_form(2)
    v = sphere_to_vector(space, OrientedSphere.plane([0.0, 1.0], 0.75))
    assert np.allclose(v, [0, 0, 1, 1.5])
    s = vector_to_sphere(space, v)
    assert s.is_plane and s.offset == pytest.approx(0.75)
    with pytest.raises(ValueError):
        OrientedSphere.plane([1.0, 1.0], 0.0)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_round_trip_random_spheres(n):
    space = standard_form(n)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        c = rng.uniform(-5, 5, n)
        r = rng.uniform(0.05, 3) * rng.choice([-1, 1])
        v = sphere_to_vector(space, OrientedSphere.ball(c, r))
        assert abs(q_norm(space, v) - 1) < TOL
        s = vector_to_sphere(space, v)
        assert np.allclose(s.center, c, atol=TOL) and abs(s.radius - r) < TOL
        assert np.allclose(bend_center(space, v), c / r)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.floats(0.01, 10), st.booleans())
def test_round_trip_property(center, radius, flip):
    space = standard_form(3)
    r = -radius if flip else radius
    s = vector_to_sphere(space, sphere_to_vector(space, OrientedSphere.ball(center, r)))
    assert np.allclose(s.center, center, atol=1e-8, rtol=1e-9)
    assert s.radius == pytest.approx(r, rel=1e-9)


def test_rejects_vectors_off_the_hyperboloid():
    space = standard_form(2)
    with pytest.raises(NotOnHyperboloidError):
        vector_to_sphere(space, [1.0, 0.0, 0.0, 0.0])
    with pytest.raises(NotOnHyperboloidError):
        InversiveVector(space, [2.0, 0.0, 0.0, 0.0])


def test_group_check_and_action():
    space = standard_form(2)
    g = np.diag([1.0, 1.0, -1.0, 1.0])
    check_group_element(space, g)
    v = InversiveVector.from_sphere(space, OrientedSphere.ball([0.2, 0.4], 0.1))
    w = v @ g
    assert np.allclose(w.bend_center, [2.0, -4.0])
    bad = np.diag([2.0, 1.0, 1.0, 1.0])
    with pytest.raises(NotOrthogonalError) as info:
        apply_group(space, v.coords, bad)
    assert info.value.residual > 0 and info.value.matrix is not None


def test_exact_group_check():
    space = standard_form(2, exact=True)
    g = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [-8, 0, -1, 0], [16, 0, 4, 1]], dtype=object)
    check_group_element(space, g)
    g[3, 3] = 2
    with pytest.raises(NotOrthogonalError):
        check_group_element(space, g)
