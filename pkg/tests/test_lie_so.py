import numpy as np
import pytest
from scipy.linalg import expm

from kleinian.lie_so import (
    BasisError,
    ChartInversionError,
    LieBasis,
    ZCoordinates,
    basis_elements,
    bracket,
    build_basis,
    chart,
    chart_inverse,
    exp_element,
    killing_form,
)
from kleinian.quad_space import standard_form

TOL = 1e-12


def E(N, i, j):
    m = np.zeros((N, N))
    m[i, j] = 1
    return m


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_dimension_and_counts(n):
    b = build_basis(n)
    assert b.d == (n + 1) * (n + 2) // 2
    assert b.k == n * (n + 1) // 2
    assert b.ell == n - 1
    assert np.linalg.matrix_rank(b.elements.reshape(b.d, -1)) == b.d


@pytest.mark.parametrize("n", [2, 3, 4])
def test_elements_preserve_form(n):
    Q = np.asarray(standard_form(n).gram, dtype=float)
    for X in build_basis(n).elements:
        assert np.abs(X @ Q + Q @ X.T).max() < TOL


def test_n4_ordering():
    elements, kinds = basis_elements(4)
    N = 6
    assert len(elements) == 15
    assert kinds == ("h_m",) * 3 + ("h_lower",) * 3 + ("h_upper",) * 3 + (
        "h_diag", "ubar", "u") + ("m1",) * 3
    assert np.array_equal(elements[0], E(N, 2, 3) - E(N, 3, 2))
    assert np.array_equal(elements[2], E(N, 1, 2) - E(N, 2, 1))
    assert np.array_equal(elements[3], E(N, 3, 0) + 0.5 * E(N, 5, 3))
    assert np.array_equal(elements[6], E(N, 0, 3) + 2 * E(N, 3, 5))
    assert np.array_equal(elements[9], E(N, 0, 0) - E(N, 5, 5))
    assert np.array_equal(elements[10], E(N, 4, 0) + 0.5 * E(N, 5, 4))
    assert np.array_equal(elements[11], E(N, 0, 4) + 2 * E(N, 4, 5))
    assert np.array_equal(elements[12], E(N, 3, 4) - E(N, 4, 3))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_killing_form_is_n_times_trace(n):
    b = build_basis(n)
    trace = np.einsum("iab,jba->ij", b.elements, b.elements)
    assert np.allclose(b.killing_gram, n * trace, atol=1e-9)
    assert killing_form(b, 0, 0) == pytest.approx(n * trace[0, 0])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_dual_basis(n):
    b = build_basis(n)
    assert np.allclose(b.killing_gram @ b.dual_coeffs, np.eye(b.d), atol=1e-10)


def test_bracket_closure_and_expansion():
    b = build_basis(3)
    for X in b.elements:
        for Y in b.elements:
            b.expand(bracket(X, Y))
    with pytest.raises(BasisError):
        b.expand(np.eye(5))


def test_ubar_u_bracket_has_diagonal_component():
    b = build_basis(3)
    c = b.expand(bracket(b.elements[b.y_index], b.elements[b.w_index]))
    assert abs(c[b.index("h_diag")]) > 0.5


@pytest.mark.parametrize("n", [2, 3, 4])
def test_closed_form_exponentials(n):
    b = build_basis(n)
    for X in b.elements:
        for t in (-1.3, 0.4, 2.0):
            assert np.allclose(exp_element(X, t), expm(t * X), atol=1e-12, rtol=1e-12)


def test_exp_falls_back_to_expm():
    b = build_basis(3)
    X = b.elements[0] + b.elements[5] + 0.3 * b.elements[b.y_index]
    assert np.allclose(exp_element(X, 0.7), expm(0.7 * X))


def test_chart_at_zero_and_form():
    b = build_basis(4)
    assert np.allclose(chart(b, np.zeros(b.d)), np.eye(6))
    Q = np.asarray(standard_form(4).gram, dtype=float)
    g = chart(b, np.random.default_rng(1).uniform(-0.5, 0.5, b.d))
    assert np.abs(g @ Q @ g.T - Q).max() < 1e-12
    assert np.linalg.det(g) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [2, 3])
def test_chart_inverse_round_trip(n):
    b = build_basis(n)
    rng = np.random.default_rng(n)
    for _ in range(5):
        z = rng.uniform(-0.3, 0.3, b.d)
        back = chart_inverse(b, chart(b, z))
        assert np.allclose(back.as_vector(), z, atol=1e-8)


def test_chart_inverse_failure():
    b = build_basis(2)
    with pytest.raises(ChartInversionError):
        chart_inverse(b, -np.eye(4), max_iter=5)


def test_zcoordinates_layout():
    b = build_basis(3)
    z = ZCoordinates.from_vector(b, np.arange(b.d, dtype=float))
    assert z.y == b.k and z.w == b.k + 1 and len(z.phi) == 2
    with pytest.raises(ValueError):
        ZCoordinates.from_vector(b, np.zeros(3))


def test_trace_form_basis():
    b = build_basis(3, form="trace")
    k = build_basis(3)
    assert np.allclose(b.dual_coeffs, 3 * k.dual_coeffs)
    with pytest.raises(ValueError):
        LieBasis.from_elements(3, k.elements, form="other")
