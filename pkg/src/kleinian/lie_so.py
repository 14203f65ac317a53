"""The Lie algebra so(n+1, 1) in an explicit basis adapted to H x Ubar x U x M1.

Index layout (0-based, middle coordinates are 1..n, ``N = n + 2``)::

    h_m      E_ij - E_ji       1 <= i < j <= n-1   j descending, then i descending
    h_lower  E_i0 + E_{N-1,i}/2     i = n-1, ..., 1
    h_upper  E_0i + 2 E_{i,N-1}     i = n-1, ..., 1
    h_diag   E_00 - E_{N-1,N-1}
    ubar     E_n0 + E_{N-1,n}/2
    u        E_0n + 2 E_{n,N-1}
    m1       E_in - E_ni            i = n-1, ..., 1

Every generator satisfies X Q + Q X^T = 0 (row-vector convention).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from kleinian.quad_space import standard_form

KINDS = ("h_m", "h_lower", "h_upper", "h_diag", "ubar", "u", "m1")
H_KINDS = KINDS[:4]
COMPACT_KINDS = ("h_m", "m1")
NILPOTENT_KINDS = ("h_lower", "h_upper", "ubar", "u")

EXPANSION_TOL = 1e-10


class BasisError(RuntimeError):
    pass


class ChartInversionError(RuntimeError):
    """Newton iteration for the chart inverse did not converge."""


def _unit(N, i, j):
    E = np.zeros((N, N))
    E[i, j] = 1.0
    return E


def basis_elements(n):
    """Return (elements, kinds) for the adapted basis of so(n+1, 1)."""
    if n < 2:
        raise ValueError(f"the adapted basis needs n >= 2, got {n}")
    N = n + 2
    E = lambda i, j: _unit(N, i, j)
    elements, kinds = [], []

    def add(X, kind):
        elements.append(X)
        kinds.append(kind)

    for j in range(n - 1, 0, -1):
        for i in range(j - 1, 0, -1):
            add(E(i, j) - E(j, i), "h_m")
    for i in range(n - 1, 0, -1):
        add(E(i, 0) + 0.5 * E(N - 1, i), "h_lower")
    for i in range(n - 1, 0, -1):
        add(E(0, i) + 2.0 * E(i, N - 1), "h_upper")
    add(E(0, 0) - E(N - 1, N - 1), "h_diag")
    add(E(n, 0) + 0.5 * E(N - 1, n), "ubar")
    add(E(0, n) + 2.0 * E(n, N - 1), "u")
    for i in range(n - 1, 0, -1):
        add(E(i, n) - E(n, i), "m1")
    return np.array(elements), tuple(kinds)


def bracket(X, Y):
    return X @ Y - Y @ X


@dataclass(frozen=True, eq=False)
class LieBasis:
    n: int
    elements: np.ndarray
    kinds: tuple
    killing_gram: np.ndarray
    dual_coeffs: np.ndarray
    _solver: np.ndarray

    @property
    def d(self):
        return len(self.elements)

    @property
    def k(self):
        return sum(kind in H_KINDS for kind in self.kinds)

    @property
    def ell(self):
        return self.kinds.count("m1")

    @property
    def space(self):
        return standard_form(self.n)

    def indices(self, kind):
        return [i for i, kd in enumerate(self.kinds) if kd == kind]

    def index(self, kind, j=0):
        return self.indices(kind)[j]

    @property
    def y_index(self):
        return self.index("ubar")

    @property
    def w_index(self):
        return self.index("u")

    def expand(self, M, tol=EXPANSION_TOL):
        """Coefficients of M in the basis; raises if M is not in the span."""
        c = self._solver @ M.ravel()
        resid = np.abs(np.tensordot(c, self.elements, axes=1) - M).max()
        if resid > tol * max(1.0, np.abs(M).max()):
            raise BasisError(f"matrix is not in the span of the basis (residual {resid:.2e})")
        return c

    def ad_matrix(self, X):
        """Matrix A with ad(X) X_j = sum_i A[i, j] X_i."""
        return np.array([self.expand(bracket(X, Y)) for Y in self.elements]).T

    def dual_elements(self):
        return np.tensordot(self.dual_coeffs, self.elements, axes=1)

    @classmethod
    def from_elements(cls, n, elements, kinds=None, form="killing"):
        """Build a basis object from arbitrary spanning elements of so(n+1,1).

        ``form`` selects the invariant form used for the dual basis:
        ``"killing"`` (Tr ad X ad Y) or ``"trace"`` (Tr XY, which is the
        Killing form divided by n).
        """
        elements = np.asarray(elements, dtype=float)
        d = len(elements)
        A = elements.reshape(d, -1).T
        solver = np.linalg.pinv(A)
        if kinds is None:
            kinds = ("other",) * d
        partial = cls(n, elements, tuple(kinds), None, None, solver)
        if form == "killing":
            ads = [partial.ad_matrix(X) for X in elements]
            gram = np.array([[np.trace(a @ b) for b in ads] for a in ads])
        elif form == "trace":
            gram = np.einsum("iab,jba->ij", elements, elements)
        else:
            raise ValueError(f"unknown form {form!r}")
        gram = 0.5 * (gram + gram.T)
        if abs(np.linalg.det(gram)) < 1e-12 * np.abs(gram).max() ** d:
            raise BasisError("invariant form is singular on these elements")
        coeffs = np.linalg.inv(gram)
        return cls(n, elements, tuple(kinds), gram, coeffs, solver)


@lru_cache(maxsize=None)
def build_basis(n, form="killing"):
    elements, kinds = basis_elements(n)
    return LieBasis.from_elements(n, elements, kinds, form=form)


def killing_form(basis, i, j):
    """B(X_i, X_j) = Tr(ad X_i ad X_j)."""
    a = basis.ad_matrix(basis.elements[i])
    b = basis.ad_matrix(basis.elements[j])
    return float(np.trace(a @ b))


def dual_basis(basis):
    """Coefficients C with X_i^* = sum_j C[i, j] X_j, i.e. C = gram^{-1}."""
    return basis.dual_coeffs


def exp_element(X, t):
    """Closed-form exp(tX) for X with X^3 in {0, X, -X}."""
    X2 = X @ X
    X3 = X2 @ X
    eye = np.eye(len(X))
    scale = max(1.0, np.abs(X).max())
    if np.abs(X3).max() <= 1e-14 * scale:
        return eye + t * X + 0.5 * t * t * X2
    if np.abs(X3 + X).max() <= 1e-14 * scale:
        return eye + np.sin(t) * X + (1 - np.cos(t)) * X2
    if np.abs(X3 - X).max() <= 1e-14 * scale:
        return eye + np.sinh(t) * X + (np.cosh(t) - 1) * X2
    return expm(t * X)


def exp_coordinate(basis, kind, index, t):
    return exp_element(basis.elements[basis.index(kind, index)], t)


@dataclass(frozen=True)
class ZCoordinates:
    x: tuple
    y: float
    w: float
    phi: tuple

    @classmethod
    def from_vector(cls, basis, z):
        z = np.asarray(z, dtype=float)
        if len(z) != basis.d:
            raise ValueError(f"expected {basis.d} coordinates, got {len(z)}")
        k = basis.k
        return cls(tuple(z[:k]), float(z[k]), float(z[k + 1]), tuple(z[k + 2:]))

    @classmethod
    def zero(cls, basis):
        return cls.from_vector(basis, np.zeros(basis.d))

    def as_vector(self):
        return np.array([*self.x, self.y, self.w, *self.phi], dtype=float)


def _zvec(z):
    return z.as_vector() if isinstance(z, ZCoordinates) else np.asarray(z, dtype=float)


def chart_factors(basis, z):
    z = _zvec(z)
    return [exp_element(X, t) for X, t in zip(basis.elements, z)]


def ordered_product(mats, N):
    g = np.eye(N)
    for m in mats:
        g = g @ m
    return g


def chart(basis, z):
    """h_1(x_1) ... h_k(x_k) ubar(y) u(w) m_1(phi_1) ... m_l(phi_l)."""
    return ordered_product(chart_factors(basis, z), basis.n + 2)


def chart_inverse(basis, g, tol=1e-12, max_iter=50, step=1e-6):
    """Local inverse of the chart by Gauss-Newton from z = 0.

    The Jacobian is formed by forward differences.
    """
    g = np.asarray(g, dtype=float)
    z = np.zeros(basis.d)
    for _ in range(max_iter):
        r = (chart(basis, z) - g).ravel()
        if np.abs(r).max() < tol:
            return ZCoordinates.from_vector(basis, z)
        base = chart(basis, z).ravel()
        J = np.empty((r.size, basis.d))
        for i in range(basis.d):
            zi = z.copy()
            zi[i] += step
            J[:, i] = (chart(basis, zi).ravel() - base) / step
        dz = np.linalg.lstsq(J, -r, rcond=None)[0]
        z = z + dz
        if not np.all(np.isfinite(z)):
            break
    r = np.abs(chart(basis, z) - g).max()
    if r < 1e-9:
        return ZCoordinates.from_vector(basis, z)
    raise ChartInversionError(f"no convergence after {max_iter} steps (residual {r:.2e})")
