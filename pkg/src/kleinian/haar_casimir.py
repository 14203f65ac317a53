"""Haar density in chart coordinates and the Casimir operator.

Two invariant forms appear here.  The Killing form B(X, Y) = Tr(ad X ad Y)
equals n * Tr(XY) on so(n+1, 1).  The closed-form restricted operator
``casimir_restricted`` is the Casimir built from the trace-form dual basis,
so it is n times the Killing-normalized Casimir.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from kleinian.lie_so import ZCoordinates, build_basis, chart_factors, exp_element

DEGENERATE_TOL = 1e-12

# finite-difference steps for the restricted operator
H_FIRST = 1e-5
H_SECOND = 1e-4
# step for the group-side mixed derivatives
H_GROUP = 1e-4


class DegenerateLocusError(ValueError):
    """Evaluation on the locus 1 + wy = 0 where the measure vanishes."""


def adjoint_in_basis(basis, g, i):
    """Coefficients of g^{-1} X_i g in the basis."""
    g = np.asarray(g, dtype=float)
    ginv = np.linalg.inv(g)
    return basis.expand(ginv @ basis.elements[i] @ g)


def adjoint_matrix(basis, g):
    """Rows i: coefficients of Ad(g^{-1}) X_i."""
    return np.array([adjoint_in_basis(basis, g, i) for i in range(basis.d)])


def _procedure_matrix(basis, factors, rows):
    """Rows ``r`` of the nested adjoint matrix; other rows are the identity.

    Row ``rows[a]`` is Ad(P^{-1}) X_{rows[a]} with P the product of the
    factors belonging to ``rows[a+1:]``.
    """
    N = basis.n + 2
    mu = np.eye(basis.d)
    P = np.eye(N)
    Pinv = np.eye(N)
    for r in reversed(rows):
        mu[r] = basis.expand(Pinv @ basis.elements[r] @ P)
        P = factors[r] @ P
        Pinv = Pinv @ np.linalg.inv(factors[r])
    return mu


@dataclass(frozen=True)
class HaarFactorization:
    rho_total: float
    rho_H: float
    rho_UbarU: float
    rho_M1: float
    z: object
    degenerate: bool = False

    @property
    def product(self):
        return self.rho_H * self.rho_UbarU * self.rho_M1

    @property
    def relative_residual(self):
        if self.rho_total == 0:
            return 0.0 if self.product == 0 else np.inf
        return abs(self.rho_total - self.product) / abs(self.rho_total)


def haar_density(basis, z):
    """Haar density at chart(z) by the nested-adjoint determinant, with factors.

    rho_M1 is obtained from the same procedure run on the compact chart
    (H cap M) x M1 with the H cap M coordinates set to zero; M1 alone is not
    a group and its procedure determinant does not factor out.
    """
    zv = z.as_vector() if isinstance(z, ZCoordinates) else np.asarray(z, dtype=float)
    k = basis.k
    y, w = zv[k], zv[k + 1]
    factors = chart_factors(basis, zv)

    rho_total = abs(np.linalg.det(_procedure_matrix(basis, factors, list(range(basis.d)))))
    rho_H = abs(np.linalg.det(_procedure_matrix(basis, factors, list(range(k)))))

    hm = basis.indices("h_m")
    m1 = basis.indices("m1")
    zm = zv.copy()
    zm[hm] = 0.0
    mfactors = chart_factors(basis, zm)
    rho_M1 = abs(np.linalg.det(_procedure_matrix(basis, mfactors, hm + m1)))

    rho_uu = abs(np.linalg.det(d_matrix_numeric(basis, y, w)))
    degenerate = abs(1 + w * y) <= DEGENERATE_TOL
    if degenerate:
        rho_total = rho_uu = 0.0
    return HaarFactorization(rho_total, rho_H, rho_uu, rho_M1,
                             ZCoordinates.from_vector(basis, zv), degenerate)


def d_matrix_numeric(basis, y, w):
    """The coefficient matrix d computed from adjoints at ubar(y) u(w)."""
    k = basis.k
    ub = exp_element(basis.elements[k], y)
    u = exp_element(basis.elements[k + 1], w)
    g = ub @ u
    gi = np.linalg.inv(g)
    ui = np.linalg.inv(u)
    d = np.eye(basis.d)
    for j in range(k):
        d[j] = basis.expand(gi @ basis.elements[j] @ g)
    d[k] = basis.expand(ui @ basis.elements[k] @ u)
    return d


def d_matrix(n, y, w):
    """Closed form of the d matrix in the adapted basis ordering.

    Blocks (rows/cols): h_m, h_lower, h_upper, (h_diag, ubar, u), m1.
    """
    l = n - 1
    nhm = (n - 1) * (n - 2) // 2
    k = n * (n + 1) // 2
    d = np.eye(k + 2 + l)
    lo, up, dg, m1 = nhm, nhm + l, nhm + 2 * l, k + 2
    for i in range(l):
        d[lo + i, up + i] = w * w / 2
        d[lo + i, m1 + i] = w
        d[up + i, lo + i] = y * y / 2
        d[up + i, up + i] = (2 + w * y) ** 2 / 4
        d[up + i, m1 + i] = y * (2 + w * y) / 2
    d[dg:dg + 3, dg:dg + 3] = [
        [1 + w * y, -y, w * (2 + w * y) / 2],
        [-w, 1, -w * w / 2],
        [0, 0, 1],
    ]
    return d


def v_m(phi):
    """(sin p1, cos p1 sin p2, ..., cos p1 ... cos p_{l-1} sin p_l)."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    cos_prefix = np.concatenate([[1.0], np.cumprod(np.cos(phi))[:-1]])
    return cos_prefix * np.sin(phi)


def cos_product(phi):
    return float(np.prod(np.cos(np.atleast_1d(phi))))


C_DUAL_PREFACTOR = 0.5


def c_dual_inverse_apply(n, y, w, phi):
    """Rows of (c*)^{-1} d as (coeff of d/dy, coeff of d/dw), trace-form dual.

    The operator is ``C_DUAL_PREFACTOR`` times these rows.  Row order follows
    the basis: h_m, h_lower, h_upper, h_diag, ubar, u, m1.
    """
    l = n - 1
    nhm = (n - 1) * (n - 2) // 2
    vm = v_m(phi) if l else np.zeros(0)
    cp = cos_product(phi)
    rows = [np.zeros((nhm, 2))]
    rows.append(np.column_stack([np.zeros(l), -vm]))
    rows.append(np.column_stack([-(1 + w * y) * vm, 0.5 * w * w * vm]))
    rows.append([[y, -w]])
    rows.append([[0.0, cp]])
    rows.append([[(1 + w * y) * cp, -0.5 * w * w * cp]])
    rows.append(np.zeros((l, 2)))
    return np.vstack(rows)


def casimir_by_contraction(grad, n, y, w):
    """Restricted Casimir by contracting d^{-1} against the (c*)^{-1} rows.

    ``grad`` maps (y, w) to (f_y, f_w, f_yy, f_yw, f_ww).  Everything is
    evaluated at phi = 0, where only the h_diag, ubar and u rows survive and
    the phi derivatives enter through d v_M / d phi_m = e_m.
    """
    fy, fw, fyy, fyw, fww = grad(y, w)
    k = n * (n + 1) // 2
    l = n - 1
    nhm = (n - 1) * (n - 2) // 2
    dinv = np.linalg.inv(d_matrix(n, y, w))
    iy, iw = k, k + 1
    dg, ub, u = nhm + 2 * l, nhm + 2 * l + 1, nhm + 2 * l + 2
    # rows A_j at phi = 0 and their y / w derivatives, applied to f
    A_y = {dg: fy + y * fyy - w * fyw,
           ub: fyw,
           u: w * fy + (1 + w * y) * fyy - 0.5 * w * w * fyw}
    A_w = {dg: y * fyw - fw - w * fww,
           ub: fww,
           u: y * fy + (1 + w * y) * fyw - w * fw - 0.5 * w * w * fww}
    total = sum(dinv[j, iy] * A_y[j] + dinv[j, iw] * A_w[j] for j in (dg, ub, u))
    lo, up = nhm, nhm + l
    for m in range(l):
        col = k + 2 + m
        total += dinv[lo + m, col] * (-fw)
        total += dinv[up + m, col] * (-(1 + w * y) * fy + 0.5 * w * w * fw)
    return C_DUAL_PREFACTOR * total


@dataclass(frozen=True)
class RestrictedFunction:
    """A function of (y, w) standing for a left-H, right-M1 invariant function.

    Optional analytic partials skip finite differencing.
    """
    f: Callable
    fy: Optional[Callable] = None
    fw: Optional[Callable] = None
    fyy: Optional[Callable] = None
    fyw: Optional[Callable] = None

    def __call__(self, y, w):
        return self.f(y, w)


def _richardson(d_h, d_2h):
    return (4 * d_h - d_2h) / 3


def _partials(f, y, w):
    def dy(h):
        return (f(y + h, w) - f(y - h, w)) / (2 * h)

    def dw(h):
        return (f(y, w + h) - f(y, w - h)) / (2 * h)

    def dyy(h):
        return (f(y + h, w) - 2 * f(y, w) + f(y - h, w)) / (h * h)

    def dyw(h):
        return (f(y + h, w + h) - f(y + h, w - h) - f(y - h, w + h) + f(y - h, w - h)) / (4 * h * h)

    fy = _richardson(dy(H_FIRST), dy(2 * H_FIRST))
    fw = _richardson(dw(H_FIRST), dw(2 * H_FIRST))
    fyy = _richardson(dyy(H_SECOND), dyy(2 * H_SECOND))
    fyw = _richardson(dyw(H_SECOND), dyw(2 * H_SECOND))
    return fy, fw, fyy, fyw


def casimir_restricted(f, y, w, n):
    """(1/2)(y^2 f_yy + (n+1) y f_y + 2 f_yw + (n-1) w f_w / (1 + yw))."""
    if np.any(np.abs(1 + np.multiply(w, y)) <= DEGENERATE_TOL):
        raise DegenerateLocusError(f"1 + wy = 0 at (y, w) = ({y}, {w})")
    if isinstance(f, RestrictedFunction) and None not in (f.fy, f.fw, f.fyy, f.fyw):
        fy, fw, fyy, fyw = f.fy(y, w), f.fw(y, w), f.fyy(y, w), f.fyw(y, w)
    else:
        fy, fw, fyy, fyw = _partials(f, y, w)
    return 0.5 * (y * y * fyy + (n + 1) * y * fy + 2 * fyw + (n - 1) * w * fw / (1 + y * w))


def base_vector(n):
    """The sphere fixed by H: the plane x_n = 0, e_n in coordinates."""
    v = np.zeros(n + 2)
    v[n] = 1.0
    return v


def invariant_extension(f, n, branch=1):
    """Lift f(y, w) to a function on G, left-H and right-M invariant.

    The lift reads y = bend and w from (co-bend, |bend-center|) of e_n g.
    ``branch`` is the sign of 1 + wy near the evaluation point.
    """
    v0 = base_vector(n)

    def F(g):
        v = v0 @ g
        y = v[0]
        c = v[-1]
        r = np.sqrt(v[1:-1] @ v[1:-1])
        if branch > 0:
            w = c / (1 + r)
        else:
            w = (-r - 1) / y
        return f(y, w)

    return F


def casimir_full_numeric(basis, F, g, h=H_GROUP):
    """sum_i (X_i X_i^* F)(g) with the basis' own dual, by mixed differences.

    Each term is d^2/ds dt F(g exp(s X_i) exp(t X_i^*)) at s = t = 0, central
    differences with one Richardson level.
    """
    if h < 1e-8:
        raise ValueError(f"step {h} too small for double precision differencing")
    g = np.asarray(g, dtype=float)
    duals = basis.dual_elements()

    def mixed(step):
        total = 0.0
        for X, Xs in zip(basis.elements, duals):
            ep, em = expm(step * X), expm(-step * X)
            sp, sm = expm(step * Xs), expm(-step * Xs)
            gp, gm = g @ ep, g @ em
            total += (F(gp @ sp) - F(gp @ sm) - F(gm @ sp) + F(gm @ sm)) / (4 * step * step)
        return total

    return _richardson(mixed(h), mixed(2 * h))


def trace_casimir_full_numeric(n, F, g, h=H_GROUP):
    """Full Casimir with the trace-form dual; equals n times the Killing one."""
    return casimir_full_numeric(build_basis(n, form="trace"), F, g, h)
