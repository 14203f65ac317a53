"""Quadratic space of signature (n+1, 1) and inversive coordinates of spheres.

Vectors are rows and the group acts on the right, ``v -> v @ g``.  A group
element therefore preserves the form when ``g @ Q @ g.T == Q``.

Covectors are stored as representative vectors and evaluated through the
form, ``c(v) = v @ Q @ c``.  With the standard choice this makes the
coordinates of a unit vector literally ``(bend, bend-center, co-bend)``.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

logger = logging.getLogger(__name__)

FLOAT_TOL = 1e-9
PLANE_TOL = 1e-12


class DimensionError(ValueError):
    pass


class NotOnHyperboloidError(ValueError):
    """Raised when a vector does not satisfy Q(v) = 1."""


class NotOrthogonalError(ValueError):
    """Raised when a matrix does not preserve the quadratic form."""

    def __init__(self, msg, residual=None, matrix=None):
        super().__init__(msg)
        self.residual = residual
        self.matrix = matrix


def _as_exact(a):
    return np.vectorize(Fraction, otypes=[object])(np.asarray(a, dtype=object))


@dataclass(frozen=True, eq=False)
class QuadraticSpace:
    n: int
    gram: np.ndarray
    b_star: np.ndarray
    bhat_star: np.ndarray
    bx_star: np.ndarray
    exact: bool = False
    normalization: object = field(default=1, repr=False)

    @property
    def dim(self):
        return self.n + 2

    def asarray(self, v):
        if self.exact:
            return _as_exact(v)
        return np.asarray(v, dtype=float)

    def dual_product(self, a, b):
        """Pairing of two covectors (representatives paired through Q)."""
        return a @ self.gram @ b

    def evaluate(self, covector, v):
        return np.asarray(v) @ self.gram @ covector

    def signature(self):
        ev = np.linalg.eigvalsh(np.asarray(self.gram, dtype=float))
        return int((ev > 0).sum()), int((ev < 0).sum())


def standard_form(n, exact=False):
    """The form -x_0 x_{n+1} + x_1^2 + ... + x_n^2 with inversive covectors.

    ``exact=True`` keeps every entry as a ``Fraction``.
    """
    if n < 1:
        raise DimensionError(f"n must be >= 1, got {n}")
    N = n + 2
    one = Fraction(1) if exact else 1.0
    zero = one * 0
    half = one / 2

    def new():
        a = np.empty(N, dtype=object) if exact else np.zeros(N)
        a[:] = zero
        return a

    gram = np.empty((N, N), dtype=object) if exact else np.zeros((N, N))
    gram[:] = zero
    gram[0, N - 1] = gram[N - 1, 0] = -half
    for i in range(1, n + 1):
        gram[i, i] = one

    b_star = new()
    b_star[N - 1] = -2 * one
    bhat_star = new()
    bhat_star[0] = -2 * one
    bx = []
    for i in range(1, n + 1):
        e = new()
        e[i] = one
        bx.append(e)
    bx_star = np.array(bx, dtype=object if exact else float)

    pairing = b_star @ gram @ bhat_star
    factor = (-2 * one) / pairing
    if factor != 1:
        logger.info("rescaling bhat_star by %s so that b* . bhat* = -2", factor)
    bhat_star = bhat_star * factor
    for a in (gram, b_star, bhat_star, bx_star):
        a.setflags(write=False)
    return QuadraticSpace(n, gram, b_star, bhat_star, bx_star, exact, factor)


def _check_len(space, v):
    if len(v) != space.dim:
        raise DimensionError(f"expected a vector of length {space.dim}, got {len(v)}")


def q_product(space, v, w):
    v = space.asarray(v)
    w = space.asarray(w)
    _check_len(space, v)
    _check_len(space, w)
    return v @ space.gram @ w


def q_norm(space, v):
    return q_product(space, v, v)


def bend(space, v):
    return space.evaluate(space.b_star, space.asarray(v))


def cobend(space, v):
    return space.evaluate(space.bhat_star, space.asarray(v))


def bend_center(space, v):
    v = space.asarray(v)
    return np.array([space.evaluate(c, v) for c in space.bx_star], dtype=v.dtype)


@dataclass(frozen=True, eq=False)
class OrientedSphere:
    """A sphere (center, signed radius) or an oriented plane (normal, offset).

    The plane ``{x : x . normal = offset}`` is oriented so that its interior
    is the half-space ``x . normal > offset``.  For balls the sign of the
    radius is the orientation: negative radius means the interior is the
    outside of the sphere (e.g. the bounding circle of a packing).
    """

    center: np.ndarray = None
    radius: object = None
    normal: np.ndarray = None
    offset: object = None

    @classmethod
    def ball(cls, center, radius):
        if radius == 0:
            raise ValueError("radius must be nonzero")
        return cls(center=np.asarray(center), radius=radius)

    @classmethod
    def plane(cls, normal, offset):
        normal = np.asarray(normal)
        norm = np.sqrt(float(np.dot(normal, normal)))
        if abs(norm - 1) > PLANE_TOL:
            raise ValueError(f"plane normal must be a unit vector, |normal| = {norm}")
        return cls(normal=normal, offset=offset)

    @property
    def is_plane(self):
        return self.normal is not None

    @property
    def orientation(self):
        if self.is_plane:
            return 1
        return 1 if self.radius > 0 else -1

    @property
    def bend(self):
        return 0 if self.is_plane else 1 / self.radius

    def __eq__(self, other):
        if not isinstance(other, OrientedSphere) or self.is_plane != other.is_plane:
            return NotImplemented
        if self.is_plane:
            return bool(np.all(self.normal == other.normal)) and self.offset == other.offset
        return bool(np.all(self.center == other.center)) and self.radius == other.radius


def sphere_to_vector(space, s):
    """Inversive coordinates (bend, bend * center, co-bend) of a sphere."""
    if s.is_plane:
        normal = space.asarray(s.normal)
        if len(normal) != space.n:
            raise DimensionError("normal has wrong dimension")
        head = [normal[0] * 0]
        return np.concatenate([np.array(head, dtype=normal.dtype), normal,
                               np.array([2 * s.offset], dtype=normal.dtype)])
    c = space.asarray(s.center)
    if len(c) != space.n:
        raise DimensionError("center has wrong dimension")
    r = space.asarray([s.radius])[0]
    b = 1 / r
    co = (c @ c - r * r) / r
    return np.concatenate([np.array([b], dtype=c.dtype), c * b, np.array([co], dtype=c.dtype)])


def vector_to_sphere(space, v, tol=FLOAT_TOL):
    v = space.asarray(v)
    _check_len(space, v)
    q = q_norm(space, v)
    if space.exact:
        if q != 1:
            raise NotOnHyperboloidError(f"Q(v) = {q}, expected 1")
    elif abs(q - 1) > tol:
        raise NotOnHyperboloidError(f"|Q(v) - 1| = {abs(q - 1):.3e} exceeds {tol}")
    b = bend(space, v)
    bz = bend_center(space, v)
    if (space.exact and b == 0) or (not space.exact and abs(b) <= PLANE_TOL * max(1.0, np.abs(v).max())):
        return OrientedSphere(normal=bz, offset=cobend(space, v) / 2)
    return OrientedSphere(center=bz / b, radius=1 / b)


def check_group_element(space, g, tol=FLOAT_TOL):
    """Raise NotOrthogonalError unless g Q g^T = Q (exactly in exact mode)."""
    g = space.asarray(g)
    if g.shape != (space.dim, space.dim):
        raise DimensionError(f"expected a {space.dim}x{space.dim} matrix, got {g.shape}")
    diff = g @ space.gram @ g.T - space.gram
    if space.exact:
        if any(x != 0 for x in diff.ravel()):
            raise NotOrthogonalError("matrix does not preserve Q exactly", 0, g)
        return g
    residual = float(np.abs(diff).max())
    if residual > tol * max(1.0, float(np.abs(g).max()) ** 2):
        raise NotOrthogonalError(f"matrix does not preserve Q (residual {residual:.3e})", residual, g)
    return g


def apply_group(space, v, g, check=True):
    v = space.asarray(v)
    _check_len(space, v)
    if check:
        g = check_group_element(space, g)
    return v @ space.asarray(g)


@dataclass(frozen=True, eq=False)
class InversiveVector:
    """A unit vector of the quadratic space, i.e. an oriented sphere."""

    space: QuadraticSpace
    coords: np.ndarray

    def __post_init__(self):
        coords = self.space.asarray(self.coords)
        _check_len(self.space, coords)
        q = q_norm(self.space, coords)
        if (q != 1) if self.space.exact else (abs(q - 1) > FLOAT_TOL):
            raise NotOnHyperboloidError(f"Q(v) = {q}, expected 1")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_sphere(cls, space, s):
        return cls(space, sphere_to_vector(space, s))

    @property
    def bend(self):
        return bend(self.space, self.coords)

    @property
    def cobend(self):
        return cobend(self.space, self.coords)

    @property
    def bend_center(self):
        return bend_center(self.space, self.coords)

    def sphere(self):
        return vector_to_sphere(self.space, self.coords)

    def __matmul__(self, g):
        return InversiveVector(self.space, apply_group(self.space, self.coords, g))
