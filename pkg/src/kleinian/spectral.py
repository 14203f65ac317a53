"""Interpolation kernels, the bend ODE, and smoothing windows.

The ODE in the bend variable y > 0 is

    -y^2 f'' + (n - 3) y f' + (n - 1) f - lambda f = h,   lambda = s (n - s),

with homogeneous solutions y^(s-1) and y^(n-s-1) (y^(n/2-1) and
y^(n/2-1) log y when s = n/2).  ``n = 1`` gives the SL(2, R) kernels.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

DEFAULT_B = 2.0
RESONANCE_TOL = 1e-8
CRITICAL_TOL = 1e-12
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12


class KernelResonanceError(ValueError):
    """The kernel denominator vanishes; perturb b or use the other branch."""


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralParameter:
    n: int
    s: complex

    @property
    def lam(self):
        s = complex(self.s)
        return (s * (self.n - s)).real

    @property
    def on_critical_line(self):
        return _on_critical_line(self.s, self.n)

    @property
    def t(self):
        return complex(self.s).imag


@dataclass(frozen=True)
class KernelConstants:
    b: float = DEFAULT_B

    def __post_init__(self):
        if not self.b > 1:
            raise ValueError(f"interpolation base must exceed 1, got {self.b}")


def _on_critical_line(s, n):
    s = complex(s)
    return s.imag != 0 and abs(s.real - n / 2) <= CRITICAL_TOL


def _split(s, n):
    s = complex(s)
    if _on_critical_line(s, n):
        return True, s.imag
    if s.imag != 0:
        raise ValueError(f"s = {s} is neither real nor on the line Re s = n/2")
    if abs(s.real - n / 2) <= CRITICAL_TOL:
        raise KernelResonanceError("s = n/2: b^(n-s) = b^s, use s = n/2 + it")
    return False, s.real


def _sin_log_b(t, b):
    den = np.sin(t * np.log(b))
    if abs(den) < RESONANCE_TOL:
        raise KernelResonanceError(f"sin(t log b) = {den:.2e} for t = {t}, b = {b}; perturb b")
    return den


def kernel_k(T, s, n, b=DEFAULT_B):
    """K_T(s): the coefficient of the T = 1 data in the interpolation."""
    critical, val = _split(s, n)
    if critical:
        t = val
        return T ** (n / 2) * np.sin(t * np.log(b / T)) / _sin_log_b(t, b)
    s = val
    return (T ** s * b ** (n - s) - T ** (n - s) * b ** s) / (b ** (n - s) - b ** s)


def kernel_l(T, s, n, b=DEFAULT_B):
    """L_T(s): the coefficient of the T = b data in the interpolation."""
    critical, val = _split(s, n)
    if critical:
        t = val
        return (T / b) ** (n / 2) * np.sin(t * np.log(T)) / _sin_log_b(t, b)
    s = val
    return (T ** (n - s) - T ** s) / (b ** (n - s) - b ** s)


def _central_derivatives(f, y, h0=None, levels=4):
    """First and second derivatives by Richardson-extrapolated central differences."""
    if h0 is None:
        h0 = 0.125 * max(abs(y), 1e-3)
    d1 = []
    d2 = []
    f0 = f(y)
    for i in range(levels):
        h = h0 / 2 ** i
        fp, fm = f(y + h), f(y - h)
        d1.append((fp - fm) / (2 * h))
        d2.append((fp - 2 * f0 + fm) / (h * h))
    for table in (d1, d2):
        for m in range(1, levels):
            factor = 4 ** m
            for i in range(levels - 1, m - 1, -1):
                table[i] = (factor * table[i] - table[i - 1]) / (factor - 1)
    return f0, d1[-1], d2[-1]


def ode_residual(f, h, s, n, y, df=None, d2f=None):
    """-y^2 f'' + (n-3) y f' + (n-1) f - lambda f - h(y), lambda = s(n-s).

    ``h=None`` means the homogeneous equation.  Missing derivatives are
    computed by finite differences.
    """
    if y <= 0:
        raise ValueError("the bend ODE lives on y > 0")
    lam = s * (n - s)
    if df is None or d2f is None:
        f0, f1, f2 = _central_derivatives(f, y)
    else:
        f0, f1, f2 = f(y), df(y), d2f(y)
    rhs = 0.0 if h is None else h(y)
    return -y * y * f2 + (n - 3) * y * f1 + (n - 1) * f0 - lam * f0 - rhs


def wronskian(s, n, y):
    """Wronskian of the two homogeneous solutions at y."""
    if abs(s - n / 2) <= CRITICAL_TOL:
        return y ** (n - 3)
    return (n - 2 * s) * y ** (n - 3)


def homogeneous_solutions(s, n):
    if abs(s - n / 2) <= CRITICAL_TOL:
        return (lambda y: y ** (n / 2 - 1)), (lambda y: y ** (n / 2 - 1) * np.log(y))
    return (lambda y: y ** (s - 1)), (lambda y: y ** (n - s - 1))


def _quad(func, a, b):
    val, err = integrate.quad(func, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=500)
    if not np.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge (error estimate {err:.2e})")
    return val


def variation_coefficients(h, s, n, T, y):
    """(u(y), v(y)): the coefficients multiplying the two homogeneous solutions.

    Both vanish at y = T.  The integrals extend past T with reversed limits,
    which keeps the solution smooth across y = T.
    """
    if y <= 0:
        raise ValueError(f"need y > 0, got {y}")
    if y == T:
        return 0.0, 0.0
    if abs(s - n / 2) <= CRITICAL_TOL:
        u = -_quad(lambda t: t ** (-n / 2) * np.log(t) * h(t), y, T)
        v = _quad(lambda t: t ** (-n / 2) * h(t), y, T)
        return u, v
    u = _quad(lambda t: t ** (-s) * h(t), y, T) / (2 * s - n)
    v = _quad(lambda t: t ** (s - n) * h(t), y, T) / (n - 2 * s)
    return u, v


def variation_of_parameters(h, s, n, T, y):
    """Particular solution of the bend ODE with source h, normalized at y = T."""
    f1, f2 = homogeneous_solutions(s, n)
    u, v = variation_coefficients(h, s, n, T, y)
    return f1(y) * u + f2(y) * v


def particular_solution(h, s, n, T):
    return lambda y: variation_of_parameters(h, s, n, T, y)


# --- smoothing windows -----------------------------------------------------

def _mollifier_tail(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, monotone in between."""
    a = _mollifier_tail(t)
    b = _mollifier_tail(1 - np.asarray(t, dtype=float))
    return a / (a + b)


def smooth_cutoff(y, T, sigma):
    """1 for T y < 1, 0 for T y > 1 + sigma, smooth and nonincreasing between."""
    if sigma <= 0 or T <= 0:
        raise ValueError("sigma and T must be positive")
    t = (T * np.asarray(y, dtype=float) - 1) / sigma
    out = 1 - smoothstep(t)
    return out if np.ndim(out) else float(out)


def _bump_shape(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1 - x[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def _bump_mass():
    val, _ = integrate.quad(lambda x: float(_bump_shape(x)), -1, 1, epsabs=1e-14, epsrel=1e-13)
    return val


def bump(x, epsilon=1.0):
    """Even, nonnegative, unit-mass bump supported on [-epsilon, epsilon]."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    out = _bump_shape(np.asarray(x, dtype=float) / epsilon) / (_bump_mass() * epsilon)
    return out if np.ndim(out) else float(out)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(120)


def integrated_bump(x):
    """W(x) = integral of the unit bump over (-inf, x]; exactly 0 / 1 outside (-1, 1)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.where(x >= 1, 1.0, 0.0)
    inside = np.abs(x) < 1
    if inside.any():
        xi = x[inside]
        half = (xi + 1) / 2
        nodes = -1 + half[:, None] * (_GL_NODES[None, :] + 1)
        vals = _bump_shape(nodes) @ _GL_WEIGHTS / _bump_mass()
        out[inside] = np.clip(half * vals, 0.0, 1.0)
    return out
