# numerics.py - Special functions, quadrature, root finding and differentiation
"""
Numerical building blocks shared by every other module.

Special functions delegate to scipy.special and add the domain checks the rest
of the package relies on. The elliptic integrals use the modulus convention

    K1(z) = int_0^{pi/2} dphi / sqrt(1 - z^2 sin^2 phi)
    E1(z) = int_0^{pi/2} dphi sqrt(1 - z^2 sin^2 phi)

so scipy's parameter is m = z^2.

All functions are pure and safe to call from sweep worker threads.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import structlog
from scipy import integrate, optimize, special

from errors import BracketError, ConvergenceError, DomainError, SingularityError, ValidationError

logger = structlog.get_logger(__name__)

# ============================================================================
# DOMAIN TYPES
# ============================================================================


@dataclass(frozen=True)
class Interval:
    """Integration or search interval; endpoints may be infinite for tail integrals"""
    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValidationError("interval endpoints must not be NaN", lo=self.lo, hi=self.hi)
        if not self.lo < self.hi:
            raise ValidationError("interval requires lo < hi", lo=self.lo, hi=self.hi)

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class Tolerance:
    """Accuracy target for iterative methods"""
    rel: float = 1e-10
    abs: float = 1e-12
    max_iter: int = 60

    def __post_init__(self):
        if not self.rel > 0:
            raise ValidationError("relative tolerance must be positive", rel=self.rel)
        if not self.abs >= 0:
            raise ValidationError("absolute tolerance must be nonnegative", abs=self.abs)
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1", max_iter=self.max_iter)

    def target(self, value: float) -> float:
        return max(self.abs, self.rel * abs(value))


DEFAULT_TOL = Tolerance()

# ============================================================================
# SPECIAL FUNCTIONS
# ============================================================================


def riemann_zeta(s: float) -> float:
    """Riemann zeta function for real s > 1"""
    if not s > 1:
        raise DomainError("riemann_zeta requires s > 1", s=s)
    return float(special.zeta(s, 1))


def gamma_fn(x: float) -> float:
    """Gamma function for real x > 0"""
    if not x > 0:
        raise DomainError("gamma_fn requires x > 0", x=x)
    return float(special.gamma(x))


def polylog2(x: float) -> float:
    """Dilogarithm Li2(x) for real x <= 1"""
    if not x <= 1:
        raise DomainError("polylog2 requires x <= 1", x=x)
    # scipy's spence(w) is Li2(1 - w)
    return float(special.spence(1.0 - x))


def _check_modulus(z: float) -> None:
    if not 0.0 <= z <= 1.0:
        raise DomainError("elliptic modulus must lie in [0, 1]", z=z)


def elliptic_k(z: float, complement: Optional[float] = None) -> float:
    """Complete elliptic integral of the first kind K1(z)

    `complement` may carry 1 - z^2 computed without cancellation; it is used
    instead of z next to the logarithmic singularity at z = 1.
    """
    _check_modulus(z)
    m1 = (1.0 - z * z) if complement is None else float(complement)
    if m1 <= 0.0:
        raise SingularityError("K1 diverges at z = 1", z=z)
    return float(special.ellipkm1(m1))


def elliptic_e(z: float, complement: Optional[float] = None) -> float:
    """Complete elliptic integral of the second kind E1(z)"""
    _check_modulus(z)
    m = z * z if complement is None else 1.0 - float(complement)
    return float(special.ellipe(min(max(m, 0.0), 1.0)))


def elliptic_KE(z: float, complement: Optional[float] = None) -> Tuple[float, float]:
    """Both complete elliptic integrals (K1, E1) at modulus z"""
    return elliptic_k(z, complement), elliptic_e(z, complement)


# ============================================================================
# STABLE ELEMENTARY HELPERS
# ============================================================================


def sech2(x):
    """1/cosh^2(x) without overflow"""
    a = np.exp(-2.0 * np.abs(np.asarray(x, dtype=float)))
    return 4.0 * a / (1.0 + a) ** 2


def csch2(x):
    """1/sinh^2(x) without overflow; infinite at x = 0"""
    ax = np.abs(np.asarray(x, dtype=float))
    a = np.exp(-2.0 * ax)
    with np.errstate(divide="ignore"):
        return 4.0 * a / np.expm1(-2.0 * ax) ** 2


def fermi(x):
    """Fermi-Dirac occupation 1/(e^x + 1)"""
    return special.expit(-np.asarray(x, dtype=float))


def bose(x):
    """Bose-Einstein occupation 1/(e^x - 1) for x > 0"""
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(np.asarray(x, dtype=float))


def xcosh_minus_sinh(x: float) -> float:
    """x cosh(x) - sinh(x), series below |x| = 1e-2"""
    if abs(x) < 1e-2:
        x2 = x * x
        return x * x2 * (1.0 / 3.0 + x2 * (1.0 / 30.0 + x2 * (1.0 / 840.0 + x2 / 45360.0)))
    return x * math.cosh(x) - math.sinh(x)


# ============================================================================
# QUADRATURE
# ============================================================================


def _safe(f: Callable[[float], float]) -> Callable[[float], float]:
    # tail substitutions push x towards the overflow range of decaying integrands
    def wrapped(x: float) -> float:
        try:
            with np.errstate(over="ignore", under="ignore", invalid="ignore"):
                value = float(f(x))
        except OverflowError:
            return 0.0
        return value if math.isfinite(value) else 0.0
    return wrapped


def _to_unit(f: Callable[[float], float], iv: Interval) -> Tuple[Callable[[float], float], float, float]:
    """Map an interval with infinite endpoints onto [0, 1)"""
    g = _safe(f)
    if math.isfinite(iv.lo) and math.isinf(iv.hi):
        lo = iv.lo
        return (lambda u: g(lo + u / (1.0 - u)) / (1.0 - u) ** 2), 0.0, 1.0
    if math.isinf(iv.lo) and math.isfinite(iv.hi):
        hi = iv.hi
        return (lambda u: g(hi - u / (1.0 - u)) / (1.0 - u) ** 2), 0.0, 1.0
    return f, iv.lo, iv.hi


def quad_adaptive(f: Callable[[float], float], iv: Interval, tol: Tolerance = DEFAULT_TOL) -> float:
    """Adaptive Gauss-Kronrod integral of f over iv

    Half-infinite intervals use x = lo + u/(1-u) with u in [0, 1); the doubly
    infinite line is split at 0. Raises ConvergenceError when the error
    estimate misses the target by more than three orders of magnitude.
    """
    if math.isinf(iv.lo) and math.isinf(iv.hi):
        return (quad_adaptive(f, Interval(-math.inf, 0.0), tol)
                + quad_adaptive(f, Interval(0.0, math.inf), tol))

    g, a, b = _to_unit(f, iv)
    limit = max(50, 4 * tol.max_iter)
    out = integrate.quad(g, a, b, epsabs=tol.abs, epsrel=max(tol.rel, 1e-14),
                         limit=limit, full_output=1)
    value, err = float(out[0]), float(out[1])
    target = tol.target(value)
    if not math.isfinite(value) or err > 1e3 * target:
        raise ConvergenceError("quadrature did not converge", lo=iv.lo, hi=iv.hi,
                               value=value, error=err, subdivisions=limit)
    if err > target:
        logger.debug("quadrature error above target", lo=iv.lo, hi=iv.hi, error=err, target=target)
    return value


# ============================================================================
# ROOT FINDING AND DIFFERENTIATION
# ============================================================================


def find_root(f: Callable[[float], float], bracket: Interval, tol: Tolerance = DEFAULT_TOL) -> float:
    """Brent root of f inside a sign-changing bracket"""
    if not bracket.is_finite:
        raise DomainError("root bracket must be finite", lo=bracket.lo, hi=bracket.hi)
    f_lo, f_hi = f(bracket.lo), f(bracket.hi)
    if f_lo == 0.0:
        return bracket.lo
    if f_hi == 0.0:
        return bracket.hi
    if not (math.isfinite(f_lo) and math.isfinite(f_hi)) or f_lo * f_hi > 0:
        raise BracketError("no sign change in bracket", lo=bracket.lo, hi=bracket.hi,
                           f_lo=f_lo, f_hi=f_hi)
    try:
        root, info = optimize.brentq(f, bracket.lo, bracket.hi, xtol=tol.abs,
                                     rtol=max(tol.rel, 4 * np.finfo(float).eps),
                                     maxiter=max(100, tol.max_iter), full_output=True,
                                     disp=False)
    except RuntimeError as exc:
        raise ConvergenceError("root finder failed", lo=bracket.lo, hi=bracket.hi) from exc
    if not info.converged:
        raise ConvergenceError("root finder did not converge", lo=bracket.lo, hi=bracket.hi,
                               iterations=info.iterations)
    return float(root)


def derivative(f: Callable[[float], float], x: float, h: float, order: int = 2) -> float:
    """Central-difference derivative; order 2 (3-point) or 4 (5-point stencil)"""
    if not h > 0:
        raise DomainError("step must be positive", h=h)
    if order == 2:
        return (f(x + h) - f(x - h)) / (2.0 * h)
    if order == 4:
        # symmetric pairs first so a constant f cancels exactly
        near = f(x + h) - f(x - h)
        far = f(x + 2 * h) - f(x - 2 * h)
        return (8.0 * near - far) / (12.0 * h)
    raise DomainError("derivative order must be 2 or 4", order=order)


def second_derivative(f: Callable[[float], float], x: float, h: float) -> float:
    """5-point second derivative, O(h^4)"""
    if not h > 0:
        raise DomainError("step must be positive", h=h)
    near = f(x + h) + f(x - h)
    far = f(x + 2 * h) + f(x - 2 * h)
    return (16.0 * near - far - 30.0 * f(x)) / (12.0 * h * h)
