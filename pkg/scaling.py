# scaling.py - Low-temperature asymptotics of outcome spectra and Fisher information
"""
At low temperature the outcome energies of a measurement can be expanded as

    E_m(T) - E_0(T) = sum_l D[m, l] T^l

and the outcome probabilities follow from d ln p_m / dT = (E_m - <E>)/T^2:

    p_m  ~  g_m T^{D[m,1]} exp(-D[m,0]/T + sum_{l>=1} D[m,l+1] T^l / l)

A gapped ground outcome (D[1,0] > 0) gives exponentially small Fisher
information; when every D[m,0] vanishes the Fisher information is polynomial
in T. This module fits such expansions, evaluates both asymptotic predictors
and classifies sampled F(T) curves.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import structlog
from numpy.polynomial import polynomial as P
from scipy.special import logsumexp

from errors import DomainError, IllConditionedFitError, InsufficientDataError, ValidationError

logger = structlog.get_logger(__name__)

DEFAULT_ORDER = 5
MAX_CONDITION = 1e12
MIN_CLASSIFY_POINTS = 8
EXPONENTIAL_R2_MARGIN = 1e-3
WINDOW_FACTOR = 10.0

# ============================================================================
# GAP EXPANSIONS
# ============================================================================


@dataclass(frozen=True, eq=False)
class GapExpansion:
    """Taylor coefficients of outcome gaps plus low-temperature weights

    coefficients[m, l] multiplies T^l in the gap of outcome m; row 0 is the
    ground outcome and is identically zero.
    """
    coefficients: np.ndarray
    weights: np.ndarray
    labels: Tuple[str, ...] = ()
    residuals: Optional[np.ndarray] = field(default=None, repr=False)
    coef_stderr: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coefficients, dtype=float)).copy()
        g = np.asarray(self.weights, dtype=float).ravel().copy()
        if c.shape[0] != g.size or c.shape[0] == 0:
            raise ValidationError("one weight per outcome row required", rows=c.shape[0], weights=g.size)
        if np.any(g <= 0) or not np.all(np.isfinite(g)):
            raise ValidationError("weights must be positive and finite")
        if np.any(c[0] != 0.0):
            raise ValidationError("ground outcome row must be zero")
        if np.any(c[:, 0] < 0):
            raise ValidationError("zeroth-order gaps must be nonnegative", min_gap=float(c[:, 0].min()))
        labels = tuple(self.labels) if self.labels else tuple(str(m) for m in range(c.shape[0]))
        if len(labels) != c.shape[0]:
            raise ValidationError("one label per outcome row required")
        c.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "weights", g)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_orders(cls, orders: Dict[int, Sequence[float]], weights: Sequence[float],
                    labels: Sequence[str] = ()) -> "GapExpansion":
        """Build from {order: per-outcome coefficients}; unlisted orders are zero"""
        size = len(weights)
        top = max(orders) if orders else 0
        c = np.zeros((size, top + 1))
        for l, column in orders.items():
            if len(column) != size:
                raise ValidationError("one coefficient per weight required", order=l,
                                      coefficients=len(column), weights=size)
            c[:, l] = column
        return cls(c, np.asarray(weights, dtype=float), tuple(labels))

    @property
    def order(self) -> int:
        return self.coefficients.shape[1] - 1

    @property
    def outcomes(self) -> int:
        return self.coefficients.shape[0]

    def gap(self, m: int, T: float) -> float:
        return float(P.polyval(T, self.coefficients[m]))

    def log_weight_exponents(self, T: float) -> np.ndarray:
        """ln(p_m / g_m) up to a common constant"""
        if not T > 0:
            raise DomainError("temperature must be positive", T=T)
        c = self.coefficients
        out = -c[:, 0] / T
        if c.shape[1] > 1:
            out = out + c[:, 1] * math.log(T)
        for l in range(1, c.shape[1] - 1):
            out = out + c[:, l + 1] * T ** l / l
        return out

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "labels": list(self.labels),
            "weights": self.weights.tolist(),
            "coefficients": self.coefficients.tolist(),
        }
        if self.residuals is not None:
            out["residuals"] = np.asarray(self.residuals).tolist()
        return out


def formal_probabilities(ge: GapExpansion, T: float) -> np.ndarray:
    """Normalized outcome probabilities from a truncated gap expansion"""
    log_p = np.log(ge.weights) + ge.log_weight_exponents(T)
    return np.exp(log_p - logsumexp(log_p))


def _ground_group(ge: GapExpansion) -> np.ndarray:
    return ge.coefficients[:, 0] == 0.0


def predict_exponential(ge: GapExpansion, T: float) -> float:
    """Leading gapped term (g1/g0) D10^2 T^(D11-4) exp(-D10/T)"""
    if not T > 0:
        raise DomainError("temperature must be positive", T=T)
    d0 = ge.coefficients[:, 0]
    positive = d0 > 0
    if not positive.any():
        raise DomainError("no gapped outcome; use predict_polynomial")
    d10 = float(d0[positive].min())
    first = np.flatnonzero(np.isclose(d0, d10, rtol=1e-12, atol=0.0))
    d11 = float(ge.coefficients[first[0], 1]) if ge.order >= 1 else 0.0
    g0 = float(ge.weights[_ground_group(ge)].sum())
    g1 = float(ge.weights[first].sum())
    return (g1 / g0) * d10 ** 2 * T ** (d11 - 4.0) * math.exp(-d10 / T)


def predict_polynomial(ge: GapExpansion, l: int, T: float) -> float:
    """Polynomial Fisher law when no outcome is gapped at T = 0

    l > 1: T^(2(l-2)) times the g-weighted variance of D[:, l]
    l = 1: (g1/g0) D11^2 T^(D11-2), outcome 1 having the smallest positive D11
    """
    if not T > 0:
        raise DomainError("temperature must be positive", T=T)
    if l < 1 or l > ge.order:
        raise DomainError("leading order must lie in [1, order]", l=l, order=ge.order)
    if np.any(ge.coefficients[:, 0] != 0.0):
        raise DomainError("polynomial law needs all zeroth-order gaps to vanish")
    column = ge.coefficients[:, l]
    if not np.any(column != 0.0):
        return 0.0
    if l == 1:
        positive = column > 0
        if not positive.any():
            return 0.0
        d11 = float(column[positive].min())
        first = np.isclose(column, d11, rtol=1e-12, atol=0.0)
        g0 = float(ge.weights[column == 0.0].sum()) or float(ge.weights[0])
        g1 = float(ge.weights[first].sum())
        return (g1 / g0) * d11 ** 2 * T ** (d11 - 2.0)
    w = ge.weights / ge.weights.sum()
    mean = float(np.dot(w, column))
    variance = float(np.dot(w, (column - mean) ** 2))
    return T ** (2 * (l - 2)) * variance


# ============================================================================
# FITTING
# ============================================================================


def fit_gap_expansion(T_grid: Sequence[float], E_traces: Sequence[Sequence[float]],
                      order: int = DEFAULT_ORDER,
                      prob_traces: Optional[Sequence[Sequence[float]]] = None,
                      labels: Sequence[str] = ()) -> GapExpansion:
    """Least-squares Taylor fit of outcome gaps E_m(T) - E_0(T)

    The ground outcome is the lowest-energy one at the lowest temperature and
    is moved to row 0. The fit runs in x = T / max(T) and is rescaled. With
    probability traces the weights g_m are estimated from the residual
    ln p_m - ln p_0 - exponent; otherwise every weight is 1.
    """
    T = np.asarray(T_grid, dtype=float)
    E = np.atleast_2d(np.asarray(E_traces, dtype=float))
    if T.ndim != 1 or E.shape[1] != T.size:
        raise ValidationError("each energy trace needs one value per temperature",
                              temperatures=T.size, shape=E.shape)
    if np.any(T <= 0) or not np.all(np.isfinite(E)):
        raise DomainError("temperatures must be positive and traces finite")
    if T.size < order + 1:
        raise InsufficientDataError("too few temperatures for the fit order", points=T.size, order=order)

    ground = int(np.argmin(E[:, int(np.argmin(T))]))
    rows = [ground] + [m for m in range(E.shape[0]) if m != ground]
    gaps = E[rows] - E[ground]
    all_labels = tuple(labels) if labels else tuple(str(m) for m in range(E.shape[0]))
    ordered_labels = tuple(all_labels[m] for m in rows)

    scale = float(T.max())
    V = P.polyvander(T / scale, order)
    condition = float(np.linalg.cond(V))
    if condition > MAX_CONDITION:
        raise IllConditionedFitError("gap fit design matrix is ill conditioned", condition=condition)
    coef_x, _, _, _ = np.linalg.lstsq(V, gaps.T, rcond=None)
    fitted = V @ coef_x
    resid = gaps.T - fitted
    rescale = scale ** -np.arange(order + 1, dtype=float)
    coefficients = (coef_x * rescale[:, None]).T
    coefficients[0] = 0.0
    dof = max(T.size - order - 1, 1)
    cov_diag = np.diag(np.linalg.pinv(V.T @ V))
    sigma2 = np.sum(resid ** 2, axis=0) / dof
    stderr = np.sqrt(np.outer(sigma2, cov_diag)) * rescale[None, :]

    negative = coefficients[:, 0] < 0
    tiny = 1e-9 * max(1.0, float(np.abs(gaps).max()))
    if np.any(coefficients[negative, 0] < -tiny):
        logger.warning("negative zeroth-order gap clipped", min_gap=float(coefficients[:, 0].min()))
    coefficients[negative, 0] = 0.0

    weights = np.ones(E.shape[0])
    if prob_traces is not None:
        p = np.atleast_2d(np.asarray(prob_traces, dtype=float))[rows]
        if p.shape != E.shape or np.any(p <= 0):
            raise ValidationError("probability traces must be positive and match the energy traces")
        provisional = GapExpansion(coefficients, weights, ordered_labels)
        exponents = np.stack([provisional.log_weight_exponents(t) for t in T], axis=1)
        log_ratio = np.log(p) - np.log(p[0]) - (exponents - exponents[0])
        weights = np.exp(log_ratio.mean(axis=1))

    return GapExpansion(coefficients, weights, ordered_labels,
                        residuals=np.sqrt(np.mean(resid ** 2, axis=0)), coef_stderr=stderr)


def _lstsq_r2(X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, float]:
    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    ss_res = float(np.sum((y - X @ coef) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-28 * max(1.0, float(np.dot(y, y))):
        return coef, 1.0
    return coef, min(1.0, max(0.0, 1.0 - ss_res / ss_tot))


def fit_exponential_rate(T: Sequence[float], y: Sequence[float]) -> Dict[str, float]:
    """Regression y = a + k ln T + b / T"""
    T = np.asarray(T, dtype=float)
    y = np.asarray(y, dtype=float)
    if T.size < 3 or T.size != y.size:
        raise InsufficientDataError("need at least 3 matching points", points=int(T.size))
    X = np.column_stack([np.ones_like(T), np.log(T), 1.0 / T])
    coef, r2 = _lstsq_r2(X, y)
    return {"a": float(coef[0]), "k": float(coef[1]), "b": float(coef[2]), "r2": r2}


# ============================================================================
# CLASSIFICATION
# ============================================================================


class ScalingKind(str, Enum):
    EXPONENTIAL = "exponential"
    POLYNOMIAL = "polynomial"


@dataclass(frozen=True)
class ScalingVerdict:
    """Which low-temperature law a sampled F(T) follows"""
    kind: ScalingKind
    fit_quality: float
    gap: Optional[float] = None
    power_correction: Optional[float] = None
    power: Optional[float] = None
    r2_exponential: float = 0.0
    r2_polynomial: float = 0.0
    points: int = 0
    window_ok: bool = True
    warning: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "gap": self.gap,
            "power_correction": self.power_correction,
            "power": self.power,
            "fit_quality": self.fit_quality,
            "r2_exponential": self.r2_exponential,
            "r2_polynomial": self.r2_polynomial,
            "points": self.points,
            "window_ok": self.window_ok,
            "warning": self.warning,
        }


def classify(T_grid: Sequence[float], F_grid: Sequence[float],
             gap_proxy: Optional[float] = None, override: bool = False) -> ScalingVerdict:
    """Exponential vs polynomial low-temperature law for sampled F(T)

    exponential: ln F = a + k ln T - gap / T   (power_correction = k + 4)
    polynomial:  ln F = a + k ln T             (power = k)

    The exponential model wins only if it improves R^2 by more than 1e-3 with
    a positive gap. Unless `override` is set, the window must satisfy
    10 max(T) <= gap_proxy; otherwise the verdict carries a warning.
    """
    T = np.asarray(T_grid, dtype=float)
    F = np.asarray(F_grid, dtype=float)
    if T.size != F.size:
        raise ValidationError("temperature and Fisher grids differ in length", T=T.size, F=F.size)
    if T.size < MIN_CLASSIFY_POINTS:
        raise InsufficientDataError("classify needs at least 8 points", points=int(T.size))
    if np.any(~np.isfinite(F)) or np.any(F <= 0) or np.any(T <= 0):
        raise DomainError("classify needs positive finite temperatures and Fisher values")

    y = np.log(F)
    lnT = np.log(T)
    poly_coef, r2_poly = _lstsq_r2(np.column_stack([np.ones_like(T), lnT]), y)
    exp_coef, r2_exp = _lstsq_r2(np.column_stack([np.ones_like(T), lnT, 1.0 / T]), y)
    gap = -float(exp_coef[2])

    warning = None
    window_ok = True
    if not override:
        if gap_proxy is None or WINDOW_FACTOR * float(T.max()) > gap_proxy:
            window_ok = False
            warning = "temperature window not deep enough below the gap proxy"
            logger.warning("classify outside asymptotic window", t_max=float(T.max()), gap_proxy=gap_proxy)

    common = dict(r2_exponential=r2_exp, r2_polynomial=r2_poly, points=int(T.size),
                  window_ok=window_ok, warning=warning)
    if r2_exp - r2_poly > EXPONENTIAL_R2_MARGIN and gap > 0:
        return ScalingVerdict(kind=ScalingKind.EXPONENTIAL, fit_quality=r2_exp, gap=gap,
                              power_correction=float(exp_coef[1]) + 4.0, **common)
    return ScalingVerdict(kind=ScalingKind.POLYNOMIAL, fit_quality=r2_poly,
                          power=float(poly_coef[1]), **common)
