# thermal_core.py - Canonical and grand-canonical thermal ensembles
"""
Thermal states over discrete spectra (canonical) and over free-particle mode
systems (grand canonical), with their quantum Fisher information for
temperature, entropy, heat capacity and the (T, mu) QFI matrix.

Units: k_B = hbar = 1, temperatures are energies.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from scipy.special import logsumexp, xlogy

from errors import BracketError, DomainError, InsufficientDataError, ValidationError
from numerics import (
    Interval, Tolerance, bose, csch2, derivative, fermi, find_root, second_derivative, sech2,
)

logger = structlog.get_logger(__name__)

MERGE_RTOL = 1e-12

# ============================================================================
# CANONICAL ENSEMBLE
# ============================================================================


@dataclass(frozen=True, eq=False)
class DiscreteSpectrum:
    """Eigenenergies with integer degeneracies, strictly increasing"""
    energies: np.ndarray
    degeneracies: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float).copy()
        g = np.asarray(self.degeneracies, dtype=np.int64).copy()
        if e.ndim != 1 or e.size == 0 or e.shape != g.shape:
            raise ValidationError("spectrum needs matching nonempty energy and degeneracy lists")
        if not np.all(np.isfinite(e)):
            raise ValidationError("spectrum energies must be finite")
        if np.any(g < 1):
            raise ValidationError("degeneracies must be at least 1")
        if np.any(np.diff(e) <= 0):
            raise ValidationError("energies must be strictly increasing; use from_levels to merge")
        e.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "degeneracies", g)

    @classmethod
    def from_levels(cls, levels: Iterable[Tuple[float, int]]) -> "DiscreteSpectrum":
        """Build from (energy, degeneracy) pairs; equal energies are merged"""
        pairs = sorted((float(e), int(g)) for e, g in levels)
        if not pairs:
            raise ValidationError("spectrum must not be empty")
        energies: List[float] = []
        degeneracies: List[int] = []
        for e, g in pairs:
            if g < 1:
                raise ValidationError("degeneracies must be at least 1", energy=e, degeneracy=g)
            if energies and abs(e - energies[-1]) <= MERGE_RTOL * max(1.0, abs(e)):
                degeneracies[-1] += g
            else:
                energies.append(e)
                degeneracies.append(g)
        return cls(np.array(energies), np.array(degeneracies))

    @classmethod
    def from_energies(cls, energies: Iterable[float]) -> "DiscreteSpectrum":
        """Build from a flat list of eigenvalues, counting repeats"""
        return cls.from_levels((e, 1) for e in energies)

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def gap(self) -> Optional[float]:
        return float(self.energies[1] - self.energies[0]) if self.energies.size > 1 else None

    def __len__(self) -> int:
        return int(self.energies.size)


@dataclass(frozen=True)
class ThermoPoint:
    """Thermodynamic state of a canonical ensemble at one temperature"""
    T: float
    Z: float
    log_Z: float
    mean_energy: float
    energy_variance: float
    entropy: float
    heat_capacity: float
    qfi: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "T": self.T,
            "Z": self.Z,
            "log_Z": self.log_Z,
            "mean_energy": self.mean_energy,
            "energy_variance": self.energy_variance,
            "entropy": self.entropy,
            "heat_capacity": self.heat_capacity,
            "qfi": self.qfi,
        }


def _check_temperature(T: float) -> None:
    if not (T > 0 and math.isfinite(T)):
        raise DomainError("temperature must be positive and finite", T=T)


def boltzmann_weights(spec: DiscreteSpectrum, T: float) -> Tuple[np.ndarray, float]:
    """Normalized level probabilities and ln of the ground-shifted partition sum"""
    _check_temperature(T)
    shifted = spec.energies - spec.energies[0]
    log_w = np.log(spec.degeneracies.astype(float)) - shifted / T
    log_zs = float(logsumexp(log_w))
    return np.exp(log_w - log_zs), log_zs


def canonical_point(spec: DiscreteSpectrum, T: float) -> ThermoPoint:
    """Canonical thermal state: Z, <H>, Var(H), S, C and QFI = Var(H)/T^4"""
    p, log_zs = boltzmann_weights(spec, T)
    shifted = spec.energies - spec.energies[0]
    mean_shift = float(np.dot(p, shifted))
    variance = float(np.dot(p, (shifted - mean_shift) ** 2))
    e0 = spec.ground_energy
    log_Z = log_zs - e0 / T
    with np.errstate(over="ignore"):
        Z = float(np.exp(log_Z))
    return ThermoPoint(
        T=T,
        Z=Z,
        log_Z=log_Z,
        mean_energy=e0 + mean_shift,
        energy_variance=variance,
        entropy=mean_shift / T + log_zs,
        heat_capacity=variance / T ** 2,
        qfi=variance / T ** 4,
    )


def qfi_identities(spec: DiscreteSpectrum, T: float) -> Dict[str, float]:
    """The canonical QFI computed four ways

    variance:  Var(H)/T^4
    beta:      d^2 ln Z / d beta^2 / T^4
    entropy:   dS/dT / T
    energy:    d<H>/dT / T^2
    """
    _check_temperature(T)
    beta = 1.0 / T
    shifted = spec.energies - spec.energies[0]
    log_g = np.log(spec.degeneracies.astype(float))
    spread = float(shifted[-1]) if shifted.size > 1 else 0.0

    def log_zs(b: float) -> float:
        return float(logsumexp(log_g - b * shifted))

    h_beta = 1e-2 * min(beta, 1.0 / spread) if spread > 0 else 1e-2 * beta
    h_T = 1e-3 * T
    return {
        "variance": canonical_point(spec, T).qfi,
        "beta": second_derivative(log_zs, beta, h_beta) / T ** 4,
        "entropy": derivative(lambda t: canonical_point(spec, t).entropy, T, h_T, order=4) / T,
        "energy": derivative(lambda t: canonical_point(spec, t).mean_energy, T, h_T, order=4) / T ** 2,
    }


PointLike = Union[ThermoPoint, Tuple[float, float]]


def third_law_check(points: Sequence[PointLike], violation_tol: float = 1e-8) -> float:
    """Extrapolated T -> 0 limit of T^2 * QFI

    Fits a straight line to T^2 * QFI over the three lowest temperatures and
    returns its intercept. Accepts ThermoPoints or (T, qfi) pairs. A limit
    above `violation_tol` (relative to the largest T^2 * QFI seen) is logged as
    a third-law violation; it is not an error.
    """
    if len(points) < 3:
        raise InsufficientDataError("third_law_check needs at least 3 points", points=len(points))
    pairs = [(p.T, p.qfi) if isinstance(p, ThermoPoint) else (float(p[0]), float(p[1])) for p in points]
    pairs.sort(key=lambda tq: tq[0])
    T = np.array([tq[0] for tq in pairs])
    y = T ** 2 * np.array([tq[1] for tq in pairs])
    slope, intercept = np.polyfit(T[:3], y[:3], 1)
    limit = float(intercept)
    scale = float(np.max(np.abs(y))) or 1.0
    if abs(limit) > violation_tol * scale:
        logger.warning("third law violated: T^2 * QFI does not vanish", limit=limit, slope=float(slope))
    return limit


# ============================================================================
# GRAND-CANONICAL MODE SYSTEMS
# ============================================================================


class Statistics(str, Enum):
    FERMION = "fermion"
    BOSON = "boson"


@dataclass(frozen=True)
class FixedMu:
    """Chemical potential held fixed"""
    mu: float


@dataclass(frozen=True)
class FixedNumber:
    """Mean particle number held fixed, mu solved per temperature"""
    N: float


MuPolicy = Union[FixedMu, FixedNumber]


@dataclass(frozen=True, eq=False)
class ModeSystem:
    """Non-interacting single-particle modes with statistics and a mu policy"""
    mode_energies: np.ndarray
    statistics: Statistics
    mu_policy: MuPolicy
    degeneracies: Optional[np.ndarray] = None

    def __post_init__(self):
        e = np.asarray(self.mode_energies, dtype=float).copy().ravel()
        if e.size == 0:
            raise ValidationError("mode list must not be empty")
        if not np.all(np.isfinite(e)):
            raise ValidationError("mode energies must be finite")
        g = (np.ones_like(e) if self.degeneracies is None
             else np.asarray(self.degeneracies, dtype=float).copy().ravel())
        if g.shape != e.shape or np.any(g <= 0):
            raise ValidationError("mode degeneracies must be positive and match the modes")
        stats = Statistics(self.statistics)
        policy = self.mu_policy
        if isinstance(policy, FixedMu):
            if stats is Statistics.BOSON and not policy.mu < e.min():
                raise DomainError("bosonic mu must lie below the lowest mode", mu=policy.mu, e_min=float(e.min()))
        elif isinstance(policy, FixedNumber):
            if not policy.N > 0:
                raise ValidationError("particle number must be positive", N=policy.N)
            if stats is Statistics.FERMION and not policy.N < g.sum():
                raise ValidationError("fermion number must stay below the number of states",
                                      N=policy.N, states=float(g.sum()))
        else:
            raise ValidationError("unknown mu policy", policy=repr(policy))
        e.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "mode_energies", e)
        object.__setattr__(self, "degeneracies", g)
        object.__setattr__(self, "statistics", stats)

    @property
    def e_min(self) -> float:
        return float(self.mode_energies.min())

    def with_policy(self, policy: MuPolicy) -> "ModeSystem":
        return ModeSystem(self.mode_energies, self.statistics, policy, self.degeneracies)


def occupations(ms: ModeSystem, T: float, mu: float) -> np.ndarray:
    """Mean occupation of every mode"""
    x = (ms.mode_energies - mu) / T
    if ms.statistics is Statistics.FERMION:
        return fermi(x)
    return bose(x)


def occupation_variance(ms: ModeSystem, T: float, mu: float) -> np.ndarray:
    """<dn^2> per mode: n(1-n) for fermions, n(1+n) for bosons"""
    half = (ms.mode_energies - mu) / (2.0 * T)
    if ms.statistics is Statistics.FERMION:
        return 0.25 * sech2(half)
    return 0.25 * csch2(half)


def mean_number(ms: ModeSystem, T: float, mu: float) -> float:
    return float(np.dot(ms.degeneracies, occupations(ms, T, mu)))


def mode_entropy(ms: ModeSystem, T: float, mu: float) -> float:
    """Entropy of the product of thermal mode states"""
    x = (ms.mode_energies - mu) / T
    if ms.statistics is Statistics.FERMION:
        n, hole = fermi(x), fermi(-x)
        s = -xlogy(n, n) - xlogy(hole, hole)
    else:
        n = bose(x)
        s = xlogy(1.0 + n, 1.0 + n) - xlogy(n, n)
    return float(np.dot(ms.degeneracies, s))


def _solve_fermion_mu(ms: ModeSystem, T: float, N: float) -> float:
    def excess(mu: float) -> float:
        return mean_number(ms, T, mu) - N

    lo = float(ms.mode_energies.min()) - 10.0 * T
    hi = float(ms.mode_energies.max()) + 10.0 * T
    for _ in range(60):
        if excess(lo) < 0 < excess(hi):
            break
        width = hi - lo
        lo, hi = lo - width, hi + width
    else:
        raise BracketError("could not bracket fermion chemical potential", T=T, N=N)
    return find_root(excess, Interval(lo, hi), Tolerance(rel=1e-13, abs=1e-13 * T, max_iter=200))


def _solve_boson_mu(ms: ModeSystem, T: float, N: float) -> float:
    # mu = e_min - T * exp(u); the ground occupation diverges as u -> -inf
    e_min = ms.e_min
    rel = (ms.mode_energies - e_min) / T

    def excess(u: float) -> float:
        return float(np.dot(ms.degeneracies, bose(rel + math.exp(u)))) - N

    lo, hi = -5.0, 5.0
    for _ in range(40):
        if excess(lo) > 0:
            break
        lo -= 5.0
    else:
        raise BracketError("could not bracket boson chemical potential from below", T=T, N=N)
    for _ in range(40):
        if excess(hi) < 0:
            break
        hi += 5.0
    else:
        raise BracketError("could not bracket boson chemical potential from above", T=T, N=N)
    u = find_root(excess, Interval(lo, hi), Tolerance(rel=1e-14, abs=1e-14, max_iter=200))
    return e_min - T * math.exp(u)


def solve_mu(ms: ModeSystem, T: float) -> float:
    """Chemical potential at temperature T under the system's mu policy"""
    _check_temperature(T)
    policy = ms.mu_policy
    if isinstance(policy, FixedMu):
        return policy.mu
    if ms.statistics is Statistics.FERMION:
        return _solve_fermion_mu(ms, T, policy.N)
    return _solve_boson_mu(ms, T, policy.N)


def mu_step(T: float) -> float:
    return max(1e-4 * T, 1e-9)


def mu_and_derivative(ms: ModeSystem, T: float, h: Optional[float] = None) -> Tuple[float, float]:
    """mu(T) and dmu/dT (central difference; zero for fixed mu)"""
    mu = solve_mu(ms, T)
    if isinstance(ms.mu_policy, FixedMu):
        return mu, 0.0
    h = mu_step(T) if h is None else h
    return mu, derivative(lambda t: solve_mu(ms, t), T, h)


def mode_sum_qfi(ms: ModeSystem, T: float, mu: float, dmu_dT: float = 0.0) -> float:
    """sum_k g_k (e_k - mu + T dmu/dT)^2 <dn_k^2> / T^4"""
    _check_temperature(T)
    a = ms.mode_energies - mu + T * dmu_dT
    return float(np.dot(ms.degeneracies, a * a * occupation_variance(ms, T, mu)) / T ** 4)


def grand_canonical_qfi(ms: ModeSystem, T: float) -> float:
    """Temperature QFI of a grand-canonical mode system"""
    mu, dmu = mu_and_derivative(ms, T)
    return mode_sum_qfi(ms, T, mu, dmu)


# ============================================================================
# MULTI-PARAMETER (T, mu) QFI MATRIX
# ============================================================================


@dataclass(frozen=True)
class QfiMatrix:
    """QFI matrix for joint estimation of (T, mu)"""
    f_TT: float
    f_Tmu: float
    f_mumu: float

    def as_array(self) -> np.ndarray:
        return np.array([[self.f_TT, self.f_Tmu], [self.f_Tmu, self.f_mumu]])

    @property
    def det(self) -> float:
        return self.f_TT * self.f_mumu - self.f_Tmu ** 2

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.as_array())

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.as_array())

    def to_dict(self) -> Dict[str, float]:
        return {"f_TT": self.f_TT, "f_Tmu": self.f_Tmu, "f_mumu": self.f_mumu}


def qfi_matrix(ms: ModeSystem, T: float, mu: float) -> QfiMatrix:
    """QFI matrix at fixed (T, mu) from closed-form occupation derivatives"""
    _check_temperature(T)
    if ms.statistics is Statistics.BOSON and not mu < ms.e_min:
        raise DomainError("bosonic mu must lie below the lowest mode", mu=mu, e_min=ms.e_min)
    a = ms.mode_energies - mu
    w = ms.degeneracies * occupation_variance(ms, T, mu)
    return QfiMatrix(
        f_TT=float(np.dot(w, a * a)) / T ** 4,
        f_Tmu=float(np.dot(w, a)) / T ** 3,
        f_mumu=float(np.sum(w)) / T ** 2,
    )


def cramer_rao_matrix(qm: QfiMatrix, nu: int = 1) -> np.ndarray:
    """Multi-parameter Cramer-Rao covariance bound (nu F)^-1"""
    if nu < 1:
        raise DomainError("nu must be at least 1", nu=nu)
    return qm.inverse() / nu


@dataclass(frozen=True)
class GrandCanonicalPoint:
    """Grand-canonical state at one temperature"""
    T: float
    mu: float
    dmu_dT: float
    mean_number: float
    dN_dT: float
    qfi: float
    matrix: QfiMatrix = field(repr=False)

    def to_dict(self) -> Dict[str, float]:
        out = {
            "T": self.T,
            "mu": self.mu,
            "dmu_dT": self.dmu_dT,
            "mean_number": self.mean_number,
            "dN_dT": self.dN_dT,
            "qfi": self.qfi,
        }
        out.update(self.matrix.to_dict())
        return out


def grand_canonical_point(ms: ModeSystem, T: float) -> GrandCanonicalPoint:
    """mu, dmu/dT, <N>, d<N>/dT at fixed mu, QFI and QFI matrix"""
    mu, dmu = mu_and_derivative(ms, T)
    qm = qfi_matrix(ms, T, mu)
    return GrandCanonicalPoint(
        T=T,
        mu=mu,
        dmu_dT=dmu,
        mean_number=mean_number(ms, T, mu),
        dN_dT=T * qm.f_Tmu,
        qfi=mode_sum_qfi(ms, T, mu, dmu),
        matrix=qm,
    )


def fixed_number_qfi_from_matrix(qm: QfiMatrix, dmu_dT: float, T: float) -> Dict[str, float]:
    """Fixed-N QFI rebuilt from the fixed-mu matrix

    chain:  f_TT + 2 mu' f_Tmu + mu'^2 f_mumu
    schur:  f_TT - mu'^2 f_mumu          (uses d<N>/dT = 0)
    number: f_TT + mu' (d<N>/dT at fixed mu) / T
    """
    dN_dT = T * qm.f_Tmu
    return {
        "chain": qm.f_TT + 2.0 * dmu_dT * qm.f_Tmu + dmu_dT ** 2 * qm.f_mumu,
        "schur": qm.f_TT - dmu_dT ** 2 * qm.f_mumu,
        "number": qm.f_TT + dmu_dT * dN_dT / T,
    }
