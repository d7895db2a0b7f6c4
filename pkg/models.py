# models.py - Physical models: gases, chains, two-site probe, BEC and Ising
"""
The six model families and their JSON configuration schema.

Every configuration travels as

    {"model": "photon" | "massive" | "tight_binding" | "two_site" | "bec" | "ising",
     "params": {...}}

with the `params` fields of the matching *Spec class below. Parse with
`parse_model_spec(data)`.

Each family exposes an exact finite-size evaluation plus the
thermodynamic-limit and low-temperature expressions it admits. Units are
k_B = hbar = 1 throughout.
"""

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Annotated, Any, Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator
from scipy.special import logit

from errors import CutoffError, DomainError
from numerics import (
    Interval, Tolerance, csch2, derivative, elliptic_KE, fermi, gamma_fn, polylog2,
    quad_adaptive, riemann_zeta, sech2, xcosh_minus_sinh,
)
from povm_fisher import HermitianOperator, OutcomeSpectrum, Povm, jordan_wigner_annihilators
from thermal_core import (
    DiscreteSpectrum, FixedMu, FixedNumber, ModeSystem, MuPolicy, Statistics, ThermoPoint,
    boltzmann_weights, canonical_point, grand_canonical_qfi, mode_sum_qfi, solve_mu,
)

logger = structlog.get_logger(__name__)

# Highest included single-particle energy must exceed the relevant level by this many T
CUTOFF_FACTOR = 40.0
MAX_GRID_POINTS = 20_000_000
STRONG_COUPLING_MAX_T = 0.3
LINEARIZED_MAX_T = 0.3
ISING_MAX_SITES = 24
ISING_BLOCK = 1 << 18

# ============================================================================
# CONFIGURATION SCHEMA
# ============================================================================


class Evaluation(str, Enum):
    FINITE = "finite"
    THERMODYNAMIC = "thermodynamic"
    THERMODYNAMIC_INTEGRAL = "thermodynamic_integral"
    THERMODYNAMIC_2D_CLOSED = "thermodynamic_2d_closed"
    ASYMPTOTIC = "asymptotic"
    LINEARIZED_THERMO = "linearized_thermo"


class Coupling(str, Enum):
    STRONG = "strong"
    WEAK = "weak"


class CovarianceMode(str, Enum):
    EXACT_INTEGRAL = "exact_integral"
    CLOSED_FORM = "closed_form"


class _Spec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class PhotonGasSpec(_Spec):
    """Single-polarization photons in a hard-wall box of side L"""
    d: Literal[1, 2, 3] = 1
    L: float = Field(1.0, gt=0)
    c: float = Field(1.0, gt=0)
    n_max: Optional[int] = Field(None, ge=1)


class FixedMuPolicy(_Spec):
    kind: Literal["fixed"] = "fixed"
    mu: float = 0.0


class FixedNumberPolicy(_Spec):
    kind: Literal["fixed_number"] = "fixed_number"
    N: float = Field(gt=0)


MuPolicySpec = Annotated[Union[FixedMuPolicy, FixedNumberPolicy], Field(discriminator="kind")]


class MassiveGasSpec(_Spec):
    """Free massive fermions or bosons in a hard-wall box, e_k = k^2 / 2m"""
    d: Literal[1, 2, 3] = 3
    L: float = Field(1.0, gt=0)
    m: float = Field(1.0, gt=0)
    statistics: Statistics = Statistics.FERMION
    mu_policy: MuPolicySpec = Field(default_factory=FixedMuPolicy)
    n_max: Optional[int] = Field(None, ge=1)

    def policy(self) -> MuPolicy:
        if isinstance(self.mu_policy, FixedMuPolicy):
            return FixedMu(self.mu_policy.mu)
        return FixedNumber(self.mu_policy.N)


class TightBindingSpec(_Spec):
    """Fermionic ring of N sites, e_k = eps - 2t cos(2 pi k / N)"""
    N: int = Field(500, ge=4)
    t: float = Field(1.0, gt=0)
    eps: float = 0.0
    mu: float = 0.0

    @field_validator("N")
    @classmethod
    def _even(cls, v: int) -> int:
        if v % 2:
            raise ValueError("N must be even")
        return v


class TwoSiteSpec(_Spec):
    """Two accessible sites of an infinite half-filled chain"""
    t: float = Field(1.0, gt=0)
    coupling: Coupling = Coupling.STRONG
    covariance_mode: CovarianceMode = CovarianceMode.CLOSED_FORM


class BoseGasSpec(_Spec):
    """N free bosons in a 3D hard-wall box"""
    N: int = Field(100, ge=2)
    L: float = Field(1.0, gt=0)
    m: float = Field(1.0, gt=0)
    n_max: Optional[int] = Field(None, ge=1)


class IsingSpec(_Spec):
    """Square-lattice Ising model on an Lx x Ly torus"""
    Lx: int = Field(4, ge=1)
    Ly: int = Field(4, ge=1)
    J: float = 1.0
    periodic: Literal[True] = True

    @field_validator("J")
    @classmethod
    def _nonzero(cls, v: float) -> float:
        if v == 0:
            raise ValueError("J must be nonzero")
        return v

    @property
    def sites(self) -> int:
        return self.Lx * self.Ly


class PhotonModel(_Spec):
    model: Literal["photon"] = "photon"
    params: PhotonGasSpec = Field(default_factory=PhotonGasSpec)


class MassiveModel(_Spec):
    model: Literal["massive"] = "massive"
    params: MassiveGasSpec = Field(default_factory=MassiveGasSpec)


class TightBindingModel(_Spec):
    model: Literal["tight_binding"] = "tight_binding"
    params: TightBindingSpec = Field(default_factory=TightBindingSpec)


class TwoSiteModel(_Spec):
    model: Literal["two_site"] = "two_site"
    params: TwoSiteSpec = Field(default_factory=TwoSiteSpec)


class BecModel(_Spec):
    model: Literal["bec"] = "bec"
    params: BoseGasSpec = Field(default_factory=BoseGasSpec)


class IsingModel(_Spec):
    model: Literal["ising"] = "ising"
    params: IsingSpec = Field(default_factory=IsingSpec)


ModelSpec = Annotated[
    Union[PhotonModel, MassiveModel, TightBindingModel, TwoSiteModel, BecModel, IsingModel],
    Field(discriminator="model"),
]

_MODEL_ADAPTER = TypeAdapter(ModelSpec)


def parse_model_spec(data: Any):
    """Validate a {"model": ..., "params": {...}} mapping into a model config"""
    return _MODEL_ADAPTER.validate_python(data)


def dump_model_spec(spec) -> Dict[str, Any]:
    return spec.model_dump(mode="json")


# ============================================================================
# GAPS AND LOW-TEMPERATURE OVERLAYS
# ============================================================================


@dataclass(frozen=True)
class GapInfo:
    """Lowest excitation energy and its relative degeneracy g1/g0"""
    gap: float
    degeneracy: float

    def to_dict(self) -> Dict[str, float]:
        return {"gap": self.gap, "degeneracy": self.degeneracy}


def qfi_low_temperature(info: GapInfo, T: float) -> float:
    """g Delta^2 exp(-Delta/T) / T^4"""
    if not T > 0:
        raise DomainError("temperature must be positive", T=T)
    return info.degeneracy * info.gap ** 2 * math.exp(-info.gap / T) / T ** 4


def spectrum_gap(spec: DiscreteSpectrum) -> GapInfo:
    if len(spec) < 2:
        raise DomainError("a single level has no gap")
    return GapInfo(gap=float(spec.energies[1] - spec.energies[0]),
                   degeneracy=float(spec.degeneracies[1]) / float(spec.degeneracies[0]))


def mode_gap(ms: ModeSystem, mu: float) -> GapInfo:
    """Smallest nonzero |e_k - mu| and the number of modes at that distance

    Modes sitting exactly at mu carry no temperature information and are skipped.
    """
    x = np.abs(ms.mode_energies - mu)
    tol = 1e-9 * max(1.0, float(x.max()))
    active = x > tol
    if not active.any():
        raise DomainError("every mode sits at the chemical potential", mu=mu)
    gap = float(x[active].min())
    sel = active & (np.abs(x - gap) <= tol)
    return GapInfo(gap=gap, degeneracy=float(ms.degeneracies[sel].sum()))


# ============================================================================
# HARD-WALL MODE GRIDS
# ============================================================================


@lru_cache(maxsize=64)
def _shell_counts(d: int, n_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct s = |n|^2 <= n_max^2 over n_i >= 1, with multiplicities"""
    limit = n_max * n_max
    axis = np.arange(1, n_max + 1, dtype=np.int64) ** 2
    s = axis
    for _ in range(d - 1):
        s = np.add.outer(s, axis).ravel()
        s = s[s <= limit]
    counts = np.bincount(s[s <= limit])
    values = np.nonzero(counts)[0]
    mult = counts[values]
    values.flags.writeable = False
    mult.flags.writeable = False
    return values, mult


def _grid_n_max(requested: Optional[int], needed: int, d: int, T: float) -> int:
    """Per-axis cutoff honoring the 40 T adequacy rule"""
    needed = max(needed, math.ceil(math.sqrt(d)) + 1)
    if requested is not None:
        if requested < needed:
            raise CutoffError("mode cutoff too low for this temperature",
                              n_max=requested, required=needed, T=T)
        needed = requested
    if needed ** d > MAX_GRID_POINTS:
        raise CutoffError("mode grid too large; use a thermodynamic evaluation",
                          n_max=needed, d=d, T=T)
    return needed


# ============================================================================
# PHOTON GAS
# ============================================================================

PHOTON_ETA = {1: math.pi / 3.0, 2: 3.0 * riemann_zeta(3.0) / math.pi, 3: 2.0 * math.pi ** 2 / 15.0}


def photon_modes(spec: PhotonGasSpec, T: float) -> ModeSystem:
    """Modes e = c pi |n| / L with |n| below the cutoff for T"""
    unit = spec.c * math.pi / spec.L
    n_max = _grid_n_max(spec.n_max, math.ceil(CUTOFF_FACTOR * T / unit), spec.d, T)
    s, g = _shell_counts(spec.d, n_max)
    return ModeSystem(unit * np.sqrt(s), Statistics.BOSON, FixedMu(0.0), g)


def photon_qfi(spec: PhotonGasSpec, T: float, mode: Evaluation = Evaluation.FINITE) -> float:
    """Temperature QFI of the photon gas"""
    if not T > 0:
        raise DomainError("temperature must be positive", T=T)
    mode = Evaluation(mode)
    if mode is Evaluation.FINITE:
        return mode_sum_qfi(photon_modes(spec, T), T, 0.0, 0.0)
    if mode is Evaluation.THERMODYNAMIC:
        return PHOTON_ETA[spec.d] * (spec.L / spec.c) ** spec.d * T ** (spec.d - 2)
    raise DomainError("photon_qfi supports finite or thermodynamic", mode=mode.value)


def photon_gap(spec: PhotonGasSpec) -> GapInfo:
    unit = spec.c * math.pi / spec.L
    s, g = _shell_counts(spec.d, math.ceil(math.sqrt(spec.d)) + 1)
    return GapInfo(gap=unit * math.sqrt(float(s[0])), degeneracy=float(g[0]))


# ============================================================================
# MASSIVE GAS
# ============================================================================

# c_d 2^d where c_d k^{d-1} dk is the hard-wall mode density in units of (L/pi)^d
_MODE_DENSITY = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


def _massive_unit(spec: MassiveGasSpec) -> float:
    return math.pi ** 2 / (2.0 * spec.m * spec.L ** 2)


def _fermi_energy(spec: MassiveGasSpec, N: float) -> float:
    """Energy of the highest level needed to hold N fermions"""
    n = 2
    while True:
        s, g = _shell_counts(spec.d, n)
        filled = np.cumsum(g)
        if filled[-1] > N:
            return _massive_unit(spec) * float(s[np.searchsorted(filled, N, side="right")])
        n = int(n * 1.5) + 1


def massive_modes(spec: MassiveGasSpec, T: float) -> ModeSystem:
    """Hard-wall modes with the cutoff placed 40 T above the occupied region"""
    unit = _massive_unit(spec)
    policy = spec.policy()
    ground = unit * spec.d
    if isinstance(policy, FixedMu):
        level = max(policy.mu, ground)
    elif spec.statistics is Statistics.FERMION:
        level = _fermi_energy(spec, policy.N)
    else:
        level = ground
    e_cut = level + CUTOFF_FACTOR * T
    n_max = _grid_n_max(spec.n_max, math.ceil(math.sqrt(e_cut / unit)), spec.d, T)
    s, g = _shell_counts(spec.d, n_max)
    return ModeSystem(unit * s.astype(float), spec.statistics, policy, g)


def _thermo_prefactor(spec: MassiveGasSpec, T: float) -> float:
    return (_MODE_DENSITY[spec.d] * (math.sqrt(spec.m) * spec.L / math.pi) ** spec.d
            * T ** (spec.d / 2.0 - 2.0))


def _fixed_mu(spec: MassiveGasSpec) -> float:
    if not isinstance(spec.mu_policy, FixedMuPolicy):
        raise DomainError("thermodynamic evaluations need a fixed chemical potential")
    mu = spec.mu_policy.mu
    if spec.statistics is Statistics.BOSON and mu > 0:
        raise DomainError("bosonic chemical potential must not be positive in the continuum", mu=mu)
    return mu


def _massive_integral(spec: MassiveGasSpec, T: float, mu: float, dmu_dT: float) -> float:
    a = mu / (2.0 * T)
    c = 0.5 * dmu_dT
    d = spec.d
    weight = sech2 if spec.statistics is Statistics.FERMION else csch2

    def integrand(z: float) -> float:
        u = z * z - a
        return z ** (d - 1) * (u + c) ** 2 * float(weight(u))

    tol = Tolerance(rel=1e-11, abs=0.0, max_iter=200)
    split = math.sqrt(a) if a > 0 else 0.0
    total = quad_adaptive(integrand, Interval(split, math.inf), tol)
    if split > 0:
        total += quad_adaptive(integrand, Interval(0.0, split), tol)
    return _thermo_prefactor(spec, T) * total


def _massive_closed_2d(spec: MassiveGasSpec, T: float, mu: float, dmu_dT: float) -> float:
    if spec.d != 2:
        raise DomainError("closed-form thermodynamic limit exists only for d = 2", d=spec.d)
    a = mu / (2.0 * T)
    b = 2.0 * a
    c = 0.5 * dmu_dT
    if b > 700.0:
        raise DomainError("closed form overflows at this mu/T; use the asymptotic form", mu_over_T=b)
    if spec.statistics is Statistics.FERMION:
        tanh_a = math.tanh(a)
        bracket = (-polylog2(-math.exp(b)) - b * np.logaddexp(0.0, b) + a * a * (1.0 + tanh_a)
                   + 2.0 * c * (np.logaddexp(a, -a) - a * tanh_a)
                   + c * c * (1.0 + tanh_a))
    else:
        alpha = -a
        if alpha == 0.0:
            if c != 0.0:
                raise DomainError("bosonic closed form diverges at mu = 0 with dmu/dT != 0")
            bracket = math.pi ** 2 / 6.0
        else:
            q = math.exp(-2.0 * alpha)
            log1mq = math.log1p(-q)
            coth_minus_1 = 2.0 / math.expm1(2.0 * alpha)
            bracket = (polylog2(q) - 2.0 * alpha * log1mq + alpha * alpha * coth_minus_1
                       + 2.0 * c * (alpha * (1.0 + coth_minus_1) - alpha - log1mq)
                       + c * c * coth_minus_1)
    return spec.m * spec.L ** 2 / (math.pi * T) * float(bracket)


def _massive_asymptotic(spec: MassiveGasSpec, T: float, mu: float) -> float:
    d = spec.d
    h = d / 2.0
    if mu == 0.0:
        value = 0.5 * _thermo_prefactor(spec, T) * 2.0 ** (-h) * gamma_fn(h + 2.0) * riemann_zeta(h + 1.0)
        if spec.statistics is Statistics.FERMION:
            value *= 1.0 - 2.0 ** (-h)
        return value
    if mu < 0.0:
        alpha = -mu / (2.0 * T)
        moments = (gamma_fn(h + 2.0) / 2.0 ** (h + 3.0)
                   + 2.0 * alpha * gamma_fn(h + 1.0) / 2.0 ** (h + 2.0)
                   + alpha * alpha * gamma_fn(h) / 2.0 ** (h + 1.0))
        return _thermo_prefactor(spec, T) * 4.0 * math.exp(mu / T) * moments
    if spec.statistics is Statistics.BOSON:
        raise DomainError("no degenerate asymptote for bosons with mu > 0", mu=mu)
    # Sommerfeld: density of states at mu times pi^2 / (3 T)
    dos = (_MODE_DENSITY[d] / 2.0 ** d) * spec.m * (2.0 * spec.m * mu) ** (h - 1.0) * (spec.L / math.pi) ** d
    return math.pi ** 2 / 3.0 * dos / T


def massive_gas_qfi(spec: MassiveGasSpec, T: float, mode: Evaluation = Evaluation.FINITE,
                    dmu_dT: float = 0.0) -> float:
    """Temperature QFI of the massive gas

    `dmu_dT` feeds the thermodynamic integral and 2D closed forms; the
    asymptotic forms assume a temperature-independent mu.
    """
    if not T > 0:
        raise DomainError("temperature must be positive", T=T)
    mode = Evaluation(mode)
    if mode is Evaluation.FINITE:
        return grand_canonical_qfi(massive_modes(spec, T), T)
    mu = _fixed_mu(spec)
    if mode is Evaluation.THERMODYNAMIC_INTEGRAL:
        return _massive_integral(spec, T, mu, dmu_dT)
    if mode is Evaluation.THERMODYNAMIC_2D_CLOSED:
        return _massive_closed_2d(spec, T, mu, dmu_dT)
    if mode is Evaluation.ASYMPTOTIC:
        return _massive_asymptotic(spec, T, mu)
    raise DomainError("unsupported evaluation for the massive gas", mode=mode.value)


def massive_gap(spec: MassiveGasSpec, T: Optional[float] = None) -> GapInfo:
    """Gap relative to mu; fixed-number systems need T to solve for mu"""
    sample_T = T if T is not None else 1e-3 * _massive_unit(spec)
    ms = massive_modes(spec, sample_T)
    if isinstance(ms.mu_policy, FixedMu):
        mu = ms.mu_policy.mu
    elif T is None:
        raise DomainError("fixed-number gap needs a temperature")
    else:
        mu = solve_mu(ms, T)
    return mode_gap(ms, mu)


# ============================================================================
# TIGHT-BINDING CHAIN
# ============================================================================


def tb_modes(spec: TightBindingSpec) -> ModeSystem:
    k = np.arange(1, spec.N + 1)
    energies = spec.eps - 2.0 * spec.t * np.cos(2.0 * math.pi * k / spec.N)
    return ModeSystem(energies, Statistics.FERMION, FixedMu(spec.mu))


def tb_qfi(spec: TightBindingSpec, T: float, mode: Evaluation = Evaluation.FINITE) -> float:
    """Temperature QFI of the ring at fixed mu"""
    if not T > 0:
        raise DomainError("temperature must be positive", T=T)
    mode = Evaluation(mode)
    if mode is Evaluation.FINITE:
        return mode_sum_qfi(tb_modes(spec), T, spec.mu, 0.0)
    if mode is Evaluation.LINEARIZED_THERMO:
        if abs(spec.mu - spec.eps) > 1e-12 * max(1.0, abs(spec.eps)):
            raise DomainError("linearized spectrum assumes half filling (mu = eps)",
                              mu=spec.mu, eps=spec.eps)
        if T > LINEARIZED_MAX_T * spec.t:
            logger.warning("linearized spectrum used outside T << t", T=T, t=spec.t)
        return math.pi * spec.N / (6.0 * spec.t * T)
    raise DomainError("tb_qfi supports finite or linearized_thermo", mode=mode.value)


def tb_spectrum(spec: TightBindingSpec) -> Dict[str, np.ndarray]:
    """Exact e_k - mu next to its linearization 2 t kappa around the Fermi points"""
    k = np.arange(1, spec.N + 1)
    q = 2.0 * math.pi * k / spec.N
    kappa = np.where(k <= spec.N // 2, q - math.pi / 2.0, 3.0 * math.pi / 2.0 - q)
    exact = spec.eps - 2.0 * spec.t * np.cos(q) - spec.mu
    return {"k": k, "kappa": kappa, "exact": exact, "linear": 2.0 * spec.t * kappa}


def tb_gap(spec: TightBindingSpec) -> GapInfo:
    return mode_gap(tb_modes(spec), spec.mu)


# ============================================================================
# TWO ACCESSIBLE SITES
# ============================================================================

TWO_SITE_LABELS = ("0", "+", "-", "2")


def _check_strong(spec: TwoSiteSpec, T: float) -> None:
    if not T > 0:
        raise DomainError("temperature must be positive", T=T)
    if spec.coupling is Coupling.STRONG and T > STRONG_COUPLING_MAX_T * spec.t:
        logger.warning("strong-coupling reduced state used outside T << t", T=T, t=spec.t)


def _exact_covariance(t: float, T: float) -> Tuple[float, float]:
    """Integral form of <c1+ c2> over the linearized band, with its T derivative"""
    def value(kappa: float) -> float:
        return -math.sin(kappa) * float(fermi(2.0 * t * kappa / T))

    def slope(kappa: float) -> float:
        y = 2.0 * t * kappa / T
        return -math.sin(kappa) * 0.25 * float(sech2(0.5 * y)) * y / T

    tol = Tolerance(rel=1e-12, abs=1e-15, max_iter=200)
    halves = (Interval(-math.pi / 2.0, 0.0), Interval(0.0, math.pi / 2.0))
    C = sum(quad_adaptive(value, iv, tol) for iv in halves) / math.pi
    dC = sum(quad_adaptive(slope, iv, tol) for iv in halves) / math.pi
    return C, dC


def _covariance_and_slope(spec: TwoSiteSpec, T: float) -> Tuple[float, float]:
    t = spec.t
    if spec.coupling is Coupling.WEAK:
        half = t / (2.0 * T)
        return 0.5 * math.tanh(half), -0.25 * t * float(sech2(half)) / T ** 2
    if spec.covariance_mode is CovarianceMode.EXACT_INTEGRAL:
        return _exact_covariance(t, T)
    x = math.pi * T / (2.0 * t)
    s = t * math.sinh(x)
    G = 2.0 * t * xcosh_minus_sinh(x)
    return T / (2.0 * s), -G / (4.0 * s * s)


def two_site_covariance(spec: TwoSiteSpec, T: float) -> np.ndarray:
    """2x2 correlation matrix <c_j+ c_j'> of the two sites"""
    _check_strong(spec, T)
    C, _ = _covariance_and_slope(spec, T)
    return np.array([[0.5, C], [C, 0.5]])


def _weak_occupations(spec: TwoSiteSpec, T: float) -> Tuple[float, float]:
    # 1/2 +- C with C = tanh(t/2T)/2, free of the cancellation in 1/2 - C
    x = spec.t / T
    return float(fermi(-x)), float(fermi(x))


def two_site_occupations(spec: TwoSiteSpec, T: float) -> Tuple[float, float]:
    """Occupations of the modes c_pm = (c1 +- c2)/sqrt 2"""
    if spec.coupling is Coupling.WEAK:
        return _weak_occupations(spec, T)
    C, _ = _covariance_and_slope(spec, T)
    return 0.5 + C, 0.5 - C


def _outcome_probs(spec: TwoSiteSpec, T: float, C: float) -> np.ndarray:
    if spec.coupling is Coupling.WEAK:
        up, down = _weak_occupations(spec, T)
        return np.array([up * down, up * up, down * down, up * down])
    mixed = 0.25 - C * C
    return np.array([mixed, (0.5 + C) ** 2, (0.5 - C) ** 2, mixed])


def two_site_qfi(spec: TwoSiteSpec, T: float) -> float:
    """QFI of the two-site reduced state"""
    _check_strong(spec, T)
    t = spec.t
    if spec.coupling is Coupling.WEAK:
        return t * t * float(sech2(t / (2.0 * T))) / (2.0 * T ** 4)
    if spec.covariance_mode is CovarianceMode.CLOSED_FORM:
        x = math.pi * T / (2.0 * t)
        s = t * math.sinh(x)
        G = 2.0 * t * xcosh_minus_sinh(x)
        return G * G / (2.0 * s * s * (s * s - T * T))
    C, dC = _exact_covariance(t, T)
    return 2.0 * dC * dC / (0.25 - C * C)


def two_site_probabilities(spec: TwoSiteSpec) -> Callable[[float], np.ndarray]:
    """p(T) over the outcomes (0, +, -, 2)"""
    def probs(T: float) -> np.ndarray:
        C, _ = _covariance_and_slope(spec, T)
        return _outcome_probs(spec, T, C)
    return probs


def two_site_outcome_data(spec: TwoSiteSpec, T: float) -> OutcomeSpectrum:
    """Probabilities and energies of the mode-occupation measurement

    Weak coupling has the fixed energies (0, -t, +t, 0). Under strong coupling
    the energies are E_m = T^2 d ln p_m / dT, which fixes <E> = 0.
    """
    _check_strong(spec, T)
    C, dC = _covariance_and_slope(spec, T)
    probs = _outcome_probs(spec, T, C)
    if spec.coupling is Coupling.WEAK:
        energies = np.array([0.0, -spec.t, spec.t, 0.0])
    else:
        mixed = -2.0 * C * dC / (0.25 - C * C)
        energies = T * T * np.array([mixed, 2.0 * dC / (0.5 + C), -2.0 * dC / (0.5 - C), mixed])
    return OutcomeSpectrum.from_outcomes(probs, energies, T, TWO_SITE_LABELS)


def _two_site_operators() -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    c1, c2 = jordan_wigner_annihilators(2)
    cp = (c1 + c2) / math.sqrt(2.0)
    cm = (c1 - c2) / math.sqrt(2.0)
    n_p = cp.conj().T @ cp
    n_m = cm.conj().T @ cm
    return n_p, n_m, np.eye(4)


def _hermitian(a: np.ndarray) -> HermitianOperator:
    return HermitianOperator(0.5 * (a + a.conj().T))


def two_site_povm() -> Povm:
    """Occupation measurement of the modes c_pm on the 4-dim Fock space"""
    n_p, n_m, one = _two_site_operators()
    elements = (
        _hermitian((one - n_p) @ (one - n_m)),
        _hermitian(n_p @ (one - n_m)),
        _hermitian(n_m @ (one - n_p)),
        _hermitian(n_p @ n_m),
    )
    return Povm(elements, TWO_SITE_LABELS)


def two_site_number_operator() -> HermitianOperator:
    n_p, n_m, _ = _two_site_operators()
    return _hermitian(n_p + n_m)


def two_site_hamiltonian(spec: TwoSiteSpec, T: float) -> HermitianOperator:
    """Effective H = e_+ n_+ + e_- n_- whose Gibbs state is the reduced state at T"""
    n_p, n_m, _ = _two_site_operators()
    if spec.coupling is Coupling.WEAK:
        e_p, e_m = -spec.t, spec.t
    else:
        _check_strong(spec, T)
        occ_p, occ_m = two_site_occupations(spec, T)
        e_p, e_m = -T * float(logit(occ_p)), -T * float(logit(occ_m))
    return _hermitian(e_p * n_p + e_m * n_m)


def two_site_gap(spec: TwoSiteSpec) -> GapInfo:
    if spec.coupling is not Coupling.WEAK:
        raise DomainError("the strong-coupling reduced state has no fixed gap")
    return GapInfo(gap=spec.t, degeneracy=2.0)


# ============================================================================
# BOSE-EINSTEIN CONDENSATION
# ============================================================================


def bec_critical_temperature(spec: BoseGasSpec) -> float:
    density = spec.N / spec.L ** 3
    return 2.0 * math.pi / spec.m * (density / riemann_zeta(1.5)) ** (2.0 / 3.0)


def bec_modes(spec: BoseGasSpec, T: float) -> ModeSystem:
    """3D hard-wall grid at fixed particle number, cut off 40 T above the ground mode"""
    unit = math.pi ** 2 / (2.0 * spec.m * spec.L ** 2)
    e_cut = 3.0 * unit + CUTOFF_FACTOR * T
    n_max = _grid_n_max(spec.n_max, math.ceil(math.sqrt(e_cut / unit)), 3, T)
    s, g = _shell_counts(3, n_max)
    return ModeSystem(unit * s.astype(float), Statistics.BOSON, FixedNumber(float(spec.N)), g)


def _bec_slope(ms: ModeSystem, T: float) -> float:
    """dmu/dT, halving the step until two estimates agree to 1e-3"""
    def mu_at(t: float) -> float:
        return solve_mu(ms, t)

    h = 1e-2 * T
    previous = derivative(mu_at, T, h)
    while h > 1e-7 * T:
        h *= 0.5
        current = derivative(mu_at, T, h)
        if abs(current - previous) <= 1e-3 * max(abs(current), 1e-300):
            return current
        previous = current
    logger.warning("dmu/dT step refinement hit its floor", T=T, step=h)
    return previous


def bec_mu(spec: BoseGasSpec, T: float) -> Tuple[float, float]:
    """mu(T) and dmu/dT at fixed N over the discrete mode grid"""
    if not T > 0:
        raise DomainError("temperature must be positive", T=T)
    ms = bec_modes(spec, 1.05 * T)
    return solve_mu(ms, T), _bec_slope(ms, T)


def bec_qfi(spec: BoseGasSpec, T: float) -> float:
    """Finite-N QFI with the temperature-dependent chemical potential"""
    ms = bec_modes(spec, 1.05 * T)
    mu = solve_mu(ms, T)
    return mode_sum_qfi(ms, T, mu, _bec_slope(ms, T))


def bec_heat_capacity_thermo(spec: BoseGasSpec, T: float) -> float:
    """C / N of the ideal Bose gas in the thermodynamic limit (approximate above T_c)"""
    if not T > 0:
        raise DomainError("temperature must be positive", T=T)
    Tc = bec_critical_temperature(spec)
    if T <= Tc:
        return 3.75 * riemann_zeta(2.5) / riemann_zeta(1.5) * (T / Tc) ** 1.5
    return 1.5 * (1.0 + riemann_zeta(1.5) / 2.0 ** 3.5 * (Tc / T) ** 1.5)


def bec_qfi_thermo(spec: BoseGasSpec, T: float) -> float:
    return spec.N * bec_heat_capacity_thermo(spec, T) / T ** 2


def bec_gap(spec: BoseGasSpec) -> GapInfo:
    """First single-particle excitation above the condensate mode"""
    ms = bec_modes(spec, 1.0)
    e = ms.mode_energies
    return GapInfo(gap=float(e[1] - e[0]), degeneracy=float(ms.degeneracies[1]))


# ============================================================================
# ISING MODEL
# ============================================================================


def _ising_bonds(Lx: int, Ly: int) -> List[Tuple[int, int]]:
    """Right and down neighbor of every site, periodic in both directions

    Always 2 Lx Ly bonds. A side of length 2 wraps onto the same neighbor, so
    each bond along it is listed twice; a side of length 1 yields self-bonds
    that only shift the energy by a constant.
    """
    bonds = []
    for y in range(Ly):
        for x in range(Lx):
            i = y * Lx + x
            bonds.append((i, y * Lx + (x + 1) % Lx))
            bonds.append((i, ((y + 1) % Ly) * Lx + x))
    return bonds


@lru_cache(maxsize=16)
def _unequal_bond_counts(Lx: int, Ly: int) -> Tuple[int, ...]:
    """Histogram of configurations by number of antiparallel bonds"""
    n = Lx * Ly
    bonds = _ising_bonds(Lx, Ly)
    counts = np.zeros(len(bonds) + 1, dtype=np.int64)
    total = 1 << n
    for start in range(0, total, ISING_BLOCK):
        idx = np.arange(start, min(start + ISING_BLOCK, total), dtype=np.int64)
        unequal = np.zeros(idx.size, dtype=np.int64)
        for i, j in bonds:
            unequal += ((idx >> i) ^ (idx >> j)) & 1
        counts += np.bincount(unequal, minlength=len(bonds) + 1)
    return tuple(int(c) for c in counts)


def ising_histogram(spec: IsingSpec) -> DiscreteSpectrum:
    """Exact energy levels of H = -J sum sigma_i sigma_j by full enumeration"""
    if spec.sites > ISING_MAX_SITES:
        raise DomainError("lattice exceeds the enumeration cap", sites=spec.sites, cap=ISING_MAX_SITES)
    counts = _unequal_bond_counts(spec.Lx, spec.Ly)
    n_bonds = len(counts) - 1
    levels = [(-spec.J * (n_bonds - 2 * k), c) for k, c in enumerate(counts) if c > 0]
    return DiscreteSpectrum.from_levels(levels)


def ising_qfi_bruteforce(spec: IsingSpec, T: float) -> ThermoPoint:
    """Canonical QFI from the enumerated histogram

    Bonds follow the right/down periodic convention: on a 2 x 2 torus every
    neighbor pair is counted twice, giving levels -8J, 0, 8J.
    """
    return canonical_point(ising_histogram(spec), T)


def ising_gap(spec: IsingSpec) -> GapInfo:
    return spectrum_gap(ising_histogram(spec))


def ising_critical_temperature(J: float) -> float:
    return 2.0 * abs(J) / math.log(1.0 + math.sqrt(2.0))


def _signed_logsumexp(log_abs: np.ndarray, signs: np.ndarray) -> float:
    top = float(np.max(log_abs))
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.sum(signs * np.exp(log_abs - top))))


def ising_log_partition_kaufman(L: int, T: float, J: float = 1.0) -> float:
    """Exact ln Z of the L x L torus from the four-term product formula"""
    if L < 2:
        raise DomainError("lattice side must be at least 2", L=L)
    if not T > 0:
        raise DomainError("temperature must be positive", T=T)
    if J < 0 and L % 2:
        raise DomainError("antiferromagnetic torus with odd side is frustrated", L=L)
    K = abs(J) / T
    K_dual = math.atanh(math.exp(-2.0 * K))
    r = np.arange(1, 2 * L + 1, dtype=float)
    cosh_gamma = (math.cosh(2.0 * K_dual) * math.cosh(2.0 * K)
                  - math.sinh(2.0 * K_dual) * math.sinh(2.0 * K) * np.cos(r * math.pi / L))
    gamma = np.arccosh(np.maximum(cosh_gamma, 1.0))
    # gamma_0 keeps its sign: positive below T_c
    gamma[2 * L - 1] = 2.0 * K - 2.0 * K_dual
    even, odd = gamma[1::2], gamma[0::2]
    half = L / 2.0

    log_t1 = float(np.sum(np.log(2.0 * np.cosh(half * even))))
    s_even = np.sinh(half * even)
    sign_t2 = float(np.prod(np.sign(s_even)))
    with np.errstate(divide="ignore"):
        log_t2 = float(np.sum(np.log(2.0 * np.abs(s_even))))
        log_t3 = float(np.sum(np.log(2.0 * np.cosh(half * odd))))
        log_t4 = float(np.sum(np.log(2.0 * np.sinh(half * odd))))
    bracket = _signed_logsumexp(np.array([log_t1, log_t2, log_t3, log_t4]),
                                np.array([1.0, sign_t2, 1.0, 1.0]))
    return -math.log(2.0) + 0.5 * L * L * math.log(2.0 * math.sinh(2.0 * K)) + bracket


def ising_heat_capacity_onsager(J: float, T: float) -> float:
    """Heat capacity per spin of the infinite square lattice; +inf exactly at T_c"""
    if not T > 0:
        raise DomainError("temperature must be positive", T=T)
    if J == 0:
        raise DomainError("J must be nonzero")
    K = abs(J) / T
    q = math.exp(-2.0 * K)
    tanh2 = math.tanh(2.0 * K)
    sech2k = 2.0 * q / (1.0 + q * q)
    z = 2.0 * tanh2 * sech2k
    one_minus_z = (tanh2 - sech2k) ** 2
    complement = one_minus_z * (1.0 + z)
    if complement <= 0.0:
        return math.inf
    K1, E1 = elliptic_KE(min(z, 1.0), complement=complement)
    t2 = tanh2 * tanh2
    prefactor = 4.0 / math.pi * (K / tanh2) ** 2
    bracket = K1 - E1 - (1.0 - t2) * (math.pi / 2.0 + (2.0 * t2 - 1.0) * K1)
    return prefactor * bracket


def ising_qfi_onsager(spec: IsingSpec, T: float) -> float:
    """Thermodynamic-limit QFI for a lattice of spec.sites spins"""
    return spec.sites * ising_heat_capacity_onsager(spec.J, T) / T ** 2


def ising_probabilities(spec: IsingSpec) -> Callable[[float], np.ndarray]:
    """Energy-level probabilities p(T) of the lattice, one outcome per level"""
    levels = ising_histogram(spec)
    shifted = levels.energies - levels.energies[0]
    log_g = np.log(levels.degeneracies.astype(float))

    def probs(T: float) -> np.ndarray:
        w = log_g - shifted / T
        w = np.exp(w - w.max())
        return w / w.sum()

    return probs


def ising_outcome_data(spec: IsingSpec, T: float) -> OutcomeSpectrum:
    """Energy measurement on the lattice, one outcome per level labelled by its energy"""
    levels = ising_histogram(spec)
    p, _ = boltzmann_weights(levels, T)
    labels = [f"{e:g}" for e in levels.energies]
    return OutcomeSpectrum.from_outcomes(p, levels.energies, T, labels)
