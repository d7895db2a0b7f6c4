# estimator.py - Cramér-Rao verification by multinomial sampling and maximum likelihood
"""
A finite-outcome measurement repeated nu times on identically prepared thermal
states yields multinomial counts. The temperature is estimated by maximum
likelihood and the spread over many trials is compared with 1/(nu F_T).

Every trial draws from its own Philox stream keyed on (seed, trial index), so
reports do not depend on how trials are scheduled across workers.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize
from scipy.special import xlogy

from config import get_settings
from errors import DomainError, EstimationError, ValidationError
from models import (
    IsingModel, IsingSpec, TwoSiteModel, TwoSiteSpec, ising_probabilities, ising_qfi_bruteforce,
    parse_model_spec, two_site_probabilities, two_site_qfi,
)
from numerics import Interval
from povm_fisher import fisher_from_probabilities
from scaling import fit_exponential_rate
from thermal_core import DiscreteSpectrum, boltzmann_weights, canonical_point

logger = structlog.get_logger(__name__)

MIN_TRIALS = 30
SEARCH_FACTOR = 10.0
NORMALIZATION_ATOL = 1e-10
SCAN_POINTS = 65
LOG_T_XATOL = 1e-9
BOUNDARY_RTOL = 1e-6
FISHER_STEP = 1e-4

# ============================================================================
# OUTCOME MODELS
# ============================================================================


@dataclass(frozen=True)
class OutcomeModel:
    """Temperature-dependent outcome distribution of a fixed measurement"""
    probs: Callable[[float], np.ndarray]
    T_true: float
    valid: Interval
    labels: Tuple[str, ...] = ()
    name: str = "custom"
    fisher: Optional[Callable[[float], float]] = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.T_true > 0 and math.isfinite(self.T_true)):
            raise DomainError("true temperature must be positive and finite", T_true=self.T_true)
        if not (self.valid.lo > 0 and self.valid.is_finite and self.valid.lo <= self.T_true <= self.valid.hi):
            raise DomainError("search range must be a finite positive interval around T_true",
                              lo=self.valid.lo, hi=self.valid.hi, T_true=self.T_true)
        sizes = set()
        for T in (self.valid.lo, self.T_true, self.valid.hi):
            p = np.asarray(self.probs(T), dtype=float)
            if p.ndim != 1 or np.any(p < -NORMALIZATION_ATOL):
                raise ValidationError("outcome probabilities must be a nonnegative vector", T=T)
            if abs(p.sum() - 1.0) > NORMALIZATION_ATOL:
                raise ValidationError("outcome probabilities must sum to 1", T=T, total=float(p.sum()))
            sizes.add(p.size)
        if len(sizes) != 1:
            raise ValidationError("outcome count changes with temperature", sizes=sorted(sizes))
        outcomes = sizes.pop()
        if outcomes < 2:
            raise ValidationError("a measurement needs at least two outcomes")
        labels = tuple(self.labels) if self.labels else tuple(str(m) for m in range(outcomes))
        if len(labels) != outcomes:
            raise ValidationError("one label per outcome required")
        object.__setattr__(self, "labels", labels)

    @property
    def outcomes(self) -> int:
        return len(self.labels)

    def p(self, T: float) -> np.ndarray:
        p = np.clip(np.asarray(self.probs(T), dtype=float), 0.0, None)
        return p / p.sum()

    def fisher_information(self, T: Optional[float] = None) -> float:
        """F_T of this measurement, analytic when the model supplies it"""
        T = self.T_true if T is None else T
        if self.fisher is not None:
            return float(self.fisher(T))
        return fisher_from_probabilities(self.p, T, h=FISHER_STEP * T, order=4)


def _search_range(T_true: float, factor: float) -> Interval:
    if not factor > 1:
        raise DomainError("search factor must exceed 1", factor=factor)
    return Interval(T_true / factor, T_true * factor)


def two_level_outcome_model(gap: float, T_true: float, degeneracy: int = 1,
                            factor: float = SEARCH_FACTOR) -> OutcomeModel:
    """Energy measurement on a two-level system"""
    if not gap > 0:
        raise DomainError("two-level gap must be positive", gap=gap)
    levels = DiscreteSpectrum.from_levels([(0.0, 1), (gap, degeneracy)])
    return OutcomeModel(
        probs=lambda T: boltzmann_weights(levels, T)[0],
        T_true=T_true,
        valid=_search_range(T_true, factor),
        labels=("ground", "excited"),
        name="two_level",
        fisher=lambda T: canonical_point(levels, T).qfi,
    )


def two_site_outcome_model(spec: TwoSiteSpec, T_true: float,
                           factor: float = SEARCH_FACTOR) -> OutcomeModel:
    """Mode-occupation measurement on two accessible sites"""
    return OutcomeModel(
        probs=two_site_probabilities(spec),
        T_true=T_true,
        valid=_search_range(T_true, factor),
        labels=("0", "+", "-", "2"),
        name=f"two_site_{spec.coupling.value}",
        fisher=lambda T: two_site_qfi(spec, T),
    )


def ising_outcome_model(spec: IsingSpec, T_true: float, factor: float = SEARCH_FACTOR) -> OutcomeModel:
    """Energy measurement on a small Ising lattice, one outcome per level"""
    return OutcomeModel(
        probs=ising_probabilities(spec),
        T_true=T_true,
        valid=_search_range(T_true, factor),
        name=f"ising_{spec.Lx}x{spec.Ly}",
        fisher=lambda T: ising_qfi_bruteforce(spec, T).qfi,
    )


def outcome_model_from_config(data: Mapping[str, Any]) -> OutcomeModel:
    """Build an outcome model from {"model": ..., "params": {...}, "T": ..., "search_factor": ...}"""
    data = dict(data)
    try:
        T = float(data.pop("T"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError("simulation config needs a numeric 'T'") from exc
    factor = float(data.pop("search_factor", SEARCH_FACTOR))
    if data.get("model") == "two_level":
        params = dict(data.get("params") or {})
        return two_level_outcome_model(float(params.get("gap", 1.0)), T,
                                       int(params.get("degeneracy", 1)), factor)
    spec = parse_model_spec(data)
    if isinstance(spec, TwoSiteModel):
        return two_site_outcome_model(spec.params, T, factor)
    if isinstance(spec, IsingModel):
        return ising_outcome_model(spec.params, T, factor)
    raise ValidationError("model has no finite-outcome measurement to simulate", model=spec.model)


# ============================================================================
# SAMPLING AND ESTIMATION
# ============================================================================


def trial_generator(seed: int, trial: int = 0) -> np.random.Generator:
    """Philox stream for one trial, keyed on (seed, trial)"""
    if seed < 0 or trial < 0:
        raise DomainError("seed and trial index must be nonnegative", seed=seed, trial=trial)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial])))


def sample_counts(om: OutcomeModel, nu: int, seed: int, trial: int = 0) -> np.ndarray:
    """Multinomial outcome counts of nu rounds at T_true"""
    if nu < 1:
        raise DomainError("number of rounds must be at least 1", nu=nu)
    return trial_generator(seed, trial).multinomial(int(nu), om.p(om.T_true))


@dataclass(frozen=True)
class Estimate:
    T: float
    log_likelihood: float
    at_boundary: bool


def _log_likelihood(om: OutcomeModel, counts: np.ndarray, log_T: float) -> float:
    p = om.p(math.exp(log_T))
    with np.errstate(divide="ignore"):
        value = float(np.sum(xlogy(counts, p)))
    return value if not math.isnan(value) else -math.inf


def mle_fit(om: OutcomeModel, counts: Sequence[float]) -> Estimate:
    """Maximum-likelihood temperature over the model's search range

    A log-spaced scan locates the best cell; bounded Brent search in ln T
    refines it. Maxima within 1e-6 (relative) of an end of the range are
    flagged.
    """
    c = np.asarray(counts, dtype=float)
    if c.shape != (om.outcomes,):
        raise ValidationError("one count per outcome required", counts=c.size, outcomes=om.outcomes)
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise ValidationError("counts must be nonnegative and finite")
    if not c.sum() > 0:
        raise EstimationError("all counts are zero")

    lo, hi = math.log(om.valid.lo), math.log(om.valid.hi)
    grid = np.linspace(lo, hi, SCAN_POINTS)
    values = np.array([_log_likelihood(om, c, x) for x in grid])
    finite = np.isfinite(values)
    if not finite.any():
        raise EstimationError("counts impossible at every temperature in range")
    spread = float(values[finite].max() - values[finite].min())
    if finite.all() and spread <= 1e-12 * max(1.0, float(np.abs(values).max())):
        raise EstimationError("flat likelihood: counts carry no temperature information")

    best = int(np.argmax(np.where(finite, values, -np.inf)))
    a, b = grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)]
    result = optimize.minimize_scalar(lambda x: -_log_likelihood(om, c, x), bounds=(a, b),
                                      method="bounded", options={"xatol": LOG_T_XATOL})
    x, value = float(result.x), -float(result.fun)
    if values[best] > value:
        x, value = float(grid[best]), float(values[best])
    at_boundary = (x - lo) < BOUNDARY_RTOL or (hi - x) < BOUNDARY_RTOL
    return Estimate(T=math.exp(x), log_likelihood=value, at_boundary=at_boundary)


def mle_temperature(om: OutcomeModel, counts: Sequence[float]) -> float:
    """Maximum-likelihood temperature estimate"""
    estimate = mle_fit(om, counts)
    if estimate.at_boundary:
        logger.warning("estimate at search boundary", T=estimate.T, lo=om.valid.lo, hi=om.valid.hi)
    return estimate.T


# ============================================================================
# CRAMÉR-RAO REPORTS
# ============================================================================


class TrialReport(BaseModel):
    """Spread of the estimator over independent trials next to 1/(nu F_T)"""
    model_config = ConfigDict(frozen=True)

    model: str
    T_true: float
    nu: int = Field(ge=1)
    trials: int = Field(ge=1)
    seed: int = Field(ge=0)
    mean_estimate: float
    variance: float = Field(ge=0)
    fisher: float
    crb: float
    ratio: float
    boundary_hits: int = 0
    bound_respected: bool = True

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


def required_rounds(F: float, T: float, rel_error: float) -> int:
    """Rounds nu with 1/(nu F) = (rel_error T)^2, rounded up"""
    if not F > 0:
        raise EstimationError("zero Fisher information", F=F)
    if not (T > 0 and rel_error > 0):
        raise DomainError("temperature and target error must be positive", T=T, rel_error=rel_error)
    return max(1, math.ceil(1.0 / (F * (rel_error * T) ** 2)))


def rounds_growth(T_grid: Sequence[float], F_grid: Sequence[float], rel_error: float = 0.1) -> Dict[str, float]:
    """Fit ln nu(T) = a + k ln T + b / T; b is the exponential rate of the cost"""
    T = np.asarray(T_grid, dtype=float)
    rounds = [required_rounds(float(F), float(t), rel_error) for t, F in zip(T, F_grid)]
    fit = fit_exponential_rate(T, np.log(np.asarray(rounds, dtype=float)))
    fit["rounds"] = rounds
    return fit


def crb_report(om: OutcomeModel, nu: int, trials: int, seed: int,
               threads: Optional[int] = None) -> TrialReport:
    """Run independent sample/estimate trials and compare their variance with the bound"""
    if trials < MIN_TRIALS:
        raise DomainError("at least 30 trials are needed for a variance estimate", trials=trials)
    if nu < 1:
        raise DomainError("number of rounds must be at least 1", nu=nu)
    F = om.fisher_information()
    if not (F > 0 and math.isfinite(F)):
        raise EstimationError("zero Fisher information", F=F, T=om.T_true)
    crb = 1.0 / (nu * F)

    def run_trial(index: int) -> Estimate:
        return mle_fit(om, sample_counts(om, nu, seed, index))

    workers = max(1, threads or get_settings().threads)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        estimates = list(pool.map(run_trial, range(trials)))

    values = np.array([e.T for e in estimates])
    hits = sum(e.at_boundary for e in estimates)
    variance = float(np.var(values, ddof=1))
    respected = variance >= crb * (1.0 - 5.0 / math.sqrt(trials))
    if hits:
        logger.warning("trial estimates at search boundary", hits=hits, trials=trials)
    if not respected:
        logger.warning("empirical variance below the Cramér-Rao slack", variance=variance, crb=crb,
                       trials=trials)
    logger.info("crb report", model=om.name, nu=nu, trials=trials, ratio=variance / crb)
    return TrialReport(
        model=om.name,
        T_true=om.T_true,
        nu=nu,
        trials=trials,
        seed=seed,
        mean_estimate=float(values.mean()),
        variance=variance,
        fisher=F,
        crb=crb,
        ratio=variance / crb,
        boundary_hits=hits,
        bound_respected=respected,
    )
