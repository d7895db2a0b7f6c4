# povm_fisher.py - POVMs, outcome spectra and Fisher information for temperature
"""
Finite-outcome measurements on small dense Hilbert spaces.

A measurement {Pi_m} on a thermal state rho_T yields probabilities
p_m = Tr{Pi_m rho_T} and associated energies E_m = Tr{Pi_m H rho_T} / p_m.
The classical Fisher information of the outcome distribution equals the
variance of E_m under p_m divided by T^4; the energy-projective measurement
reaches the quantum Fisher information.

POVM elements are temperature independent throughout.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import linalg

from errors import DomainError, ValidationError
from numerics import derivative
from thermal_core import DiscreteSpectrum

logger = structlog.get_logger(__name__)

MAX_DIM = 4096
HERMITIAN_ATOL = 1e-12
POVM_ATOL = 1e-10
ZERO_PROB = 1e-300
GAP_MERGE_RTOL = 1e-9
EIGEN_TIE_TOL = 1e-10

# ============================================================================
# OPERATORS
# ============================================================================


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Dense Hermitian matrix on a dim-dimensional Hilbert space"""
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ValidationError("operator must be a nonempty square matrix", shape=m.shape)
        if m.shape[0] > MAX_DIM:
            raise ValidationError("operator dimension above cap", dim=m.shape[0], cap=MAX_DIM)
        if not np.all(np.isfinite(m)):
            raise ValidationError("operator entries must be finite")
        if not linalg.ishermitian(m, atol=HERMITIAN_ATOL):
            raise ValidationError("operator is not Hermitian",
                                  defect=float(np.max(np.abs(m - m.conj().T))))
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    @classmethod
    def diagonal(cls, values: Sequence[float]) -> "HermitianOperator":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def identity(cls, dim: int) -> "HermitianOperator":
        return cls(np.eye(dim))

    @classmethod
    def projector(cls, vectors: np.ndarray) -> "HermitianOperator":
        """Orthogonal projector onto the span of orthonormal columns"""
        v = np.asarray(vectors, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        return cls(v @ v.conj().T)

    def eigh(self) -> Tuple[np.ndarray, np.ndarray]:
        try:
            return linalg.eigh(self.matrix)
        except linalg.LinAlgError as exc:
            raise ValidationError("eigensolver failed", dim=self.dim) from exc

    def spectrum(self) -> DiscreteSpectrum:
        """Eigenvalues as a DiscreteSpectrum (near-equal values merged)"""
        return DiscreteSpectrum.from_energies(linalg.eigvalsh(self.matrix))

    def to_json(self) -> Dict[str, Any]:
        flat = self.matrix.ravel()
        return {"dim": self.dim, "entries": [[float(z.real), float(z.imag)] for z in flat]}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "HermitianOperator":
        try:
            dim = int(data["dim"])
            entries = np.asarray(data["entries"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError("operator JSON needs 'dim' and 'entries'") from exc
        if dim < 1 or dim > MAX_DIM or entries.shape != (dim * dim, 2):
            raise ValidationError("operator JSON entries must be dim*dim [re, im] pairs",
                                  dim=dim, shape=entries.shape)
        return cls((entries[:, 0] + 1j * entries[:, 1]).reshape(dim, dim))


def jordan_wigner_annihilators(n_sites: int) -> List[np.ndarray]:
    """Fermionic annihilation operators on the 2^n Fock space

    Site j carries a string of sigma_z on sites < j; per-site basis is
    (empty, occupied) and site 0 is the most significant bit.
    """
    if n_sites < 1 or 2 ** n_sites > MAX_DIM:
        raise DomainError("site count out of range", n_sites=n_sites)
    lower = np.array([[0.0, 1.0], [0.0, 0.0]])
    sz = np.diag([1.0, -1.0])
    eye = np.eye(2)
    ops = []
    for j in range(n_sites):
        factors = [sz] * j + [lower] + [eye] * (n_sites - j - 1)
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        ops.append(op.astype(complex))
    return ops


# ============================================================================
# POVM
# ============================================================================


@dataclass(frozen=True)
class PovmDiagnostics:
    """Completeness defect and per-element minimum eigenvalue"""
    completeness_defect: float
    min_eigenvalues: Tuple[float, ...]

    @property
    def is_valid(self) -> bool:
        return self.completeness_defect <= POVM_ATOL and min(self.min_eigenvalues) >= -POVM_ATOL

    def to_dict(self) -> Dict[str, Any]:
        return {
            "completeness_defect": self.completeness_defect,
            "min_eigenvalues": list(self.min_eigenvalues),
            "valid": self.is_valid,
        }


@dataclass(frozen=True)
class Povm:
    """Finite set of measurement elements on a shared Hilbert space"""
    elements: Tuple[HermitianOperator, ...]
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        elements = tuple(self.elements)
        if not elements:
            raise ValidationError("POVM needs at least one element")
        dims = {e.dim for e in elements}
        if len(dims) != 1:
            raise ValidationError("POVM elements must share a dimension", dims=sorted(dims))
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != len(elements):
                raise ValidationError("one label per POVM element required")
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "elements", elements)

    @property
    def dim(self) -> int:
        return self.elements[0].dim

    def __len__(self) -> int:
        return len(self.elements)

    def outcome_labels(self) -> Tuple[str, ...]:
        return self.labels if self.labels is not None else tuple(str(m) for m in range(len(self)))

    def to_json(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"elements": [e.to_json() for e in self.elements]}
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "Povm":
        try:
            elements = tuple(HermitianOperator.from_json(e) for e in data["elements"])
        except (KeyError, TypeError) as exc:
            raise ValidationError("POVM JSON needs an 'elements' list") from exc
        labels = data.get("labels")
        return cls(elements, tuple(labels) if labels is not None else None)


def validate(povm: Povm) -> PovmDiagnostics:
    """Completeness and positivity diagnostics; never raises"""
    total = sum(e.matrix for e in povm.elements)
    defect = float(np.max(np.abs(total - np.eye(povm.dim))))
    mins = tuple(float(linalg.eigvalsh(e.matrix)[0]) for e in povm.elements)
    return PovmDiagnostics(completeness_defect=defect, min_eigenvalues=mins)


def _require_valid(povm: Povm) -> None:
    diag = validate(povm)
    if not diag.is_valid:
        raise ValidationError("invalid POVM", **diag.to_dict())


# ============================================================================
# OUTCOME SPECTRUM
# ============================================================================


def _group_gaps(energies: np.ndarray, probs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if energies.size == 0:
        return np.zeros(0), np.zeros(0)
    order = np.argsort(energies, kind="stable")
    e, p = energies[order], probs[order]
    span = float(e[-1] - e[0])
    tol = GAP_MERGE_RTOL * span
    gaps: List[float] = [0.0]
    weights: List[float] = [float(p[0])]
    anchor = e[0]
    for ei, pi in zip(e[1:], p[1:]):
        if ei - anchor <= tol:
            weights[-1] += float(pi)
        else:
            anchor = ei
            gaps.append(float(ei - e[0]))
            weights.append(float(pi))
    return np.array(gaps), np.array(weights)


@dataclass(frozen=True, eq=False)
class OutcomeSpectrum:
    """Probabilities p_m and energies E_m of a measurement at temperature T

    `gaps` lists the distinct E_m - min E_m in ascending order (outcomes within
    1e-9 of the energy range merged, zero-probability outcomes excluded);
    `gap_weights` carries the summed probability of each merged group.
    """
    probs: np.ndarray
    energies: np.ndarray
    T: float
    labels: Tuple[str, ...] = ()
    flagged: np.ndarray = field(default=None, repr=False)
    gaps: np.ndarray = field(default=None, repr=False)
    gap_weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).copy()
        e = np.asarray(self.energies, dtype=float).copy()
        if p.ndim != 1 or p.shape != e.shape or p.size == 0:
            raise ValidationError("probabilities and energies must be matching nonempty vectors")
        if np.any(p < -POVM_ATOL):
            raise ValidationError("negative outcome probability", min_prob=float(p.min()))
        p = np.clip(p, 0.0, None)
        if abs(p.sum() - 1.0) > POVM_ATOL:
            raise ValidationError("outcome probabilities must sum to 1", total=float(p.sum()))
        flagged = p < ZERO_PROB
        e[flagged] = 0.0
        labels = tuple(self.labels) if self.labels else tuple(str(m) for m in range(p.size))
        if len(labels) != p.size:
            raise ValidationError("one label per outcome required")
        gaps, weights = _group_gaps(e[~flagged], p[~flagged])
        for name, arr in (("probs", p), ("energies", e), ("flagged", flagged),
                          ("gaps", gaps), ("gap_weights", weights)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_outcomes(cls, probs: Sequence[float], energies: Sequence[float], T: float,
                      labels: Sequence[str] = ()) -> "OutcomeSpectrum":
        return cls(np.asarray(probs, dtype=float), np.asarray(energies, dtype=float), T, tuple(labels))

    @property
    def mean_energy(self) -> float:
        return float(np.dot(self.probs, self.energies))

    def grouped(self) -> Tuple[np.ndarray, np.ndarray]:
        """(gaps, weights) after merging degenerate outcomes, as writable copies"""
        return self.gaps.copy(), self.gap_weights.copy()

    def as_columns(self) -> Dict[str, float]:
        """Flat p_<label> / E_<label> mapping for tabular output"""
        out: Dict[str, float] = {}
        for label, p, e in zip(self.labels, self.probs, self.energies):
            out[f"p_{label}"] = float(p)
            out[f"E_{label}"] = float(e)
        return out


def thermal_weights(eigenvalues: np.ndarray, T: float) -> np.ndarray:
    if not (T > 0 and math.isfinite(T)):
        raise DomainError("temperature must be positive and finite", T=T)
    x = -(eigenvalues - eigenvalues.min()) / T
    w = np.exp(x)
    return w / w.sum()


def _diagonal_overlaps(povm: Povm, vectors: np.ndarray) -> np.ndarray:
    """<n|Pi_m|n> for every element m and eigenvector n"""
    stack = np.stack([e.matrix for e in povm.elements])
    return np.einsum("in,mij,jn->mn", vectors.conj(), stack, vectors).real


def outcome_spectrum(povm: Povm, H: HermitianOperator, T: float) -> OutcomeSpectrum:
    """Outcome probabilities and energies of `povm` on the thermal state of H"""
    _require_valid(povm)
    if povm.dim != H.dim:
        raise ValidationError("POVM and Hamiltonian dimensions differ", povm=povm.dim, H=H.dim)
    eps, vecs = H.eigh()
    w = thermal_weights(eps, T)
    overlaps = _diagonal_overlaps(povm, vecs)
    probs = overlaps @ w
    weighted = overlaps @ (w * eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        energies = np.where(probs >= ZERO_PROB, weighted / np.where(probs > 0, probs, 1.0), 0.0)
    spectrum = OutcomeSpectrum(probs, energies, T, povm.outcome_labels())
    if spectrum.flagged.any():
        logger.debug("zero-probability outcomes", T=T, count=int(spectrum.flagged.sum()))
    return spectrum


def outcome_probabilities(povm: Povm, H: HermitianOperator) -> Callable[[float], np.ndarray]:
    """p(T) for a fixed POVM and Hamiltonian, eigendecomposition done once"""
    _require_valid(povm)
    if povm.dim != H.dim:
        raise ValidationError("POVM and Hamiltonian dimensions differ", povm=povm.dim, H=H.dim)
    eps, vecs = H.eigh()
    overlaps = _diagonal_overlaps(povm, vecs)

    def probs(T: float) -> np.ndarray:
        return overlaps @ thermal_weights(eps, T)

    return probs


# ============================================================================
# FISHER INFORMATION
# ============================================================================


def fisher_information(os: OutcomeSpectrum) -> float:
    """Variance of E_m under p_m divided by T^4"""
    keep = ~os.flagged
    p, e = os.probs[keep], os.energies[keep]
    mean = float(np.dot(p, e))
    return float(np.dot(p, (e - mean) ** 2)) / os.T ** 4


def fisher_from_probabilities(probs: Callable[[float], np.ndarray], T: float,
                              h: Optional[float] = None, order: int = 4) -> float:
    """sum_m (dp_m/dT)^2 / p_m with stencil derivatives"""
    h = 1e-3 * T if h is None else h
    p = np.asarray(probs(T), dtype=float)
    dp = np.array([derivative(lambda t, m=m: float(probs(t)[m]), T, h, order=order) for m in range(p.size)])
    keep = p >= ZERO_PROB
    return float(np.sum(dp[keep] ** 2 / p[keep]))


def fisher_by_probability_derivative(povm: Povm, H: HermitianOperator, T: float,
                                     h: Optional[float] = None, order: int = 4) -> float:
    """Fisher information from finite differences of p_m(T)"""
    return fisher_from_probabilities(outcome_probabilities(povm, H), T, h, order)


def qfi_diagonal_family(eigs: Callable[[float], Sequence[float]], T: float,
                        h: Optional[float] = None, order: int = 4) -> float:
    """QFI of states diagonal in a T-independent basis: sum (dlambda/dT)^2 / lambda"""
    h = 1e-3 * T if h is None else h
    for t in (T - 2 * h, T, T + 2 * h) if order == 4 else (T - h, T, T + h):
        total = float(np.sum(eigs(t)))
        if abs(total - 1.0) > 1e-8:
            raise ValidationError("eigenvalue family not normalized", T=t, total=total)
    return fisher_from_probabilities(lambda t: np.asarray(eigs(t), dtype=float), T, h, order)


# ============================================================================
# OPTIMAL MEASUREMENT
# ============================================================================


def _eigen_groups(values: np.ndarray, tol: float) -> List[np.ndarray]:
    groups: List[List[int]] = [[0]]
    for i in range(1, values.size):
        if values[i] - values[groups[-1][0]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.array(g) for g in groups]


def optimal_povm(H: HermitianOperator, number: Optional[HermitianOperator] = None) -> Povm:
    """Energy-projective POVM, degenerate eigenspaces merged

    With a particle-number operator commuting with H, the projectors resolve
    the joint (N, E) eigenspaces instead, which is the optimal measurement for
    the grand-canonical state.
    """
    if number is None:
        eps, vecs = H.eigh()
        tol = EIGEN_TIE_TOL * max(1.0, float(np.max(np.abs(eps))))
        groups = _eigen_groups(eps, tol)
        elements = [HermitianOperator.projector(vecs[:, g]) for g in groups]
        labels = [f"E={eps[g[0]]:.6g}" for g in groups]
        return Povm(tuple(elements), tuple(labels))

    if number.dim != H.dim:
        raise ValidationError("number operator dimension differs", H=H.dim, N=number.dim)
    commutator = H.matrix @ number.matrix - number.matrix @ H.matrix
    if np.max(np.abs(commutator)) > 1e-10:
        raise ValidationError("Hamiltonian and number operator do not commute",
                              defect=float(np.max(np.abs(commutator))))
    n_vals, n_vecs = number.eigh()
    found: List[Tuple[float, float, HermitianOperator]] = []
    for sector in _eigen_groups(n_vals, 1e-8):
        q = n_vecs[:, sector]
        block = q.conj().T @ H.matrix @ q
        eps, vecs = linalg.eigh(0.5 * (block + block.conj().T))
        tol = EIGEN_TIE_TOL * max(1.0, float(np.max(np.abs(eps))))
        for g in _eigen_groups(eps, tol):
            found.append((float(eps[g[0]]), float(n_vals[sector[0]]), HermitianOperator.projector(q @ vecs[:, g])))
    found.sort(key=lambda item: (round(item[0], 9), item[1]))
    labels = tuple(f"E={e:.6g},N={n:.6g}" for e, n, _ in found)
    return Povm(tuple(op for _, _, op in found), labels)
