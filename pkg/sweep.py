# sweep.py - Temperature sweeps over the model families and their table files
"""
A sweep evaluates a list of quantities for one model over a temperature grid
and returns a SweepResult: a pandas table with ascending T plus a metadata
header. Points are computed on a thread pool; points that fail or come back
non-finite are dropped with a warning.

Config file layout (JSON):

    {"model": {"model": "photon", "params": {"d": 1}},
     "T_grid": {"lo": 0.2, "hi": 20.0, "points": 60},     # or [0.5, 1.0, ...]
     "quantities": ["qfi", "qfi_low_t", "qfi_thermo"],
     "evaluation": "finite",
     "output": "fig2a.csv",
     "format": "csv"}

Quantities:
    qfi               QFI with the configured evaluation (finite by default)
    fisher            Fisher information of the model's natural measurement
    heat_capacity     T^2 times the finite QFI (fluctuation heat capacity)
    entropy           von Neumann entropy of the thermal state
    outcome_spectrum  p_<label> / E_<label> columns (two_site, ising)
    qfi_low_t         g Delta^2 exp(-Delta/T) / T^4 from the model's gap
    qfi_thermo        thermodynamic-limit QFI of the model
    tb_spectrum       exact and linearized tight-binding spectrum (no T grid)
"""

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator
from scipy.stats import entropy as shannon_entropy

from config import UNITS_NOTE, __version__, get_settings
from errors import InsufficientDataError, ThermolimitError, ValidationError
from models import (
    Evaluation, FixedMuPolicy, GapInfo, ModelSpec, bec_gap, bec_modes, bec_mu, bec_qfi, bec_qfi_thermo,
    dump_model_spec, ising_gap, ising_outcome_data, ising_qfi_bruteforce, ising_qfi_onsager,
    massive_gap, massive_gas_qfi, massive_modes, photon_gap, photon_modes, photon_qfi,
    qfi_low_temperature, tb_gap, tb_modes, tb_qfi, tb_spectrum, two_site_gap, two_site_outcome_data,
    two_site_probabilities, two_site_qfi,
)
from povm_fisher import fisher_information
from thermal_core import mode_entropy, solve_mu

logger = structlog.get_logger(__name__)

# ============================================================================
# CONFIGURATION
# ============================================================================


class Quantity(str, Enum):
    QFI = "qfi"
    FISHER = "fisher"
    HEAT_CAPACITY = "heat_capacity"
    ENTROPY = "entropy"
    OUTCOME_SPECTRUM = "outcome_spectrum"
    QFI_LOW_T = "qfi_low_t"
    QFI_THERMO = "qfi_thermo"
    TB_SPECTRUM = "tb_spectrum"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


_COMMON = {Quantity.QFI, Quantity.FISHER, Quantity.HEAT_CAPACITY, Quantity.ENTROPY, Quantity.QFI_LOW_T}

SUPPORTED_QUANTITIES = {
    "photon": _COMMON | {Quantity.QFI_THERMO},
    "massive": _COMMON | {Quantity.QFI_THERMO},
    "tight_binding": _COMMON | {Quantity.QFI_THERMO, Quantity.TB_SPECTRUM},
    "two_site": _COMMON | {Quantity.OUTCOME_SPECTRUM},
    "bec": _COMMON | {Quantity.QFI_THERMO},
    "ising": _COMMON | {Quantity.QFI_THERMO, Quantity.OUTCOME_SPECTRUM},
}

SUPPORTED_EVALUATIONS = {
    "photon": {Evaluation.FINITE, Evaluation.THERMODYNAMIC},
    "massive": {Evaluation.FINITE, Evaluation.THERMODYNAMIC_INTEGRAL,
                Evaluation.THERMODYNAMIC_2D_CLOSED, Evaluation.ASYMPTOTIC},
    "tight_binding": {Evaluation.FINITE, Evaluation.LINEARIZED_THERMO},
    "two_site": {Evaluation.FINITE},
    "bec": {Evaluation.FINITE},
    "ising": {Evaluation.FINITE},
}


class LogGrid(BaseModel):
    """`points` temperatures spaced evenly in ln T from lo to hi"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    lo: PositiveFloat
    hi: PositiveFloat
    points: int = Field(ge=2)

    @model_validator(mode="after")
    def _ordered(self) -> "LogGrid":
        if not self.hi > self.lo:
            raise ValueError("T_grid needs hi > lo")
        return self

    def values(self) -> np.ndarray:
        return np.geomspace(self.lo, self.hi, self.points)


class SweepConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ModelSpec
    T_grid: Optional[Union[LogGrid, List[PositiveFloat]]] = None
    quantities: List[Quantity] = Field(min_length=1)
    evaluation: Evaluation = Evaluation.FINITE
    output: Optional[str] = None
    format: OutputFormat = OutputFormat.CSV

    @model_validator(mode="after")
    def _consistent(self) -> "SweepConfig":
        if len(set(self.quantities)) != len(self.quantities):
            raise ValueError("quantities must not repeat")
        if Quantity.TB_SPECTRUM in self.quantities:
            if len(self.quantities) > 1:
                raise ValueError("tb_spectrum cannot be combined with other quantities")
        elif self.T_grid is None:
            raise ValueError("T_grid is required")
        elif isinstance(self.T_grid, list) and not self.T_grid:
            raise ValueError("explicit T_grid must not be empty")
        return self

    @property
    def is_spectrum(self) -> bool:
        return self.quantities == [Quantity.TB_SPECTRUM]

    def temperatures(self) -> np.ndarray:
        """Ascending, duplicate-free temperature grid"""
        if self.T_grid is None:
            return np.empty(0)
        if isinstance(self.T_grid, LogGrid):
            return self.T_grid.values()
        return np.unique(np.asarray(self.T_grid, dtype=float))

    def check_support(self) -> None:
        """Reject model / quantity / evaluation combinations that cannot be computed"""
        name = self.model.model
        unsupported = [q.value for q in self.quantities if q not in SUPPORTED_QUANTITIES[name]]
        if unsupported:
            raise ValidationError("quantities not available for this model", model=name, quantities=unsupported)
        if self.evaluation not in SUPPORTED_EVALUATIONS[name]:
            raise ValidationError("evaluation not available for this model",
                                  model=name, evaluation=self.evaluation.value)
        if name == "massive":
            params = self.model.params
            continuum = self.evaluation is not Evaluation.FINITE or Quantity.QFI_THERMO in self.quantities
            if continuum and not isinstance(params.mu_policy, FixedMuPolicy):
                raise ValidationError("thermodynamic evaluations need a fixed chemical potential")
            if self.evaluation is Evaluation.THERMODYNAMIC_2D_CLOSED and params.d != 2:
                raise ValidationError("closed-form thermodynamic limit exists only for d = 2", d=params.d)
        if Quantity.QFI_LOW_T in self.quantities:
            try:
                model_gap(self.model, float(self.temperatures()[0]))
            except ThermolimitError as exc:
                raise ValidationError("qfi_low_t needs a gapped model", model=name, reason=exc.message) from exc


def load_sweep_config(path: Union[str, Path]) -> SweepConfig:
    """Read, validate and support-check a sweep config file"""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError("sweep config is not valid JSON", path=str(path), error=exc.msg) from exc
    config = SweepConfig.model_validate(data)
    config.check_support()
    return config


# ============================================================================
# PER-MODEL EVALUATION
# ============================================================================


def model_qfi(model, T: float, evaluation: Evaluation = Evaluation.FINITE) -> float:
    p = model.params
    name = model.model
    if name == "photon":
        return photon_qfi(p, T, evaluation)
    if name == "massive":
        return massive_gas_qfi(p, T, evaluation)
    if name == "tight_binding":
        return tb_qfi(p, T, evaluation)
    if name == "two_site":
        return two_site_qfi(p, T)
    if name == "bec":
        return bec_qfi(p, T)
    return ising_qfi_bruteforce(p, T).qfi


def model_qfi_thermo(model, T: float) -> float:
    p = model.params
    name = model.model
    if name == "photon":
        return photon_qfi(p, T, Evaluation.THERMODYNAMIC)
    if name == "massive":
        return massive_gas_qfi(p, T, Evaluation.THERMODYNAMIC_INTEGRAL)
    if name == "tight_binding":
        return tb_qfi(p, T, Evaluation.LINEARIZED_THERMO)
    if name == "bec":
        return bec_qfi_thermo(p, T)
    if name == "ising":
        return ising_qfi_onsager(p, T)
    raise ValidationError("model has no thermodynamic-limit QFI", model=name)


def model_gap(model, T: float) -> GapInfo:
    """Lowest gap and degeneracy; T matters only for fixed-number gases"""
    p = model.params
    gaps: Dict[str, Callable[[], GapInfo]] = {
        "photon": lambda: photon_gap(p),
        "massive": lambda: massive_gap(p, T),
        "tight_binding": lambda: tb_gap(p),
        "two_site": lambda: two_site_gap(p),
        "bec": lambda: bec_gap(p),
        "ising": lambda: ising_gap(p),
    }
    return gaps[model.model]()


def model_entropy(model, T: float) -> float:
    p = model.params
    name = model.model
    if name == "photon":
        return mode_entropy(photon_modes(p, T), T, 0.0)
    if name == "massive":
        ms = massive_modes(p, T)
        mu = p.mu_policy.mu if isinstance(p.mu_policy, FixedMuPolicy) else solve_mu(ms, T)
        return mode_entropy(ms, T, mu)
    if name == "tight_binding":
        return mode_entropy(tb_modes(p), T, p.mu)
    if name == "bec":
        return mode_entropy(bec_modes(p, 1.05 * T), T, bec_mu(p, T)[0])
    if name == "two_site":
        # the reduced state is diagonal in the mode-occupation basis
        return float(shannon_entropy(two_site_probabilities(p)(T)))
    return ising_qfi_bruteforce(p, T).entropy


def model_outcomes(model, T: float) -> Dict[str, float]:
    if model.model == "two_site":
        return two_site_outcome_data(model.params, T).as_columns()
    if model.model == "ising":
        return ising_outcome_data(model.params, T).as_columns()
    raise ValidationError("model has no finite-outcome measurement", model=model.model)


def evaluate_point(model, T: float, quantities: List[Quantity],
                   evaluation: Evaluation = Evaluation.FINITE) -> Dict[str, float]:
    """One table row: T followed by the requested quantity columns

    Gases, chains and the BEC are read out by the joint energy and number
    measurement, whose Fisher information equals the QFI.
    """
    row: Dict[str, float] = {"T": float(T)}
    cache: Dict[str, float] = {}

    def finite() -> float:
        if "qfi" not in cache:
            cache["qfi"] = model_qfi(model, T, Evaluation.FINITE)
        return cache["qfi"]

    for q in quantities:
        if q is Quantity.QFI:
            row["qfi"] = finite() if evaluation is Evaluation.FINITE else model_qfi(model, T, evaluation)
        elif q is Quantity.FISHER:
            if model.model == "two_site":
                row["fisher"] = fisher_information(two_site_outcome_data(model.params, T))
            elif model.model == "ising":
                row["fisher"] = fisher_information(ising_outcome_data(model.params, T))
            else:
                row["fisher"] = finite()
        elif q is Quantity.HEAT_CAPACITY:
            row["heat_capacity"] = T * T * finite()
        elif q is Quantity.ENTROPY:
            row["entropy"] = model_entropy(model, T)
        elif q is Quantity.OUTCOME_SPECTRUM:
            row.update(model_outcomes(model, T))
        elif q is Quantity.QFI_LOW_T:
            row["qfi_low_t"] = qfi_low_temperature(model_gap(model, T), T)
        elif q is Quantity.QFI_THERMO:
            row["qfi_thermo"] = model_qfi_thermo(model, T)
        else:
            raise ValidationError("quantity is not a per-temperature column", quantity=q.value)
    return row


# ============================================================================
# SWEEP RESULTS
# ============================================================================


@dataclass
class SweepResult:
    """Sweep table (ascending in its first column) with its metadata header"""
    table: pd.DataFrame
    metadata: Dict[str, str] = field(default_factory=dict)

    @property
    def x_column(self) -> str:
        return "T" if "T" in self.table.columns else str(self.table.columns[0])

    @property
    def quantity_columns(self) -> List[str]:
        return [c for c in self.table.columns if c not in (self.x_column, "k")]

    def to_csv(self, digits: Optional[int] = None) -> str:
        digits = digits or get_settings().float_digits
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}: {value}\n")
        self.table.to_csv(buf, index=False, float_format=f"%.{digits}g", lineterminator="\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepResult":
        lines = text.splitlines(keepends=True)
        metadata: Dict[str, str] = {}
        start = 0
        while start < len(lines) and lines[start].startswith("#"):
            key, sep, value = lines[start][1:].partition(":")
            if sep:
                metadata[key.strip()] = value.strip()
            start += 1
        body = "".join(lines[start:])
        if not body.strip():
            raise ValidationError("sweep CSV has no header row")
        try:
            table = pd.read_csv(io.StringIO(body), float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as exc:
            raise ValidationError("malformed sweep CSV", error=str(exc)) from exc
        for column in table.columns:
            if not pd.api.types.is_numeric_dtype(table[column]):
                raise ValidationError("non-numeric column in sweep CSV", column=str(column))
        result = cls(table, metadata)
        x = result.table[result.x_column].to_numpy()
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise ValidationError("sweep CSV rows are not ascending", column=result.x_column)
        return result

    def to_json(self) -> str:
        rows = [[v.item() if hasattr(v, "item") else v for v in row]
                for row in self.table.itertuples(index=False)]
        payload = {"metadata": self.metadata, "columns": [str(c) for c in self.table.columns], "data": rows}
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SweepResult":
        try:
            payload = json.loads(text)
            table = pd.DataFrame(payload["data"], columns=payload["columns"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValidationError("malformed sweep JSON", error=str(exc)) from exc
        return cls(table, dict(payload.get("metadata", {})))

    def render(self, fmt: OutputFormat = OutputFormat.CSV) -> str:
        return self.to_json() if OutputFormat(fmt) is OutputFormat.JSON else self.to_csv()


def read_sweep_csv(path: Union[str, Path]) -> SweepResult:
    """Load a sweep CSV; JSON input is refused"""
    text = Path(path).read_text(encoding="utf-8")
    if Path(path).suffix.lower() == ".json" or text.lstrip().startswith(("{", "[")):
        raise ValidationError("csv required", path=str(path))
    return SweepResult.from_csv(text)


# ============================================================================
# RUNNING SWEEPS
# ============================================================================


def _metadata(config: SweepConfig) -> Dict[str, str]:
    spec = dump_model_spec(config.model)
    meta = {
        "model": spec["model"],
        "params": json.dumps(spec["params"], sort_keys=True, separators=(",", ":")),
        "code_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "units": UNITS_NOTE,
        "quantities": ",".join(q.value for q in config.quantities),
        "evaluation": config.evaluation.value,
    }
    grid = config.temperatures()
    if grid.size:
        try:
            info = model_gap(config.model, float(grid[0]))
        except ThermolimitError:
            pass
        else:
            meta["gap"] = repr(info.gap)
            meta["gap_degeneracy"] = repr(info.degeneracy)
    return meta


def _safe_point(config: SweepConfig, T: float) -> Optional[Dict[str, float]]:
    try:
        row = evaluate_point(config.model, T, config.quantities, config.evaluation)
    except (ThermolimitError, ArithmeticError) as exc:
        logger.warning("dropped sweep point", model=config.model.model, T=T, error=str(exc))
        return None
    bad = [k for k, v in row.items() if not math.isfinite(v)]
    if bad:
        logger.warning("dropped sweep point", model=config.model.model, T=T, error="non-finite value", columns=bad)
        return None
    return row


def run_sweep(config: SweepConfig, threads: Optional[int] = None) -> SweepResult:
    """Evaluate every grid point on a worker pool, rows assembled in T order"""
    config.check_support()
    metadata = _metadata(config)
    if config.is_spectrum:
        return SweepResult(pd.DataFrame(tb_spectrum(config.model.params)), metadata)

    grid = config.temperatures()
    workers = max(1, min(threads or get_settings().threads, grid.size))
    logger.info("sweep started", model=config.model.model, points=int(grid.size), workers=workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda T: _safe_point(config, float(T)), grid))

    rows = [r for r in results if r is not None]
    if not rows:
        raise InsufficientDataError("every sweep point failed", points=int(grid.size))
    dropped = len(results) - len(rows)
    if dropped:
        logger.warning("sweep finished with dropped points", dropped=dropped, kept=len(rows))
    return SweepResult(pd.DataFrame(rows), metadata)


def write_result(result: SweepResult, path: Optional[Union[str, Path]],
                 fmt: OutputFormat = OutputFormat.CSV) -> str:
    """Render the result and write it to `path` when given"""
    payload = result.render(fmt)
    if path is not None:
        try:
            Path(path).write_text(payload, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise ValidationError("cannot write sweep output", path=str(path), error=str(exc)) from exc
    return payload

