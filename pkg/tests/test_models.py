# test_models.py - Physical models: configs, QFI evaluations and gaps
import math

import numpy as np
import pydantic
import pytest

from errors import CutoffError, DomainError
from models import (
    PHOTON_ETA, BoseGasSpec, Coupling, CovarianceMode, Evaluation, FixedMuPolicy,
    FixedNumberPolicy, GapInfo, IsingModel, IsingSpec, MassiveGasSpec, MassiveModel,
    PhotonGasSpec, PhotonModel, TightBindingSpec, TwoSiteSpec, bec_critical_temperature,
    bec_gap, bec_heat_capacity_thermo, bec_mu, bec_qfi, dump_model_spec,
    ising_critical_temperature, ising_gap, ising_heat_capacity_onsager, ising_histogram,
    ising_log_partition_kaufman, ising_probabilities, ising_qfi_bruteforce, ising_qfi_onsager,
    massive_gap, massive_gas_qfi, parse_model_spec, photon_gap, photon_qfi, qfi_low_temperature,
    tb_gap, tb_qfi, tb_spectrum, two_site_covariance, two_site_gap, two_site_hamiltonian,
    two_site_outcome_data, two_site_povm, two_site_probabilities, two_site_qfi,
)
from povm_fisher import fisher_from_probabilities, fisher_information, outcome_spectrum, validate
from thermal_core import FixedMu, FixedNumber, Statistics

ZETA_15 = 2.6123753486854883
ONSAGER_LOG_AMPLITUDE = 8.0 / math.pi * (math.log(1 + math.sqrt(2)) / 2) ** 2

# ============================================================================
# CONFIG PARSING
# ============================================================================


def test_parse_photon_config():
    spec = parse_model_spec({"model": "photon", "params": {"d": 3, "L": 2.0}})
    assert isinstance(spec, PhotonModel)
    assert spec.params.d == 3 and spec.params.L == 2.0 and spec.params.c == 1.0


def test_parse_massive_number_policy():
    spec = parse_model_spec({"model": "massive", "params": {
        "d": 1, "statistics": "boson", "mu_policy": {"kind": "fixed_number", "N": 10}}})
    assert isinstance(spec, MassiveModel)
    assert spec.params.statistics is Statistics.BOSON
    assert spec.params.policy() == FixedNumber(10.0)
    assert MassiveGasSpec().policy() == FixedMu(0.0)


def test_dump_round_trips():
    spec = IsingModel(params=IsingSpec(Lx=3, Ly=2, J=-1.0))
    data = dump_model_spec(spec)
    assert data["model"] == "ising"
    assert parse_model_spec(data) == spec


@pytest.mark.parametrize("data", [
    {"model": "photon", "params": {"d": 4}},
    {"model": "photon", "params": {"colour": 1}},
    {"model": "tight_binding", "params": {"N": 7}},
    {"model": "ising", "params": {"J": 0.0}},
    {"model": "bec", "params": {"N": 1}},
    {"model": "massive", "params": {"mu_policy": {"kind": "fixed_number", "N": -1}}},
    {"model": "lattice_gauge"},
])
def test_parse_rejects_bad_configs(data):
    with pytest.raises(pydantic.ValidationError):
        parse_model_spec(data)


def test_qfi_low_temperature_formula():
    info = GapInfo(gap=2.0, degeneracy=3.0)
    assert qfi_low_temperature(info, 0.5) == pytest.approx(3 * 4 * math.exp(-4.0) / 0.5 ** 4)
    with pytest.raises(DomainError):
        qfi_low_temperature(info, 0.0)


# ============================================================================
# PHOTON GAS
# ============================================================================


def test_photon_eta_values():
    assert PHOTON_ETA[1] == pytest.approx(1.047198, abs=1e-6)
    assert PHOTON_ETA[2] == pytest.approx(1.147880, abs=1e-6)
    assert PHOTON_ETA[3] == pytest.approx(1.315947, abs=1e-6)


def test_photon_1d_approaches_thermodynamic_limit():
    spec = PhotonGasSpec(d=1)
    T = 100.0
    finite = photon_qfi(spec, T)
    thermo = photon_qfi(spec, T, Evaluation.THERMODYNAMIC)
    assert thermo == pytest.approx(math.pi / (3 * T))
    # leading finite-size correction is -1/(2 T^2)
    assert finite == pytest.approx(thermo - 0.5 / T ** 2, rel=1e-3)


def test_photon_3d_converges_from_below():
    spec = PhotonGasSpec(d=3)
    ratios = [photon_qfi(spec, T) / photon_qfi(spec, T, Evaluation.THERMODYNAMIC) for T in (5.0, 10.0)]
    assert 0.5 < ratios[0] < ratios[1] < 1.0


def test_photon_low_temperature_matches_gap_law():
    spec = PhotonGasSpec(d=1)
    info = photon_gap(spec)
    assert info.gap == pytest.approx(math.pi) and info.degeneracy == 1.0
    T = math.pi / 20
    assert photon_qfi(spec, T) == pytest.approx(qfi_low_temperature(info, T), rel=1e-6)


def test_photon_3d_gap():
    info = photon_gap(PhotonGasSpec(d=3, L=2.0))
    assert info.gap == pytest.approx(math.pi * math.sqrt(3) / 2)
    assert info.degeneracy == 1.0


def test_photon_cutoff_too_low():
    with pytest.raises(CutoffError):
        photon_qfi(PhotonGasSpec(d=1, n_max=5), 10.0)


def test_photon_rejects_other_evaluations():
    with pytest.raises(DomainError):
        photon_qfi(PhotonGasSpec(), 1.0, Evaluation.ASYMPTOTIC)


# ============================================================================
# MASSIVE GAS
# ============================================================================


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("statistics", [Statistics.FERMION, Statistics.BOSON])
def test_massive_zero_mu_integral_matches_asymptote(d, statistics):
    spec = MassiveGasSpec(d=d, statistics=statistics)
    T = 3.0
    integral = massive_gas_qfi(spec, T, Evaluation.THERMODYNAMIC_INTEGRAL)
    assert integral == pytest.approx(massive_gas_qfi(spec, T, Evaluation.ASYMPTOTIC), rel=1e-6)


@pytest.mark.parametrize("statistics", [Statistics.FERMION, Statistics.BOSON])
def test_massive_dilute_integral_matches_asymptote(statistics):
    T = 2.0
    spec = MassiveGasSpec(d=3, statistics=statistics, mu_policy=FixedMuPolicy(mu=-20 * T))
    integral = massive_gas_qfi(spec, T, Evaluation.THERMODYNAMIC_INTEGRAL)
    assert integral == pytest.approx(massive_gas_qfi(spec, T, Evaluation.ASYMPTOTIC), rel=1e-6)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_massive_dilute_asymptote_leading_term(d):
    # e^{-mu/T} F is a quadratic in alpha = -mu/2T whose top coefficient is the
    # leading-order term; the lower two are the subleading moments
    T = 1.0
    h = d / 2.0
    alphas = np.array([5.0, 10.0, 20.0])
    reduced = [massive_gas_qfi(MassiveGasSpec(d=d, mu_policy=FixedMuPolicy(mu=-2.0 * a * T)), T,
                               Evaluation.ASYMPTOTIC) * math.exp(2.0 * a) for a in alphas]
    a2, a1, a0 = np.polyfit(alphas, reduced, 2)
    assert a1 / a2 == pytest.approx(h, rel=1e-8)
    assert a0 / a2 == pytest.approx(h * (h + 1.0) / 4.0, rel=1e-7)
    leading = a2 * alphas[-1] ** 2
    assert reduced[-1] / leading == pytest.approx(1.0 + h / 20.0 + h * (h + 1.0) / 1600.0, rel=1e-9)


def test_massive_degenerate_fermions_follow_sommerfeld():
    T = 1.0
    spec = MassiveGasSpec(d=3, mu_policy=FixedMuPolicy(mu=200 * T))
    integral = massive_gas_qfi(spec, T, Evaluation.THERMODYNAMIC_INTEGRAL)
    assert integral == pytest.approx(massive_gas_qfi(spec, T, Evaluation.ASYMPTOTIC), rel=1e-3)


@pytest.mark.parametrize("statistics,mu,dmu", [
    (Statistics.FERMION, 1.0, 0.0),
    (Statistics.FERMION, 1.0, 0.6),
    (Statistics.FERMION, -3.0, -0.4),
    (Statistics.BOSON, -1.0, 0.0),
    (Statistics.BOSON, -0.5, 0.2),
])
def test_massive_2d_closed_form_matches_integral(statistics, mu, dmu):
    T = 1.0
    spec = MassiveGasSpec(d=2, statistics=statistics, mu_policy=FixedMuPolicy(mu=mu))
    closed = massive_gas_qfi(spec, T, Evaluation.THERMODYNAMIC_2D_CLOSED, dmu_dT=dmu)
    integral = massive_gas_qfi(spec, T, Evaluation.THERMODYNAMIC_INTEGRAL, dmu_dT=dmu)
    assert closed == pytest.approx(integral, rel=1e-8)


def test_massive_2d_zero_mu_boson_closed_form():
    spec = MassiveGasSpec(d=2, statistics=Statistics.BOSON)
    T = 0.5
    closed = massive_gas_qfi(spec, T, Evaluation.THERMODYNAMIC_2D_CLOSED)
    assert closed == pytest.approx(spec.m * spec.L ** 2 / (math.pi * T) * math.pi ** 2 / 6)


@pytest.mark.slow
@pytest.mark.parametrize("ratio", [20.0, 10.0])
def test_massive_2d_fermions_finite_vs_thermodynamic(ratio):
    mu = 1600 * math.pi ** 2 / 2
    spec = MassiveGasSpec(d=2, mu_policy=FixedMuPolicy(mu=mu))
    T = mu / ratio
    finite = massive_gas_qfi(spec, T)
    assert finite == pytest.approx(massive_gas_qfi(spec, T, Evaluation.THERMODYNAMIC_INTEGRAL), rel=0.1)


def test_massive_thermodynamic_needs_fixed_mu():
    spec = MassiveGasSpec(mu_policy=FixedNumberPolicy(N=10))
    with pytest.raises(DomainError):
        massive_gas_qfi(spec, 1.0, Evaluation.THERMODYNAMIC_INTEGRAL)


def test_massive_boson_positive_mu_rejected():
    spec = MassiveGasSpec(statistics=Statistics.BOSON, mu_policy=FixedMuPolicy(mu=0.5))
    with pytest.raises(DomainError):
        massive_gas_qfi(spec, 1.0, Evaluation.THERMODYNAMIC_INTEGRAL)


def test_massive_closed_form_only_in_2d():
    with pytest.raises(DomainError):
        massive_gas_qfi(MassiveGasSpec(d=3), 1.0, Evaluation.THERMODYNAMIC_2D_CLOSED)


def test_massive_fixed_number_finite_runs():
    spec = MassiveGasSpec(d=1, mu_policy=FixedNumberPolicy(N=10))
    values = [massive_gas_qfi(spec, T) for T in (20.0, 40.0)]
    assert all(v > 0 and math.isfinite(v) for v in values)


def test_massive_gap_with_fixed_mu():
    spec = MassiveGasSpec(d=1)
    info = massive_gap(spec)
    assert info.gap == pytest.approx(math.pi ** 2 / 2)
    assert info.degeneracy == 1.0


def test_massive_fixed_number_gap_needs_temperature():
    with pytest.raises(DomainError):
        massive_gap(MassiveGasSpec(d=1, mu_policy=FixedNumberPolicy(N=4)))


# ============================================================================
# TIGHT-BINDING CHAIN
# ============================================================================


def test_tb_half_filling_matches_linearized():
    spec = TightBindingSpec(N=500)
    T = 0.1
    linear = tb_qfi(spec, T, Evaluation.LINEARIZED_THERMO)
    assert linear == pytest.approx(math.pi * 500 / (6 * T))
    assert tb_qfi(spec, T) == pytest.approx(linear, rel=0.05)


def test_tb_linearized_needs_half_filling():
    with pytest.raises(DomainError):
        tb_qfi(TightBindingSpec(mu=0.3), 0.1, Evaluation.LINEARIZED_THERMO)


def test_tb_spectrum_linear_near_fermi_points():
    spectrum = tb_spectrum(TightBindingSpec(N=400))
    near = np.abs(spectrum["kappa"]) < 0.05
    assert near.sum() == 14
    assert np.max(np.abs(spectrum["exact"][near] - spectrum["linear"][near])) < 1e-4


def test_tb_gap_skips_modes_at_mu():
    spec = TightBindingSpec(N=500)
    info = tb_gap(spec)
    assert info.gap == pytest.approx(2 * math.sin(2 * math.pi / 500), rel=1e-9)
    assert info.degeneracy == 4.0


# ============================================================================
# TWO ACCESSIBLE SITES
# ============================================================================


def test_two_site_covariance_ground_state_limit():
    matrix = two_site_covariance(TwoSiteSpec(), 1e-4)
    assert matrix[0, 0] == 0.5 and matrix[0, 1] == matrix[1, 0]
    assert matrix[0, 1] == pytest.approx(1 / math.pi, abs=1e-8)


@pytest.mark.parametrize("T", [0.02, 0.05, 0.1])
def test_two_site_closed_form_matches_integral(T):
    closed = two_site_qfi(TwoSiteSpec(), T)
    exact = two_site_qfi(TwoSiteSpec(covariance_mode=CovarianceMode.EXACT_INTEGRAL), T)
    assert exact == pytest.approx(closed, rel=1e-6)


def test_two_site_weak_qfi_formula():
    spec = TwoSiteSpec(coupling=Coupling.WEAK, t=2.0)
    T = 0.7
    x = 2.0 / (2 * T)
    assert two_site_qfi(spec, T) == pytest.approx(4.0 / math.cosh(x) ** 2 / (2 * T ** 4), rel=1e-12)


def test_two_site_weak_probabilities_keep_relative_precision():
    p = two_site_probabilities(TwoSiteSpec(coupling=Coupling.WEAK, t=1.0))(0.05)
    down = math.exp(-20.0) / (1.0 + math.exp(-20.0))
    assert p[2] == pytest.approx(down ** 2, rel=1e-12)
    assert p[0] == p[3] == pytest.approx(down * (1.0 - down), rel=1e-12)
    assert p.sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("coupling", [Coupling.STRONG, Coupling.WEAK])
def test_two_site_occupation_measurement_is_optimal(coupling):
    spec = TwoSiteSpec(coupling=coupling)
    T = 0.1
    data = two_site_outcome_data(spec, T)
    assert data.probs.sum() == pytest.approx(1.0)
    assert fisher_information(data) == pytest.approx(two_site_qfi(spec, T), rel=1e-9)
    assert fisher_from_probabilities(two_site_probabilities(spec), T) == pytest.approx(
        two_site_qfi(spec, T), rel=1e-6)


def test_two_site_strong_mean_energy_vanishes():
    data = two_site_outcome_data(TwoSiteSpec(), 0.05)
    assert data.mean_energy == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("coupling", [Coupling.STRONG, Coupling.WEAK])
def test_two_site_povm_reproduces_outcome_data(coupling):
    spec = TwoSiteSpec(coupling=coupling)
    T = 0.1
    povm = two_site_povm()
    assert validate(povm).is_valid
    measured = outcome_spectrum(povm, two_site_hamiltonian(spec, T), T)
    assert measured.probs == pytest.approx(two_site_outcome_data(spec, T).probs, abs=1e-12)


def test_two_site_weak_energies_from_hamiltonian():
    spec = TwoSiteSpec(coupling=Coupling.WEAK)
    measured = outcome_spectrum(two_site_povm(), two_site_hamiltonian(spec, 0.5), 0.5)
    assert measured.energies == pytest.approx([0.0, -1.0, 1.0, 0.0], abs=1e-12)


def test_two_site_gap():
    info = two_site_gap(TwoSiteSpec(coupling=Coupling.WEAK))
    assert (info.gap, info.degeneracy) == (1.0, 2.0)
    T = 0.05
    assert two_site_qfi(TwoSiteSpec(coupling=Coupling.WEAK), T) == pytest.approx(
        qfi_low_temperature(info, T), rel=1e-6)
    with pytest.raises(DomainError):
        two_site_gap(TwoSiteSpec())


# ============================================================================
# BOSE-EINSTEIN CONDENSATION
# ============================================================================


def test_bec_critical_temperature():
    spec = BoseGasSpec()
    expected = 2 * math.pi * (100 / ZETA_15) ** (2 / 3)
    assert bec_critical_temperature(spec) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(71.37, rel=1e-3)


def test_bec_thermo_heat_capacity():
    spec = BoseGasSpec()
    Tc = bec_critical_temperature(spec)
    assert bec_heat_capacity_thermo(spec, Tc) == pytest.approx(1.925670, abs=1e-5)
    assert bec_heat_capacity_thermo(spec, 0.5 * Tc) == pytest.approx(1.925670 * 0.5 ** 1.5, abs=1e-5)
    assert bec_heat_capacity_thermo(spec, 1e6 * Tc) == pytest.approx(1.5, rel=1e-6)


def test_bec_gap():
    info = bec_gap(BoseGasSpec())
    assert info.gap == pytest.approx(3 * math.pi ** 2 / 2)
    assert info.degeneracy == 3.0


def test_bec_low_temperature_chemical_potential():
    spec = BoseGasSpec()
    ground = 3 * math.pi ** 2 / 2
    mu, _ = bec_mu(spec, 1.0)
    assert ground - mu == pytest.approx(math.log1p(1 / 100), rel=1e-4)


def test_bec_mu_decreases_with_temperature():
    spec = BoseGasSpec()
    mus = [bec_mu(spec, T)[0] for T in (10.0, 40.0, 70.0, 100.0, 150.0)]
    assert all(b < a for a, b in zip(mus, mus[1:]))


@pytest.mark.slow
def test_bec_heat_capacity_above_transition():
    spec = BoseGasSpec()
    T = 3 * bec_critical_temperature(spec)
    c_finite = bec_qfi(spec, T) * T ** 2 / spec.N
    assert c_finite == pytest.approx(bec_heat_capacity_thermo(spec, T), rel=0.15)


@pytest.mark.slow
def test_bec_log_slope_changes_across_transition():
    spec = BoseGasSpec()
    Tc = bec_critical_temperature(spec)

    def log_slope(T):
        lo, hi = T / 1.05, T * 1.05
        return (math.log(bec_qfi(spec, hi)) - math.log(bec_qfi(spec, lo))) / (2 * math.log(1.05))

    assert log_slope(0.5 * Tc) - log_slope(2 * Tc) > 0.5


# ============================================================================
# ISING MODEL
# ============================================================================


def test_ising_2x2_ground_state():
    levels = ising_histogram(IsingSpec(Lx=2, Ly=2))
    assert levels.energies[0] == pytest.approx(-8.0)
    assert levels.degeneracies[0] == 2
    assert int(levels.degeneracies.sum()) == 16


def test_ising_2x2_counts_each_bond_twice():
    levels = ising_histogram(IsingSpec(Lx=2, Ly=2, J=1.0))
    assert list(levels.energies) == pytest.approx([-8.0, 0.0, 8.0])
    assert list(levels.degeneracies) == [2, 12, 2]


def test_ising_4x4_gap():
    info = ising_gap(IsingSpec())
    assert info.gap == pytest.approx(8.0)
    assert info.degeneracy == pytest.approx(16.0)


def test_ising_antiferromagnet_symmetry():
    T = 2.0
    ferro = ising_qfi_bruteforce(IsingSpec(J=1.0), T)
    anti = ising_qfi_bruteforce(IsingSpec(J=-1.0), T)
    assert anti.qfi == pytest.approx(ferro.qfi, rel=1e-12)
    assert anti.log_Z == pytest.approx(ferro.log_Z, rel=1e-12)


def test_ising_enumeration_cap():
    with pytest.raises(DomainError):
        ising_histogram(IsingSpec(Lx=5, Ly=5))


@pytest.mark.parametrize("T", [1.0, 2.0, 2.269, 3.0])
def test_kaufman_matches_enumeration(T):
    exact = ising_qfi_bruteforce(IsingSpec(), T).log_Z
    assert ising_log_partition_kaufman(4, T) == pytest.approx(exact, rel=1e-9)


def test_kaufman_small_and_antiferromagnetic():
    exact = ising_qfi_bruteforce(IsingSpec(Lx=2, Ly=2), 1.5).log_Z
    assert ising_log_partition_kaufman(2, 1.5) == pytest.approx(exact, rel=1e-9)
    assert ising_log_partition_kaufman(4, 1.5, J=-1.0) == pytest.approx(
        ising_log_partition_kaufman(4, 1.5), rel=1e-12)
    with pytest.raises(DomainError):
        ising_log_partition_kaufman(3, 1.5, J=-1.0)
    with pytest.raises(DomainError):
        ising_log_partition_kaufman(1, 1.5)


def test_ising_finite_peak_near_transition():
    spec = IsingSpec()
    T = np.linspace(1.0, 4.0, 61)
    F = [ising_qfi_bruteforce(spec, t).qfi for t in T]
    peak = T[int(np.argmax(F))]
    assert peak == pytest.approx(ising_critical_temperature(1.0), rel=0.15)


def test_onsager_logarithmic_divergence():
    Tc = ising_critical_temperature(1.0)
    assert Tc == pytest.approx(2.269185, abs=1e-6)
    near = ising_heat_capacity_onsager(1.0, Tc * (1 - 1e-4))
    far = ising_heat_capacity_onsager(1.0, Tc * (1 - 1e-3))
    assert near - far == pytest.approx(ONSAGER_LOG_AMPLITUDE * math.log(10), rel=0.05)
    above = ising_heat_capacity_onsager(1.0, Tc * (1 + 1e-4)) - ising_heat_capacity_onsager(1.0, Tc * (1 + 1e-3))
    assert above == pytest.approx(ONSAGER_LOG_AMPLITUDE * math.log(10), rel=0.05)
    assert ising_heat_capacity_onsager(1.0, Tc) > near


def test_onsager_limits():
    high = ising_heat_capacity_onsager(1.0, 1e3)
    assert 0 < high < 1e-5
    assert ising_heat_capacity_onsager(1.0, 0.3) < 1e-3
    assert ising_heat_capacity_onsager(-1.0, 2.0) == pytest.approx(ising_heat_capacity_onsager(1.0, 2.0))
    spec = IsingSpec()
    assert ising_qfi_onsager(spec, 2.0) == pytest.approx(16 * ising_heat_capacity_onsager(1.0, 2.0) / 4.0)


def test_ising_probabilities_normalized():
    probs = ising_probabilities(IsingSpec())
    p = probs(2.0)
    assert p.sum() == pytest.approx(1.0)
    assert fisher_from_probabilities(probs, 2.0) == pytest.approx(
        ising_qfi_bruteforce(IsingSpec(), 2.0).qfi, rel=1e-6)
