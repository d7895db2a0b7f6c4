# test_scaling.py - Gap expansions, asymptotic predictors and the scaling classifier
import math

import numpy as np
import pytest

from errors import DomainError, IllConditionedFitError, InsufficientDataError, ValidationError
from models import Coupling, TwoSiteSpec, two_site_outcome_data, two_site_qfi
from scaling import (
    GapExpansion, ScalingKind, classify, fit_exponential_rate, fit_gap_expansion,
    formal_probabilities, predict_exponential, predict_polynomial,
)
from thermal_core import canonical_point

PI = math.pi
# Low-temperature outcome energies E_m ~ c_m T^3 of the strong-coupling probe (t = 1)
C_PLUS = -PI ** 2 / (3 * (PI + 2))
C_MINUS = PI ** 2 / (3 * (PI - 2))
C_MIXED = 2 * PI ** 2 / (3 * (PI ** 2 - 4))
P_PLUS = (0.5 + 1 / PI) ** 2
P_MINUS = (0.5 - 1 / PI) ** 2
P_MIXED = 0.25 - 1 / PI ** 2
STRONG_T2_COEFFICIENT = PI ** 4 / (18 * (PI ** 2 - 4))


def strong_expansion():
    """Third-order-only expansion, ground outcome '+' first"""
    column = [0.0, C_MIXED - C_PLUS, C_MINUS - C_PLUS, C_MIXED - C_PLUS]
    return GapExpansion.from_orders({3: column}, [P_PLUS, P_MIXED, P_MINUS, P_MIXED],
                                    ("+", "0", "-", "2"))


def strong_traces(T_grid, spec=None):
    spec = spec or TwoSiteSpec()
    data = [two_site_outcome_data(spec, T) for T in T_grid]
    E = np.array([d.energies for d in data]).T
    p = np.array([d.probs for d in data]).T
    return E, p


# ============================================================================
# GAP EXPANSIONS
# ============================================================================


def test_expansion_requires_zero_ground_row():
    with pytest.raises(ValidationError):
        GapExpansion(np.array([[0.1, 0.0], [1.0, 0.0]]), np.array([1.0, 1.0]))


def test_expansion_rejects_negative_gap():
    with pytest.raises(ValidationError):
        GapExpansion.from_orders({0: [0.0, -1.0]}, [1.0, 1.0])


def test_expansion_weights_match_rows():
    with pytest.raises(ValidationError):
        GapExpansion.from_orders({0: [0.0, 1.0]}, [1.0])


def test_gap_evaluates_polynomial():
    ge = GapExpansion.from_orders({0: [0.0, 1.0], 2: [0.0, 3.0]}, [1.0, 1.0])
    assert ge.order == 2 and ge.outcomes == 2
    assert ge.gap(1, 0.5) == pytest.approx(1.0 + 3.0 * 0.25)


def test_formal_probabilities_uniform_without_gaps():
    ge = GapExpansion.from_orders({0: [0.0, 0.0, 0.0]}, [1.0, 2.0, 1.0])
    assert formal_probabilities(ge, 0.3) == pytest.approx([0.25, 0.5, 0.25])


def test_formal_probabilities_boltzmann_pair():
    ge = GapExpansion.from_orders({0: [0.0, 1.0]}, [1.0, 1.0])
    T = 0.4
    p1 = math.exp(-1 / T) / (1 + math.exp(-1 / T))
    assert formal_probabilities(ge, T) == pytest.approx([1 - p1, p1], rel=1e-12)


def test_formal_probabilities_match_strong_probe():
    T = 0.01
    formal = formal_probabilities(strong_expansion(), T)
    exact = two_site_outcome_data(TwoSiteSpec(), T).probs
    # exact order is (0, +, -, 2)
    assert formal == pytest.approx([exact[1], exact[0], exact[2], exact[3]], abs=1e-4)


# ============================================================================
# PREDICTORS
# ============================================================================


def test_predict_exponential_value():
    ge = GapExpansion.from_orders({0: [0.0, 1.0], 1: [0.0, 0.0]}, [1.0, 1.0])
    T = 0.05
    expected = math.exp(-20.0) / T ** 4
    assert predict_exponential(ge, T) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(3.30e-4, rel=2e-3)


@pytest.mark.parametrize("ratio,tol", [(20.0, 0.05), (25.0, 0.02)])
def test_predict_exponential_matches_two_level(two_level, ratio, tol):
    ge = GapExpansion.from_orders({0: [0.0, 1.0]}, [1.0, 1.0])
    T = 1.0 / ratio
    exact = canonical_point(two_level, T).qfi
    pred = predict_exponential(ge, T)
    assert abs(math.log(exact) - math.log(pred)) / abs(math.log(pred)) < tol


def test_predict_exponential_linear_in_excited_weight():
    single = GapExpansion.from_orders({0: [0.0, 1.0]}, [1.0, 1.0])
    double = GapExpansion.from_orders({0: [0.0, 1.0]}, [1.0, 2.0])
    assert predict_exponential(double, 0.1) == pytest.approx(2 * predict_exponential(single, 0.1))


def test_predict_exponential_uses_power_correction():
    ge = GapExpansion.from_orders({0: [0.0, 2.0], 1: [0.0, 1.5]}, [1.0, 1.0])
    T = 0.1
    assert predict_exponential(ge, T) == pytest.approx(4.0 * T ** (1.5 - 4) * math.exp(-20.0))


def test_predict_exponential_needs_gap():
    ge = GapExpansion.from_orders({3: [0.0, 1.0]}, [1.0, 1.0])
    with pytest.raises(DomainError):
        predict_exponential(ge, 0.1)


def test_predict_polynomial_second_order_is_constant():
    ge = GapExpansion.from_orders({2: [0.0, 1.0]}, [1.0, 1.0])
    assert predict_polynomial(ge, 2, 0.1) == pytest.approx(0.25)
    assert predict_polynomial(ge, 2, 0.001) == pytest.approx(0.25)


def test_predict_polynomial_strong_probe_coefficient():
    T = 0.01
    assert STRONG_T2_COEFFICIENT == pytest.approx(0.9219729, abs=1e-7)
    assert predict_polynomial(strong_expansion(), 3, T) == pytest.approx(STRONG_T2_COEFFICIENT * T ** 2, rel=1e-10)
    assert two_site_qfi(TwoSiteSpec(), T) == pytest.approx(STRONG_T2_COEFFICIENT * T ** 2, rel=1e-3)


def test_predict_polynomial_single_outcome_is_zero():
    ge = GapExpansion(np.zeros((1, 4)), np.array([1.0]))
    assert predict_polynomial(ge, 3, 0.1) == 0.0


def test_predict_polynomial_first_order_obeys_third_law():
    ge = GapExpansion.from_orders({1: [0.0, 0.5]}, [1.0, 1.0])
    values = [T ** 2 * predict_polynomial(ge, 1, T) for T in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-2


def test_predict_polynomial_rejects_gapped_expansion():
    ge = GapExpansion.from_orders({0: [0.0, 1.0], 2: [0.0, 1.0]}, [1.0, 1.0])
    with pytest.raises(DomainError):
        predict_polynomial(ge, 2, 0.1)


# ============================================================================
# FITTING
# ============================================================================


def test_fit_recovers_strong_probe_third_order():
    T = np.geomspace(1e-3, 1e-2, 25)
    E, p = strong_traces(T)
    ge = fit_gap_expansion(T, E, order=5, prob_traces=p, labels=("0", "+", "-", "2"))
    assert ge.labels[0] == "+"
    rows = {label: i for i, label in enumerate(ge.labels)}
    c = ge.coefficients
    assert np.all(np.abs(c[:, 1]) < 1e-6)
    assert np.all(np.abs(c[:, 2]) < 1e-6)
    assert c[rows["-"], 3] == pytest.approx(C_MINUS - C_PLUS, rel=1e-2)
    assert c[rows["0"], 3] == pytest.approx(C_MIXED - C_PLUS, rel=1e-2)
    assert c[rows["2"], 3] == pytest.approx(C_MIXED - C_PLUS, rel=1e-2)


def test_fit_round_trips_probabilities():
    T = np.geomspace(1e-3, 1e-2, 25)
    E, p = strong_traces(T)
    ge = fit_gap_expansion(T, E, order=5, prob_traces=p, labels=("0", "+", "-", "2"))
    order = [("0", "+", "-", "2").index(label) for label in ge.labels]
    for j, t in enumerate(T):
        assert formal_probabilities(ge, t) == pytest.approx(p[order, j], abs=1e-4)


def test_fit_weak_probe_constant_gaps():
    spec = TwoSiteSpec(coupling=Coupling.WEAK)
    T = np.linspace(0.05, 0.2, 12)
    E, p = strong_traces(T, spec)
    ge = fit_gap_expansion(T, E, order=2, prob_traces=p, labels=("0", "+", "-", "2"))
    rows = {label: i for i, label in enumerate(ge.labels)}
    assert ge.labels[0] == "+"
    assert ge.coefficients[rows["0"], 0] == pytest.approx(1.0, abs=1e-9)
    assert ge.coefficients[rows["-"], 0] == pytest.approx(2.0, abs=1e-9)
    assert ge.weights == pytest.approx(np.ones(4), rel=1e-6)


def test_fit_constant_traces_give_zero_gaps():
    T = np.linspace(0.1, 1.0, 10)
    E = np.zeros((3, T.size))
    ge = fit_gap_expansion(T, E, order=3)
    assert np.allclose(ge.coefficients, 0.0)
    assert ge.weights == pytest.approx(np.ones(3))


def test_fit_ill_conditioned_window():
    T = np.linspace(1.0, 1.0 + 1e-6, 12)
    E = np.vstack([np.zeros_like(T), T])
    with pytest.raises(IllConditionedFitError):
        fit_gap_expansion(T, E, order=5)


def test_fit_needs_enough_points():
    T = np.array([0.1, 0.2, 0.3])
    with pytest.raises(InsufficientDataError):
        fit_gap_expansion(T, np.zeros((2, 3)), order=5)


def test_fit_shape_checked():
    with pytest.raises(ValidationError):
        fit_gap_expansion(np.linspace(0.1, 1, 10), np.zeros((2, 9)), order=2)


def test_fit_exponential_rate_exact():
    T = np.linspace(0.05, 0.5, 20)
    y = 1.5 - 2.0 * np.log(T) + 0.7 / T
    fit = fit_exponential_rate(T, y)
    assert fit["a"] == pytest.approx(1.5, rel=1e-8)
    assert fit["k"] == pytest.approx(-2.0, rel=1e-8)
    assert fit["b"] == pytest.approx(0.7, rel=1e-8)
    assert fit["r2"] == pytest.approx(1.0)


# ============================================================================
# CLASSIFICATION
# ============================================================================


def test_classify_two_level_exponential(two_level):
    T = np.geomspace(0.02, 0.05, 20)
    F = [canonical_point(two_level, t).qfi for t in T]
    verdict = classify(T, F, gap_proxy=1.0)
    assert verdict.kind is ScalingKind.EXPONENTIAL
    assert verdict.gap == pytest.approx(1.0, rel=0.02)
    assert verdict.power_correction == pytest.approx(0.0, abs=0.05)
    assert verdict.window_ok and verdict.warning is None


def test_classify_strong_probe_polynomial():
    T = np.geomspace(1e-3, 1e-2, 20)
    F = [two_site_qfi(TwoSiteSpec(), t) for t in T]
    verdict = classify(T, F, override=True)
    assert verdict.kind is ScalingKind.POLYNOMIAL
    assert verdict.power == pytest.approx(2.0, abs=0.05)


def test_classify_constant_is_power_zero():
    T = np.geomspace(0.01, 0.1, 10)
    verdict = classify(T, np.full(T.size, 3.0), override=True)
    assert verdict.kind is ScalingKind.POLYNOMIAL
    assert verdict.power == pytest.approx(0.0, abs=1e-9)


def test_classify_synthetic_exponential_recovers_gap():
    T = np.geomspace(0.01, 0.05, 25)
    F = 2.0 * T ** -2.0 * np.exp(-0.5 / T)
    verdict = classify(T, F, gap_proxy=0.5)
    assert verdict.kind is ScalingKind.EXPONENTIAL
    assert verdict.gap == pytest.approx(0.5, rel=0.02)
    assert verdict.power_correction == pytest.approx(2.0, abs=0.1)


def test_classify_synthetic_power_law():
    T = np.geomspace(0.01, 0.1, 15)
    verdict = classify(T, 5.0 * T ** 3, override=True)
    assert verdict.kind is ScalingKind.POLYNOMIAL
    assert verdict.power == pytest.approx(3.0, abs=0.1)


def test_classify_flags_shallow_window(two_level):
    T = np.geomspace(0.05, 0.2, 10)
    F = [canonical_point(two_level, t).qfi for t in T]
    verdict = classify(T, F)
    assert not verdict.window_ok
    assert verdict.warning
    assert verdict.to_dict()["window_ok"] is False


def test_classify_input_errors():
    T = np.geomspace(0.01, 0.1, 10)
    with pytest.raises(InsufficientDataError):
        classify(T[:5], np.ones(5), override=True)
    with pytest.raises(ValidationError):
        classify(T, np.ones(9), override=True)
    with pytest.raises(DomainError):
        classify(T, np.zeros(10), override=True)
