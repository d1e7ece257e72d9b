import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from adialim.exceptions import DomainError, InvariantViolation
from adialim.profiles import MassProfile, charge_form, dispersion, japanese, spectral_projector
from adialim.states import (
    CovarianceFamily,
    adiabatic_limit_closed_form,
    check_hat_state,
    check_state,
    coth_half,
    effective_beta,
    hadamard_family,
    hadamard_hat,
    hadamard_remainder,
    hat_transform,
    kms_covariance,
    kms_defect,
    kms_family,
    shape_function,
    smoothing_report,
    vacuum_covariance,
    vacuum_family,
    validate_hadamard,
)

EPS = np.linspace(0.5, 4.0, 33)


# -- per-mode covariances ------------------------------------------------------


def test_vacuum_covariance_explicit():
    # the per-mode vacuum covariance (1/2)[[eps, 1], [1, 1/eps]]
    p = MassProfile.constant(np.sqrt(5.0))
    np.testing.assert_allclose(vacuum_covariance(2.0, 0.0, p), 0.5 * np.array([[3, 1], [1, 1 / 3]]), atol=1e-15)


@given(eps=st.floats(0.05, 50), t=st.floats(-1, 1))
def test_vacuum_is_q_times_projector_and_pure(eps, t):
    p = MassProfile.smoothstep(1.0, 2.0)
    lam = vacuum_covariance(eps, t, p)
    np.testing.assert_allclose(lam, charge_form() @ spectral_projector(eps, t, p), atol=1e-14 * max(1, eps))
    assert check_state(lam) >= -1e-12
    # pure state: both lam and lam - q are rank one
    assert abs(np.linalg.det(lam)) <= 1e-12 * max(1, eps)
    assert abs(np.linalg.det(lam - charge_form())) <= 1e-12 * max(1, eps)


def test_coth_half_against_direct_formula():
    x = np.array([1e-8, 1e-3, 0.5, 3.0, 40.0, 699.0, 800.0, 1e6])
    with np.errstate(over="ignore", invalid="ignore"):
        ref = np.where(x < 700, np.cosh(x / 2) / np.sinh(x / 2), 1.0)
    np.testing.assert_allclose(coth_half(x), ref, rtol=1e-12)


@given(eps=st.floats(0.05, 20), beta=st.floats(0.01, 100))
def test_kms_is_a_state_and_matches_thermal_formula(eps, beta):
    p = MassProfile.constant(0.8)
    lam = kms_covariance(eps, 0.0, p, beta)
    e = dispersion(eps, 0.0, p)
    c = coth_half(beta * e)
    np.testing.assert_allclose(lam, 0.5 * np.array([[e * c, 1], [1, c / e]]), rtol=1e-13)
    check_state(lam, tol=1e-10 * c * max(e, 1 / e))


def test_kms_tends_to_vacuum_at_zero_temperature(profile_a):
    np.testing.assert_allclose(kms_covariance(EPS, -1, profile_a, 1e4), vacuum_covariance(EPS, -1, profile_a), atol=1e-15)


def test_kms_rejects_nonpositive_beta(profile_a):
    with pytest.raises(DomainError):
        kms_covariance(1.0, 0.0, profile_a, 0.0)


@given(
    b=st.complex_numbers(max_magnitude=5),
    c=st.complex_numbers(max_magnitude=5),
    d=st.complex_numbers(max_magnitude=1).filter(lambda z: abs(z) <= 1),
)
def test_hadamard_hat_is_a_state(b, c, d):
    hat = hadamard_hat(b, c, d)
    check_hat_state(hat, tol=1e-10 * (1 + abs(b) ** 2 + abs(c) ** 2))


def test_hadamard_hat_rejects_large_d():
    with pytest.raises(InvariantViolation):
        hadamard_hat(0.1, 0.1, 1.5)


def test_check_state_rejects_nonpositive():
    with pytest.raises(InvariantViolation):
        check_state(np.array([[1.0, 0], [0, -1.0]], dtype=complex))
    with pytest.raises(InvariantViolation):
        check_state(np.array([[1.0, 1.0], [0, 1.0]], dtype=complex))


def test_hat_transform_of_vacuum_is_diagonal_projection(profile_b):
    hat = hat_transform(vacuum_covariance(EPS, 0.3, profile_b), EPS, 0.3, profile_b)
    np.testing.assert_allclose(hat, np.broadcast_to(np.diag([1.0, 0.0]), hat.shape), atol=1e-14)


def test_named_shapes():
    assert shape_function("gaussian")(1.0) == pytest.approx(np.exp(-1))
    with pytest.raises(DomainError):
        shape_function("nope")


# -- families and limits --------------------------------------------------------


@pytest.mark.parametrize("build", [lambda p: vacuum_family(p), lambda p: kms_family(p, 2.0), lambda p: hadamard_family(p)])
def test_families_are_states(profile_a, build):
    fam = build(profile_a)
    assert fam.reference_time == -1
    assert fam.check(EPS) >= -1e-12
    assert fam(EPS).shape == (33, 2, 2)


def test_vacuum_limit_is_final_vacuum(profile_b):
    lim = adiabatic_limit_closed_form(vacuum_family(profile_b), profile_b)
    assert lim.reference_time == 1
    np.testing.assert_allclose(lim(EPS), vacuum_covariance(EPS, 1, profile_b), atol=1e-14)


def test_kms_limit_matches_published_closed_form(profile_a):
    # the limit keeps coth(beta eps_{-1} / 2) and swaps in the final frequency eps_1
    beta = 1.0
    lim = adiabatic_limit_closed_form(kms_family(profile_a, beta), profile_a)
    e_m = dispersion(EPS, -1, profile_a)
    e_p = dispersion(EPS, 1, profile_a)
    c = 1 / np.tanh(beta * e_m / 2)
    expected = np.empty((EPS.size, 2, 2))
    expected[:, 0, 0] = e_p * c
    expected[:, 0, 1] = expected[:, 1, 0] = 1
    expected[:, 1, 1] = c / e_p
    np.testing.assert_allclose(lim(EPS), 0.5 * expected, rtol=1e-13)


# beta * eps_t stays <= 10 here: inverting coth near 1 amplifies rounding by ~exp(beta * eps_t)
@given(beta=st.floats(0.1, 2.0), m1=st.floats(0.2, 3), m2=st.floats(0.2, 3))
def test_effective_beta_is_beta_times_frequency_ratio(beta, m1, m2):
    p = MassProfile.smoothstep(m1, m2)
    lim = adiabatic_limit_closed_form(kms_family(p, beta), p)
    eps = np.linspace(0.5, 4.0, 9)
    ratio = dispersion(eps, -1, p) / dispersion(eps, 1, p)
    np.testing.assert_allclose(effective_beta(lim, p, eps), beta * ratio, rtol=1e-9)


def test_kms_defect_values():
    p = MassProfile.smoothstep(1.0, 2.0)
    lim = adiabatic_limit_closed_form(kms_family(p, 1.0), p)
    # oracle: beta * sqrt(eps^2 + 1) / sqrt(eps^2 + 4) is increasing in eps, so the spread is end-to-end
    f = lambda e: np.sqrt(e * e + 1) / np.sqrt(e * e + 4)  # noqa: E731
    expected = f(4.0) - f(0.5)
    eps = np.linspace(0.5, 4.0, 64)
    assert kms_defect(lim, p, eps) == pytest.approx(expected, rel=1e-10)
    assert kms_defect(lim, p, eps) > 0.1
    # refining the grid does not change the defect (end points are on both grids)
    assert kms_defect(lim, p, np.linspace(0.5, 4.0, 128)) == pytest.approx(expected, rel=1e-10)


def test_kms_defect_vanishes_for_equal_masses():
    p = MassProfile.smoothstep(1.5, 1.5)
    lim = adiabatic_limit_closed_form(kms_family(p, 1.0), p)
    assert kms_defect(lim, p, EPS) <= 1e-10


def test_hadamard_remainder_formula(profile_a):
    # b = c = exp(-eps^2), d = 1 gives r = exp(-2 eps^2) diag(eps_1, 1/eps_1)
    lim = adiabatic_limit_closed_form(hadamard_family(profile_a), profile_a)
    r = hadamard_remainder(lim, profile_a)(EPS)
    e1 = dispersion(EPS, 1, profile_a)
    g2 = np.exp(-2 * EPS**2)
    expected = np.zeros_like(r)
    expected[:, 0, 0] = g2 * e1
    expected[:, 1, 1] = g2 / e1
    np.testing.assert_allclose(r, expected, atol=1e-12)


def test_smoothing_report_bounded_by_analytic_maximum(profile_a):
    lim = adiabatic_limit_closed_form(hadamard_family(profile_a), profile_a)
    report = smoothing_report(hadamard_remainder(lim, profile_a), EPS, 8)
    assert len(report) == 9
    e1 = lambda e: np.sqrt(e * e + 4)  # noqa: E731
    g = lambda e: japanese(e) ** 8 * np.exp(-2 * e * e) * max(e1(e), 1 / e1(e))  # noqa: E731
    res = minimize_scalar(lambda e: -g(e), bounds=(0.0, 6.0), method="bounded", options={"xatol": 1e-12})
    assert report[8] <= -res.fun + 1e-9


def test_hadamard_remainder_needs_final_time(profile_a):
    with pytest.raises(DomainError):
        hadamard_remainder(vacuum_family(profile_a), profile_a)


def test_validate_hadamard(profile_a):
    # oracle: <eps>^8 (|b| + |c|) with b = c = exp(-eps^2), maximised on the grid
    expected = np.max(japanese(EPS) ** 8 * 2 * np.exp(-(EPS**2)))
    assert validate_hadamard(hadamard_family(profile_a), EPS) == pytest.approx(expected, rel=1e-14)


def test_limit_requires_initial_time(profile_a):
    fam = vacuum_family(profile_a, reference_time=1)
    with pytest.raises(DomainError):
        adiabatic_limit_closed_form(fam, profile_a)


def test_json_round_trip(profile_a):
    fam = kms_family(profile_a, 2.0)
    doc = json.loads(json.dumps(fam.to_json(EPS)))
    assert doc["kind"] == "kms" and len(doc["grid"]) == EPS.size
    back = CovarianceFamily.from_json(doc)
    np.testing.assert_array_equal(back(EPS), fam(EPS))
