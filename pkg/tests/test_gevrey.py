import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from shear_damping import gevrey
from shear_damping.gevrey import (
    GevreyResolutionError,
    GevreyWeight,
    SpectralField,
    bracket,
    cutoff_plateau,
    cutoff_psi,
    cutoff_psi_derivatives,
    fourier_transform,
    gevrey_norm,
    log_weight,
    smooth_step,
    truncated_exponent,
    verify_cutoff_decay,
    verify_weight_inequalities,
    weight,
)


def test_bracket_scalar_and_array():
    assert bracket() == 1.0
    assert bracket(0.0, 0.0) == 1.0
    assert bracket(2.0) == pytest.approx(math.sqrt(5.0))
    assert np.allclose(bracket(np.array([0.0, 3.0]), 4.0), [math.sqrt(17.0), math.sqrt(26.0)])


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"lam": 0.0, "s": 0.5}, "lambda must be positive"),
        ({"lam": 0.1, "s": 1.0}, "Gevrey index"),
        ({"lam": 0.1, "s": 0.5, "rho": 1.0}, "rho must exceed 1"),
    ],
)
def test_weight_rejects_bad_parameters(kwargs, message):
    with pytest.raises(ValueError, match=message):
        GevreyWeight(**kwargs)


def test_truncated_exponent_is_continuous_and_flat_past_rho():
    s, rho = 0.5, 10.0
    plateau = (1.0 - s) * rho**s
    assert float(truncated_exponent(rho, s, rho)) == pytest.approx(plateau)
    assert float(truncated_exponent(rho * (1 - 1e-9), s, rho)) == pytest.approx(plateau, rel=1e-8)
    assert np.all(truncated_exponent(np.array([20.0, 1e6]), s, rho) == plateau)


def test_weight_matches_exponential_of_log_weight():
    w = GevreyWeight(lam=0.3, s=0.5)
    assert weight(w, 1, 2.0) == pytest.approx(math.exp(0.3 * math.sqrt(6.0)))
    assert log_weight(w, 0, 0.0) == pytest.approx(0.3)
    assert weight(w, 1, 1e30) == math.inf


@given(
    k=st.integers(min_value=-64, max_value=64).filter(lambda v: v != 0),
    eta=st.floats(min_value=-1e4, max_value=1e4),
    alpha=st.floats(min_value=-1e4, max_value=1e4),
)
@settings(max_examples=200, deadline=None)
def test_weight_shift_is_bounded_by_shift_bracket(k, eta, alpha):
    w = GevreyWeight(lam=0.2, s=0.5)
    excess = log_weight(w, k, eta) - log_weight(w, k, eta - alpha) - w.lam * bracket(alpha) ** w.s
    assert excess <= 1e-9


def test_fourier_transform_of_gaussian():
    n = 1024
    h = 40.0 / n
    v = -20.0 + h * np.arange(n)
    xi, spectrum = fourier_transform(np.exp(-0.5 * v**2), -20.0, h)
    near = np.abs(xi) <= 5.0
    expected = math.sqrt(2.0 * math.pi) * np.exp(-0.5 * xi[near] ** 2)
    assert np.allclose(spectrum[near], expected, atol=1e-10)
    assert np.all(np.diff(xi) > 0)


def test_spectral_field_rejects_zero_mode_and_shape_mismatch():
    xi = np.linspace(-1.0, 1.0, 5)
    with pytest.raises(ValueError, match="zero mode"):
        SpectralField(ks=(0, 1), xi=xi, values=np.zeros((2, 5)))
    with pytest.raises(ValueError, match="does not match"):
        SpectralField(ks=(1,), xi=xi, values=np.zeros((2, 5)))


def test_gevrey_norm_of_zero_field_is_zero():
    xi = np.linspace(-10.0, 10.0, 101)
    field = SpectralField(ks=(1,), xi=xi, values=np.zeros((1, 101)))
    assert gevrey_norm(field, GevreyWeight(0.2, 0.5)) == 0.0


def test_gevrey_norm_matches_direct_quadrature():
    xi = np.linspace(-40.0, 40.0, 8001)
    values = np.exp(-(xi**2))[None, :]
    w = GevreyWeight(0.2, 0.5)
    field = SpectralField(ks=(1,), xi=xi, values=values)
    direct = math.sqrt(trapezoid(np.exp(2.0 * w.lam * bracket(1, xi) ** w.s) * values[0] ** 2, xi))
    assert gevrey_norm(field, w) == pytest.approx(direct, rel=1e-10)


def test_gevrey_norm_refuses_unresolved_tail():
    xi = np.linspace(-10.0, 10.0, 201)
    field = SpectralField(ks=(1,), xi=xi, values=np.ones((1, 201)))
    with pytest.raises(GevreyResolutionError, match="widen the frequency grid"):
        gevrey_norm(field, GevreyWeight(0.2, 0.5))


def test_cutoff_psi_shape():
    x = np.linspace(0.0, 1.0, 1001)
    psi = cutoff_psi(2.0, x)
    assert psi[0] == 0.0 and psi[-1] == 0.0
    assert np.allclose(psi, psi[::-1])
    assert float(np.max(psi)) == pytest.approx(math.exp(-2.0 * 2.0**2.0))
    assert cutoff_psi(2.0, 1.5) == 0.0


def test_cutoff_psi_derivatives_match_finite_differences():
    a, c, h = 2.0, 0.5, 1e-5
    x = np.linspace(0.2, 0.8, 7)
    _, d1, d2, d3 = cutoff_psi_derivatives(a, x, c)
    plus = cutoff_psi_derivatives(a, x + h, c)
    minus = cutoff_psi_derivatives(a, x - h, c)
    assert np.allclose(d1, (plus[0] - minus[0]) / (2 * h), rtol=1e-6, atol=1e-9)
    assert np.allclose(d2, (plus[1] - minus[1]) / (2 * h), rtol=1e-6, atol=1e-9)
    assert np.allclose(d3, (plus[2] - minus[2]) / (2 * h), rtol=1e-5, atol=1e-8)


def test_cutoff_plateau_is_one_in_the_middle():
    rho = 0.95
    inner = np.linspace(1.0 - rho, rho, 51)
    assert np.allclose(cutoff_plateau(1.0, rho, inner), 1.0)
    assert cutoff_plateau(1.0, rho, -0.1) == 0.0
    assert cutoff_plateau(1.0, rho, 1.1) == 0.0
    with pytest.raises(ValueError, match=r"\[0.9, 1\)"):
        cutoff_plateau(1.0, 0.5, inner)


def test_smooth_step_endpoints():
    assert smooth_step(2.0, 0.0) == 0.0
    assert smooth_step(2.0, -1.0) == 0.0
    assert smooth_step(2.0, 1.0) == 1.0
    assert smooth_step(2.0, 0.5) == pytest.approx(0.5)
    t = np.linspace(0.0, 1.0, 101)
    assert np.all(np.diff(smooth_step(2.0, t)) >= 0.0)


def test_weight_inequalities_are_reproducible_and_exact_checks_hold():
    w = GevreyWeight(0.2, 0.5)
    first = verify_weight_inequalities(w, 10_000, seed=7)
    second = verify_weight_inequalities(w, 10_000, seed=7)
    assert first.to_dict() == second.to_dict()
    assert first.check("shift").violations == 0
    assert first.check("bracket_split").violations == 0
    assert first.trials == 10_000 and first.seed == 7


def test_weight_inequalities_fail_when_the_fitted_constant_drifts(monkeypatch):
    real = gevrey._weight_checks
    calls = []

    def drifting(w, draws, rhos):
        checks, notes = real(w, draws, rhos)
        calls.append(w)
        if len(calls) == 2:
            checks = [
                replace(c, constant=1.5 * c.constant) if c.name.startswith("shift_difference") else c
                for c in checks
            ]
        return checks, notes

    monkeypatch.setattr(gevrey, "_weight_checks", drifting)
    report = verify_weight_inequalities(GevreyWeight(0.2, 0.5), 10_000, seed=3)
    assert len(calls) == 2
    assert any(check.name.startswith("shift_difference") and check.constant > 0 for check in report.checks)
    assert not report.passed
    assert any("exceeds 0.1" in note for note in report.notes)


def test_weight_inequalities_need_enough_trials():
    with pytest.raises(ValueError, match="at least 10"):
        verify_weight_inequalities(GevreyWeight(0.2, 0.5), 100)


def test_cutoff_decay_rejects_coarse_grid():
    with pytest.raises(ValueError, match="n >= 4096"):
        verify_cutoff_decay(1.0, 1024)


@pytest.mark.slow
def test_cutoff_decay_reports_class_exponent():
    report = verify_cutoff_decay(2.0, 4096)
    assert report.exponent == pytest.approx(2.0 / 3.0)
    assert report.subject == "psi_2"
    assert report.to_dict()["window"][0] < report.to_dict()["window"][1]
