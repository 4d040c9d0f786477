import numpy as np
import pytest

from shear_damping.profiles import (
    REQUIRED_CONDITIONS,
    ProfileAssumptionError,
    build_map,
    check_assumptions,
    cutoff_exponent,
    make_bump_profile,
    make_couette,
    make_remark_profile,
    plateau_cutoff,
    profile_from_spec,
)


def test_couette_is_linear(couette):
    y = np.linspace(0.0, 1.0, 11)
    assert np.allclose(couette.b(y), y)
    assert np.all(couette.b1(y) == 1.0)
    assert np.all(couette.b2(y) == 0.0)
    assert couette.b(0.25) == pytest.approx(0.25)
    assert couette.gevrey_class == float("inf")


def test_couette_rejects_collar_order():
    with pytest.raises(ProfileAssumptionError, match="theta1 < theta0"):
        make_couette(theta1=0.06)


def test_bump_keeps_endpoints_and_flat_collars(small_bump):
    assert small_bump.b(1.0) - small_bump.b(0.0) == pytest.approx(1.0, abs=1e-14)
    collars = np.concatenate([np.linspace(0.0, 0.08, 50), np.linspace(0.92, 1.0, 50)])
    assert np.all(small_bump.b2(collars) == 0.0)
    assert float(np.max(np.abs(small_bump.b2(np.linspace(0.0, 1.0, 4001))))) == pytest.approx(
        0.05, rel=1e-2
    )


def test_bump_first_derivative_matches_finite_difference(small_bump):
    y = np.linspace(0.1, 0.9, 17)
    h = 1e-6
    fd = (small_bump.b(y + h) - small_bump.b(y - h)) / (2 * h)
    assert np.allclose(small_bump.b1(y), fd, atol=1e-7)


def test_bump_rejects_amplitude_outside_band():
    with pytest.raises(ProfileAssumptionError, match="outside the band"):
        make_bump_profile(100.0)


def test_remark_profile_lifts_slope_above_one():
    profile = make_remark_profile(0.01)
    assert profile.slope > 1.0
    assert float(np.min(profile.b1(profile.reference))) >= 1.0


def test_remark_gate_rejects_large_third_derivative():
    with pytest.raises(ProfileAssumptionError, match="spectral gate"):
        make_remark_profile(1.0)


def test_profile_from_spec_kinds():
    assert profile_from_spec({"kind": "couette"}).kind == "couette"
    bump = profile_from_spec({"kind": "bump", "amplitude": 0.02})
    assert bump.a == pytest.approx(cutoff_exponent(0.5))
    assert bump.name == "bump_0.02"
    assert profile_from_spec({"kind": "remark", "amplitude": 0.01}).slope > 1.0
    with pytest.raises(ProfileAssumptionError, match="unknown profile kind"):
        profile_from_spec({"kind": "poiseuille"})


def test_coordinate_map_inverts_profile(small_bump):
    cmap = build_map(small_bump)
    y = np.linspace(0.0, 1.0, 33)
    assert np.allclose(cmap.binv(small_bump.b(y)), y, atol=1e-10)
    assert np.allclose(cmap.B(small_bump.b(y)), small_bump.b1(y), atol=1e-9)
    assert cmap.Psi(cmap.v_hi + 1.0) == 0.0


def test_plateau_cutoff_levels():
    theta1, a = 0.04, cutoff_exponent(0.5)
    assert plateau_cutoff(0.5, theta1, a) == pytest.approx(1.0)
    assert plateau_cutoff(theta1 / 4.0, theta1, a) == 0.0
    assert plateau_cutoff(1.0 - theta1 / 4.0, theta1, a) == 0.0
    inner = np.linspace(theta1 / 2.0, 1.0 - theta1 / 2.0, 41)
    assert np.allclose(plateau_cutoff(inner, theta1, a), 1.0)


def test_couette_passes_every_condition(couette):
    report = check_assumptions(couette, 0.5, 0.2)
    assert report.passed
    assert report.first_failure is None
    payload = report.to_dict()
    assert payload["required"] == list(REQUIRED_CONDITIONS)
    assert {e["condition"] for e in payload["entries"]} >= set(REQUIRED_CONDITIONS)


def test_unit_slope_bump_fails_only_the_sufficient_spectral_slope(small_bump):
    report = check_assumptions(small_bump, 0.5, 0.2)
    assert report.entry("collar").passed
    assert report.entry("monotone").passed
    assert not report.entry("spectral_min_slope").passed
    assert "spectral_min_slope" not in report.required


def test_check_assumptions_validates_arguments(couette):
    with pytest.raises(ValueError, match="need s in"):
        check_assumptions(couette, 1.5, 0.2)
