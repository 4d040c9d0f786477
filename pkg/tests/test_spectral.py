import numpy as np
import pytest

from shear_damping.evolution import initial_data
from shear_damping.gevrey import GevreyWeight
from shear_damping.profiles import build_map
from shear_damping.spectral import (
    CriticalLayerResolutionError,
    apply_S,
    data_spectrum,
    embedded_eigenvalue_scan,
    eps_schedule,
    h1k_norm,
    lap_difference,
    richardson,
    s_operator_ratio,
    solve_eigenfunction,
    theta_stream,
    theta_transform,
    v_grid,
    verify_theta_gevrey,
)

BUMP = {"kind": "gevrey_bump"}


def test_eps_schedule_is_dyadic():
    assert eps_schedule(3, 5) == (0.125, 0.0625, 0.03125)
    with pytest.raises(ValueError, match="empty schedule"):
        eps_schedule(5, 3)


def test_h1k_norm_of_constant():
    assert h1k_norm(np.full(65, 2.0), 3, 1.0 / 64) == pytest.approx(2.0)
    assert h1k_norm(np.zeros(65), 3, 1.0 / 64) == 0.0


def test_richardson_removes_linear_error():
    schedule = eps_schedule(2, 5)
    base = np.array([1.0, -2.0, 0.5])
    levels = np.array([base + 3.0 * eps for eps in schedule])
    result = richardson(levels, schedule)
    assert np.allclose(result.limit, base, atol=1e-12)
    assert result.order == pytest.approx(1.0)
    assert result.converged


def test_richardson_rejects_non_geometric_schedule():
    with pytest.raises(ValueError, match="geometrically"):
        richardson(np.zeros((3, 2)), (0.1, 0.05, 0.01))
    with pytest.raises(ValueError, match="at least two"):
        richardson(np.zeros((1, 2)), (0.1,))


def test_slice_arguments_are_validated(couette):
    omega0 = initial_data(couette, BUMP)
    with pytest.raises(ValueError, match="iota"):
        solve_eigenfunction(1, 0.5, 0.125, 0, omega0, couette, n=64)
    with pytest.raises(ValueError, match="y0 must lie"):
        solve_eigenfunction(1, 1.5, 0.125, 1, omega0, couette, n=64)
    with pytest.raises(ValueError, match="eps must be nonzero"):
        solve_eigenfunction(1, 0.5, 0.5, 1, omega0, couette, n=64)
    with pytest.raises(CriticalLayerResolutionError, match="refine to at least"):
        solve_eigenfunction(1, 0.5, 1e-3, 1, omega0, couette, n=64)


def test_opposite_branches_are_conjugate_for_real_data(couette):
    omega0 = initial_data(couette, BUMP)
    plus = solve_eigenfunction(2, 0.5, 0.0625, 1, omega0, couette, n=256)
    minus = solve_eigenfunction(2, 0.5, 0.0625, -1, omega0, couette, n=256)
    assert plus.residual <= 1e-10
    assert np.allclose(minus.values, np.conj(plus.values), atol=1e-14)
    flipped = solve_eigenfunction(2, 0.5, -0.0625, 1, omega0, couette, n=256)
    assert flipped.iota == -1 and flipped.eps == 0.0625


def test_lap_difference_marks_collar_heights(couette):
    omega0 = initial_data(couette, BUMP)
    schedule = eps_schedule(3, 5)
    edge = lap_difference(1, couette.theta1 / 4.0, omega0, schedule, couette, n=256)
    assert edge.in_collar
    assert isinstance(edge.vanishes, bool)
    middle = lap_difference(1, 0.5, omega0, schedule, couette, n=256)
    assert not middle.in_collar
    assert middle.vanishes is None
    assert all(0.0 <= value <= 1.0 for value in middle.localization)
    assert middle.to_dict()["schedule"] == list(schedule)


def test_couette_has_no_embedded_eigenvalues(couette):
    report = embedded_eigenvalue_scan(couette, 2, y0_points=3, schedule=eps_schedule(3, 4), n=128)
    assert report.passed
    assert report.min_sv == 1.0
    assert report.tnorm_constant == 0.0
    assert len(report.entries) == 2 * 3 * 2
    with pytest.raises(ValueError, match="kmax"):
        embedded_eigenvalue_scan(couette, 0)


def test_s_operator_vanishes_for_couette(couette):
    cmap = build_map(couette)
    g = np.sin(np.pi * v_grid(cmap, 64)).astype(complex)
    assert np.all(apply_S(1, 0.5, 0.125, g, cmap) == 0.0)
    with pytest.raises(ValueError, match="grid has"):
        apply_S(1, 0.5, 0.125, g, cmap, grid=np.zeros(3))


def _gaussian_on_v(cmap, nv, w0=0.5, width=0.1):
    return np.exp(-(((v_grid(cmap, nv) - w0) / width) ** 2)).astype(complex)


def test_shifted_s_operator_matches_plain_coordinates(small_bump):
    cmap = build_map(small_bump)
    g = _gaussian_on_v(cmap, 512)
    plain = apply_S(2, 0.5, 0.05, g, cmap)
    shifted = apply_S(2, 0.5, 0.05, g, cmap, shifted=True)
    scale = float(np.max(np.abs(plain)))
    assert scale > 0
    np.testing.assert_allclose(shifted, plain, rtol=0.0, atol=1e-10 * scale)


def test_s_operator_ratio_decays_like_k_to_the_minus_third(small_bump):
    cmap = build_map(small_bump)
    g = _gaussian_on_v(cmap, 512)
    scaled = [s_operator_ratio(k, 0.5, 0.05, g, cmap) * k ** (1.0 / 3.0) for k in (1, 2, 4, 8)]
    assert all(value > 0 for value in scaled)
    assert max(scaled) < 0.1


def test_theta_stream_transform_identity(couette):
    cmap = build_map(couette)
    theta = theta_transform(1, cmap, initial_data(couette, BUMP), nv=64, schedule=eps_schedule(2, 3))
    assert theta.values.shape == (129, 65)
    assert theta.order is not None
    stream = theta_stream(theta, 2.0)
    assert stream.identity_error < 1e-10


def test_zero_data_passes_theta_bound_vacuously(couette):
    cmap = build_map(couette)

    def zero(y):
        return np.zeros_like(np.asarray(y), dtype=complex)

    theta = theta_transform(1, cmap, zero, nv=64, schedule=eps_schedule(2, 3))
    report = verify_theta_gevrey(theta, GevreyWeight(0.1, 0.5), data_spectrum(1, zero, cmap, 64))
    assert report.passed
    assert report.ratios == {"S2": 0.0, "S3": 0.0}
