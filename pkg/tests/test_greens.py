import numpy as np
import pytest

from shear_damping.greens import (
    GreensKernel,
    eval_G,
    eval_G_dy,
    eval_G_dz,
    eval_Gprime,
    greens_identity_residual,
    localized_kernel,
    verify_kernel_bounds,
    verify_kernel_fourier_decay,
)
from shear_damping.gevrey import bracket
from shear_damping.profiles import build_map


def test_kernel_is_symmetric_positive_and_vanishes_on_walls():
    y = np.linspace(0.05, 0.95, 19)
    g = eval_G(3, y[:, None], y[None, :])
    assert np.allclose(g, g.T)
    assert np.all(g > 0.0)
    assert eval_G(3, 0.0, 0.4) == pytest.approx(0.0, abs=1e-15)
    assert eval_G(3, 1.0, 0.4) == pytest.approx(0.0, abs=1e-15)


def test_zero_mode_is_rejected():
    with pytest.raises(ValueError, match="k != 0"):
        eval_G(0, 0.2, 0.3)
    with pytest.raises(ValueError, match="k != 0"):
        GreensKernel(0)


def test_derivatives_match_finite_differences():
    k, h = 2, 1e-6
    y, z = 0.3, np.array([0.1, 0.6, 0.9])
    fd_z = (eval_G(k, y, z + h) - eval_G(k, y, z - h)) / (2 * h)
    assert np.allclose(eval_G_dz(k, y, z), fd_z, atol=1e-7)
    fd_y = (eval_G(k, y + h, z) - eval_G(k, y - h, z)) / (2 * h)
    assert np.allclose(eval_G_dy(k, y, z), fd_y, atol=1e-7)
    fd_mixed = (eval_G_dz(k, y + h, z) - eval_G_dz(k, y - h, z)) / (2 * h)
    assert np.allclose(eval_Gprime(k, y, z), fd_mixed, atol=1e-6)


def test_mixed_derivative_excludes_diagonal():
    with pytest.raises(ValueError, match="diagonal"):
        eval_Gprime(1, 0.5, 0.5)


def test_greens_identity_on_sine():
    def f(z):
        return np.sin(np.pi * z)

    def f2(z):
        return -np.pi**2 * np.sin(np.pi * z)

    for k in (1, 4, 8):
        assert greens_identity_residual(k, f, f2, np.linspace(0.05, 0.95, 7)) <= 1e-8


def test_v_evaluation_needs_map(couette):
    with pytest.raises(ValueError, match="coordinate map"):
        GreensKernel(1).eval_v(0.2, 0.3)
    kernel = GreensKernel(1, map=build_map(couette))
    assert kernel.eval_v(0.2, 0.3) == pytest.approx(eval_G(1, 0.2, 0.3))


def test_localized_kernel_grid_checks(couette):
    cmap = build_map(couette)
    with pytest.raises(ValueError, match="power of two"):
        localized_kernel(1, cmap, 300)
    spec = localized_kernel(1, cmap, 256)
    assert spec.ghat.shape == (256, 256)
    assert np.allclose(spec.values, spec.values.T)
    assert spec.hermitian_error() < 1e-10


def test_kernel_decay_constant_bounds_the_uncompensated_spectrum(couette):
    spec = localized_kernel(1, build_map(couette), 256)
    report = verify_kernel_fourier_decay(spec, couette.s)
    assert report.rate > 0
    assert np.isfinite(report.compensated_rate)
    assert report.to_dict()["compensated_rate"] == report.compensated_rate

    band = 0.4 * spec.nyquist
    xi = spec.xi[:, None]
    eta = spec.eta[None, :]
    magnitude = np.abs(spec.ghat)
    keep = (np.abs(xi) <= band) & (np.abs(eta) <= band) & (magnitude > 1e-14 * magnitude.max())
    q = (magnitude * (1.0 + eta**2))[keep]
    r = np.broadcast_to(bracket(xi + eta) ** ((couette.s + 1.0) / 2.0), magnitude.shape)[keep]
    assert np.all(q <= report.constant * np.exp(-report.rate * r) * (1.0 + 1e-9))


def test_kernel_bounds_report_every_power():
    report = verify_kernel_bounds((1, 2), y_points=5, anchors=(0.0, 1.0))
    assert set(report.ratios) == {
        f"{name}_k{k}_m{m}" for name in ("G", "Gprime") for k in (1, 2) for m in range(4)
    }
    assert report.constant == max(report.ratios.values())
    assert report.passed == (report.constant <= report.cap)
