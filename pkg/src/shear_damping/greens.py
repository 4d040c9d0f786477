"""Green's function of ``k^2 - d^2/dy^2`` on [0, 1] with Dirichlet conditions.

All hyperbolic quotients are rewritten with exponentials of non-positive
arguments: with ``K = |k|`` and ``|c| <= 1``,

    cosh(K c) / sinh(K) = (exp(K (c - 1)) + exp(-K (c + 1))) / (1 - exp(-2 K))

and likewise for ``sinh``; products are reduced with the sum formulas first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .gevrey import bracket, fourier_transform_2d
from .profiles import CoordinateMap
from .reports import BoundReport, DecayReport

GAUSS_ORDER = 8
BOUND_CAP = 100.0


def _check_mode(k: int) -> float:
    if k == 0:
        raise ValueError("the Green's function is defined for k != 0 only")
    return float(abs(k))


def _cosh_ratio(K: float, c: np.ndarray) -> np.ndarray:
    return (np.exp(K * (c - 1.0)) + np.exp(-K * (c + 1.0))) / (-np.expm1(-2.0 * K))


def _sinh_ratio(K: float, c: np.ndarray) -> np.ndarray:
    return (np.exp(K * (c - 1.0)) - np.exp(-K * (c + 1.0))) / (-np.expm1(-2.0 * K))


def _split(y: Any, z: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    y, z = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(z, dtype=float))
    lo = np.minimum(y, z)
    hi = np.maximum(y, z)
    return 1.0 - hi, lo, y <= z


def _out(y: Any, z: Any, value: np.ndarray) -> np.ndarray | float:
    return float(value) if np.ndim(y) == 0 and np.ndim(z) == 0 else value


def eval_G(k: int, y: Any, z: Any) -> np.ndarray | float:
    K = _check_mode(k)
    a, b, _ = _split(y, z)
    value = (_cosh_ratio(K, a + b) - _cosh_ratio(K, a - b)) / (2.0 * K)
    return _out(y, z, value)


def eval_Gprime(k: int, y: Any, z: Any) -> np.ndarray | float:
    """Mixed derivative ``d_y d_z G`` off the diagonal."""
    K = _check_mode(k)
    if np.any(np.asarray(y) == np.asarray(z)):
        raise ValueError("G' carries a delta on the diagonal; y == z is excluded")
    a, b, _ = _split(y, z)
    value = -K * (_cosh_ratio(K, a + b) + _cosh_ratio(K, a - b)) / 2.0
    return _out(y, z, value)


def eval_G_dz(k: int, y: Any, z: Any) -> np.ndarray | float:
    """``d_z G``; the diagonal takes the mean of the one-sided limits."""
    K = _check_mode(k)
    a, b, below = _split(y, z)
    plus = _sinh_ratio(K, a + b)
    minus = _sinh_ratio(K, a - b)
    value = np.where(below, -(plus - minus) / 2.0, (plus + minus) / 2.0)
    on_diagonal = np.asarray(y) == np.asarray(z)
    if np.any(on_diagonal):
        value = np.where(on_diagonal, minus / 2.0, value)
    return _out(y, z, value)


def eval_G_dy(k: int, y: Any, z: Any) -> np.ndarray | float:
    return eval_G_dz(k, z, y)


def _Gprime_partials(K: float, y: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(d_y G', d_z G')`` away from the diagonal."""
    a, b, below = _split(y, z)
    plus = _sinh_ratio(K, a + b)
    minus = _sinh_ratio(K, a - b)
    d_low = -K * K * (plus - minus) / 2.0
    d_high = K * K * (plus + minus) / 2.0
    return np.where(below, d_low, d_high), np.where(below, d_high, d_low)


@dataclass(frozen=True)
class GreensKernel:
    k: int
    map: CoordinateMap | None = None

    def __post_init__(self) -> None:
        _check_mode(self.k)

    def eval(self, y: Any, z: Any):
        return eval_G(self.k, y, z)

    def eval_prime(self, y: Any, z: Any):
        return eval_Gprime(self.k, y, z)

    def eval_v(self, v: Any, w: Any):
        """``G_k(binv v, binv w)``: the kernel in v-coordinates."""
        if self.map is None:
            raise ValueError("v-coordinate evaluation needs a coordinate map")
        return eval_G(self.k, self.map.binv(v), self.map.binv(w))


# ---------------------------------------------------------------------------
# Localized kernel and its spectrum


@dataclass(frozen=True, eq=False)
class KernelSpectrum:
    k: int
    grid_v: np.ndarray
    grid_w: np.ndarray
    values: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    ghat: np.ndarray
    delta0_fit: float | None = None

    @property
    def nyquist(self) -> float:
        return float(np.pi / (self.grid_v[1] - self.grid_v[0]))

    def hermitian_error(self) -> float:
        inner = self.ghat[1:, 1:]
        scale = max(float(np.max(np.abs(inner))), 1e-300)
        return float(np.max(np.abs(inner - np.conj(inner[::-1, ::-1])))) / scale


def localized_kernel(k: int, cmap: CoordinateMap, n: int) -> KernelSpectrum:
    """Sample ``Psi(v) G_k(binv v, binv w) Psi(w)`` on a padded box and transform it."""
    _check_mode(k)
    if n < 256 or n & (n - 1):
        raise ValueError(f"kernel grid size must be a power of two >= 256, got {n}")
    length = cmap.v_hi - cmap.v_lo
    start = cmap.v_lo - 0.25 * length
    h = 1.5 * length / n
    grid = start + h * np.arange(n)
    psi = np.asarray(cmap.Psi(grid))
    live = np.nonzero(psi > 0.0)[0]
    values = np.zeros((n, n))
    if live.size:
        y = np.asarray(cmap.binv(grid[live]))
        block = eval_G(k, y[:, None], y[None, :])
        values[np.ix_(live, live)] = psi[live, None] * block * psi[None, live]
    xi, eta, ghat = fourier_transform_2d(values, (start, start), (h, h))
    print(f"[greens] localized k={k} n={n} support_points={live.size}")
    return KernelSpectrum(k=k, grid_v=grid, grid_w=grid.copy(), values=values, xi=xi, eta=eta, ghat=ghat)


def _kernel_decay_fit(
    spec: KernelSpectrum, s: float, guard: float, floor: float, bins: int, kink_power: float = 0.0
) -> tuple[float, float, float, float]:
    """Return (delta, constant, max residual, r_max) of the binned envelope fit.

    ``kink_power`` divides ``q`` by ``<xi+eta>^kink_power`` before fitting.
    """
    band = guard * spec.nyquist
    xi = spec.xi[:, None]
    eta = spec.eta[None, :]
    inside = (np.abs(xi) <= band) & (np.abs(eta) <= band)
    magnitude = np.abs(spec.ghat)
    top = float(np.max(magnitude))
    keep = inside & (magnitude > floor * top)
    q = (magnitude * (spec.k**2 + eta**2) / np.power(bracket(xi + eta), kink_power))[keep]
    r = np.broadcast_to(np.power(bracket(xi + eta), (s + 1.0) / 2.0), magnitude.shape)[keep]
    if q.size < 8:
        return float("nan"), float("nan"), float("nan"), 0.0
    edges = np.linspace(float(r.min()), float(r.max()), bins + 1)
    index = np.clip(np.digitize(r, edges) - 1, 0, bins - 1)
    centres: list[float] = []
    peaks: list[float] = []
    log_q = np.log(q)
    for j in range(bins):
        members = index == j
        if np.any(members):
            centres.append(float(np.mean(r[members])))
            peaks.append(float(np.max(log_q[members])))
    if len(centres) < 4:
        return float("nan"), float("nan"), float("nan"), float(r.max())
    slope, intercept = np.polyfit(centres, peaks, 1)
    residual = float(np.max(np.abs(np.asarray(peaks) - (slope * np.asarray(centres) + intercept))))
    delta = -float(slope)
    constant = float(np.max(q * np.exp(delta * r)))
    return delta, constant, residual, float(r.max())


def verify_kernel_fourier_decay(
    spec: KernelSpectrum,
    s: float,
    *,
    guard: float = 0.4,
    refined: KernelSpectrum | None = None,
    floor: float = 1e-14,
    bins: int = 48,
    tolerance: float = 0.2,
) -> DecayReport:
    """Fit ``delta`` in ``|g^(xi, eta)| <= C exp(-delta <xi+eta>^((s+1)/2)) / (k^2 + eta^2)``.

    The pass decision uses this bound as stated. A second fit with ``<xi+eta>^2``
    divided out (the diagonal kink of ``G_k``) is reported as ``compensated_rate``.
    """
    delta, constant, residual, r_max = _kernel_decay_fit(spec, s, guard, floor, bins)
    compensated = _kernel_decay_fit(spec, s, guard, floor, bins, kink_power=2.0)[0]
    notes: list[str] = [f"kink-compensated delta={compensated:.4g}"]
    refined_delta = None
    if refined is not None:
        refined_delta = _kernel_decay_fit(refined, s, guard, floor, bins)[0]
    passed = math.isfinite(delta) and delta > 0.0
    if not passed:
        notes.append("no positive decay rate fits inside the guard band")
    if refined_delta is not None:
        stable = (
            math.isfinite(refined_delta)
            and abs(refined_delta - delta) <= tolerance * max(abs(delta), abs(refined_delta))
        )
        if not stable:
            notes.append(f"decay rate unstable under refinement ({delta:.4g} vs {refined_delta:.4g})")
        passed = passed and stable
    print(f"[greens] decay k={spec.k} delta={delta:.4g} refined={refined_delta} pass={passed}")
    return DecayReport(
        subject=f"kernel_k{spec.k}",
        exponent=(s + 1.0) / 2.0,
        rate=delta,
        constant=constant,
        window=(0.0, r_max),
        window_rates=(delta,),
        refined_rate=refined_delta,
        compensated_rate=compensated,
        max_residual=residual,
        passed=passed,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# Kernel bounds with logarithmic weights


_GL_NODES, _GL_WEIGHTS = leggauss(GAUSS_ORDER)


def _panel(a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    half = 0.5 * (b - a)
    return a + half * (_GL_NODES + 1.0), half * _GL_WEIGHTS


def _graded(a: float, b: float, toward_a: bool, levels: int = 24, ratio: float = 0.25):
    nodes: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    length = b - a
    for j in range(levels):
        outer, inner = length * ratio**j, length * ratio ** (j + 1)
        lo, hi = (a + inner, a + outer) if toward_a else (b - outer, b - inner)
        x, wt = _panel(lo, hi)
        nodes.append(x)
        weights.append(wt)
    tip = length * ratio**levels
    x, wt = _panel(a, a + tip) if toward_a else _panel(b - tip, b)
    nodes.append(x)
    weights.append(wt)
    return np.concatenate(nodes), np.concatenate(weights)


def _quadrature(breaks: Iterable[float], singular: float | None, K: float):
    """Composite Gauss rule on [0, 1] resolving scale ``1/K`` and a log point."""
    points = sorted({0.0, 1.0, *(b for b in breaks if 0.0 < b < 1.0)})
    nodes: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    for lo, hi in zip(points[:-1], points[1:]):
        if hi - lo <= 0.0:
            continue
        if singular is not None and singular in (lo, hi):
            x, wt = _graded(lo, hi, toward_a=singular == lo)
        else:
            pieces = max(2, int(math.ceil(4.0 * K * (hi - lo))))
            cuts = np.linspace(lo, hi, pieces + 1)
            parts = [_panel(c0, c1) for c0, c1 in zip(cuts[:-1], cuts[1:])]
            x = np.concatenate([p[0] for p in parts])
            wt = np.concatenate([p[1] for p in parts])
        nodes.append(x)
        weights.append(wt)
    return np.concatenate(nodes), np.concatenate(weights)


def _kernel_bound_terms(k: int, y: float, A: float, powers: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Weighted L1 terms for ``G`` and ``G'`` at one ``(y, A)``, one entry per power."""
    K = float(abs(k))
    singular = A if 0.0 < A < 1.0 else None
    z, wt = _quadrature((y, A), singular, K)
    logs = np.abs(np.log(np.abs(z - A)))
    g = np.abs(eval_G(k, y, z))
    dgy = np.abs(eval_G_dy(k, y, z))
    dgz = np.abs(eval_G_dz(k, y, z))
    off = z != y
    gp = np.zeros_like(z)
    gp[off] = np.abs(eval_Gprime(k, y, z[off]))
    dgpy, dgpz = (np.abs(part) for part in _Gprime_partials(K, np.full_like(z, y), z))
    g_terms = np.empty(len(powers))
    gp_terms = np.empty(len(powers))
    for i, m in enumerate(powers):
        lw = wt * logs**m
        g_terms[i] = K**2 * np.sum(g * lw) + K * max(np.sum(dgy * lw), np.sum(dgz * lw))
        gp_terms[i] = np.sum(gp * lw) + max(np.sum(dgpy * lw), np.sum(dgpz * lw)) / K
    return g_terms, gp_terms


def _kernel_l2_terms(k: int, y: float) -> tuple[float, float]:
    K = float(abs(k))
    z, wt = _quadrature((y,), None, K)
    g = eval_G(k, y, z)
    dg = np.maximum(np.abs(eval_G_dy(k, y, z)), np.abs(eval_G_dz(k, y, z)))
    off = z != y
    gp = np.zeros_like(z)
    gp[off] = eval_Gprime(k, y, z[off])
    dgp = np.maximum(*(np.abs(part) for part in _Gprime_partials(K, np.full_like(z, y), z)))

    def l2(values: np.ndarray) -> float:
        return float(np.sqrt(np.sum(wt * values**2)))

    g_term = max(K**1.5 * l2(g), K**0.5 * l2(dg))
    gp_term = max(K**-0.5 * l2(gp), K**-1.5 * l2(dgp))
    return g_term, gp_term


def log_bracket_scale(k: int, m: int) -> float:
    """Normalization ``(1 + log <k>)^m`` of the logarithmically weighted bounds."""
    return (1.0 + math.log(bracket(k))) ** m


def verify_kernel_bounds(
    ks: Sequence[int] = tuple(range(1, 17)),
    *,
    powers: Sequence[int] = (0, 1, 2, 3),
    y_points: int = 21,
    anchors: Sequence[float] | None = None,
    cap: float = BOUND_CAP,
) -> BoundReport:
    """Suprema of the weighted L1/L2 norms of ``G_k`` and ``G'_k`` against one shared constant."""
    if anchors is None:
        anchors = tuple(np.linspace(-10.0, 10.0, 41)) + (0.25, 0.5, 0.75)
    ys = np.linspace(0.0, 1.0, y_points)
    ratios: dict[str, float] = {}
    for k in ks:
        _check_mode(k)
        g_sup = np.zeros(len(powers))
        gp_sup = np.zeros(len(powers))
        for y in ys:
            for A in anchors:
                g_terms, gp_terms = _kernel_bound_terms(k, float(y), float(A), powers)
                g_sup = np.maximum(g_sup, g_terms)
                gp_sup = np.maximum(gp_sup, gp_terms)
        l2 = [_kernel_l2_terms(k, float(y)) for y in ys]
        g_l2 = max(item[0] for item in l2)
        gp_l2 = max(item[1] for item in l2)
        for i, m in enumerate(powers):
            scale = log_bracket_scale(k, m)
            ratios[f"G_k{k}_m{m}"] = (g_sup[i] + g_l2) / scale
            ratios[f"Gprime_k{k}_m{m}"] = (gp_sup[i] + gp_l2) / scale
    constant = max(ratios.values())
    passed = constant <= cap
    print(f"[greens] bounds ks={list(ks)} constant={constant:.4g} pass={passed}")
    return BoundReport(subject="kernel_bounds", ratios=ratios, constant=constant, cap=cap, passed=passed)


def greens_identity_residual(k: int, f, f2, ys: Sequence[float]) -> float:
    """``max_y |integral G(y, z) (k^2 f - f'') dz - f(y)|`` for ``f`` vanishing at 0 and 1."""
    K = _check_mode(k)
    worst = 0.0
    for y in ys:
        z, wt = _quadrature((float(y),), None, max(K, 8.0))
        value = float(np.sum(wt * eval_G(k, float(y), z) * (K**2 * f(z) - f2(z))))
        worst = max(worst, abs(value - float(f(float(y)))))
    return worst
