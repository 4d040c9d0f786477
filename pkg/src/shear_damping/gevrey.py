"""Gevrey weights, explicit cutoff functions and weighted Fourier norms.

Conventions used everywhere in the package:

* bracket: ``<k, eta> = (1 + k**2 + eta**2) ** 0.5``
* transform: ``f~(xi) = integral f(v) exp(-i xi v) dv``, discretized as the
  DFT times the grid spacing; the inverse carries ``1 / (2 pi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy import fft as sfft
from scipy.integrate import trapezoid
from scipy.ndimage import maximum_filter1d

from .reports import DecayReport, PropertyCheck, PropertyReport

LOG_SPACE_THRESHOLD = 500.0
DRAW_CHUNK = 2048
FIT_CAP = 100.0


class GevreyResolutionError(RuntimeError):
    """Raised when a weighted quantity is dominated by its unresolved tail."""


def bracket(*components: Any) -> np.ndarray | float:
    total = 1.0
    for item in components:
        total = total + np.square(np.asarray(item, dtype=float))
    out = np.sqrt(total)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GevreyWeight:
    lam: float
    s: float
    rho: float | None = None

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.s < 1:
            raise ValueError(f"Gevrey index must lie in (0, 1), got {self.s}")
        if self.rho is not None and not self.rho > 1:
            raise ValueError(f"truncation rho must exceed 1, got {self.rho}")

    def with_lambda(self, lam: float) -> "GevreyWeight":
        return GevreyWeight(lam=lam, s=self.s, rho=self.rho)

    def to_dict(self) -> dict[str, Any]:
        return {"lambda": self.lam, "rho": self.rho, "s": self.s}


def truncated_exponent(r: Any, s: float, rho: float) -> np.ndarray:
    """Integral of ``h_rho`` from 0 to ``r``; constant once ``r >= rho``."""
    r = np.asarray(r, dtype=float)
    inside = r**s - s * rho ** (s - 1.0) * r
    return np.where(r <= rho, inside, (1.0 - s) * rho**s)


def log_weight(w: GevreyWeight, k: Any, eta: Any) -> np.ndarray | float:
    r = bracket(k, eta)
    if w.rho is None:
        out = w.lam * np.power(r, w.s)
    else:
        out = w.lam * truncated_exponent(r, w.s, w.rho)
    return float(out) if np.ndim(out) == 0 else out


def weight(w: GevreyWeight, k: Any, eta: Any) -> np.ndarray | float:
    """``A_k(eta)``; overflows to inf past double range, use ``log_weight`` there."""
    exponent = log_weight(w, k, eta)
    with np.errstate(over="ignore"):
        out = np.exp(exponent)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Fourier transforms on uniform grids


def fourier_transform(
    values: np.ndarray, start: float, h: float, size: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Transform along the last axis; returns ascending frequencies."""
    values = np.asarray(values)
    size = int(size or values.shape[-1])
    spectrum = sfft.fft(values, n=size, axis=-1) * h
    xi = 2.0 * np.pi * sfft.fftfreq(size, d=h)
    spectrum = spectrum * np.exp(-1j * xi * start)
    return sfft.fftshift(xi), sfft.fftshift(spectrum, axes=-1)


def fourier_transform_2d(
    values: np.ndarray,
    starts: tuple[float, float],
    steps: tuple[float, float],
    shape: tuple[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    values = np.asarray(values)
    shape = shape or values.shape
    spectrum = sfft.fft2(values, s=shape) * (steps[0] * steps[1])
    xi = 2.0 * np.pi * sfft.fftfreq(shape[0], d=steps[0])
    eta = 2.0 * np.pi * sfft.fftfreq(shape[1], d=steps[1])
    spectrum = spectrum * np.exp(-1j * xi * starts[0])[:, None]
    spectrum = spectrum * np.exp(-1j * eta * starts[1])[None, :]
    return sfft.fftshift(xi), sfft.fftshift(eta), sfft.fftshift(spectrum)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Values ``f~(k, xi)`` for the listed modes on one uniform frequency grid."""

    ks: tuple[int, ...]
    xi: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if 0 in self.ks:
            raise ValueError("the zero mode is not represented")
        if self.values.shape != (len(self.ks), self.xi.size):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.ks)} modes x {self.xi.size} frequencies"
            )

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0])

    def mode(self, k: int) -> np.ndarray:
        return self.values[self.ks.index(k)]

    def minus(self, other: "SpectralField") -> "SpectralField":
        if self.ks != other.ks or self.xi.shape != other.xi.shape:
            raise ValueError("spectral fields live on different grids")
        return SpectralField(ks=self.ks, xi=self.xi, values=self.values - other.values)


def gevrey_norm(
    f: SpectralField,
    w: GevreyWeight,
    *,
    tail_band: float = 0.1,
    tail_tol: float = 1e-10,
) -> float:
    """Weighted L2 norm summed over modes, computed in log-space."""
    magnitude = np.abs(f.values)
    if not np.any(magnitude > 0):
        return 0.0
    ks = np.asarray(f.ks, dtype=float)[:, None]
    with np.errstate(divide="ignore"):
        log_integrand = 2.0 * log_weight(w, ks, f.xi[None, :]) + 2.0 * np.log(magnitude)
    peak = float(np.max(log_integrand))
    integrand = np.exp(log_integrand - peak)
    total = float(np.sum(trapezoid(integrand, f.xi, axis=-1)))
    edge = (1.0 - tail_band) * float(np.max(np.abs(f.xi)))
    tail_mask = np.abs(f.xi) >= edge
    tail = float(np.sum(integrand[:, tail_mask])) * abs(f.dxi)
    if total <= 0 or tail > tail_tol * total:
        raise GevreyResolutionError(
            f"weighted tail fraction {tail / max(total, 1e-300):.3e} exceeds {tail_tol:g} "
            f"(lambda={w.lam}, s={w.s}); widen the frequency grid"
        )
    return math.exp(0.5 * (math.log(total) + peak))


# ---------------------------------------------------------------------------
# Explicit cutoffs


def _as_output(x: Any, out: np.ndarray) -> np.ndarray | float:
    return float(out.reshape(-1)[0]) if np.ndim(x) == 0 else out


def cutoff_psi(a: float, x: Any, sharpness: float = 1.0) -> np.ndarray | float:
    """``exp(-c (x**-a + (1 - x)**-a))`` on (0, 1), zero elsewhere."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(arr)
    inside = (arr > 0.0) & (arr < 1.0)
    u = arr[inside]
    out[inside] = np.exp(-sharpness * (u ** (-a) + (1.0 - u) ** (-a)))
    return _as_output(x, out)


def cutoff_psi_derivatives(
    a: float, x: Any, sharpness: float = 1.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Value and first three derivatives of ``cutoff_psi`` in closed form."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    psi = np.atleast_1d(cutoff_psi(a, arr, sharpness))
    d1 = np.zeros_like(arr)
    d2 = np.zeros_like(arr)
    d3 = np.zeros_like(arr)
    live = psi > 0.0
    u = arr[live]
    v = 1.0 - u
    c1 = a
    c2 = a * (a + 1.0)
    c3 = a * (a + 1.0) * (a + 2.0)
    g1 = -sharpness * (-c1 * u ** (-a - 1.0) + c1 * v ** (-a - 1.0))
    g2 = -sharpness * (c2 * (u ** (-a - 2.0) + v ** (-a - 2.0)))
    g3 = -sharpness * (-c3 * u ** (-a - 3.0) + c3 * v ** (-a - 3.0))
    p = psi[live]
    d1[live] = p * g1
    d2[live] = p * (g1 * g1 + g2)
    d3[live] = p * (g1**3 + 3.0 * g1 * g2 + g3)
    return psi, d1, d2, d3


def _log_psi(a: float, x: np.ndarray, sharpness: float) -> np.ndarray:
    out = np.full_like(x, -np.inf)
    inside = (x > 0.0) & (x < 1.0)
    u = x[inside]
    out[inside] = -sharpness * (u ** (-a) + (1.0 - u) ** (-a))
    return out


def cutoff_plateau(a: float, rho: float, x: Any, sharpness: float = 1.0) -> np.ndarray | float:
    """Cutoff equal to 1 on ``[1 - rho, rho]`` and supported in ``[0, 1]``.

    The quotient is evaluated through differences of exponents; the factors
    themselves underflow long before the quotient leaves (0, 1).
    """
    if not 0.9 <= rho < 1.0:
        raise ValueError(f"plateau parameter rho must lie in [0.9, 1), got {rho}")
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    centre = _log_psi(a, arr, sharpness)
    out = np.zeros_like(arr)
    live = np.isfinite(centre)
    ratio = np.ones(int(np.count_nonzero(live)))
    for shift in (-rho, rho):
        other = _log_psi(a, arr[live] + shift, sharpness)
        with np.errstate(over="ignore"):
            ratio += np.exp(other - centre[live])
    out[live] = 1.0 / ratio
    return _as_output(x, out)


def smooth_step(a: float, t: Any, sharpness: float = 1.0) -> np.ndarray | float:
    """Gevrey step: 0 for ``t <= 0``, 1 for ``t >= 1``, built from ``psi_a`` factors."""
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.where(arr >= 1.0, 1.0, 0.0)
    inside = (arr > 0.0) & (arr < 1.0)
    u = arr[inside]
    with np.errstate(over="ignore"):
        out[inside] = 1.0 / (1.0 + np.exp(sharpness * (u ** (-a) - (1.0 - u) ** (-a))))
    return _as_output(t, out)


def _envelope_fit(
    xi: np.ndarray, envelope: np.ndarray, exponent: float, lo: float, hi: float
) -> tuple[float, float, float] | None:
    mask = (xi >= lo) & (xi <= hi) & (envelope > 0.0)
    if int(np.count_nonzero(mask)) < 6:
        return None
    x = xi[mask] ** exponent
    y = np.log(envelope[mask])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.max(np.abs(y - (slope * x + intercept))))
    rate = -float(slope)
    constant = float(np.max(envelope[mask] * np.exp(rate * x)))
    return rate, constant, residual


def _cutoff_samples(a: float, n: int, length: float, rho: float | None) -> tuple[np.ndarray, float]:
    h = length / n
    start = -(length - 1.0) / 2.0
    grid = start + h * np.arange(n)
    if rho is None:
        values = np.asarray(cutoff_psi(a, grid))
    else:
        values = np.asarray(cutoff_plateau(a, rho, grid))
    return values, start


def _measure_cutoff_decay(
    a: float, n: int, length: float, rho: float | None, floor: float
) -> tuple[float, tuple[float, ...], float, float, tuple[float, float], list[str]]:
    h = length / n
    values, start = _cutoff_samples(a, n, length, rho)
    xi, spectrum = fourier_transform(values, start, h)
    keep = xi > 0
    xi = xi[keep]
    magnitude = np.abs(spectrum[keep])
    period_samples = max(3, int(math.ceil(4.0 * math.pi / (xi[1] - xi[0]))) + 1)
    envelope = maximum_filter1d(magnitude, size=period_samples, mode="nearest")
    top = float(np.max(np.abs(spectrum)))
    notes: list[str] = []
    below = np.nonzero(envelope < floor * top)[0]
    cap = 0.8 * float(xi[-1])
    edge = float(xi[below[0]]) if below.size else cap
    if edge > cap:
        edge = cap
        notes.append("fit window capped at 0.8 Nyquist")
    exponent = a / (a + 1.0)
    window_rates: list[float] = []
    for lo, hi in ((edge / 8.0, edge / 4.0), (edge / 4.0, edge / 2.0)):
        fit = _envelope_fit(xi, envelope, exponent, lo, hi)
        window_rates.append(float("nan") if fit is None else fit[0])
    overall = _envelope_fit(xi, envelope, exponent, edge / 8.0, edge / 2.0)
    if overall is None:
        notes.append("noise floor reached before decay was established")
        return float("nan"), tuple(window_rates), float("nan"), float("nan"), (0.0, edge), notes
    rate, constant, residual = overall
    return rate, tuple(window_rates), constant, residual, (edge / 8.0, edge / 2.0), notes


def verify_cutoff_decay(
    a: float,
    n: int,
    *,
    rho: float | None = None,
    length: float = 2.0,
    floor: float = 1e-12,
    tolerance: float = 0.2,
) -> DecayReport:
    """Fit ``mu`` in ``|psi~(xi)| <= C exp(-mu |xi|^(a/(a+1)))``, checked under doubling n."""
    if n < 4096:
        raise ValueError(f"cutoff decay needs n >= 4096, got {n}")
    rate, window_rates, constant, residual, window, notes = _measure_cutoff_decay(
        a, n, length, rho, floor
    )
    refined, _, _, _, _, refined_notes = _measure_cutoff_decay(a, 2 * n, length, rho, floor)
    notes.extend(f"refined: {note}" for note in refined_notes)

    def close(x: float, y: float) -> bool:
        return math.isfinite(x) and math.isfinite(y) and abs(x - y) <= tolerance * max(abs(x), abs(y))

    passed = (
        math.isfinite(rate)
        and rate > 0
        and all(math.isfinite(r) and r > 0 for r in window_rates)
        and close(window_rates[0], window_rates[1])
        and close(rate, refined)
    )
    subject = f"psi_{a:g}" if rho is None else f"plateau_{a:g}_{rho:g}"
    print(f"[gevrey] cutoff={subject} mu={rate:.4g} windows={window_rates} refined={refined:.4g}")
    return DecayReport(
        subject=subject,
        exponent=a / (a + 1.0),
        rate=rate,
        constant=constant,
        window=window,
        window_rates=window_rates,
        refined_rate=refined,
        max_residual=residual,
        passed=passed,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# Randomized weight inequalities


def _signed_magnitudes(rng: np.random.Generator, size: int) -> np.ndarray:
    magnitude = 10.0 ** rng.uniform(-1.0, 4.0, size)
    return magnitude * rng.choice((-1.0, 1.0), size)


def _draws(seed: int, trials: int) -> dict[str, np.ndarray]:
    chunks = -(-trials // DRAW_CHUNK)
    parts: list[dict[str, np.ndarray]] = []
    for child in np.random.SeedSequence(seed).spawn(chunks):
        rng = np.random.default_rng(child)
        parts.append(
            {
                "k": rng.integers(1, 65, DRAW_CHUNK) * rng.choice((-1, 1), DRAW_CHUNK),
                "eta": _signed_magnitudes(rng, DRAW_CHUNK),
                "zeta": _signed_magnitudes(rng, DRAW_CHUNK),
                "alpha": _signed_magnitudes(rng, DRAW_CHUNK),
                "beta": _signed_magnitudes(rng, DRAW_CHUNK),
                "a1": _signed_magnitudes(rng, DRAW_CHUNK),
                "a2": _signed_magnitudes(rng, DRAW_CHUNK),
                "b1": _signed_magnitudes(rng, DRAW_CHUNK),
                "b2": _signed_magnitudes(rng, DRAW_CHUNK),
            }
        )
    return {key: np.concatenate([p[key] for p in parts])[:trials] for key in parts[0]}


def _log_abs_difference(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    gap = np.abs(x - y)
    with np.errstate(divide="ignore"):
        return np.maximum(x, y) + np.log(-np.expm1(-gap))


def _witness(draws: dict[str, np.ndarray], index: int, names: Sequence[str]) -> dict[str, float]:
    return {name: float(draws[name][index]) for name in names}


def _exact_check(
    name: str, excess: np.ndarray, draws: dict[str, np.ndarray], names: Sequence[str], tol: float
) -> PropertyCheck:
    bad = np.nonzero(excess > tol)[0]
    constant = math.exp(float(np.max(excess))) if excess.size else 0.0
    witness = _witness(draws, int(bad[0]), names) if bad.size else None
    return PropertyCheck(name=name, violations=int(bad.size), constant=constant, witness=witness)


def _fitted_check(
    name: str, log_ratio: np.ndarray, draws: dict[str, np.ndarray], names: Sequence[str]
) -> PropertyCheck:
    finite = np.where(np.isfinite(log_ratio), log_ratio, -np.inf)
    constant = math.exp(float(np.max(finite))) if finite.size else 0.0
    bad = np.nonzero(finite > math.log(FIT_CAP))[0]
    witness = _witness(draws, int(bad[0]), names) if bad.size else None
    return PropertyCheck(name=name, violations=int(bad.size), constant=constant, witness=witness)


def _ratio_shift_bound(w: GevreyWeight, d: dict[str, np.ndarray]) -> np.ndarray:
    k, eta, zeta = d["k"], d["eta"], d["zeta"]
    x = log_weight(w, k, eta)
    y = log_weight(w, k, eta - zeta)
    r = bracket(k, eta - zeta)
    bound = (w.s - 1.0) * np.log(r) + w.lam * (r**w.s + bracket(zeta) ** w.s)
    return _log_abs_difference(x, y) - bound


def _ratio_truncated_difference(w: GevreyWeight, d: dict[str, np.ndarray]) -> np.ndarray:
    k, alpha, beta = d["k"], d["alpha"], d["beta"]
    x = log_weight(w, k, alpha)
    y = log_weight(w, k, beta)
    bound = (w.s - 1.0) * np.log(bracket(k, alpha)) + x + w.lam * bracket(alpha - beta) ** w.s
    return _log_abs_difference(x, y) - bound


def _weight_checks(w: GevreyWeight, d: dict[str, np.ndarray], rhos: Sequence[float]):
    checks: list[PropertyCheck] = []
    notes: list[str] = []
    plain = GevreyWeight(lam=w.lam, s=w.s)
    k, eta, alpha, beta = d["k"], d["eta"], d["alpha"], d["beta"]

    shift = log_weight(plain, k, eta) - log_weight(plain, k, eta - alpha)
    shift = shift - plain.lam * bracket(alpha) ** plain.s
    checks.append(_exact_check("shift", shift, d, ("k", "eta", "alpha"), 1e-9))
    checks.append(_fitted_check("shift_difference", _ratio_shift_bound(plain, d), d, ("k", "eta", "zeta")))

    untruncated = _fitted_check(
        "difference_untruncated", _ratio_truncated_difference(plain, d), d, ("k", "alpha", "beta")
    )
    checks.append(untruncated)
    for rho in rhos:
        truncated = GevreyWeight(lam=w.lam, s=w.s, rho=rho)
        excess = log_weight(truncated, k, alpha + beta) - log_weight(truncated, k, alpha)
        excess = excess - w.lam * bracket(beta) ** w.s
        checks.append(_exact_check(f"truncated_shift_rho{rho:g}", excess, d, ("k", "alpha", "beta"), 1e-9))
        diff = _fitted_check(
            f"truncated_difference_rho{rho:g}",
            _ratio_truncated_difference(truncated, d),
            d,
            ("k", "alpha", "beta"),
        )
        if diff.constant > 2.0 * max(untruncated.constant, 1e-300):
            notes.append(f"rho={rho:g} constant {diff.constant:.3g} exceeds twice the untruncated one")
            diff = PropertyCheck(
                name=diff.name,
                violations=max(diff.violations, 1),
                constant=diff.constant,
                witness=diff.witness,
            )
        checks.append(diff)

    # <b> >= beta <a - b> implies <a>^s <= <b>^s + (1 - mu) <a - b>^s
    gap = 0.25
    mu = 1.0 - (1.0 + gap) ** w.s + gap**w.s
    na = bracket(d["a1"], d["a2"])
    nb = bracket(d["b1"], d["b2"])
    nab = bracket(d["a1"] - d["b1"], d["a2"] - d["b2"])
    applicable = nb >= gap * nab
    excess = np.where(applicable, na**w.s - nb**w.s - (1.0 - mu) * nab**w.s, -np.inf)
    tol = 1e-12 * np.max(na**w.s)
    check = _exact_check("bracket_split", excess, d, ("a1", "a2", "b1", "b2"), tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        margins = (nb**w.s + nab**w.s - na**w.s) / nab**w.s
    fitted_mu = float(np.min(margins[applicable])) if np.any(applicable) else float("nan")
    notes.append(f"bracket_split mu analytic={mu:.6g} fitted={fitted_mu:.6g}")
    checks.append(
        PropertyCheck(name=check.name, violations=check.violations, constant=fitted_mu, witness=check.witness)
    )
    return checks, notes


def verify_weight_inequalities(
    w: GevreyWeight,
    trials: int,
    *,
    seed: int = 0,
    rhos: Sequence[float] = (10.0, 100.0, 1000.0),
    drift_tol: float = 0.10,
) -> PropertyReport:
    """Randomized checks of the weight inequalities; violations carry a witness.

    The fitted ``shift_difference`` constants must also move by at most
    ``drift_tol`` (relative) when the draw set is doubled.
    """
    if trials < 10_000:
        raise ValueError(f"weight inequality checks need at least 10^4 trials, got {trials}")
    draws = _draws(seed, trials)
    checks, notes = _weight_checks(w, draws, rhos)

    doubled, _ = _weight_checks(w, _draws(seed, 2 * trials), rhos)
    before = {c.name: c.constant for c in checks}
    stable = True
    for item in doubled:
        base = before.get(item.name)
        if base and item.name.startswith("shift_difference"):
            drift = abs(item.constant - base) / base
            notes.append(f"{item.name} constant drift under doubled trials {drift:.3g}")
            if not drift <= drift_tol:
                stable = False
                notes.append(f"{item.name} drift {drift:.3g} exceeds {drift_tol:g}")

    passed = stable and all(c.violations == 0 for c in checks)
    print(f"[gevrey] weight_checks trials={trials} seed={seed} pass={passed}")
    return PropertyReport(seed=seed, trials=trials, checks=tuple(checks), passed=passed, notes=tuple(notes))
