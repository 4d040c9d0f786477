"""Monotone shear profiles, the ``v = b(y)`` coordinate map and assumption checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.ndimage import maximum_filter1d

from .gevrey import bracket, cutoff_psi_derivatives, fourier_transform, smooth_step

REFERENCE_POINTS = 2048
BUMP_SHARPNESS = 0.1
CUTOFF_SHARPNESS = 0.05
TAIL_TOLERANCE = 1e-8
REQUIRED_CONDITIONS = (
    "monotone",
    "band_lower",
    "band_upper",
    "collar",
    "gevrey_class",
    "weighted_integral",
)


class ProfileAssumptionError(ValueError):
    """Raised when a profile cannot be built or mapped under the standing hypotheses."""


def chebyshev_grid(n: int = REFERENCE_POINTS) -> np.ndarray:
    j = np.arange(n)
    return 0.5 * (1.0 - np.cos(np.pi * j / (n - 1)))


@dataclass(frozen=True, eq=False)
class ShearProfile:
    """Closed-form profile ``b(y) = slope * y + amplitude * scale * psi(u(y))``.

    ``u`` maps ``[theta0, 1 - theta0]`` onto ``[0, 1]``; ``scale`` normalizes
    ``max |b''|`` to ``|amplitude|``. Couette is the ``amplitude == 0`` case.
    """

    name: str
    kind: str
    theta0: float
    theta1: float
    s: float
    amplitude: float = 0.0
    a: float = 3.0
    slope: float = 1.0
    sharpness: float = BUMP_SHARPNESS
    scale: float = 0.0
    reference: np.ndarray = field(default_factory=chebyshev_grid, repr=False)

    @property
    def width(self) -> float:
        return 1.0 - 2.0 * self.theta0

    @property
    def gevrey_class(self) -> float:
        """Gevrey class of ``b''``; analytic (infinite) when ``b''`` vanishes."""
        if self.kind == "couette" or self.amplitude == 0.0:
            return math.inf
        return self.a / (self.a + 1.0)

    def _bump(self, y: Any) -> tuple[np.ndarray, ...]:
        u = (np.asarray(y, dtype=float) - self.theta0) / self.width
        return cutoff_psi_derivatives(self.a, np.atleast_1d(u), self.sharpness)

    def _shape(self, y: Any, out: np.ndarray) -> np.ndarray | float:
        out = out.reshape(np.shape(y)) if np.ndim(y) else out
        return float(out.reshape(-1)[0]) if np.ndim(y) == 0 else out

    def b(self, y: Any) -> np.ndarray | float:
        base = self.slope * np.atleast_1d(np.asarray(y, dtype=float))
        if self.amplitude:
            base = base + self.amplitude * self.scale * self._bump(y)[0]
        return self._shape(y, base)

    def b1(self, y: Any) -> np.ndarray | float:
        out = np.full(np.atleast_1d(y).shape, self.slope, dtype=float)
        if self.amplitude:
            out = out + self.amplitude * self.scale * self._bump(y)[1] / self.width
        return self._shape(y, out)

    def b2(self, y: Any) -> np.ndarray | float:
        out = np.zeros(np.atleast_1d(y).shape, dtype=float)
        if self.amplitude:
            out = self.amplitude * self.scale * self._bump(y)[2] / self.width**2
        return self._shape(y, out)

    def b3(self, y: Any) -> np.ndarray | float:
        out = np.zeros(np.atleast_1d(y).shape, dtype=float)
        if self.amplitude:
            out = self.amplitude * self.scale * self._bump(y)[3] / self.width**3
        return self._shape(y, out)

    def descriptor(self) -> dict[str, Any]:
        return {
            "a": self.a,
            "amplitude": self.amplitude,
            "kind": self.kind,
            "name": self.name,
            "s": self.s,
            "sharpness": self.sharpness,
            "slope": self.slope,
            "theta0": self.theta0,
            "theta1": self.theta1,
        }


def _validate_collars(theta0: float, theta1: float, s: float) -> None:
    if not 0.0 < theta1 < theta0 < 0.1:
        raise ProfileAssumptionError(
            f"need 0 < theta1 < theta0 < 1/10, got theta0={theta0}, theta1={theta1}"
        )
    if not 0.0 < s < 1.0:
        raise ProfileAssumptionError(f"Gevrey index must lie in (0, 1), got {s}")


def _bump_scale(a: float, theta0: float, sharpness: float) -> tuple[float, float, float]:
    """Return (scale, max |h'|, max |h'''|) for the normalized bump ``h``."""
    u = np.linspace(0.0, 1.0, 20001)[1:-1]
    _, d1, d2, d3 = cutoff_psi_derivatives(a, u, sharpness)
    width = 1.0 - 2.0 * theta0
    peak = float(np.max(np.abs(d2)))
    if peak == 0.0:
        raise ProfileAssumptionError(f"bump with a={a}, sharpness={sharpness} underflows")
    scale = width**2 / peak
    return scale, scale * float(np.max(np.abs(d1))) / width, scale * float(np.max(np.abs(d3))) / width**3


def make_couette(*, s: float = 0.5, theta1: float = 0.04) -> ShearProfile:
    _validate_collars(1.0 / 20.0, theta1, s)
    return ShearProfile(name="couette", kind="couette", theta0=1.0 / 20.0, theta1=theta1, s=s)


def make_bump_profile(
    amplitude: float,
    a: float = 3.0,
    theta0: float = 0.08,
    theta1: float = 0.06,
    *,
    s: float = 0.5,
    slope: float = 1.0,
    sharpness: float = BUMP_SHARPNESS,
    remark_gate: bool = False,
    validate: bool = True,
    name: str | None = None,
) -> ShearProfile:
    """Bump profile with ``b'' = amplitude * chi`` supported in ``[theta0, 1 - theta0]``.

    ``chi`` is the second derivative of a rescaled Gevrey bump, so it has zero
    mean and zero first moment and ``b(1) - b(0) = slope``.
    """
    _validate_collars(theta0, theta1, s)
    if not slope > 0:
        raise ProfileAssumptionError(f"slope must be positive, got {slope}")
    scale, _, _ = _bump_scale(a, theta0, sharpness)
    profile = ShearProfile(
        name=name or f"bump_{amplitude:g}",
        kind="bump",
        theta0=theta0,
        theta1=theta1,
        s=s,
        amplitude=float(amplitude),
        a=a,
        slope=slope,
        sharpness=sharpness,
        scale=scale,
    )
    if validate:
        grid = profile.reference
        b1 = np.asarray(profile.b1(grid))
        lower, upper = theta0 / 100.0, 100.0 / theta0
        if float(b1.min()) < lower or float(b1.max()) > upper:
            raise ProfileAssumptionError(
                f"amplitude {amplitude} puts b' in [{b1.min():.4g}, {b1.max():.4g}], "
                f"outside the band [{lower:g}, {upper:g}]"
            )
    if remark_gate:
        b1 = np.asarray(profile.b1(profile.reference))
        b3 = np.abs(np.asarray(profile.b3(np.linspace(theta0, 1.0 - theta0, 20001))))
        if float(b1.min()) < 1.0 or float(b3.max()) >= 1.0:
            raise ProfileAssumptionError(
                f"spectral gate needs min b' >= 1 and max |b'''| < 1, got "
                f"min b'={b1.min():.6g}, max |b'''|={b3.max():.6g}"
            )
    return profile


def make_remark_profile(
    amplitude: float,
    a: float = 3.0,
    theta0: float = 0.08,
    theta1: float = 0.06,
    *,
    s: float = 0.5,
    sharpness: float = BUMP_SHARPNESS,
) -> ShearProfile:
    """Bump profile whose slope keeps ``min b' >= 1`` so the spectral gate can hold."""
    _, d1_max, _ = _bump_scale(a, theta0, sharpness)
    slope = 1.0 + abs(amplitude) * d1_max * (1.0 + 1e-6)
    return make_bump_profile(
        amplitude,
        a,
        theta0,
        theta1,
        s=s,
        slope=slope,
        sharpness=sharpness,
        remark_gate=True,
        name=f"remark_{amplitude:g}",
    )


def profile_from_spec(spec: dict[str, Any]) -> ShearProfile:
    """Build a profile from a config block ``{kind, amplitude, a, theta0, theta1, s, ...}``."""
    kind = str(spec.get("kind", "couette"))
    s = float(spec.get("s", 0.5))
    if kind == "couette":
        return make_couette(s=s, theta1=float(spec.get("theta1", 0.04)))
    if kind not in {"bump", "remark"}:
        raise ProfileAssumptionError(f"unknown profile kind {kind!r}")
    amplitude = float(spec.get("amplitude", 0.0))
    a = float(spec.get("a", (1.0 + s) / (1.0 - s)))
    theta0 = float(spec.get("theta0", 0.08))
    theta1 = float(spec.get("theta1", 0.06))
    sharpness = float(spec.get("sharpness", BUMP_SHARPNESS))
    if kind == "remark" or bool(spec.get("remark", False)):
        return make_remark_profile(amplitude, a, theta0, theta1, s=s, sharpness=sharpness)
    return make_bump_profile(
        amplitude,
        a,
        theta0,
        theta1,
        s=s,
        slope=float(spec.get("slope", 1.0)),
        sharpness=sharpness,
    )


# ---------------------------------------------------------------------------
# Coordinate map


def cutoff_exponent(s: float) -> float:
    return (1.0 + s) / (1.0 - s)


def plateau_cutoff(y: Any, theta1: float, a: float, sharpness: float = CUTOFF_SHARPNESS):
    """``phi``: 1 on ``[theta1/2, 1 - theta1/2]``, 0 outside ``[theta1/3, 1 - theta1/3]``."""
    arr = np.asarray(y, dtype=float)
    ramp = theta1 / 6.0
    rise = smooth_step(a, (arr - theta1 / 3.0) / ramp, sharpness)
    fall = smooth_step(a, (1.0 - theta1 / 3.0 - arr) / ramp, sharpness)
    return np.asarray(rise) * np.asarray(fall) if np.ndim(y) else float(rise) * float(fall)


@dataclass(frozen=True, eq=False)
class CoordinateMap:
    profile: ShearProfile
    v_lo: float
    v_hi: float
    _guess: PchipInterpolator = field(repr=False)

    @property
    def phi_exponent(self) -> float:
        return cutoff_exponent(self.profile.s)

    def binv(self, v: Any, tol: float = 1e-12) -> np.ndarray | float:
        target = np.atleast_1d(np.asarray(v, dtype=float))
        clipped = np.clip(target, self.v_lo, self.v_hi)
        y = np.clip(self._guess(clipped), 0.0, 1.0)
        p = self.profile
        for _ in range(50):
            residual = np.asarray(p.b(y)) - clipped
            if float(np.max(np.abs(residual), initial=0.0)) <= tol:
                break
            y = np.clip(y - residual / np.asarray(p.b1(y)), 0.0, 1.0)
        return float(y[0]) if np.ndim(v) == 0 else y.reshape(np.shape(v))

    def B(self, v: Any):
        return self.profile.b1(self.binv(v))

    def dB(self, v: Any):
        y = self.binv(v)
        return np.asarray(self.profile.b2(y)) / np.asarray(self.profile.b1(y))

    def d2B(self, v: Any):
        y = self.binv(v)
        b1 = np.asarray(self.profile.b1(y))
        b2 = np.asarray(self.profile.b2(y))
        b3 = np.asarray(self.profile.b3(y))
        return (b3 * b1 - b2 * b2) / b1**3

    def phi_cutoff(self, y: Any):
        return plateau_cutoff(y, self.profile.theta1, self.phi_exponent)

    def Psi(self, v: Any):
        arr = np.atleast_1d(np.asarray(v, dtype=float))
        inside = (arr >= self.v_lo) & (arr <= self.v_hi)
        out = np.zeros_like(arr)
        if np.any(inside):
            out[inside] = np.asarray(self.phi_cutoff(np.atleast_1d(self.binv(arr[inside]))))
        return float(out[0]) if np.ndim(v) == 0 else out.reshape(np.shape(v))


def build_map(p: ShearProfile) -> CoordinateMap:
    grid = p.reference
    values = np.asarray(p.b(grid))
    if not np.all(np.diff(values) > 0):
        bad = int(np.argmin(np.diff(values)))
        raise ProfileAssumptionError(f"profile {p.name} is not increasing near y={grid[bad]:.6f}")
    guess = PchipInterpolator(values, grid)
    return CoordinateMap(profile=p, v_lo=float(values[0]), v_hi=float(values[-1]), _guess=guess)


# ---------------------------------------------------------------------------
# Assumption checks


@dataclass(frozen=True)
class AssumptionEntry:
    condition: str
    value: float
    bound: float
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        value = self.value if math.isfinite(self.value) else None
        bound = self.bound if math.isfinite(self.bound) else None
        return {"bound": bound, "condition": self.condition, "pass": self.passed, "value": value}


@dataclass(frozen=True)
class AssumptionReport:
    profile: str
    entries: tuple[AssumptionEntry, ...]
    required: tuple[str, ...] = REQUIRED_CONDITIONS

    @property
    def passed(self) -> bool:
        return self.first_failure is None

    @property
    def first_failure(self) -> str | None:
        for entry in self.entries:
            if entry.condition in self.required and not entry.passed:
                return entry.condition
        return None

    def entry(self, condition: str) -> AssumptionEntry:
        for item in self.entries:
            if item.condition == condition:
                return item
        raise KeyError(condition)

    def to_dict(self) -> dict[str, Any]:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "first_failure": self.first_failure,
            "pass": self.passed,
            "profile": self.profile,
            "required": list(self.required),
        }


def _weighted_spectrum_integral(
    samples: np.ndarray, start: float, h: float, coefficient: float, power: float, decay_class: float
) -> tuple[float, float]:
    """Integral of ``exp(coefficient <xi>^power) |f~(xi)|^2`` and an estimate of its tail.

    The quadrature stops where the transform reaches its noise floor; the tail
    beyond is integrated from the fitted envelope ``exp(c - mu xi^decay_class)``.
    """
    if not np.any(samples):
        return 0.0, 0.0
    xi, spectrum = fourier_transform(samples, start, h)
    keep = xi >= 0
    xi = xi[keep]
    magnitude = np.abs(spectrum[keep])
    span = max(3, int(math.ceil(4.0 * math.pi / (xi[1] - xi[0]))) + 1)
    envelope = maximum_filter1d(magnitude, size=span, mode="nearest")
    below = np.nonzero(envelope < 1e-13 * envelope.max())[0]
    edge_index = int(below[0]) if below.size else int(0.8 * xi.size)
    edge = float(xi[edge_index])
    window = xi <= edge
    log_integrand = coefficient * np.power(bracket(xi[window]), power)
    with np.errstate(divide="ignore"):
        log_integrand = log_integrand + 2.0 * np.log(magnitude[window])
    body = 2.0 * float(integrate.trapezoid(np.exp(log_integrand), xi[window]))

    fit_mask = (xi >= edge / 4.0) & (xi <= edge) & (envelope > 0)
    if int(np.count_nonzero(fit_mask)) < 6:
        return body, math.inf
    slope, intercept = np.polyfit(xi[fit_mask] ** decay_class, np.log(envelope[fit_mask]), 1)
    mu = -float(slope)
    if mu <= 0 or decay_class < power or (decay_class == power and 2.0 * mu <= coefficient):
        return body, math.inf

    def tail(x: float) -> float:
        exponent = coefficient * float(bracket(x)) ** power + 2.0 * (intercept - mu * x**decay_class)
        return math.exp(exponent) if exponent > -745.0 else 0.0

    value, _ = integrate.quad(tail, edge, math.inf, limit=200)
    return body, 2.0 * value


def check_assumptions(p: ShearProfile, s: float, lam: float) -> AssumptionReport:
    """Numerical check of the profile hypotheses plus the sufficient spectral condition."""
    if not 0.0 < s < 1.0 or not lam > 0:
        raise ValueError(f"need s in (0, 1) and lambda > 0, got s={s}, lambda={lam}")
    grid = p.reference
    b = np.asarray(p.b(grid))
    b1 = np.asarray(p.b1(grid))
    entries: list[AssumptionEntry] = []

    step = float(np.min(np.diff(b)))
    lower, upper = p.theta0 / 100.0, 100.0 / p.theta0
    entries.append(AssumptionEntry("band_lower", float(b1.min()), lower, float(b1.min()) >= lower))
    entries.append(AssumptionEntry("band_upper", float(b1.max()), upper, float(b1.max()) <= upper))
    entries.append(AssumptionEntry("monotone", step, 0.0, step > 0.0))

    collar = np.concatenate(
        [grid[grid <= p.theta0], grid[grid >= 1.0 - p.theta0],
         np.linspace(0.0, p.theta0, 257), np.linspace(1.0 - p.theta0, 1.0, 257)]
    )
    collar_value = float(np.max(np.abs(np.asarray(p.b2(collar)))))
    entries.append(AssumptionEntry("collar", collar_value, 0.0, collar_value == 0.0))

    needed = (s + 1.0) / 2.0
    entries.append(
        AssumptionEntry("gevrey_class", p.gevrey_class, needed, p.gevrey_class >= needed - 1e-12)
    )

    n = 1 << 14
    h = 2.0 / n
    start = -0.5
    samples = np.asarray(p.b2(start + h * np.arange(n)))
    decay_class = p.gevrey_class if math.isfinite(p.gevrey_class) else 1.0
    body, tail = _weighted_spectrum_integral(samples, start, h, 2.0 * p.theta0, needed, decay_class)
    sup = float(np.max(np.abs(b)))
    total = sup**2 + body + (tail if math.isfinite(tail) else 0.0)
    resolved = math.isfinite(tail) and tail < TAIL_TOLERANCE
    entries.append(
        AssumptionEntry("weighted_integral", total, 1.0 / p.theta0, resolved and total < 1.0 / p.theta0)
    )

    dense = np.linspace(0.0, 1.0, 20001)
    b3_max = float(np.max(np.abs(np.asarray(p.b3(dense)))))
    entries.append(AssumptionEntry("spectral_min_slope", float(b1.min()), 1.0, float(b1.min()) >= 1.0 - 1e-12))
    entries.append(AssumptionEntry("spectral_max_third", b3_max, 1.0, b3_max < 1.0))

    phi = plateau_cutoff(start + h * np.arange(n), p.theta1, cutoff_exponent(s))
    phi_body, phi_tail = _weighted_spectrum_integral(
        np.asarray(phi), start, h, 2.0 * lam, needed, needed
    )
    entries.append(
        AssumptionEntry(
            "cutoff_weight",
            phi_body,
            math.inf,
            math.isfinite(phi_tail) and phi_tail < TAIL_TOLERANCE * max(phi_body, 1.0),
        )
    )

    report = AssumptionReport(profile=p.name, entries=tuple(entries))
    print(f"[profile] name={p.name} pass={report.passed} first_failure={report.first_failure}")
    return report
