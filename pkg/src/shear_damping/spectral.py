"""Generalized eigenfunctions with limiting absorption and what is built on them.

Slices solve, for ``D = b(y) - b(y0) + i iota eps``,

    (k^2 - d^2/dy^2) psi + b''/D psi = omega0 / D,   psi(0) = psi(1) = 0,

on the evolution grid. Differences of the two absorption branches are
extrapolated to ``eps -> 0`` and fed into the stream representation, the
operator norms and the shifted-coordinate transform ``Theta``.
"""
from __future__ import annotations

import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.linalg import cholesky, solve_banded, solve_triangular, svdvals

from .cache_meta import build_slice_descriptor, is_cache_current
from .evolution import ResolutionError, wall_grid
from .gevrey import (
    GevreyResolutionError,
    GevreyWeight,
    SpectralField,
    fourier_transform,
    fourier_transform_2d,
    gevrey_norm,
    log_weight,
)
from .greens import eval_G, eval_G_dz
from .profiles import CoordinateMap, ShearProfile, cutoff_exponent, plateau_cutoff
from .reports import BoundReport

EPS_MAX = 0.25
FLOOR_FACTOR = 5.0
SLICE_TOL = 1e-10
H0_FACTOR = 10.0
RESAMPLE_TOL = 1e-6
COLLAR_TOL = 1e-6
SCAN_THRESHOLD = 1e-3
CONTINUITY_TOL = 0.2
CONTINUITY_EPS = 2.0**-6
BOUND_CAP = 100.0
# -1 / (2 pi i), the constant of the stream representation
STREAM_CONSTANT = 1j / (2.0 * math.pi)


class CriticalLayerResolutionError(ValueError):
    pass


class SliceResidualError(RuntimeError):
    pass


def eps_schedule(first: int, last: int) -> tuple[float, ...]:
    """``(2^-first, ..., 2^-last)``."""
    if last < first:
        raise ValueError(f"empty schedule 2^-{first}..2^-{last}")
    return tuple(2.0**-j for j in range(first, last + 1))


def h1k_norm(values: np.ndarray, k: int, h: float) -> float:
    """``|g|_{L2} + |k|^-1 |g'|_{L2}`` with one-sided differences for ``g'``."""
    values = np.asarray(values)
    l2 = math.sqrt(float(trapezoid(np.abs(values) ** 2, dx=h)))
    slope = np.diff(values) / h
    return l2 + math.sqrt(float(np.sum(np.abs(slope) ** 2) * h)) / abs(k)


def _check_eps(eps: float, h: float, min_slope: float, scale: float = 1.0) -> None:
    if eps == 0 or abs(eps) > EPS_MAX:
        raise ValueError(f"eps must be nonzero with |eps| <= {EPS_MAX}, got {eps}")
    floor = FLOOR_FACTOR * h * min_slope
    if abs(eps) < floor:
        required = int(math.ceil(FLOOR_FACTOR * min_slope * scale / abs(eps)))
        raise CriticalLayerResolutionError(
            f"|eps|={abs(eps):.4g} is below the critical-layer floor {floor:.4g}; "
            f"refine to at least {required} intervals"
        )


def _as_grid_values(omega0: Callable[[np.ndarray], np.ndarray] | np.ndarray, y: np.ndarray) -> np.ndarray:
    values = np.asarray(omega0(y) if callable(omega0) else omega0, dtype=complex)
    if values.shape != y.shape:
        raise ValueError(f"initial data has shape {values.shape}, expected {y.shape}")
    return values


# ---------------------------------------------------------------------------
# Eigenfunction slices


@dataclass(frozen=True, eq=False)
class EigenfunctionSlice:
    k: int
    y0: float
    eps: float
    iota: int
    values: np.ndarray
    residual: float
    h0_residual: float

    @property
    def signed_eps(self) -> float:
        return self.iota * self.eps


@dataclass(frozen=True, eq=False)
class _SliceSystem:
    """Grid data shared by every slice of one ``(profile, k, omega0, n)``."""

    k: int
    n: int
    y: np.ndarray
    b: np.ndarray
    b2: np.ndarray
    omega0: np.ndarray
    min_slope: float
    theta1: float
    elliptic: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, profile: ShearProfile, k: int, omega0: Any, n: int) -> "_SliceSystem":
        if k == 0:
            raise ValueError("slices are defined for k != 0 only")
        y = wall_grid(n)
        ab = np.empty((3, n - 1))
        ab[0, :] = -float(n * n)
        ab[1, :] = k * k + 2.0 * n * n
        ab[2, :] = -float(n * n)
        values = _as_grid_values(omega0, y)
        outside = (y < profile.theta1) | (y > 1.0 - profile.theta1)
        if np.any(np.abs(values[outside]) > 1e-12 * max(float(np.max(np.abs(values))), 1e-300)):
            raise ValueError(f"omega0 must be supported in [{profile.theta1}, {1 - profile.theta1}]")
        return cls(
            k=k,
            n=n,
            y=y,
            b=np.asarray(profile.b(y)),
            b2=np.asarray(profile.b2(y)),
            omega0=values,
            min_slope=float(np.min(np.asarray(profile.b1(y)))),
            theta1=profile.theta1,
            elliptic=ab,
        )

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def solve(self, b0: float, eps: float, iota: int) -> tuple[np.ndarray, float, float]:
        n = self.n
        D = self.b[1:-1] - b0 + 1j * iota * eps
        rhs = self.omega0[1:-1] / D
        psi = np.zeros(n + 1, dtype=complex)
        scale = float(np.max(np.abs(rhs)))
        if scale == 0.0:
            return psi, 0.0, 0.0
        diag = self.k * self.k + 2.0 * n * n + self.b2[1:-1] / D
        ab = np.zeros((3, n - 1), dtype=complex)
        ab[0, 1:] = -float(n * n)
        ab[1, :] = diag
        ab[2, :-1] = -float(n * n)
        inner = solve_banded((1, 1), ab, rhs, check_finite=False)
        psi[1:-1] = inner
        applied = diag * inner - n * n * (psi[:-2] + psi[2:])
        residual = float(np.max(np.abs(applied - rhs))) / scale
        # integral form: psi = G_h[(omega0 - b'' psi) / D]
        source = (self.omega0[1:-1] - self.b2[1:-1] * inner) / D
        h0 = float(np.max(np.abs(inner - solve_banded((1, 1), self.elliptic, source, check_finite=False))))
        return psi, residual, h0 / scale


def solve_eigenfunction(
    k: int,
    y0: float,
    eps: float,
    iota: int,
    omega0: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    profile: ShearProfile,
    *,
    n: int = 1024,
    system: _SliceSystem | None = None,
) -> EigenfunctionSlice:
    if iota not in (1, -1):
        raise ValueError(f"iota must be +1 or -1, got {iota}")
    if not 0.0 <= y0 <= 1.0:
        raise ValueError(f"y0 must lie in [0, 1], got {y0}")
    system = system or _SliceSystem.build(profile, k, omega0, n)
    _check_eps(eps, system.h, system.min_slope)
    values, residual, h0 = system.solve(float(profile.b(y0)), eps, iota)
    if residual > SLICE_TOL:
        raise SliceResidualError(f"slice residual {residual:.3e} exceeds {SLICE_TOL:g} (k={k}, y0={y0}, eps={eps})")
    if h0 > H0_FACTOR * residual + 1e-13:
        raise SliceResidualError(
            f"integral-form residual {h0:.3e} exceeds {H0_FACTOR:g} x differential residual {residual:.3e}"
        )
    return EigenfunctionSlice(k=k, y0=y0, eps=abs(eps), iota=iota if eps > 0 else -iota, values=values,
                              residual=residual, h0_residual=h0)


def eigenfunction_bound(
    profile: ShearProfile,
    omega0: Callable[[np.ndarray], np.ndarray],
    ks: Sequence[int],
    y0s: Sequence[float],
    schedule: Sequence[float],
    *,
    n: int = 1024,
    cap: float = BOUND_CAP,
) -> BoundReport:
    """``|phi psi|_{H1_k} <= C |k|^-1/3 |omega0|_{H1_k}`` with one constant over the grid."""
    ratios: dict[str, float] = {}
    y = wall_grid(n)
    phi = np.asarray(plateau_cutoff(y, profile.theta1, cutoff_exponent(profile.s)))
    for k in ks:
        system = _SliceSystem.build(profile, k, omega0, n)
        data = h1k_norm(system.omega0, k, system.h)
        worst = 0.0
        for y0 in y0s:
            for eps in schedule:
                for iota in (1, -1):
                    piece = solve_eigenfunction(k, y0, eps, iota, omega0, profile, n=n, system=system)
                    worst = max(worst, h1k_norm(phi * piece.values, k, system.h))
        ratios[f"k{k}"] = worst * abs(k) ** (1.0 / 3.0) / data if data > 0 else 0.0
    constant = max(ratios.values(), default=0.0)
    passed = constant <= cap
    print(f"[spectral] eigenfunction bound ks={list(ks)} constant={constant:.4g} pass={passed}")
    return BoundReport(subject="eigenfunction_h1k", ratios=ratios, constant=constant, cap=cap, passed=passed)


# ---------------------------------------------------------------------------
# Extrapolation in eps


@dataclass(frozen=True, eq=False)
class Extrapolation:
    limit: np.ndarray
    order: float
    error_estimates: tuple[float, ...]
    ratios: tuple[float, ...]
    converged: bool


def _geometric_ratio(schedule: Sequence[float]) -> float:
    if len(schedule) < 2:
        raise ValueError("extrapolation needs at least two values of eps")
    ratios = [b / a for a, b in zip(schedule[:-1], schedule[1:])]
    if any(not 0.0 < r < 1.0 for r in ratios) or max(ratios) - min(ratios) > 1e-9:
        raise ValueError(f"eps schedule must decrease geometrically, got {list(schedule)}")
    return ratios[0]


def richardson(levels: np.ndarray, schedule: Sequence[float]) -> Extrapolation:
    """Richardson table over a geometric schedule; orders ``p, p+1, ...`` with ``p`` fitted."""
    levels = np.asarray(levels)
    r = _geometric_ratio(schedule)
    steps = [float(np.max(np.abs(levels[j] - levels[j - 1]))) for j in range(1, len(levels))]
    ratios = tuple(steps[j] / steps[j - 1] for j in range(1, len(steps)) if steps[j - 1] > 0)
    order = 1.0
    if len(steps) >= 2 and steps[-1] > 0 and steps[-2] > 0:
        order = float(np.clip(math.log(steps[-2] / steps[-1]) / math.log(1.0 / r), 1.0, 3.0))
    table = [levels[j].copy() for j in range(len(levels))]
    diagonal = [table[0]]
    for m in range(1, len(levels)):
        factor = r ** (-(order + m - 1)) - 1.0
        for j in range(len(levels) - 1, m - 1, -1):
            table[j] = table[j] + (table[j] - table[j - 1]) / factor
        diagonal.append(table[m])
    errors = tuple(float(np.max(np.abs(diagonal[j] - diagonal[j - 1]))) for j in range(1, len(diagonal)))
    converged = all(value < 1.0 for value in ratios)
    return Extrapolation(
        limit=diagonal[-1], order=order, error_estimates=errors, ratios=ratios, converged=converged
    )


@dataclass(frozen=True, eq=False)
class LimitSlice:
    k: int
    y0: float
    schedule: tuple[float, ...]
    differences: np.ndarray
    limit: np.ndarray
    order: float
    error_estimates: tuple[float, ...]
    converged: bool
    localization: tuple[float, ...]
    in_collar: bool
    vanishes: bool | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "converged": self.converged,
            "error_estimates": list(self.error_estimates),
            "in_collar": self.in_collar,
            "k": self.k,
            "limit_norm": float(np.max(np.abs(self.limit))),
            "localization": list(self.localization),
            "order": self.order,
            "schedule": list(self.schedule),
            "vanishes": self.vanishes,
            "y0": self.y0,
        }


def lap_difference(
    k: int,
    y0: float,
    omega0: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    schedule: Sequence[float],
    profile: ShearProfile,
    *,
    n: int = 1024,
    system: _SliceSystem | None = None,
) -> LimitSlice:
    """Extrapolate ``psi^- - psi^+`` to ``eps -> 0+``."""
    system = system or _SliceSystem.build(profile, k, omega0, n)
    b0 = float(profile.b(y0))
    diffs = []
    localization = []
    near = np.abs(system.y[1:-1] - y0)
    for eps in schedule:
        minus = solve_eigenfunction(k, y0, eps, -1, omega0, profile, n=n, system=system).values
        plus = solve_eigenfunction(k, y0, eps, 1, omega0, profile, n=n, system=system).values
        diffs.append(minus - plus)
        d_minus = system.b[1:-1] - b0 - 1j * eps
        d_plus = system.b[1:-1] - b0 + 1j * eps
        forcing = (system.omega0[1:-1] - system.b2[1:-1] * minus[1:-1]) / d_minus - (
            system.omega0[1:-1] - system.b2[1:-1] * plus[1:-1]
        ) / d_plus
        mass = np.abs(forcing) ** 2
        total = float(np.sum(mass))
        localization.append(float(np.sum(mass[near <= 10.0 * eps])) / total if total > 0 else 1.0)
    differences = np.array(diffs)
    extrapolated = richardson(differences, schedule)
    in_collar = y0 <= system.theta1 / 2.0 or y0 >= 1.0 - system.theta1 / 2.0
    vanishes = None
    if in_collar:
        scale = float(np.max(np.abs(system.omega0)))
        vanishes = float(np.max(np.abs(extrapolated.limit))) <= COLLAR_TOL * scale
    if not extrapolated.converged:
        print(f"[spectral] lap difference not converging k={k} y0={y0:.4g} ratios={extrapolated.ratios}",
              file=sys.stderr)
    return LimitSlice(
        k=k,
        y0=y0,
        schedule=tuple(schedule),
        differences=differences,
        limit=extrapolated.limit,
        order=extrapolated.order,
        error_estimates=extrapolated.error_estimates,
        converged=extrapolated.converged,
        localization=tuple(localization),
        in_collar=in_collar,
        vanishes=vanishes,
    )


# ---------------------------------------------------------------------------
# Stream assembly


@dataclass(frozen=True, eq=False)
class StreamAssembly:
    k: int
    times: np.ndarray
    y: np.ndarray
    values: np.ndarray
    schedule: tuple[float, ...]
    order: float
    error_estimates: tuple[float, ...]
    compensated: bool
    cache_hits: int = 0


def required_nodes(t: float, k: int, max_slope: float) -> int:
    """Smallest ``n`` whose spacing resolves ``exp(-i k b(y0) t)``."""
    if t == 0:
        return 16
    return int(math.ceil(8.0 * abs(k) * abs(t) * max_slope / math.pi))


def _difference_rows(
    system: _SliceSystem,
    profile: ShearProfile,
    eps: float,
    *,
    jobs: int,
    cache: Any | None,
    cache_version: str | None,
) -> np.ndarray:
    y0s = system.y
    rows: dict[tuple[int, int], np.ndarray] = {}
    if cache is not None and cache_version is not None:
        for j, y0 in enumerate(y0s):
            for iota in (1, -1):
                hit = cache.get_slice(cache_version, system.k, float(y0), eps, iota)
                if hit is not None and hit.size == y0s.size:
                    rows[(j, iota)] = hit
    missing = [(j, iota) for j in range(y0s.size) for iota in (1, -1) if (j, iota) not in rows]
    b0s = np.asarray(profile.b(y0s))

    def solve(item: tuple[int, int]) -> tuple[np.ndarray, float]:
        j, iota = item
        values, residual, h0 = system.solve(float(b0s[j]), eps, iota)
        if residual > SLICE_TOL or h0 > H0_FACTOR * residual + 1e-13:
            raise SliceResidualError(f"slice residual {residual:.3e}/{h0:.3e} at y0={y0s[j]:.6f}, eps={eps}")
        return values, residual

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        solved = list(pool.map(solve, missing))
    new_rows = []
    for (j, iota), (values, residual) in zip(missing, solved):
        rows[(j, iota)] = values
        new_rows.append((system.k, float(y0s[j]), eps, iota, values, residual))
    if cache is not None and cache_version is not None and new_rows:
        cache.put_slices(cache_version, new_rows)
        print(f"[cache] stored k={system.k} eps={eps:g} slices={len(new_rows)}")
    return np.array([rows[(j, -1)] - rows[(j, 1)] for j in range(y0s.size)])


def assemble_stream(
    t: float | Sequence[float],
    k: int,
    omega0: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    profile: ShearProfile,
    *,
    n: int = 1024,
    schedule: Sequence[float] = eps_schedule(4, 7),
    compensate: bool = True,
    cache: Any | None = None,
    jobs: int = 1,
) -> StreamAssembly:
    """``psi_k(t, y) = -1/(2 pi i) lim int exp(-i k b(y0) t) b'(y0) [psi^- - psi^+](y, y0) dy0``."""
    times = np.atleast_1d(np.asarray(t, dtype=float))
    system = _SliceSystem.build(profile, k, omega0, n)
    slopes = np.asarray(profile.b1(system.y))
    max_slope = float(np.max(np.abs(slopes)))
    t_max = float(np.max(np.abs(times)))
    needed = required_nodes(t_max, k, max_slope)
    if n < needed:
        raise ResolutionError(f"y0 spacing 1/{n} does not resolve t={t_max:g}; use n >= {needed}")
    for eps in schedule:
        _check_eps(eps, system.h, system.min_slope)
    cache_version = None
    if cache is not None:
        descriptor = build_slice_descriptor(profile=profile.descriptor(), omega0=system.omega0, n=n)
        cache_version = descriptor["cache_version"]
        if not is_cache_current(cache.get_descriptor(cache_version), cache_version):
            cache.register(descriptor)
            print(f"[cache] registered version={cache_version[:12]} n={n}")
    hits_before = getattr(cache, "hits", 0)
    weights = np.full(n + 1, system.h)
    weights[0] = weights[-1] = system.h / 2.0
    b0s = system.b
    phases = np.exp(-1j * k * np.outer(times, b0s)) * (weights * slopes)[None, :]
    levels = []
    for eps in schedule:
        diffs = _difference_rows(system, profile, eps, jobs=jobs, cache=cache, cache_version=cache_version)
        level = STREAM_CONSTANT * (phases @ diffs)
        if compensate:
            level = level * np.exp(abs(k) * eps * np.abs(times))[:, None]
        levels.append(level)
    extrapolated = richardson(np.array(levels), schedule)
    values = extrapolated.limit
    values[:, 0] = values[:, -1] = 0.0
    hits = getattr(cache, "hits", 0) - hits_before
    print(
        f"[spectral] assembled k={k} n={n} times={times.size} order={extrapolated.order:.3g} "
        f"cache_hits={hits}"
    )
    return StreamAssembly(
        k=k,
        times=times,
        y=system.y,
        values=values,
        schedule=tuple(schedule),
        order=extrapolated.order,
        error_estimates=extrapolated.error_estimates,
        compensated=compensate,
        cache_hits=hits,
    )


def relative_l2(a: np.ndarray, b: np.ndarray, y: np.ndarray) -> float:
    denominator = math.sqrt(float(trapezoid(np.abs(b) ** 2, y)))
    numerator = math.sqrt(float(trapezoid(np.abs(a - b) ** 2, y)))
    return numerator / denominator if denominator > 0 else numerator


# ---------------------------------------------------------------------------
# Operator norms


@dataclass(frozen=True)
class OperatorNorms:
    k: int
    y0: float
    eps: float
    tnorm: float
    min_sv: float

    def to_dict(self) -> dict[str, Any]:
        return {"eps": self.eps, "k": self.k, "min_sv": self.min_sv, "tnorm": self.tnorm, "y0": self.y0}


def _h1k_factor(k: int, n: int) -> np.ndarray:
    """Upper Cholesky factor of the discrete ``H1_k`` Gram matrix."""
    h = 1.0 / n
    gram = np.diag(np.full(n + 1, h))
    gram[0, 0] = gram[-1, -1] = h / 2.0
    diff = (np.eye(n + 1, k=1) - np.eye(n + 1))[:-1] / h
    gram = gram + (h / (k * k)) * diff.T @ diff
    return cholesky(gram, lower=False)


def operator_norms(
    k: int,
    y0: float,
    eps: float,
    profile: ShearProfile,
    *,
    n: int = 512,
    iota: int = 1,
    factor: np.ndarray | None = None,
) -> OperatorNorms:
    """Norm of ``T_{k,y0,eps}`` and smallest singular value of ``I + T`` in ``H1_k``."""
    if k == 0:
        raise ValueError("operator norms are defined for k != 0 only")
    y = wall_grid(n)
    slopes = np.asarray(profile.b1(y))
    _check_eps(eps, 1.0 / n, float(np.min(slopes)))
    b2 = np.asarray(profile.b2(y))
    if not np.any(b2):
        return OperatorNorms(k=k, y0=y0, eps=eps, tnorm=0.0, min_sv=1.0)
    weights = np.full(n + 1, 1.0 / n)
    weights[0] = weights[-1] = 0.5 / n
    phi = np.asarray(plateau_cutoff(y, profile.theta1, cutoff_exponent(profile.s)))
    D = np.asarray(profile.b(y)) - float(profile.b(y0)) + 1j * iota * eps
    T = phi[:, None] * eval_G(k, y[:, None], y[None, :]) * (weights * b2 / D)[None, :]
    R = _h1k_factor(k, n) if factor is None else factor
    conjugated = solve_triangular(R, (R @ T).T, trans="T", lower=False).T
    tnorm = float(svdvals(conjugated)[0])
    min_sv = float(svdvals(np.eye(n + 1) + conjugated)[-1])
    return OperatorNorms(k=k, y0=y0, eps=eps, tnorm=tnorm, min_sv=min_sv)


@dataclass(frozen=True, eq=False)
class ScanReport:
    profile: str
    entries: tuple[OperatorNorms, ...]
    min_sv: float
    argmin: tuple[int, float, float]
    max_jump: float
    tnorm_table: dict[int, float]
    tnorm_constant: float
    threshold: float
    passed: bool
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "argmin": list(self.argmin),
            "max_jump": self.max_jump,
            "min_sv": self.min_sv,
            "notes": list(self.notes),
            "pass": self.passed,
            "profile": self.profile,
            "threshold": self.threshold,
            "tnorm_constant": self.tnorm_constant,
            "tnorm_table": {str(k): v for k, v in sorted(self.tnorm_table.items())},
        }


def embedded_eigenvalue_scan(
    profile: ShearProfile,
    kmax: int,
    *,
    y0_points: int = 9,
    schedule: Sequence[float] = eps_schedule(3, 6),
    n: int = 512,
    threshold: float = SCAN_THRESHOLD,
    jobs: int = 1,
) -> ScanReport:
    """Minimum of ``sigma_min(I + T)`` over modes, critical heights and the eps schedule."""
    if kmax < 1:
        raise ValueError(f"kmax must be >= 1, got {kmax}")
    y0s = np.linspace(0.0, 1.0, y0_points)
    points = [(k, float(y0), float(eps)) for k in range(1, kmax + 1) for y0 in y0s for eps in schedule]
    factors = {k: _h1k_factor(k, n) for k in range(1, kmax + 1)}

    def measure(point: tuple[int, float, float]) -> OperatorNorms:
        k, y0, eps = point
        return operator_norms(k, y0, eps, profile, n=n, factor=factors[k])

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        entries = tuple(pool.map(measure, points))
    worst = min(entries, key=lambda item: item.min_sv)
    max_jump = 0.0
    by_series: dict[tuple[int, float], list[OperatorNorms]] = {}
    for item in entries:
        by_series.setdefault((item.k, item.y0), []).append(item)
    for series in by_series.values():
        for prev, cur in zip(series[:-1], series[1:]):
            if cur.eps <= CONTINUITY_EPS * (1.0 + 1e-12):
                max_jump = max(max_jump, abs(cur.min_sv - prev.min_sv))
    table: dict[int, float] = {}
    for item in entries:
        table[item.k] = max(table.get(item.k, 0.0), item.tnorm * item.k ** (1.0 / 3.0))
    notes: list[str] = []
    if worst.min_sv < threshold:
        notes.append(f"sigma_min(I+T)={worst.min_sv:.3e} at k={worst.k}, y0={worst.y0:.4g}, eps={worst.eps:g}")
    if max_jump > CONTINUITY_TOL:
        notes.append(f"sigma_min jumps by {max_jump:.3g} along the eps schedule")
    passed = worst.min_sv >= threshold and max_jump <= CONTINUITY_TOL
    print(f"[spectral] scan profile={profile.name} kmax={kmax} min_sv={worst.min_sv:.4g} pass={passed}")
    return ScanReport(
        profile=profile.name,
        entries=entries,
        min_sv=worst.min_sv,
        argmin=(worst.k, worst.y0, worst.eps),
        max_jump=max_jump,
        tnorm_table=table,
        tnorm_constant=max(table.values()),
        threshold=threshold,
        passed=passed,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# The operator S in v-coordinates


def v_grid(cmap: CoordinateMap, nv: int) -> np.ndarray:
    return np.linspace(cmap.v_lo, cmap.v_hi, nv + 1)


def apply_S(
    k: int,
    w0: float,
    eps: float,
    g: np.ndarray,
    cmap: CoordinateMap,
    *,
    grid: np.ndarray | None = None,
    shifted: bool = False,
) -> np.ndarray:
    """``S_{k,w,eps} g`` (or the shifted ``S'`` on ``u = v - w``) after integrating by parts.

    ``1/(v' - w + i eps)`` is written as the derivative of the principal-branch
    logarithm; the boundary terms vanish with the Green's function.
    """
    g = np.asarray(g, dtype=complex)
    if grid is None:
        grid = v_grid(cmap, g.size - 1) - (w0 if shifted else 0.0)
    grid = np.asarray(grid, dtype=float)
    if grid.shape != g.shape:
        raise ValueError(f"g has shape {g.shape} but the grid has {grid.shape}")
    h = float(grid[1] - grid[0])
    _check_eps(eps, h, 1.0, scale=float(cmap.v_hi - cmap.v_lo))
    if not np.any(g):
        return np.zeros_like(g)
    points = grid + w0 if shifted else grid
    y = np.asarray(cmap.binv(points))
    slope = np.asarray(cmap.B(points))
    dB = np.asarray(cmap.dB(points))
    d2B = np.asarray(cmap.d2B(points))
    if not (np.any(dB) or np.any(d2B)):
        return np.zeros_like(g)
    dg = np.gradient(g, h, edge_order=2)
    G = eval_G(k, y[:, None], y[None, :])
    dG = eval_G_dz(k, y[:, None], y[None, :]) / slope[None, :]
    logs = np.log(grid + 1j * eps) if shifted else np.log(grid - w0 + 1j * eps)
    weights = np.full(grid.size, h)
    weights[0] = weights[-1] = h / 2.0
    inner = dG * (dB * g)[None, :] + G * (d2B * g + dB * dg)[None, :]
    return -np.asarray(cmap.Psi(points)) * ((inner * (weights * logs)[None, :]).sum(axis=1))


def s_operator_ratio(k: int, w0: float, eps: float, g: np.ndarray, cmap: CoordinateMap) -> float:
    """``|S g|_{H1_k} / |g|_{H1_k}`` on the uniform v-grid."""
    grid = v_grid(cmap, g.size - 1)
    h = float(grid[1] - grid[0])
    denominator = h1k_norm(g, k, h)
    if denominator == 0:
        return 0.0
    return h1k_norm(apply_S(k, w0, eps, g, cmap, grid=grid), k, h) / denominator


# ---------------------------------------------------------------------------
# Theta: slices in shifted coordinates


@dataclass(frozen=True, eq=False)
class _VSystem:
    k: int
    v: np.ndarray
    lower: np.ndarray
    base: np.ndarray
    upper: np.ndarray
    b2: np.ndarray
    f0: np.ndarray

    @classmethod
    def build(cls, k: int, cmap: CoordinateMap, f0: np.ndarray, nv: int) -> "_VSystem":
        v = v_grid(cmap, nv)
        h = float(v[1] - v[0])
        y = np.asarray(cmap.binv(v))
        slope_sq = np.asarray(cmap.profile.b1(y)) ** 2
        b2 = np.asarray(cmap.profile.b2(y))
        return cls(
            k=k,
            v=v,
            lower=-slope_sq / h**2 + b2 / (2.0 * h),
            base=k * k + 2.0 * slope_sq / h**2,
            upper=-slope_sq / h**2 - b2 / (2.0 * h),
            b2=b2,
            f0=f0,
        )

    @property
    def h(self) -> float:
        return float(self.v[1] - self.v[0])

    def solve(self, w: float, eps: float, iota: int) -> np.ndarray:
        """``(k^2 - B^2 d_v^2 - b'' d_v) phi + b''/D phi = f0 / D`` with ``D = v - w + i iota eps``."""
        m = self.v.size
        D = self.v[1:-1] - w + 1j * iota * eps
        ab = np.zeros((3, m - 2), dtype=complex)
        ab[0, 1:] = self.upper[1:-2]
        ab[1, :] = self.base[1:-1] + self.b2[1:-1] / D
        ab[2, :-1] = self.lower[2:-1]
        phi = np.zeros(m, dtype=complex)
        if np.any(self.f0):
            phi[1:-1] = solve_banded((1, 1), ab, self.f0[1:-1] / D, check_finite=False)
        return phi


@dataclass(frozen=True, eq=False)
class ThetaField:
    """``Theta(u, w)`` on ``u = v - w``; rows index ``u``, columns ``w``."""

    k: int
    schedule: tuple[float, ...]
    iota: int | None
    u: np.ndarray
    w: np.ndarray
    slices: np.ndarray
    psi_v: np.ndarray
    values: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    transform: np.ndarray
    order: float | None = None
    error_estimates: tuple[float, ...] = ()

    @property
    def h(self) -> float:
        return float(self.w[1] - self.w[0])

    @property
    def nyquist(self) -> float:
        return math.pi / self.h


def _reindex(slices: np.ndarray, psi_v: np.ndarray) -> np.ndarray:
    nw, nvp = slices.shape
    nv = nvp - 1
    theta = np.zeros((2 * nv + 1, nw), dtype=complex)
    col = np.arange(nvp)[None, :]
    j = np.arange(nw)[:, None]
    theta[(col - j + nv), np.broadcast_to(j, slices.shape)] = psi_v[None, :] * slices * psi_v[:, None]
    return theta


def resample_y_slice(piece: EigenfunctionSlice, cmap: CoordinateMap, v: np.ndarray) -> np.ndarray:
    """Spline a y-grid slice onto ``v``; rejects estimated errors above the tolerance."""
    y = wall_grid(piece.values.size - 1)
    targets = np.asarray(cmap.binv(v))
    values = piece.values

    def spline(step: int) -> np.ndarray:
        re = CubicSpline(y[::step], values.real[::step])(targets)
        im = CubicSpline(y[::step], values.imag[::step])(targets)
        return re + 1j * im

    fine = spline(1)
    error = float(np.max(np.abs(fine - spline(2)))) / 15.0
    scale = max(float(np.max(np.abs(fine))), 1e-300)
    if error > RESAMPLE_TOL * scale:
        raise ResolutionError(f"slice resampling error {error / scale:.3e} exceeds {RESAMPLE_TOL:g} at y0={piece.y0:.6f}")
    return fine


def theta_transform(
    k: int,
    cmap: CoordinateMap,
    omega0: Callable[[np.ndarray], np.ndarray],
    *,
    nv: int = 512,
    schedule: Sequence[float] = eps_schedule(3, 6),
    iota: int | None = None,
    slices: Mapping[tuple[float, int], Sequence[EigenfunctionSlice]] | None = None,
) -> ThetaField:
    """Assemble ``Theta^iota`` (``iota`` given, smallest eps) or the extrapolated difference ``Theta_k``.

    Slices are solved natively on the v-grid unless y-grid ``slices`` keyed by
    ``(eps, iota)`` and ordered along the w-grid are supplied.
    """
    v = v_grid(cmap, nv)
    h = float(v[1] - v[0])
    for eps in schedule:
        _check_eps(eps, h, 1.0, scale=float(cmap.v_hi - cmap.v_lo))
    f0 = np.asarray(omega0(np.asarray(cmap.binv(v))), dtype=complex)
    system = _VSystem.build(k, cmap, f0, nv)
    iotas = (-1, 1) if iota is None else (iota,)
    used = tuple(schedule) if iota is None else (schedule[-1],)

    def branch(eps: float, sign: int) -> np.ndarray:
        if slices is not None:
            pieces = slices[(eps, sign)]
            if len(pieces) != v.size:
                raise ValueError(f"expected {v.size} slices for eps={eps}, iota={sign}, got {len(pieces)}")
            return np.array([resample_y_slice(piece, cmap, v) for piece in pieces])
        return np.array([system.solve(float(w), eps, sign) for w in v])

    levels = []
    for eps in used:
        if iota is None:
            levels.append(branch(eps, -1) - branch(eps, 1))
        else:
            levels.append(branch(eps, iotas[0]))
    order = None
    errors: tuple[float, ...] = ()
    if iota is None:
        extrapolated = richardson(np.array(levels), used)
        stacked, order, errors = extrapolated.limit, extrapolated.order, extrapolated.error_estimates
    else:
        stacked = levels[0]
    psi_v = np.asarray(cmap.Psi(v))
    theta = _reindex(stacked, psi_v)
    u = h * np.arange(-nv, nv + 1)
    shape = (1 << int(math.ceil(math.log2(theta.shape[0]))), 1 << int(math.ceil(math.log2(theta.shape[1]))))
    xi, eta, transform = fourier_transform_2d(theta, (float(u[0]), float(v[0])), (h, h), shape)
    print(f"[spectral] theta k={k} nv={nv} iota={iota} eps={list(used)}")
    return ThetaField(
        k=k,
        schedule=used,
        iota=iota,
        u=u,
        w=v,
        slices=stacked,
        psi_v=psi_v,
        values=theta,
        xi=xi,
        eta=eta,
        transform=transform,
        order=order,
        error_estimates=errors,
    )


def y_slices_for_theta(
    k: int,
    cmap: CoordinateMap,
    omega0: Callable[[np.ndarray], np.ndarray],
    *,
    nv: int,
    schedule: Sequence[float],
    n: int = 2048,
) -> dict[tuple[float, int], list[EigenfunctionSlice]]:
    """y-grid slices at ``y0 = binv(w_j)`` for every node of the w-grid."""
    profile = cmap.profile
    system = _SliceSystem.build(profile, k, omega0, n)
    y0s = np.asarray(cmap.binv(v_grid(cmap, nv)))
    return {
        (eps, iota): [
            solve_eigenfunction(k, float(y0), eps, iota, omega0, profile, n=n, system=system) for y0 in y0s
        ]
        for eps in schedule
        for iota in (1, -1)
    }


@dataclass(frozen=True, eq=False)
class ThetaStream:
    t: float
    v: np.ndarray
    values: np.ndarray
    alpha: np.ndarray
    direct: np.ndarray
    predicted: np.ndarray

    @property
    def identity_error(self) -> float:
        scale = max(float(np.max(np.abs(self.direct))), 1e-300)
        return float(np.max(np.abs(self.direct - self.predicted))) / scale


def theta_stream(theta: ThetaField, t: float, *, frequencies: int = 129, band: float = 0.25) -> ThetaStream:
    """``Psi phi_k(t, v) exp(-i k t v)`` from ``Theta_k``, with its transform checked against
    ``C Theta~(alpha, alpha + k t)`` by direct sums at off-grid frequencies."""
    h = theta.h
    w = theta.w
    weights = h * np.exp(-1j * theta.k * w * t)
    values = STREAM_CONSTANT * (weights[:, None] * theta.slices * theta.psi_v[None, :] * theta.psi_v[:, None]).sum(axis=0)
    limit = band * theta.nyquist
    alpha = np.linspace(-limit, limit, frequencies)
    direct = (h * np.exp(-1j * np.outer(alpha, w))) @ values
    row_phase = np.exp(-1j * np.outer(alpha, theta.u))
    col_phase = np.exp(-1j * np.outer(alpha + theta.k * t, w))
    theta_hat = h * h * np.sum((row_phase @ theta.values) * col_phase, axis=1)
    return ThetaStream(t=t, v=w, values=values, alpha=alpha, direct=direct, predicted=STREAM_CONSTANT * theta_hat)


def data_spectrum(
    k: int, omega0: Callable[[np.ndarray], np.ndarray], cmap: CoordinateMap, nv: int
) -> SpectralField:
    v = v_grid(cmap, nv)
    f0 = np.asarray(omega0(np.asarray(cmap.binv(v))), dtype=complex)
    size = 4 * (1 << int(math.ceil(math.log2(v.size))))
    xi, spectrum = fourier_transform(f0, float(v[0]), float(v[1] - v[0]), size)
    return SpectralField(ks=(k,), xi=xi, values=spectrum[None, :])


def _theta_ratios(
    theta: ThetaField, w: GevreyWeight, denominator: float, guard: float, floor: float
) -> tuple[float, float, float, int]:
    band = guard * theta.nyquist
    xi = theta.xi[:, None]
    eta = theta.eta[None, :]
    inside = (np.abs(xi) <= band) & (np.abs(eta) <= band)
    magnitude = np.abs(theta.transform)
    top = float(np.max(magnitude))
    resolved = inside & (magnitude > floor * top)
    noisy = int(np.count_nonzero(inside & ~resolved & (magnitude > 0)))
    k = abs(theta.k)
    with np.errstate(divide="ignore"):
        log_amp = np.log(k + np.abs(xi)) + np.asarray(log_weight(w, k, eta)) + np.log(magnitude)
    log_amp = np.where(resolved, log_amp, -np.inf)
    peak = float(np.max(log_amp))
    mass = np.exp(2.0 * (log_amp - peak))
    cell = float((theta.xi[1] - theta.xi[0]) * (theta.eta[1] - theta.eta[0]))
    total = float(np.sum(mass)) * cell
    tail_mask = np.abs(eta) >= 0.9 * band
    tail = float(np.sum(np.where(tail_mask, mass, 0.0))) * cell / total
    log_s2 = peak + 0.5 * math.log(total)
    log_s3 = float(np.max(np.where(resolved, log_amp + np.log(k + np.abs(xi)), -np.inf)))
    log_den = math.log(denominator)
    return math.exp(log_s2 - log_den), math.exp(log_s3 - log_den), tail, noisy


def verify_theta_gevrey(
    theta: ThetaField,
    w: GevreyWeight,
    f0: SpectralField,
    *,
    guard: float = 0.4,
    refined: ThetaField | None = None,
    floor: float = 1e-13,
    tail_limit: float = 1e-3,
    cap: float = BOUND_CAP,
    tolerance: float = 0.2,
) -> BoundReport:
    """Weighted L2 and sup bounds of ``Theta~`` relative to the weighted norm of the data."""
    subject = f"theta_k{theta.k}"
    notes: list[str] = []
    top = float(np.max(np.abs(theta.transform)))
    band = guard * float(np.max(np.abs(f0.xi)))
    keep = np.abs(f0.xi) <= band
    banded = SpectralField(ks=f0.ks, xi=f0.xi[keep], values=f0.values[:, keep])
    try:
        denominator = gevrey_norm(banded, w)
    except GevreyResolutionError as exc:
        notes.append(f"data norm diverged: {exc}")
        return BoundReport(subject=subject, ratios={}, constant=math.inf, cap=cap, passed=False, notes=tuple(notes))
    if top == 0.0 and denominator == 0.0:
        notes.append("zero data: ratios are 0/0 and pass vacuously")
        return BoundReport(subject=subject, ratios={"S2": 0.0, "S3": 0.0}, constant=0.0, cap=cap, passed=True,
                           notes=tuple(notes))
    if denominator == 0.0:
        notes.append("nonzero transform against zero data")
        return BoundReport(subject=subject, ratios={}, constant=math.inf, cap=cap, passed=False, notes=tuple(notes))
    s2, s3, tail, noisy = _theta_ratios(theta, w, denominator, guard, floor)
    ratios = {"S2": s2, "S3": s3}
    passed = True
    if noisy:
        notes.append(f"{noisy} coefficients below the noise floor were excluded")
    if tail > tail_limit:
        notes.append(f"weighted tail fraction {tail:.3e} exceeds {tail_limit:g}: weight too strong for the data")
        passed = False
    if refined is not None:
        r2, r3, _, _ = _theta_ratios(refined, w, denominator, guard, floor)
        ratios.update({"S2_refined": r2, "S3_refined": r3})
        for base, fine in ((s2, r2), (s3, r3)):
            if abs(fine - base) > tolerance * max(abs(base), abs(fine)):
                notes.append(f"ratio unstable under refinement ({base:.4g} vs {fine:.4g})")
                passed = False
    constant = max(ratios.values())
    passed = passed and constant <= cap
    print(f"[spectral] theta bound k={theta.k} S2={s2:.4g} S3={s3:.4g} tail={tail:.2e} pass={passed}")
    return BoundReport(subject=subject, ratios=ratios, constant=constant, cap=cap, passed=passed, notes=tuple(notes))
