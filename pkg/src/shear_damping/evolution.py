"""Time-domain solver for the linearized mode equation

    d_t omega_k = -i k b(y) omega_k + i k b''(y) psi_k,   (k^2 - d_y^2) psi_k = -omega_k,

plus the diagnostics read off its trajectories: Orr decay exponents, the
pullback to sheared coordinates, Gevrey norms in time and the scattering fit.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.optimize import curve_fit

from .gevrey import (
    GevreyResolutionError,
    GevreyWeight,
    SpectralField,
    cutoff_psi,
    fourier_transform,
    gevrey_norm,
)
from .profiles import CUTOFF_SHARPNESS, CoordinateMap, ShearProfile, build_map, plateau_cutoff

CFL_LIMIT = 0.5
AUTO_CFL = 0.1
STREAM_RESIDUAL_TOL = 1e-8
PULLBACK_TOL = 1e-8
SUPPORT_TOL = 1e-12
FIT_T_MIN = 5.0
SNAPSHOT_MAGIC = b"SDSNAP01"
ENDIAN_TAG = 0x01020304


class CFLViolationError(ValueError):
    pass


class ResolutionError(RuntimeError):
    pass


class SupportError(ValueError):
    pass


class StreamSolveError(RuntimeError):
    pass


def wall_grid(n: int) -> np.ndarray:
    if n < 16:
        raise ValueError(f"wall-normal grid needs n >= 16 intervals, got {n}")
    return np.arange(n + 1) / n


@dataclass(frozen=True, eq=False)
class ModeField:
    k: int
    omega: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.k == 0:
            raise ValueError("the zero mode is not evolved")

    @property
    def n(self) -> int:
        return self.omega.size - 1


@dataclass(frozen=True, eq=False)
class Snapshot:
    t: float
    omega: np.ndarray
    psi: np.ndarray
    ux: np.ndarray
    uy: np.ndarray


@dataclass(frozen=True, eq=False)
class Trajectory:
    k: int
    profile: ShearProfile
    map: CoordinateMap
    snapshots: tuple[Snapshot, ...]
    dt: float
    n: int
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def grid(self) -> np.ndarray:
        return wall_grid(self.n)

    @property
    def times(self) -> np.ndarray:
        return np.array([snap.t for snap in self.snapshots])

    def norms(self) -> dict[str, np.ndarray]:
        """L2 norms in ``y`` of every snapshot quantity."""
        y = self.grid

        def l2(values: np.ndarray) -> float:
            return math.sqrt(float(trapezoid(np.abs(values) ** 2, y)))

        return {
            "omega": np.array([l2(s.omega) for s in self.snapshots]),
            "psi": np.array([l2(s.psi) for s in self.snapshots]),
            "ux": np.array([l2(s.ux) for s in self.snapshots]),
            "uy": np.array([l2(s.uy) for s in self.snapshots]),
        }


# ---------------------------------------------------------------------------
# Elliptic solve


def _stream_matrix(k: int, n: int) -> np.ndarray:
    h2 = 1.0 / n**2
    ab = np.empty((3, n - 1))
    ab[0, :] = -1.0 / h2
    ab[1, :] = k * k + 2.0 / h2
    ab[2, :] = -1.0 / h2
    return ab


def _apply_stream_operator(k: int, psi: np.ndarray, n: int) -> np.ndarray:
    out = (k * k + 2.0 * n**2) * psi[1:-1] - n**2 * (psi[:-2] + psi[2:])
    return out


def solve_stream(k: int, omega: ModeField | np.ndarray, *, banded: np.ndarray | None = None) -> np.ndarray:
    """Second-order solve of ``(k^2 - D^2) psi = -omega`` with ``psi(0) = psi(1) = 0``."""
    if k == 0:
        raise ValueError("the stream solve needs k != 0")
    values = omega.omega if isinstance(omega, ModeField) else np.asarray(omega)
    n = values.size - 1
    scale = float(np.max(np.abs(values), initial=0.0))
    psi = np.zeros(n + 1, dtype=complex)
    if scale == 0.0:
        return psi
    ab = _stream_matrix(k, n) if banded is None else banded
    psi[1:-1] = solve_banded((1, 1), ab, -values[1:-1], check_finite=False)
    residual = float(np.max(np.abs(_apply_stream_operator(k, psi, n) + values[1:-1])))
    if not math.isfinite(residual) or residual > STREAM_RESIDUAL_TOL * scale:
        raise StreamSolveError(
            f"stream residual {residual:.3e} exceeds {STREAM_RESIDUAL_TOL:g} * |omega| for k={k}, n={n}"
        )
    return psi


def velocities(k: int, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(u^x, u^y) = (-d_y psi, i k psi)``."""
    h = 1.0 / (psi.size - 1)
    return -np.gradient(psi, h, edge_order=2), 1j * k * psi


# ---------------------------------------------------------------------------
# Time stepping


@dataclass(frozen=True, eq=False)
class ModeOperator:
    """Grid samples of ``b`` and ``b''`` plus the banded stream matrix for one mode."""

    k: int
    n: int
    b: np.ndarray
    b2: np.ndarray
    banded: np.ndarray

    @property
    def max_speed(self) -> float:
        return float(np.max(np.abs(self.b)))

    @property
    def coupled(self) -> bool:
        return bool(np.any(self.b2 != 0.0))

    def rhs(self, omega: np.ndarray) -> np.ndarray:
        out = -1j * self.k * self.b * omega
        if self.coupled:
            psi = solve_stream(self.k, omega, banded=self.banded)
            out = out + 1j * self.k * self.b2 * psi
        return out


def mode_operator(profile: ShearProfile, k: int, n: int) -> ModeOperator:
    if k == 0:
        raise ValueError("the zero mode is not evolved")
    y = wall_grid(n)
    return ModeOperator(
        k=k,
        n=n,
        b=np.asarray(profile.b(y)),
        b2=np.asarray(profile.b2(y)),
        banded=_stream_matrix(k, n),
    )


def check_cfl(op: ModeOperator, dt: float) -> None:
    number = dt * abs(op.k) * op.max_speed
    if dt <= 0 or number > CFL_LIMIT:
        raise CFLViolationError(f"dt*|k|*max|b| = {number:.4g} exceeds {CFL_LIMIT} (dt={dt:g}, k={op.k})")


def step_mode(state: ModeField, dt: float, op: ModeOperator) -> ModeField:
    """One classical RK4 step; the stream function is re-solved at every stage."""
    check_cfl(op, dt)
    w = state.omega
    k1 = op.rhs(w)
    k2 = op.rhs(w + 0.5 * dt * k1)
    k3 = op.rhs(w + 0.5 * dt * k2)
    k4 = op.rhs(w + dt * k3)
    omega = w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    omega[0] = omega[-1] = 0.0
    return ModeField(k=state.k, omega=omega, time=state.time + dt)


def max_time(profile: ShearProfile, k: int, n: int) -> float:
    """Largest horizon at which ``exp(-i k t b)`` keeps 16 points per wavelength."""
    slope = float(np.max(np.abs(profile.b1(wall_grid(n)))))
    return 2.0 * math.pi * n / (16.0 * abs(k) * slope)


def _schedule(T: float, snap_every: float, dt: float | None, op: ModeOperator) -> tuple[float, int, int]:
    if T < 0:
        raise ValueError(f"T must be non-negative, got {T}")
    if T == 0:
        return (dt or AUTO_CFL / (abs(op.k) * op.max_speed)), 0, 0
    if snap_every <= 0:
        raise ValueError(f"snap_every must be positive, got {snap_every}")
    snaps = T / snap_every
    if abs(snaps - round(snaps)) > 1e-9 * max(1.0, snaps):
        raise ValueError(f"T={T} is not a multiple of snap_every={snap_every}")
    if dt is None:
        auto = AUTO_CFL / (abs(op.k) * op.max_speed)
        per_snap = max(1, math.ceil(snap_every / auto - 1e-12))
    else:
        ratio = snap_every / dt
        per_snap = int(round(ratio))
        if per_snap < 1 or abs(ratio - per_snap) > 1e-9 * ratio:
            raise ValueError(f"snap_every={snap_every} is not a multiple of dt={dt}")
    return snap_every / per_snap, int(round(snaps)), per_snap


def check_support(profile: ShearProfile, y: np.ndarray, omega0: np.ndarray) -> None:
    outside = (y < profile.theta1) | (y > 1.0 - profile.theta1)
    scale = float(np.max(np.abs(omega0), initial=0.0))
    leak = float(np.max(np.abs(omega0[outside]), initial=0.0))
    if leak > SUPPORT_TOL * max(scale, 1e-300):
        raise SupportError(
            f"initial vorticity reaches {leak:.3e} outside [{profile.theta1}, {1 - profile.theta1}]"
        )


def _snapshot(op: ModeOperator, state: ModeField) -> Snapshot:
    psi = solve_stream(op.k, state.omega, banded=op.banded)
    ux, uy = velocities(op.k, psi)
    return Snapshot(t=state.time, omega=state.omega.copy(), psi=psi, ux=ux, uy=uy)


InitialData = Callable[[np.ndarray], np.ndarray]


def evolve_mode(
    profile: ShearProfile,
    omega0: InitialData | np.ndarray,
    k: int,
    T: float,
    *,
    dt: float | None = None,
    snap_every: float = 1.0,
    n: int = 1024,
    cmap: CoordinateMap | None = None,
) -> Trajectory:
    op = mode_operator(profile, k, n)
    y = wall_grid(n)
    values = np.asarray(omega0(y) if callable(omega0) else omega0, dtype=complex)
    if values.shape != y.shape:
        raise ValueError(f"initial data has shape {values.shape}, expected {y.shape}")
    check_support(profile, y, values)
    cap = max_time(profile, k, n)
    if T > cap:
        raise ResolutionError(f"T={T} exceeds the resolvable horizon {cap:.4g} for k={k}, n={n}")
    step, snaps, per_snap = _schedule(T, snap_every, dt, op)
    check_cfl(op, step)
    state = ModeField(k=k, omega=values.copy(), time=0.0)
    snapshots = [_snapshot(op, state)]
    for j in range(1, snaps + 1):
        for _ in range(per_snap):
            state = step_mode(state, step, op)
        state = ModeField(k=k, omega=state.omega, time=j * snap_every)
        snapshots.append(_snapshot(op, state))
    energy = [float(np.sqrt(trapezoid(np.abs(s.omega) ** 2, y))) for s in snapshots]
    drift = max(abs(e / energy[0] - 1.0) for e in energy) if energy[0] > 0 else 0.0
    print(f"[evolve] k={k} n={n} dt={step:.4g} snapshots={len(snapshots)} l2_drift={drift:.3e}")
    return Trajectory(
        k=k,
        profile=profile,
        map=cmap or build_map(profile),
        snapshots=tuple(snapshots),
        dt=step,
        n=n,
        metadata={"cfl": step * abs(k) * op.max_speed, "l2_drift": drift, "steps": snaps * per_snap},
    )


def evolve(
    profile: ShearProfile,
    omega0: InitialData | Mapping[int, InitialData] | np.ndarray,
    kset: Iterable[int],
    T: float,
    dt: float | None = None,
    snap_every: float = 1.0,
    *,
    n: int = 1024,
    jobs: int = 1,
) -> dict[int, Trajectory]:
    """Evolve every mode in ``kset``; modes are independent and run in a thread pool."""
    ks = [int(k) for k in kset]
    if not ks or 0 in ks:
        raise ValueError(f"kset must be non-empty and exclude 0, got {ks}")
    cmap = build_map(profile)

    def run(k: int) -> Trajectory:
        data = omega0[k] if isinstance(omega0, Mapping) else omega0
        return evolve_mode(profile, data, k, T, dt=dt, snap_every=snap_every, n=n, cmap=cmap)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        trajectories = list(pool.map(run, ks))
    return dict(zip(ks, trajectories))


# ---------------------------------------------------------------------------
# Initial data


def gevrey_bump(profile: ShearProfile, *, a: float = 2.0, margin: float = 0.05, sharpness: float = 1.0):
    """``psi_a`` stretched over ``[theta1 + margin, 1 - theta1 - margin]``."""
    lo = profile.theta1 + margin
    hi = 1.0 - profile.theta1 - margin
    if hi <= lo:
        raise ValueError(f"margin {margin} leaves no room inside the support collar")

    def omega0(y: np.ndarray) -> np.ndarray:
        return np.asarray(cutoff_psi(a, (np.asarray(y) - lo) / (hi - lo), sharpness), dtype=complex)

    return omega0


def gaussian_bump(profile: ShearProfile, *, center: float = 0.5, width: float = 0.1, a: float = 3.0):
    """Gaussian times a plateau cutoff whose support is ``[theta1, 1 - theta1]``."""

    def omega0(y: np.ndarray) -> np.ndarray:
        arr = np.asarray(y, dtype=float)
        envelope = np.exp(-0.5 * ((arr - center) / width) ** 2)
        return (envelope * plateau_cutoff(arr, 3.0 * profile.theta1, a, CUTOFF_SHARPNESS)).astype(complex)

    return omega0


def initial_data(profile: ShearProfile, spec: Mapping[str, Any]) -> InitialData:
    kind = str(spec.get("kind", "gevrey_bump"))
    if kind == "gevrey_bump":
        return gevrey_bump(profile, a=float(spec.get("a", 2.0)), margin=float(spec.get("margin", 0.05)))
    if kind == "gaussian":
        return gaussian_bump(
            profile,
            center=float(spec.get("center", 0.5)),
            width=float(spec.get("width", 0.1)),
            a=float(spec.get("a", 3.0)),
        )
    raise ValueError(f"unknown initial data kind: {kind}")


# ---------------------------------------------------------------------------
# Pullback to (z, v)


@dataclass(frozen=True, eq=False)
class PullbackSeries:
    """``f_k(t, v)`` on a uniform v-grid and its transform ``f~(t, k, xi)``."""

    k: int
    times: np.ndarray
    v: np.ndarray
    f_v: np.ndarray
    xi: np.ndarray
    values: np.ndarray

    def at(self, index: int) -> SpectralField:
        return SpectralField(ks=(self.k,), xi=self.xi, values=self.values[index][None, :])


def _resample(y: np.ndarray, values: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, float]:
    fine = CubicSpline(y, values.real)(targets) + 1j * CubicSpline(y, values.imag)(targets)
    coarse = CubicSpline(y[::2], values.real[::2])(targets) + 1j * CubicSpline(y[::2], values.imag[::2])(targets)
    return fine, float(np.max(np.abs(fine - coarse))) / 15.0


def pullback(
    traj: Trajectory,
    cmap: CoordinateMap | None = None,
    *,
    pad: int = 4,
    tol: float = PULLBACK_TOL,
) -> PullbackSeries:
    cmap = cmap or traj.map
    if cmap.profile is not traj.profile and cmap.profile.descriptor() != traj.profile.descriptor():
        raise ValueError("trajectory and coordinate map come from different profiles")
    y = traj.grid
    b = np.asarray(traj.profile.b(y))
    v = np.linspace(cmap.v_lo, cmap.v_hi, traj.n + 1)
    targets = np.asarray(cmap.binv(v))
    rows = []
    scale = max(float(np.max(np.abs(traj.snapshots[0].omega))), 1e-300)
    for snap in traj.snapshots:
        f_y = snap.omega * np.exp(1j * traj.k * snap.t * b)
        f_v, error = _resample(y, f_y, targets)
        if error > tol * scale:
            raise ResolutionError(
                f"pullback interpolation error {error / scale:.3e} exceeds {tol:g} at t={snap.t:g}; refine n"
            )
        rows.append(f_v)
    f_v = np.array(rows)
    size = pad * (1 << int(math.ceil(math.log2(v.size))))
    xi, spectrum = fourier_transform(f_v, float(v[0]), float(v[1] - v[0]), size)
    return PullbackSeries(k=traj.k, times=traj.times, v=v, f_v=f_v, xi=xi, values=spectrum)


def _stack(series: Sequence[PullbackSeries], index: int, band: float) -> SpectralField:
    xi = series[0].xi
    keep = np.abs(xi) <= band * float(np.max(np.abs(xi)))
    values = np.array([item.values[index][keep] for item in series])
    return SpectralField(ks=tuple(item.k for item in series), xi=xi[keep], values=values)


def _check_series(series: Sequence[PullbackSeries]) -> None:
    if not series:
        raise ValueError("no pullback data")
    first = series[0]
    for item in series[1:]:
        if item.xi.shape != first.xi.shape or not np.array_equal(item.times, first.times):
            raise ValueError("pullback series are on different grids")


@dataclass(frozen=True, eq=False)
class NormHistory:
    times: np.ndarray
    values: np.ndarray
    max_ratio: float
    first_bad: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "first_bad": self.first_bad,
            "max_ratio": self.max_ratio,
            "times": self.times.tolist(),
            "values": [None if not math.isfinite(v) else float(v) for v in self.values],
        }


def gevrey_norm_history(
    series: PullbackSeries | Sequence[PullbackSeries],
    w: GevreyWeight,
    *,
    band: float = 0.5,
) -> NormHistory:
    """Weighted norm summed over modes at every snapshot, on the inner ``band`` of frequencies."""
    series = [series] if isinstance(series, PullbackSeries) else list(series)
    _check_series(series)
    times = series[0].times
    values = np.full(times.size, np.nan)
    first_bad = None
    for i in range(times.size):
        try:
            values[i] = gevrey_norm(_stack(series, i, band), w)
        except GevreyResolutionError as exc:
            first_bad = float(times[i])
            print(f"[evolve] norm history unresolved at t={first_bad:g}: {exc}")
            break
    good = values[np.isfinite(values)]
    if good.size and good[0] > 0:
        max_ratio = float(np.max(good / good[0]))
    else:
        max_ratio = float("nan")
    return NormHistory(times=times, values=values, max_ratio=max_ratio, first_bad=first_bad)


# ---------------------------------------------------------------------------
# Scattering and Orr exponents


@dataclass(frozen=True, eq=False)
class ScatteringFit:
    f_inf: SpectralField
    times: np.ndarray
    residuals: np.ndarray
    rate: float | None
    naive_rate: float | None
    constant: float | None
    bias: float | None
    reliable: bool
    skipped: bool
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "bias": self.bias,
            "constant": self.constant,
            "naive_rate": self.naive_rate,
            "notes": list(self.notes),
            "rate": self.rate,
            "reliable": self.reliable,
            "skipped": self.skipped,
        }


def _require_late_snapshots(times: np.ndarray) -> None:
    late = int(np.sum(times >= FIT_T_MIN))
    if late < 8:
        raise ValueError(f"fits need at least 8 snapshots with t >= {FIT_T_MIN:g}, got {late}")


def scattering_fit(
    series: PullbackSeries | Sequence[PullbackSeries],
    w_prime: GevreyWeight,
    *,
    window: tuple[float, float] = (1.0 / 8.0, 1.0 / 2.0),
    band: float = 0.5,
    floor: float = 1e-8,
) -> ScatteringFit:
    """Fit ``|f~(t) - f~(T)|`` against ``C (t^p - T^p)``; ``f(T)`` stands in for ``f_inf``."""
    series = [series] if isinstance(series, PullbackSeries) else list(series)
    _check_series(series)
    times = series[0].times
    _require_late_snapshots(times)
    last = times.size - 1
    T = float(times[last])
    f_inf = _stack(series, last, band)
    reference = gevrey_norm(f_inf, w_prime)
    residuals = np.array([gevrey_norm(_stack(series, i, band).minus(f_inf), w_prime) for i in range(times.size)])
    if float(np.max(residuals)) <= floor * max(reference, 1e-300):
        print(f"[evolve] scattering residuals at solver floor (max={float(np.max(residuals)):.3e})")
        return ScatteringFit(
            f_inf=f_inf,
            times=times,
            residuals=residuals,
            rate=None,
            naive_rate=None,
            constant=None,
            bias=None,
            reliable=True,
            skipped=True,
            notes=("residuals at solver floor; fit skipped",),
        )
    mask = (times >= window[0] * T) & (times <= window[1] * T) & (residuals > 0)
    t_fit = times[mask]
    r_fit = residuals[mask]
    notes: list[str] = []
    if t_fit.size < 4:
        raise ValueError(f"scattering window [{window[0] * T:g}, {window[1] * T:g}] holds {t_fit.size} snapshots")
    reliable = bool(np.all(np.diff(r_fit) <= 0))
    if not reliable:
        notes.append("residual curve is not monotone in the fit window")
    naive = float(np.polyfit(np.log(t_fit), np.log(r_fit), 1)[0])

    def model(t: np.ndarray, c: float, p: float) -> np.ndarray:
        return c * (np.power(t, p) - T**p)

    try:
        (c, p), _ = curve_fit(model, t_fit, r_fit, p0=(float(r_fit[0] * t_fit[0]), -1.0), maxfev=20000)
        rate, constant = float(p), float(c)
        bias = constant * T**rate
    except (RuntimeError, ValueError) as exc:
        notes.append(f"finite-horizon fit failed: {exc}")
        rate, constant, bias, reliable = naive, None, None, False
    print(f"[evolve] scattering T={T:g} rate={rate:.4g} naive={naive:.4g} reliable={reliable}")
    return ScatteringFit(
        f_inf=f_inf,
        times=times,
        residuals=residuals,
        rate=rate,
        naive_rate=naive,
        constant=constant,
        bias=bias,
        reliable=reliable,
        skipped=False,
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class OrrExponents:
    psi: float
    ux: float
    uy: float
    window: tuple[float, float]

    def to_dict(self) -> dict[str, Any]:
        return {"psi": self.psi, "ux": self.ux, "uy": self.uy, "window": list(self.window)}


def orr_exponents(traj: Trajectory, *, t_min: float | None = None) -> OrrExponents:
    """Least-squares slopes of the log-norms against ``log t`` over ``t >= max(5, T/5)``."""
    times = traj.times
    _require_late_snapshots(times)
    start = t_min if t_min is not None else max(FIT_T_MIN, float(times[-1]) / 5.0)
    mask = times >= start
    if int(np.sum(mask)) < 8:
        raise ValueError(f"only {int(np.sum(mask))} snapshots with t >= {start:g}")
    norms = traj.norms()
    log_t = np.log(times[mask])
    slopes = {
        name: float(np.polyfit(log_t, np.log(np.maximum(norms[name][mask], 1e-300)), 1)[0])
        for name in ("psi", "ux", "uy")
    }
    print(f"[evolve] orr k={traj.k} psi={slopes['psi']:.4g} ux={slopes['ux']:.4g} uy={slopes['uy']:.4g}")
    return OrrExponents(window=(start, float(times[-1])), **slopes)


# ---------------------------------------------------------------------------
# Binary snapshot dump
#
# Layout (little-endian): 8-byte magic, uint32 endian tag 0x01020304, then per
# snapshot: int64 k, int64 n (complex values), float64 t, 2n float64 re/im pairs.


def write_snapshots(path: Path, trajectories: Iterable[Trajectory]) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("wb") as handle:
        handle.write(SNAPSHOT_MAGIC)
        handle.write(np.array([ENDIAN_TAG], dtype="<u4").tobytes())
        for traj in trajectories:
            for snap in traj.snapshots:
                handle.write(np.array([traj.k, snap.omega.size], dtype="<i8").tobytes())
                handle.write(np.array([snap.t], dtype="<f8").tobytes())
                pairs = np.empty(2 * snap.omega.size, dtype="<f8")
                pairs[0::2] = snap.omega.real
                pairs[1::2] = snap.omega.imag
                handle.write(pairs.tobytes())
                count += 1
    return count


def read_snapshots(path: Path) -> list[tuple[int, float, np.ndarray]]:
    data = path.read_bytes()
    if data[:8] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not a snapshot dump")
    tag = int(np.frombuffer(data, dtype="<u4", count=1, offset=8)[0])
    if tag != ENDIAN_TAG:
        raise ValueError(f"{path} has unexpected endian tag {tag:#x}")
    offset = 12
    records: list[tuple[int, float, np.ndarray]] = []
    while offset < len(data):
        k, n = (int(x) for x in np.frombuffer(data, dtype="<i8", count=2, offset=offset))
        t = float(np.frombuffer(data, dtype="<f8", count=1, offset=offset + 16)[0])
        pairs = np.frombuffer(data, dtype="<f8", count=2 * n, offset=offset + 24)
        records.append((k, t, pairs[0::2] + 1j * pairs[1::2]))
        offset += 24 + 16 * n
    return records
