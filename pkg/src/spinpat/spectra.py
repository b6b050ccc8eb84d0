"""Simulated lock-in PAT spectra, Lorentzian peak localization and the
time-averaged relaxation observable."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
import logging
import math
import os

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from .dissipation import PhononBath, build_superoperator, dipole_matrix, steady_state, transition_rates
from .errors import FitFailure, SpinPatError, ValidationError
from .hamiltonian import DeviceParams, solve
from .rwa import DriveParams, rotating_frame

log = logging.getLogger(__name__)

# Parameters used for the simulated 11 and 20 GHz spectra.
REFERENCE_DEVICE = DeviceParams(g_abs=0.382, t_c=8.7, t_so_y=0.435, t_so_z=0.0, b0=0.109,
                               dBx_perp=-0.006, dBy_perp=0.0, dB_par=0.006)


def s02_population(device, B, epsilon, drive, bath):
    es = solve(device, B, epsilon)
    rates = transition_rates(es, bath)
    rho = steady_state(build_superoperator(rotating_frame(es, drive), rates)).rho
    return float(np.real(np.trace(dipole_matrix(es) @ rho)))


def lockin_delta_n(device: DeviceParams, B, epsilon, drive: DriveParams, bath: PhononBath) -> float:
    """P_S02(drive off) - P_S02(drive on); positive means more (1,1) occupation."""
    es = solve(device, B, epsilon)
    rates = transition_rates(es, bath)
    d = dipole_matrix(es)
    pops = []
    for omega in (0.0, drive.omega):
        model = rotating_frame(es, drive.replace(omega=omega))
        rho = steady_state(build_superoperator(model, rates)).rho
        pops.append(float(np.real(np.trace(d @ rho))))
    return pops[0] - pops[1]


@dataclass(frozen=True)
class ScanSpec:
    """A detuning scan against either the external field or the drive amplitude."""

    epsilon_range: tuple = (-60.0, 150.0, 150)  # (min, max, count) in ueV
    axis: str = "B"  # "B" or "omega"
    axis_range: tuple = (0.0, 3.0, 100)  # (min, max, count) in T or ueV
    fixed_B: float = 2.0  # T, used for omega scans
    drive: DriveParams = field(default_factory=DriveParams)
    bath: PhononBath = field(default_factory=PhononBath)
    device: DeviceParams = REFERENCE_DEVICE

    def __post_init__(self):
        if self.axis not in ("B", "omega"):
            raise ValidationError(f"unknown scan axis {self.axis!r}")
        for name in ("epsilon_range", "axis_range"):
            lo, hi, n = getattr(self, name)
            if int(n) < 2:
                raise ValidationError(f"{name} needs at least 2 points")
            if not hi > lo:
                raise ValidationError(f"{name} must be increasing")
        if self.axis == "omega" and self.axis_range[0] < 0:
            raise ValidationError("drive amplitudes must be non-negative")

    @property
    def epsilon(self):
        lo, hi, n = self.epsilon_range
        return np.linspace(lo, hi, int(n))

    @property
    def axis_values(self):
        lo, hi, n = self.axis_range
        return np.linspace(lo, hi, int(n))


@dataclass
class SpectrumGrid:
    delta_n: np.ndarray  # (n_axis, n_epsilon); NaN where a point failed
    epsilon: np.ndarray
    axis_values: np.ndarray
    axis: str
    metadata: dict
    failures: list = field(default_factory=list)  # (axis index, epsilon index, message)

    def row(self, i):
        return self.delta_n[i]


def _scan_row(args):
    spec, i = args
    eps = spec.epsilon
    value = spec.axis_values[i]
    if spec.axis == "B":
        B, drive = value, spec.drive
    else:
        B, drive = spec.fixed_B, spec.drive.replace(omega=value)
    row = np.empty(eps.size)
    failures = []
    for j, e in enumerate(eps):
        try:
            row[j] = lockin_delta_n(spec.device, B, e, drive, spec.bath)
        except SpinPatError as exc:
            row[j] = np.nan
            failures.append((i, j, str(exc)))
    return i, row, failures


def resolve_threads(threads):
    if threads in (None, 0, "auto"):
        return os.cpu_count() or 1
    return max(1, int(threads))


def scan_spectrum(spec: ScanSpec, threads=1) -> SpectrumGrid:
    """Evaluate the lock-in signal on the scan grid.

    Rows are computed independently and reassembled by index, so the result
    does not depend on the number of workers.
    """
    n_axis = int(spec.axis_range[2])
    delta_n = np.empty((n_axis, int(spec.epsilon_range[2])))
    failures = []
    jobs = [(spec, i) for i in range(n_axis)]
    threads = resolve_threads(threads)
    if threads == 1:
        results = map(_scan_row, jobs)
    else:
        pool = ProcessPoolExecutor(max_workers=threads)
        results = pool.map(_scan_row, jobs, chunksize=max(1, n_axis // (4 * threads)))
    for i, row, fails in results:
        delta_n[i] = row
        failures.extend(fails)
    if threads != 1:
        pool.shutdown()
    failures.sort()
    for i, j, msg in failures:
        log.warning("point (%d, %d) masked: %s", i, j, msg)
    return SpectrumGrid(delta_n, spec.epsilon, spec.axis_values, spec.axis, scan_metadata(spec), failures)


def scan_metadata(spec: ScanSpec) -> dict:
    return {
        "epsilon_range": list(spec.epsilon_range),
        "axis": spec.axis,
        "axis_range": list(spec.axis_range),
        "fixed_B": spec.fixed_B,
        "drive": asdict(spec.drive),
        "bath": asdict(spec.bath),
        "device": asdict(spec.device),
    }


# --- peak localization -------------------------------------------------------

@dataclass(frozen=True)
class Peak:
    axis: float
    center: float
    sign: int
    height: float
    width: float  # FWHM, same units as center

    @property
    def area(self):
        return math.pi * self.height * self.width / 2.0


def lorentzian(x, center, height, fwhm):
    hw = 0.5 * fwhm
    return height * hw * hw / ((x - center) ** 2 + hw * hw)


def multi_lorentzian(x, params):
    y = np.zeros_like(x, dtype=float)
    for c, h, w in np.reshape(params, (-1, 3)):
        y += lorentzian(x, c, h, w)
    return y


def noise_level(y):
    """Robust noise estimate from first differences (MAD scaled to sigma)."""
    d = np.diff(y)
    if d.size == 0:
        return 0.0
    return 1.4826 * np.median(np.abs(d - np.median(d))) / math.sqrt(2.0)


def fit_lorentzians(x, y, max_peaks=6, threshold=None, min_height=1e-6):
    """Detect and fit a signed sum of Lorentzians.

    Returns an array of (center, height, fwhm) rows sorted by center.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    good = np.isfinite(y)
    x, y = x[good], y[good]
    if x.size < 8:
        raise ValidationError("peak fitting needs at least 8 samples")
    sigma = noise_level(y)
    if threshold is None:
        threshold = max(5.0 * sigma, min_height)
    dx = float(np.median(np.diff(x)))

    candidates = []
    for sign in (1, -1):
        idx, props = find_peaks(sign * y, prominence=threshold, height=threshold)
        for k, p in zip(idx, props["prominences"]):
            candidates.append((p, k, sign))
    if not candidates:
        return np.empty((0, 3))
    candidates.sort(reverse=True)
    candidates = candidates[:max_peaks]

    p0, lo, hi = [], [], []
    span = x[-1] - x[0]
    for _, k, sign in candidates:
        half = np.abs(y[k]) / 2.0
        left = k
        while left > 0 and sign * y[left] > half:
            left -= 1
        right = k
        while right < x.size - 1 and sign * y[right] > half:
            right += 1
        fwhm = max(x[right] - x[left], 2.0 * dx)
        p0 += [x[k], y[k], fwhm]
        lo += [x[0] - 0.1 * span, -np.inf, 0.25 * dx]
        hi += [x[-1] + 0.1 * span, np.inf, span]
    p0 = np.array(p0)

    def resid(p):
        return multi_lorentzian(x, p) - y

    res = least_squares(resid, p0, bounds=(lo, hi), method="trf", x_scale="jac", max_nfev=2000)
    if not res.success:
        raise FitFailure("Lorentzian fit did not converge", float(np.linalg.norm(res.fun)))
    peaks = res.x.reshape(-1, 3)
    return peaks[np.argsort(peaks[:, 0])]


def locate_peaks(grid: SpectrumGrid, axis_row: int, **kwargs) -> list:
    """Lorentzian decomposition of one row of a spectrum grid."""
    row = grid.delta_n[axis_row]
    peaks = fit_lorentzians(grid.epsilon, row, **kwargs)
    value = float(grid.axis_values[axis_row])
    return [Peak(value, float(c), int(np.sign(h)), float(h), float(w)) for c, h, w in peaks]


# --- relaxation observable ---------------------------------------------------

def relaxation_decay_signal(gamma_s, tau):
    """Time-averaged decay (1 - exp(-gamma tau)) / (gamma tau), normalized to 1 at tau -> 0."""
    x = np.asarray(gamma_s, dtype=float) * np.asarray(tau, dtype=float)
    if np.any(np.asarray(tau) <= 0) or np.any(np.asarray(gamma_s) < 0):
        raise ValidationError("need tau > 0 and gamma_s >= 0")
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 - x / 2.0, -np.expm1(-safe) / safe)
    return float(out) if out.ndim == 0 else out


# --- feature tracking ---------------------------------------------------------

@dataclass(frozen=True)
class Track:
    epsilon: np.ndarray
    axis: np.ndarray
    depth: np.ndarray

    @property
    def center(self):
        w = np.abs(self.depth)
        return float(np.sum(w * self.axis) / np.sum(w))

    @property
    def drift(self):
        return float(self.axis.max() - self.axis.min())

    @property
    def extent(self):
        return float(self.epsilon[-1] - self.epsilon[0])


def column_tracks(grid: SpectrumGrid, sign=-1, threshold=1e-3, epsilon_window=None):
    """Follow local extrema of ``sign * delta_n`` along the axis direction, column by column.

    Extrema in neighbouring detuning columns are linked when they are at most
    one axis step apart.
    """
    eps = grid.epsilon
    axis = grid.axis_values
    cols = range(eps.size)
    if epsilon_window is not None:
        cols = [j for j in cols if epsilon_window[0] <= eps[j] <= epsilon_window[1]]
    open_tracks, done = [], []
    for j in cols:
        c = sign * np.nan_to_num(grid.delta_n[:, j], nan=0.0)
        idx, _ = find_peaks(np.concatenate(([-np.inf], c, [-np.inf])), height=threshold)
        idx = idx - 1
        still_open = []
        used = set()
        for tr in open_tracks:
            last = tr[-1][1]
            cand = [k for k in idx if abs(k - last) <= 1 and k not in used]
            if cand:
                k = min(cand, key=lambda k: abs(k - last))
                used.add(k)
                tr.append((j, k))
                still_open.append(tr)
            else:
                done.append(tr)
        for k in idx:
            if k not in used:
                still_open.append([(j, k)])
        open_tracks = still_open
    done.extend(open_tracks)
    tracks = []
    for tr in done:
        js = np.array([p[0] for p in tr])
        ks = np.array([p[1] for p in tr])
        tracks.append(Track(eps[js], axis[ks], grid.delta_n[ks, js]))
    return tracks


def horizontal_features(grid: SpectrumGrid, sign=-1, min_extent=10.0, max_drift_steps=2, **kwargs):
    """Tracks that stay within ``max_drift_steps`` axis steps over at least ``min_extent`` ueV."""
    step = float(np.median(np.diff(grid.axis_values)))
    return [t for t in column_tracks(grid, sign=sign, **kwargs)
            if t.extent >= min_extent and t.drift <= max_drift_steps * step + 1e-12]
