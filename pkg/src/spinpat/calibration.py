"""Detuning-axis calibration of measured PAT spectra.

Every field row carries one reference peak, the ST+ anticrossing shifted by
a detuning pulse.  Rows are aligned on that peak, converted from gate
voltage to energy with the lever arm, and finally sheared from the
reference-relative scale eps* onto the detuning scale eps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.optimize import least_squares

from .constants import MU_B, photon_energy
from .errors import MissingReferenceError, ValidationError
from .hamiltonian import DeviceParams, st_plus_anticrossing_detuning
from .spectra import lorentzian, noise_level

log = logging.getLogger(__name__)

MODES = ("paper_faithful", "exact")


@dataclass(frozen=True)
class LeverArm:
    alpha: float  # ueV per mV

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError("lever arm must be positive")


@dataclass(frozen=True)
class RawRow:
    B: float
    gate_mV: np.ndarray
    signal: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gate_mV, dtype=float)
        s = np.asarray(self.signal, dtype=float)
        if g.shape != s.shape or g.ndim != 1:
            raise ValidationError("gate and signal must be 1-D arrays of equal length")
        if g.size > 1 and not np.all(np.diff(g) > 0):
            raise ValidationError(f"gate offsets of row B={self.B} are not increasing")
        object.__setattr__(self, "gate_mV", g)
        object.__setattr__(self, "signal", s)


@dataclass(frozen=True)
class RawScan:
    rows: tuple
    pulse_amplitude_mV: float

    def __post_init__(self):
        rows = tuple(sorted(self.rows, key=lambda r: r.B))
        fields = [r.B for r in rows]
        if len(set(fields)) != len(fields):
            raise ValidationError("field values of a raw scan must be unique")
        object.__setattr__(self, "rows", rows)


@dataclass
class CalibratedScan:
    B: np.ndarray
    axis: np.ndarray  # ueV, uniform
    signal: np.ndarray  # (n_rows, n_axis); NaN outside a row's measured range
    scale_tag: str  # "epsilon_star" or "epsilon"
    shifts: np.ndarray  # per-row energy added to reach this scale from the raw gate axis
    mode: str | None = None
    dropped: list = field(default_factory=list)  # fields of rows without a reference


def lever_arm_from_sidebands(voltage_spacing_mV, nu) -> LeverArm:
    """Adjacent multi-photon lines are one photon energy apart."""
    if not voltage_spacing_mV > 0:
        raise ValidationError("sideband spacing must be positive")
    return LeverArm(photon_energy(nu) / voltage_spacing_mV)


def locate_reference_peak(gate_mV, signal, window=None, snr=3.0):
    """Center (mV) of the dominant positive peak inside ``window``.

    A single Lorentzian on a constant background is fitted to the samples in
    the window.  Raises MissingReferenceError when nothing rises more than
    ``snr`` times the row's noise level above the window median.
    """
    g = np.asarray(gate_mV, dtype=float)
    s = np.asarray(signal, dtype=float)
    sel = np.isfinite(s)
    if window is not None:
        sel &= (g >= window[0]) & (g <= window[1])
    if sel.sum() < 5:
        raise MissingReferenceError("too few samples in the reference window")
    x, y = g[sel], s[sel]
    base = float(np.median(y))
    k = int(np.argmax(y))
    height = y[k] - base
    noise = noise_level(s[np.isfinite(s)])
    if not height > snr * max(noise, 1e-12 * max(1.0, abs(base))):
        raise MissingReferenceError(f"no reference peak above {snr:g} x noise")
    dx = float(np.median(np.diff(x)))
    half = base + height / 2
    left, right = k, k
    while left > 0 and y[left] > half:
        left -= 1
    while right < x.size - 1 and y[right] > half:
        right += 1
    fwhm = max(x[right] - x[left], 2 * dx)

    def resid(p):
        return lorentzian(x, p[0], p[1], p[2]) + p[3] - y

    p0 = [x[k], height, fwhm, base]
    lo = [x[0], 0.0, 0.25 * dx, -np.inf]
    hi = [x[-1], np.inf, x[-1] - x[0], np.inf]
    res = least_squares(resid, p0, bounds=(lo, hi), method="trf", x_scale="jac")
    if not res.success:
        raise MissingReferenceError("reference fit did not converge")
    if window is not None and min(res.x[0] - x[0], x[-1] - res.x[0]) < dx:
        raise MissingReferenceError("reference peak sits on the edge of its search window")
    return float(res.x[0])


def _common_axis(lo, hi, step):
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def _regrid(axes, signals, step):
    """Linear re-gridding of per-row (axis, signal) pairs onto one uniform axis."""
    lo = min(a[0] for a in axes)
    hi = max(a[-1] for a in axes)
    # anchor the grid on a multiple of the step so rigid shifts stay aligned
    lo = np.floor(lo / step + 1e-9) * step
    axis = _common_axis(lo, hi, step)
    out = np.full((len(axes), axis.size), np.nan)
    for i, (a, s) in enumerate(zip(axes, signals)):
        good = np.isfinite(s)
        inside = (axis >= a[0] - 1e-9 * step) & (axis <= a[-1] + 1e-9 * step)
        out[i, inside] = np.interp(axis[inside], a[good], s[good])
    return axis, out


def reference_half_width(device: DeviceParams, B, lever: LeverArm, pulse_mV, fraction=0.25):
    """Search half-width (mV): a fraction of the predicted reference detuning."""
    expected = st_plus_anticrossing_detuning(device, B) + lever.alpha * pulse_mV
    return fraction * abs(expected) / lever.alpha


def align_rows(raw: RawScan, lever: LeverArm, device: DeviceParams | None = None,
               first_guess_mV=None, half_width_mV=None, step_ueV=None) -> CalibratedScan:
    """Shift every row so its reference peak sits at eps* = alpha * P_eps.

    The reference window of each row is centered on the previous row's
    reference (the first row uses ``first_guess_mV``, or the row maximum),
    moved by the predicted change of eps_ST+ when a device is given.  Its
    half-width is ``half_width_mV`` or, with a device, 25% of the predicted
    reference detuning.  Rows without a reference are dropped.
    """
    if not raw.rows:
        raise ValidationError("raw scan has no rows")
    alpha = lever.alpha
    target = alpha * raw.pulse_amplitude_mV
    prev, prev_B = first_guess_mV, None
    kept, axes, signals, dropped = [], [], [], []
    for row in raw.rows:
        center = prev if prev is not None else float(row.gate_mV[np.nanargmax(row.signal)])
        if device is not None and prev_B is not None:
            center += (st_plus_anticrossing_detuning(device, row.B)
                       - st_plus_anticrossing_detuning(device, prev_B)) / alpha
        if half_width_mV is not None:
            hw = half_width_mV
        elif device is not None:
            hw = reference_half_width(device, row.B, lever, raw.pulse_amplitude_mV)
        else:
            hw = None
        window = None if hw is None else (center - hw, center + hw)
        try:
            ref = locate_reference_peak(row.gate_mV, row.signal, window)
        except MissingReferenceError as exc:
            log.warning("row B=%g T dropped: %s", row.B, exc)
            dropped.append(row.B)
            continue
        prev, prev_B = ref, row.B
        kept.append(row)
        axes.append(alpha * (row.gate_mV - ref) + target)
        signals.append(row.signal)
    if not kept:
        raise MissingReferenceError("no row has a usable reference")
    step = step_ueV or alpha * float(np.median(np.diff(kept[0].gate_mV)))
    axis, grid = _regrid(axes, signals, step)
    shifts = np.array([a[0] - alpha * r.gate_mV[0] for a, r in zip(axes, kept)])
    return CalibratedScan(np.array([r.B for r in kept]), axis, grid, "epsilon_star", shifts, None, dropped)


def shear_shift(device: DeviceParams, B, mode):
    """Energy added to eps* to reach eps for a row at external field B."""
    if mode == "paper_faithful":
        return device.g_abs * MU_B * abs(B)
    if mode == "exact":
        return st_plus_anticrossing_detuning(device, B)
    raise ValidationError(f"unknown shear mode {mode!r}")


def _shift_rows(cal: CalibratedScan, offsets):
    step = float(cal.axis[1] - cal.axis[0])
    axes, signals = [], []
    for i, d in enumerate(offsets):
        good = np.isfinite(cal.signal[i])
        axes.append(cal.axis[good] + d)
        signals.append(cal.signal[i, good])
    return _regrid(axes, signals, step)


def shear_to_epsilon(cal: CalibratedScan, device: DeviceParams, mode="exact") -> CalibratedScan:
    """Rigid per-row shift from the eps* scale onto the detuning scale."""
    if cal.scale_tag != "epsilon_star":
        raise ValidationError("shear needs a scan on the eps* scale")
    offsets = np.array([shear_shift(device, b, mode) for b in cal.B])
    axis, grid = _shift_rows(cal, offsets)
    return CalibratedScan(cal.B.copy(), axis, grid, "epsilon", cal.shifts + offsets, mode, list(cal.dropped))


def unshear(cal: CalibratedScan, device: DeviceParams) -> CalibratedScan:
    """Inverse of shear_to_epsilon."""
    if cal.scale_tag != "epsilon":
        raise ValidationError("unshear needs a scan on the eps scale")
    offsets = -np.array([shear_shift(device, b, cal.mode) for b in cal.B])
    axis, grid = _shift_rows(cal, offsets)
    return CalibratedScan(cal.B.copy(), axis, grid, "epsilon_star", cal.shifts + offsets, None, list(cal.dropped))


def as_raw(cal: CalibratedScan, lever: LeverArm, pulse_mV) -> RawScan:
    """Express a calibrated scan back on a gate axis (for re-running the pipeline)."""
    rows = []
    for i, b in enumerate(cal.B):
        good = np.isfinite(cal.signal[i])
        rows.append(RawRow(float(b), cal.axis[good] / lever.alpha, cal.signal[i, good]))
    return RawScan(tuple(rows), pulse_mV)


# --- synthetic scans -----------------------------------------------------------

def synthetic_raw_scan(device: DeviceParams, B_values, lever: LeverArm, pulse_mV, gate_mV,
                       drift_mV=None, lines=(), ref_height=1.0, ref_fwhm_ueV=4.0,
                       noise=0.0, rng=None) -> RawScan:
    """Raw rows with a drifting detuning origin.

    Gate voltage v maps to detuning alpha * (v - drift).  Each row holds the
    reference peak at eps_ST+(B) + alpha * P_eps and the extra ``lines``,
    given as (callable B -> eps in ueV, height, fwhm in ueV).
    """
    B_values = np.asarray(B_values, dtype=float)
    gate = np.asarray(gate_mV, dtype=float)
    drift = np.zeros(B_values.size) if drift_mV is None else np.asarray(drift_mV, dtype=float)
    a = lever.alpha
    rows = []
    for i, b in enumerate(B_values):
        eps = a * (gate - drift[i])
        ref = st_plus_anticrossing_detuning(device, b) + a * pulse_mV
        sig = lorentzian(eps, ref, ref_height, ref_fwhm_ueV)
        for pos, height, fwhm in lines:
            sig = sig + lorentzian(eps, pos(b), height, fwhm)
        if noise > 0:
            if rng is None:
                raise ValidationError("noise requires an rng")
            sig = sig + rng.normal(0.0, noise, size=sig.shape)
        rows.append(RawRow(float(b), gate.copy(), sig))
    return RawScan(tuple(rows), pulse_mV)
