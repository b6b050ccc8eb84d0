"""Inverse problems on PAT line separations.

All inputs are detuning differences between lines at fixed field, so the
absolute detuning calibration never enters.  Resonance detunings for the
forward models are located numerically on the spin-conserving five-level
spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import brentq, least_squares

from .constants import MU_B, photon_energy
from .errors import DomainError, FitFailure, UnresolvableLineError, ValidationError
from .hamiltonian import CHARACTER_VECTORS, DeviceParams, FieldPoint, build_hamiltonian

KINDS = ("plus", "minus", "prime")
SCENARIOS = ("singlet", "triplet0")


# --- data containers ---------------------------------------------------------

@dataclass(frozen=True)
class PeakSeries:
    """Line separations at one drive frequency.

    ``plus``/``minus``: red dm=+1 (dm=-1) line minus the dm=0 line, taken so
    both are positive.  ``prime``: blue dm=-1 line minus red dm=0 line.
    """

    B: np.ndarray
    delta_eps: np.ndarray
    kind: str
    nu: float
    sigma: np.ndarray | None = None

    def __post_init__(self):
        B = np.atleast_1d(np.asarray(self.B, dtype=float))
        y = np.atleast_1d(np.asarray(self.delta_eps, dtype=float))
        if B.shape != y.shape:
            raise ValidationError("B and delta_eps must have the same length")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown series kind {self.kind!r}")
        if not self.nu > 0:
            raise ValidationError("drive frequency must be positive")
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(y))):
            raise ValidationError("series contains non-finite values")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "delta_eps", y)
        if self.sigma is not None:
            s = np.broadcast_to(np.asarray(self.sigma, dtype=float), B.shape).copy()
            if np.any(s <= 0):
                raise ValidationError("sigma must be positive")
            object.__setattr__(self, "sigma", s)

    def __len__(self):
        return self.B.size

    def subset(self, mask):
        sigma = None if self.sigma is None else self.sigma[mask]
        return PeakSeries(self.B[mask], self.delta_eps[mask], self.kind, self.nu, sigma)


@dataclass
class FitResult:
    params: dict
    uncertainties: dict
    residual_norm: float
    covariance: np.ndarray
    residuals: np.ndarray = field(repr=False)
    scenario_tag: str | None = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.uncertainties.items():
            if not v >= 0:
                raise FitFailure(f"negative or undefined uncertainty for {k}", self.residual_norm)

    def report_lines(self):
        lines = []
        for k, v in self.params.items():
            lines.append(f"{k} = {v:.10g}")
            lines.append(f"{k}_sigma = {self.uncertainties.get(k, float('nan')):.10g}")
        lines.append(f"residual_norm = {self.residual_norm:.10g}")
        if self.scenario_tag is not None:
            lines.append(f"scenario = {self.scenario_tag}")
        for k, v in self.flags.items():
            lines.append(f"{k} = {v}")
        return lines


# --- resonance location ------------------------------------------------------

def _levels(device: DeviceParams, B, epsilon):
    """Energies of (bonding singlet, antibonding singlet, T-, T0, T+).

    The device must be spin conserving: in the singlet/triplet basis the
    Hamiltonian is then block diagonal, which keeps the labels unambiguous
    even where S(1,1) and T0 are degenerate.
    """
    h = build_hamiltonian(device, FieldPoint(B, epsilon))
    hs = CHARACTER_VECTORS.conj() @ h @ CHARACTER_VECTORS.T  # order S02, S11, Tm, T0, Tp
    bond, anti = np.linalg.eigvalsh(hs[:2, :2])
    return bond, anti, hs[2, 2].real, hs[3, 3].real, hs[4, 4].real


_LINES = {
    # (upper level, lower level) indices into _levels
    "plus": (4, 0),  # S(0,2) -> T+
    "zero_singlet": (1, 0),  # S(0,2) -> S(1,1)
    "zero_triplet": (3, 0),  # S(0,2) -> T0
    "minus": (2, 0),  # S(0,2) -> T-
}


def resonance_detuning(device: DeviceParams, B, nu, line, span=2000.0):
    """Detuning at which ``line`` is resonant with one photon of frequency ``nu``.

    ``line`` is one of ``plus``, ``zero_singlet``, ``zero_triplet``, ``minus``
    (transitions out of the S(0,2)-like ground state) or ``blue`` (T+ to
    whichever singlet branch sits one photon above it).  Spin-orbit and
    gradient terms are switched off so that levels keep pure character.
    """
    dev = device.spin_conserving()
    hnu = photon_energy(nu)
    if line == "blue":
        # singlet branches fall monotonically with epsilon; x>0 selects the antibonding one
        x = hnu - dev.zeeman(B)
        if x == 0:
            raise UnresolvableLineError(f"blue line degenerate with the Zeeman energy at B={B}")
        branch = 1 if x > 0 else 0

        def f(e):
            lv = _levels(dev, B, e)
            return lv[branch] - lv[4] - hnu
    elif line in _LINES:
        hi, lo = _LINES[line]

        def f(e):
            lv = _levels(dev, B, e)
            return lv[hi] - lv[lo] - hnu
    else:
        raise ValidationError(f"unknown line {line!r}")

    # the singlet splitting is even in epsilon; the red line sits on the S(0,2) side
    a, b = (0.0 if line == "zero_singlet" else -span), span
    fa, fb = f(a), f(b)
    if not np.sign(fa) * np.sign(fb) < 0:
        raise UnresolvableLineError(f"no {line} resonance at B={B} T, nu={nu} GHz within +-{span} ueV")
    return brentq(f, a, b, xtol=1e-11, rtol=1e-14, maxiter=200)


def model_delta_eps(B, nu, device: DeviceParams, kind="plus", scenario="singlet"):
    """One line separation in ueV from located resonances.

    The dm=0 line ends on S(1,1) in the singlet scenario and on T0 in the
    triplet0 scenario.
    """
    if scenario not in SCENARIOS:
        raise ValidationError(f"unknown scenario {scenario!r}")
    if kind == "prime":
        return model_delta_eps_prime(B, nu, device)
    zero = resonance_detuning(device, B, nu, "zero_singlet" if scenario == "singlet" else "zero_triplet")
    if kind == "plus":
        return resonance_detuning(device, B, nu, "plus") - zero
    if kind == "minus":
        return zero - resonance_detuning(device, B, nu, "minus")
    raise ValidationError(f"unknown series kind {kind!r}")


def model_delta_eps_pm(B, nu, device: DeviceParams, scenario="singlet"):
    """(delta_eps_plus, delta_eps_minus) in ueV."""
    return (model_delta_eps(B, nu, device, "plus", scenario),
            model_delta_eps(B, nu, device, "minus", scenario))


def model_delta_eps_prime(B, nu, device: DeviceParams):
    """Blue dm=-1 line minus red dm=0 line, from located resonances."""
    return resonance_detuning(device, B, nu, "blue") - resonance_detuning(device, B, nu, "zero_singlet")


def eq1_delta_eps_prime(B, nu, device: DeviceParams):
    """Closed-form separation of the T+ -> S line and the S(0,2) -> S(1,1) line."""
    B = np.asarray(B, dtype=float)
    hnu = photon_energy(nu)
    x = hnu - device.g_abs * MU_B * (B + device.b0)
    if np.any(x <= 0):
        raise DomainError("first term undefined: need h nu > g mu_B (B + b0)")
    disc = hnu * hnu - 4.0 * device.t_c ** 2
    if disc < 0:
        raise DomainError("second term undefined: need h nu > 2 t_c")
    out = (device.t_c ** 2 - x * x) / x - math.sqrt(disc)
    return float(out) if out.ndim == 0 else out


def _eq1_jacobian(B, nu, g_abs, t_c, b0):
    hnu = photon_energy(nu)
    gmu = g_abs * MU_B
    x = hnu - gmu * (B + b0)
    s = math.sqrt(hnu * hnu - 4.0 * t_c * t_c)
    d_tc = 2.0 * t_c / x + 4.0 * t_c / s
    d_b0 = gmu * (t_c * t_c / (x * x) + 1.0)
    return np.column_stack([d_tc, d_b0])


# --- shared least-squares helpers ---------------------------------------------

def _weights(series: PeakSeries):
    return None if series.sigma is None else 1.0 / series.sigma


def _covariance(jac, resid, weighted, n_params):
    """Gauss-Newton covariance; scaled by reduced chi^2 when no sigmas were given."""
    jtj = jac.T @ jac
    if np.linalg.cond(jtj) > 1e14:
        raise FitFailure("parameters are not identifiable from this series", float(np.linalg.norm(resid)))
    cov = np.linalg.inv(jtj)
    if not weighted:
        dof = resid.size - n_params
        cov = cov * (float(resid @ resid) / dof if dof > 0 else 0.0)
    return cov


def _linear_fit(x, y, w=None):
    """Weighted straight line; returns (intercept, slope), covariance, residuals."""
    a = np.column_stack([np.ones_like(x), x])
    ww = np.ones_like(x) if w is None else w
    coef, *_ = np.linalg.lstsq(a * ww[:, None], y * ww, rcond=None)
    resid = (y - a @ coef) * ww
    cov = _covariance(a * ww[:, None], resid, w is not None, 2)
    return coef, cov, resid


# --- |g| ---------------------------------------------------------------------

def linear_window(B, nu, device: DeviceParams, rel_curvature=0.01):
    """Mask of points where the forward model is locally straight.

    A point passes when the second difference of the model at it is below
    ``rel_curvature`` times the local first difference.  The longest run of
    passing points at the high-field end is kept.
    """
    order = np.argsort(B)
    b = np.asarray(B, dtype=float)[order]
    y = np.array([model_delta_eps(bi, nu, device) for bi in b])
    ok = np.ones(b.size, dtype=bool)
    if b.size >= 3:
        d1 = np.diff(y) / np.diff(b)
        d2 = np.abs(np.diff(d1))
        ok[1:-1] = d2 <= rel_curvature * np.abs(d1[1:])
        ok[0] = ok[1]
        ok[-1] = ok[-2]
    keep = np.zeros(b.size, dtype=bool)
    k = b.size - 1
    while k >= 0 and ok[k]:
        keep[k] = True
        k -= 1
    mask = np.zeros(b.size, dtype=bool)
    mask[order] = keep
    return mask


def fit_g_factor(series: PeakSeries, device: DeviceParams | None = None) -> FitResult:
    """|g| from the slope of delta_eps_plus versus B.

    With ``device`` given, points outside the forward model's linear window
    are dropped first.
    """
    if series.kind != "plus":
        raise ValidationError("fit_g_factor needs a 'plus' series")
    flags = {}
    if device is not None:
        mask = linear_window(series.B, series.nu, device)
        flags["points_dropped_nonlinear"] = int(len(series) - mask.sum())
        series = series.subset(mask)
    if len(series) < 3:
        raise ValidationError(f"need at least 3 points in the linear window, have {len(series)}")
    if np.ptp(series.B) == 0:
        raise ValidationError("all points share one field value")
    coef, cov, resid = _linear_fit(series.B, series.delta_eps, _weights(series))
    g = coef[1] / MU_B
    g_sigma = math.sqrt(cov[1, 1]) / MU_B
    return FitResult(
        params={"g_abs": float(abs(g)), "intercept_ueV": float(coef[0])},
        uncertainties={"g_abs": float(g_sigma), "intercept_ueV": float(math.sqrt(cov[0, 0]))},
        residual_norm=float(np.linalg.norm(resid)),
        covariance=cov,
        residuals=resid,
        flags=flags,
    )


# --- t_c and b0 ----------------------------------------------------------------

def fit_tc_b0(series: PeakSeries, g_abs, starts=5, seed=0) -> FitResult:
    """(t_c, b0) from the blue-line separation with |g| held fixed."""
    if series.kind != "prime":
        raise ValidationError("fit_tc_b0 needs a 'prime' series")
    if len(series) < 2 or np.unique(series.B).size < 2:
        raise FitFailure("two parameters cannot be identified from a single field value")
    hnu = photon_energy(series.nu)
    gmu = g_abs * MU_B
    w = _weights(series)
    ww = np.ones(len(series)) if w is None else w
    b0_hi = hnu / gmu - series.B.max() - 1e-6  # keeps h nu - E_z positive everywhere
    lo = np.array([0.0, -1.0])
    hi = np.array([0.5 * hnu * (1 - 1e-9), b0_hi])
    if not hi[1] > lo[1]:
        raise ValidationError("series extends past the field where h nu = E_z")

    def resid(p):
        dev = DeviceParams(g_abs=g_abs, t_c=p[0], b0=p[1])
        return (eq1_delta_eps_prime(series.B, series.nu, dev) - series.delta_eps) * ww

    def jac(p):
        return _eq1_jacobian(series.B, series.nu, g_abs, p[0], p[1]) * ww[:, None]

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    box_hi = np.array([min(hi[0], 30.0), min(hi[1], 0.5)])
    box_lo = np.array([0.5, max(lo[1], -0.2)])
    best = None
    for k in range(starts):
        p0 = box_lo + rng.random(2) * (box_hi - box_lo)
        p0 = np.clip(p0, lo + 1e-9, hi - 1e-9)
        res = least_squares(resid, p0, jac=jac, bounds=(lo, hi), method="trf",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=500)
        if best is None or res.cost < best.cost:
            best = res
    if best is None or best.status <= 0:
        raise FitFailure("t_c/b0 fit did not converge", float(np.linalg.norm(best.fun)) if best else float("nan"))
    cov = _covariance(best.jac, best.fun, w is not None, 2)
    return FitResult(
        params={"t_c": float(best.x[0]), "b0": float(best.x[1])},
        uncertainties={"t_c": float(math.sqrt(cov[0, 0])), "b0": float(math.sqrt(cov[1, 1]))},
        residual_norm=float(np.linalg.norm(best.fun)),
        covariance=cov,
        residuals=best.fun,
    )


# --- zero-field offset of delta_eps_plus --------------------------------------

def extrapolated_offset(series: PeakSeries):
    """Linear extrapolation of a 'plus' series to B = 0: (offset, sigma)."""
    if series.kind != "plus":
        raise ValidationError("offset extrapolation needs a 'plus' series")
    if len(series) < 3:
        raise ValidationError("need at least 3 points for the extrapolation")
    coef, cov, _ = _linear_fit(series.B, series.delta_eps, _weights(series))
    return float(coef[0]), float(math.sqrt(cov[0, 0]))


def model_offset(B, nu, device: DeviceParams, scenario):
    """The same extrapolation applied to the forward model sampled at ``B``."""
    y = np.array([model_delta_eps(b, nu, device, "plus", scenario) for b in B])
    coef, _, _ = _linear_fit(np.asarray(B, dtype=float), y)
    return float(coef[0])


def _fit_remanence(offsets, sigmas, series_list, device, scenario):
    # scatter-scaled sigmas of noiseless series are ~0 and would blow up the weights
    w = 1.0 / sigmas if all(s.sigma is not None for s in series_list) else None
    ww = np.ones(offsets.size) if w is None else w

    def resid(p):
        dev = device.replace(b0=float(p[0]))
        pred = np.array([model_offset(s.B, s.nu, dev, scenario) for s in series_list])
        return (pred - offsets) * ww

    res = least_squares(resid, np.array([0.05]), bounds=([-0.5], [0.5]), method="trf",
                        diff_step=1e-6, xtol=1e-12, ftol=1e-12, gtol=1e-12)
    if res.status <= 0:
        raise FitFailure(f"remanence fit ({scenario}) did not converge", float(np.linalg.norm(res.fun)))
    n = offsets.size
    if n > 1:
        cov = _covariance(res.jac, res.fun, w is not None, 1)
    else:
        cov = np.full((1, 1), np.nan)
    return res, cov


def delta_eps_plus_zero(series_list, device: DeviceParams, scenarios=SCENARIOS) -> FitResult:
    """Remanent micromagnet field from zero-field offsets at several frequencies.

    Each scenario's forward model is fitted with the remanence as the only
    free parameter.  The returned result holds the best scenario; all
    scenario residual norms are listed in ``flags``.
    """
    if not series_list:
        raise ValidationError("no series supplied")
    ext = [extrapolated_offset(s) for s in series_list]
    offsets = np.array([e[0] for e in ext])
    sigmas = np.array([e[1] for e in ext])
    fits = {sc: _fit_remanence(offsets, sigmas, series_list, device, sc) for sc in scenarios}
    norms = {sc: float(np.linalg.norm(f[0].fun)) for sc, f in fits.items()}
    # ties (e.g. t_c = 0, where both scenarios coincide) go to the earlier scenario
    best = min(scenarios, key=lambda sc: (round(norms[sc], 9), scenarios.index(sc)))
    res, cov = fits[best]
    flags = {f"residual_{sc}": v for sc, v in norms.items()}
    flags.update({f"remanence_{sc}": float(f[0].x[0]) for sc, f in fits.items()})
    sig = float(math.sqrt(cov[0, 0])) if np.isfinite(cov[0, 0]) else float("inf")
    return FitResult(
        params={"remanence": float(res.x[0])},
        uncertainties={"remanence": sig},
        residual_norm=norms[best],
        covariance=cov,
        residuals=res.fun,
        scenario_tag=best,
        flags=flags,
    )


# --- relaxation rate -----------------------------------------------------------

def _decay(gamma, tau):
    x = gamma * tau
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x / 2.0, -np.expm1(-safe) / safe)


def _decay_dgamma(gamma, tau):
    x = gamma * tau
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    # d/dx (1 - e^-x)/x = (e^-x (1 + x) - 1) / x^2
    d = np.where(small, -0.5 + x / 3.0, (np.exp(-safe) * (1.0 + safe) - 1.0) / (safe * safe))
    return d * tau


def fit_relaxation_rate(tau, signal, sigma=None, resolution=1e-3) -> FitResult:
    """Gamma_s (1/ns) from the time-averaged decay signal.

    When no point drops measurably below 1 (by more than ``resolution`` or
    twice its sigma) the decay is unresolved: the result is flagged
    ``bound_only`` and ``gamma_upper`` gives the largest rate compatible
    with the data, i.e. a lower bound on the spin lifetime.
    """
    tau = np.asarray(tau, dtype=float)
    s = np.asarray(signal, dtype=float)
    if tau.shape != s.shape or tau.size < 3:
        raise ValidationError("need at least 3 (tau, signal) points")
    if np.any(tau <= 0):
        raise ValidationError("tau must be positive")
    if np.any(s <= 0) or (sigma is None and np.any(s > 1.0 + 1e-12)):
        raise ValidationError("signals must lie in (0, 1]")
    w = None if sigma is None else 1.0 / np.broadcast_to(np.asarray(sigma, dtype=float), tau.shape)
    ww = np.ones(tau.size) if w is None else w

    floor = resolution if sigma is None else max(resolution, 2.0 * float(np.max(1.0 / ww)))
    if np.all(1.0 - s <= floor):
        # smallest rate that would have pushed the longest-tau point below the floor
        tmax = float(tau.max())
        g_up = brentq(lambda g: float(_decay(g, tmax)) - (1.0 - floor), 0.0, 1e3 / tmax)
        return FitResult(
            params={"gamma_s": 0.0, "gamma_upper": g_up},
            uncertainties={"gamma_s": 0.0, "gamma_upper": 0.0},
            residual_norm=float(np.linalg.norm((1.0 - s) * ww)),
            covariance=np.zeros((1, 1)),
            residuals=(1.0 - s) * ww,
            flags={"bound_only": True},
        )

    # starting value from the point closest to half decay
    k = int(np.argmin(np.abs(s - 0.6)))
    g0 = brentq(lambda g: float(_decay(g, tau[k])) - min(max(s[k], 1e-6), 1 - 1e-9), 0.0, 1e6 / tau[k])

    def resid(p):
        return (_decay(p[0], tau) - s) * ww

    def jac(p):
        return (_decay_dgamma(p[0], tau) * ww)[:, None]

    res = least_squares(resid, np.array([g0]), jac=jac, bounds=([0.0], [np.inf]), method="trf",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if res.status <= 0:
        raise FitFailure("relaxation fit did not converge", float(np.linalg.norm(res.fun)))
    cov = _covariance(res.jac, res.fun, w is not None, 1)
    return FitResult(
        params={"gamma_s": float(res.x[0])},
        uncertainties={"gamma_s": float(math.sqrt(cov[0, 0]))},
        residual_norm=float(np.linalg.norm(res.fun)),
        covariance=cov,
        residuals=res.fun,
        flags={"bound_only": False},
    )


# --- synthetic data -----------------------------------------------------------

def synthetic_series(kind, B, nu, device: DeviceParams, noise=0.0, rng=None, scenario="singlet"):
    """Forward-model series with optional Gaussian noise (ueV)."""
    B = np.asarray(B, dtype=float)
    y = np.array([model_delta_eps(b, nu, device, kind, scenario) for b in B])
    if noise > 0:
        if rng is None:
            raise ValidationError("noise requires an rng")
        y = y + rng.normal(0.0, noise, size=y.shape)
    sigma = np.full(B.shape, noise) if noise > 0 else None
    return PeakSeries(B, y, kind, nu, sigma)
