"""Spin-orbit versus hyperfine spin-flip tunneling matrix elements."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import ValidationError

HBAR2_OVER_ME_UEV_NM2 = 76199.6  # hbar^2 / m_e in ueV nm^2
GAAS_EFFECTIVE_MASS = 0.067
MAX_ANGLE_FACTOR = 1.5 * math.sqrt(2.0)  # 3 |n| / 2 with the largest |n|


@dataclass(frozen=True)
class DotGeometry:
    sigma: float  # nm, single-dot wavefunction size
    a: float  # nm, inter-dot distance
    theta: float = 0.0  # rad, inter-dot axis relative to the spin-orbit frame
    delta_orbital: float | None = None  # ueV; None -> hbar^2 / (m* sigma^2)
    effective_mass: float = GAAS_EFFECTIVE_MASS

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        if not self.a >= 0:
            raise ValidationError("inter-dot distance must be non-negative")
        if self.delta_orbital is None:
            delta = HBAR2_OVER_ME_UEV_NM2 / (self.effective_mass * self.sigma ** 2)
            object.__setattr__(self, "delta_orbital", delta)
        if not self.delta_orbital > 0:
            raise ValidationError("orbital spacing must be positive")

    @classmethod
    def from_orbital_spacing(cls, delta_orbital, a, theta=0.0, effective_mass=GAAS_EFFECTIVE_MASS):
        """Geometry whose sigma is implied by the orbital spacing."""
        sigma = math.sqrt(HBAR2_OVER_ME_UEV_NM2 / (effective_mass * delta_orbital))
        return cls(sigma=sigma, a=a, theta=theta, delta_orbital=delta_orbital, effective_mass=effective_mass)

    @property
    def overlap_factor(self):
        return math.exp(-self.a ** 2 / (8.0 * self.sigma ** 2))


@dataclass(frozen=True)
class SOCouplingParams:
    alpha: float  # Rashba weight
    beta: float  # Dresselhaus weight
    lambda_so: float  # um

    def __post_init__(self):
        if not self.lambda_so > 0:
            raise ValidationError("spin-orbit length must be positive")
        if abs(self.alpha ** 2 + self.beta ** 2 - 1.0) > 1e-9:
            raise ValidationError("alpha^2 + beta^2 must equal 1")

    @classmethod
    def from_weights(cls, alpha, beta, lambda_so):
        norm = math.hypot(alpha, beta)
        if norm == 0:
            raise ValidationError("alpha and beta cannot both vanish")
        return cls(alpha / norm, beta / norm, lambda_so)


@dataclass(frozen=True)
class HyperfineParams:
    A_ueV: float = 100.0
    N: float = 4e6

    def __post_init__(self):
        if not self.A_ueV > 0:
            raise ValidationError("hyperfine coupling must be positive")
        if not self.N >= 1:
            raise ValidationError("need at least one nucleus")

    @property
    def rms(self):
        return self.A_ueV / math.sqrt(self.N)


def so_direction_vector(theta, alpha, beta):
    """(n_z, n_y) of the effective spin-orbit field direction."""
    c, s = math.cos(theta), math.sin(theta)
    n_z = -c * ((alpha - beta) * c + (alpha + beta) * s)
    n_y = -s * ((beta - alpha) * s + (alpha + beta) * c)
    return np.array([n_z, n_y])


def field_angle_factor(n, b_direction):
    """3 |n x B| / (2 |B|) for 3-vectors (x, y, z)."""
    n = np.asarray(n, dtype=float)
    b = np.asarray(b_direction, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0:
        raise ValidationError("field direction must be non-zero")
    return 1.5 * float(np.linalg.norm(np.cross(n, b))) / nb


def _n_vector3(geom: DotGeometry, so: SOCouplingParams):
    n_z, n_y = so_direction_vector(geom.theta, so.alpha, so.beta)
    return np.array([0.0, n_y, n_z])


def t_so_magnitude(geom: DotGeometry, so: SOCouplingParams) -> float:
    """|t_SO| = Delta (a / 4 lambda) exp(-a^2 / 8 sigma^2) |n| in ueV."""
    lam_nm = so.lambda_so * 1e3
    n = np.linalg.norm(so_direction_vector(geom.theta, so.alpha, so.beta))
    return geom.delta_orbital * geom.a / (4.0 * lam_nm) * geom.overlap_factor * float(n)


def t_nuc_rms(geom: DotGeometry, hf: HyperfineParams) -> float:
    """(A / sqrt N) exp(-a^2 / 8 sigma^2) in ueV."""
    return hf.rms * geom.overlap_factor


def matrix_element_ratio(geom: DotGeometry, so: SOCouplingParams, hf: HyperfineParams,
                         angle_factor) -> float:
    """|t_SO| / |t_nuc| = (Delta / (A/sqrt N)) * angle_factor * (a / 4 lambda).

    ``angle_factor`` is 3 |n x B| / (2 |B|).  With alpha^2 + beta^2 = 1 the
    printed n reaches |n| = sqrt 2, so the factor lies in [0, 3 sqrt(2) / 2].
    """
    if not 0.0 <= angle_factor <= MAX_ANGLE_FACTOR * (1 + 1e-12):
        raise ValidationError("angle factor must lie in [0, 3 sqrt(2) / 2]")
    lam_nm = so.lambda_so * 1e3
    return geom.delta_orbital / hf.rms * angle_factor * geom.a / (4.0 * lam_nm)


def ratio_for_field(geom: DotGeometry, so: SOCouplingParams, hf: HyperfineParams, b_direction):
    """Matrix-element ratio for a field direction (x, y, z), z along the inter-dot axis frame."""
    return matrix_element_ratio(geom, so, hf, field_angle_factor(_n_vector3(geom, so), b_direction))


@dataclass(frozen=True)
class MainTextRatio:
    expression: float
    square: float
    note: str


def rate_ratio_main_text(E0_ueV, N, A_ueV, d_nm, lambda_so_um) -> MainTextRatio:
    """(E0 sqrt N / 4A)(d / lambda_SO) and its square.

    The expression is called a rate ratio of "a few thousand", yet with the
    quoted numbers it evaluates to a few tens, like the matrix-element ratio;
    its square is what reaches the thousands.  Both are returned.
    """
    if N < 0 or not A_ueV > 0 or not lambda_so_um > 0:
        raise ValidationError("need N >= 0, A > 0, lambda_SO > 0")
    value = E0_ueV * math.sqrt(N) / (4.0 * A_ueV) * d_nm / (lambda_so_um * 1e3)
    note = ("expression matches a matrix-element ratio; the quoted 'few thousand' "
            "corresponds to its square (rate ~ |matrix element|^2)")
    return MainTextRatio(value, value * value, note)
