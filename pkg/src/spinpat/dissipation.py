"""Phonon relaxation, the dissipative generator and the driven steady state.

Rates follow the golden rule with the charge dipole ``|S(0,2)><S(0,2)|``
between eigenstates of the undriven Hamiltonian.  Density matrices are
vectorized column-major: ``vec(rho)[a + n*b] = rho[a, b]``.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .constants import HBAR, K_B, H_PLANCK
from .errors import DomainError, NoSteadyStateError, SteadyStateMultiplicityError, ValidationError
from .hamiltonian import EigenSystem
from .rwa import RotatingFrameModel

DEFAULT_CUTOFF_UEV = 80.0 * H_PLANCK  # c_ph / l_dot ~ 60-120 GHz, midpoint
DEFAULT_DEPHASING = 2.0 * math.pi * 1.0  # 1/ns, gives an h * 1 GHz linewidth
DEFAULT_SPIN_DEPHASING = 0.1  # 1/ns, quasi-static nuclear field, T2* = 10 ns


def spectral_density(omega, cutoff=DEFAULT_CUTOFF_UEV, p=3):
    """Dimensionless phonon weight (w/wc)^p exp(-(w/wc)^2) for w >= 0 in ueV."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise DomainError("spectral density needs omega >= 0")
    x = w / cutoff
    out = x ** p * np.exp(-x * x)
    return float(out) if out.ndim == 0 else out


def bose_occupation(energy, temperature):
    if temperature <= 0:
        return np.zeros_like(energy, dtype=float)
    with np.errstate(over="ignore", divide="ignore"):
        return 1.0 / np.expm1(energy / (K_B * temperature))


def calibrated_coupling(cutoff=DEFAULT_CUTOFF_UEV, p=3, target_rate=0.01, splitting=45.0,
                        epsilon=100.0, t_c=8.7):
    """Coupling prefactor giving ``target_rate`` (1/ns) for singlet relaxation.

    The reference transition is S(1,1) -> S(0,2) at detuning ``epsilon`` where
    the hybridized singlets share a dipole weight t_c^2 / (eps^2 + 4 t_c^2);
    the phonon energy is ``splitting`` at zero temperature.
    """
    weight = t_c * t_c / (epsilon * epsilon + 4.0 * t_c * t_c)
    return target_rate / (weight * spectral_density(splitting, cutoff, p))


@dataclass(frozen=True)
class PhononBath:
    temperature: float = 0.1  # K
    coupling_eta: float | None = None  # 1/ns; None -> calibrated default
    cutoff_ueV: float = DEFAULT_CUTOFF_UEV
    exponent_p: int = 3
    dephasing_rate: float = DEFAULT_DEPHASING  # 1/ns
    spin_dephasing_rate: float = DEFAULT_SPIN_DEPHASING  # 1/ns, coherence decay per unit |delta m|^2

    def __post_init__(self):
        if not self.cutoff_ueV > 0:
            raise ValidationError("cutoff must be positive")
        if self.coupling_eta is None:
            object.__setattr__(self, "coupling_eta", calibrated_coupling(self.cutoff_ueV, self.exponent_p))
        if min(self.temperature, self.coupling_eta, self.dephasing_rate, self.spin_dephasing_rate) < 0:
            raise ValidationError("bath temperature, coupling and dephasing must be non-negative")

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return PhononBath(**values)


@dataclass(frozen=True)
class RateMatrix:
    gamma: np.ndarray  # gamma[i, j]: rate j -> i in 1/ns
    dephasing: np.ndarray  # sqrt(dephasing_rate) * <i|D|i>, diagonal jump amplitudes
    spin_dephasing: np.ndarray = None  # sqrt(2 spin_dephasing_rate) * <i|S_z|i>


def dipole_matrix(eig: EigenSystem) -> np.ndarray:
    """<i|S02><S02|j> in the eigenbasis."""
    amp = eig.s02_amplitudes()
    return np.outer(amp, amp.conj())


def transition_rates(eig: EigenSystem, bath: PhononBath) -> RateMatrix:
    d = dipole_matrix(eig)
    e = np.asarray(eig.energies)
    de = e[None, :] - e[:, None]  # E_j - E_i
    gap = np.abs(de)
    weight = bath.coupling_eta * np.abs(d) ** 2 * spectral_density(gap, bath.cutoff_ueV, bath.exponent_p)
    occ = bose_occupation(gap, bath.temperature)
    occ = np.where(gap > 0, occ, 0.0)
    gamma = np.where(de > 0, weight * (occ + 1.0), weight * occ)
    np.fill_diagonal(gamma, 0.0)
    deph = math.sqrt(bath.dephasing_rate) * np.real(np.diag(d))
    m = eig.character[:, 4] - eig.character[:, 2]  # <S_z>: T+ weight minus T- weight
    spin = math.sqrt(2.0 * bath.spin_dephasing_rate) * m
    return RateMatrix(gamma=gamma, dephasing=deph, spin_dephasing=spin)


@dataclass(frozen=True)
class Superoperator:
    generator: np.ndarray  # (n^2, n^2), acts on column-stacked rho

    @property
    def dim(self):
        return int(round(math.sqrt(self.generator.shape[0])))


def vec(rho):
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, n=None):
    n = n or int(round(math.sqrt(v.size)))
    return np.asarray(v).reshape((n, n), order="F")


def hamiltonian_generator(h):
    """-(i/hbar)[H, .] as a matrix on vec(rho)."""
    n = h.shape[0]
    eye = np.eye(n)
    return -1j / HBAR * (np.kron(eye, h) - np.kron(h.T, eye))


def lindblad_dissipator(jump):
    """D[L] rho = L rho L^dag - {L^dag L, rho}/2 as a matrix on vec(rho)."""
    n = jump.shape[0]
    eye = np.eye(n)
    ldl = jump.conj().T @ jump
    return np.kron(jump.conj(), jump) - 0.5 * (np.kron(eye, ldl) + np.kron(ldl.T, eye))


def build_superoperator(model: RotatingFrameModel, rates: RateMatrix) -> Superoperator:
    h = model.h_eff + model.v_drive
    n = h.shape[0]
    gen = hamiltonian_generator(h)

    gamma = rates.gamma
    # jumps |i><j| at rate gamma[i, j]
    out = gamma.sum(axis=0)
    idx = np.arange(n)
    diag_pop = idx + n * idx
    gen[np.ix_(diag_pop, diag_pop)] += gamma
    a, b = np.meshgrid(idx, idx, indexing="ij")
    flat = (a + n * b).ravel()
    gen[flat, flat] -= 0.5 * (out[a] + out[b]).ravel()

    dph = rates.dephasing
    gen[flat, flat] -= 0.5 * ((dph[a] - dph[b]) ** 2).ravel()
    if rates.spin_dephasing is not None:
        sz = rates.spin_dephasing
        gen[flat, flat] -= 0.5 * ((sz[a] - sz[b]) ** 2).ravel()
    return Superoperator(gen)


@dataclass(frozen=True)
class DensityMatrix:
    rho: np.ndarray

    @property
    def populations(self):
        return np.real(np.diag(self.rho))

    def expectation(self, op):
        return float(np.real(np.trace(op @ self.rho)))


def kernel_dimension(generator, rel_tol=1e-15):
    s = np.linalg.svd(generator, compute_uv=False)
    if s[0] == 0:
        return generator.shape[0]
    return int(np.sum(s <= rel_tol * s[0] * generator.shape[0]))


def steady_state(superop: Superoperator, rel_tol=1e-15) -> DensityMatrix:
    """Unique steady state from the trace-bordered linear system."""
    gen = superop.generator
    m = gen.shape[0]
    n = superop.dim
    s = np.linalg.svd(gen, compute_uv=False)
    scale = s[0] if s[0] > 0 else 1.0
    null = int(np.sum(s <= rel_tol * scale * m))
    if null > 1:
        raise SteadyStateMultiplicityError(null)
    if null == 0 and s[-1] > 1e-8 * scale:
        raise NoSteadyStateError(f"generator has no kernel (smallest singular value {s[-1]:.3g})")

    trace_row = vec(np.eye(n)).astype(complex)
    bordered = np.zeros((m + 1, m + 1), dtype=complex)
    bordered[:m, :m] = gen
    bordered[:m, m] = trace_row
    bordered[m, :m] = trace_row
    rhs = np.zeros(m + 1, dtype=complex)
    rhs[m] = 1.0
    sol = np.linalg.solve(bordered, rhs)
    rho = unvec(sol[:m], n)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    return DensityMatrix(rho)


def propagate(superop: Superoperator, rho0, t):
    """Dense propagation exp(L t) rho0."""
    from scipy.linalg import expm

    return unvec(expm(superop.generator * t) @ vec(rho0), superop.dim)
