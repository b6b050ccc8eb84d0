"""Five-level two-electron double-dot Hamiltonian and its level structure.

Basis order is ``(T-(1,1), |down,up>, |up,down>, T+(1,1), S(0,2))``.  Positive
detuning lowers S(0,2); at large positive detuning the ground state is S(0,2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from .constants import MU_B, H_PLANCK
from .errors import DomainError, NoCrossingError, UnreachableFieldError, ValidationError

IDX_TM, IDX_DU, IDX_UD, IDX_TP, IDX_S02 = range(5)

_SQ2 = math.sqrt(2.0)

# Character reference states, expressed in the computational basis.
CHARACTER_LABELS = ("S02", "S11", "Tm", "T0", "Tp")
CHARACTER_VECTORS = np.zeros((5, 5), dtype=complex)
CHARACTER_VECTORS[0, IDX_S02] = 1.0
CHARACTER_VECTORS[1, IDX_UD] = 1.0 / _SQ2
CHARACTER_VECTORS[1, IDX_DU] = -1.0 / _SQ2
CHARACTER_VECTORS[2, IDX_TM] = 1.0
CHARACTER_VECTORS[3, IDX_UD] = 1.0 / _SQ2
CHARACTER_VECTORS[3, IDX_DU] = 1.0 / _SQ2
CHARACTER_VECTORS[4, IDX_TP] = 1.0

S02 = CHARACTER_VECTORS[0]
S11 = CHARACTER_VECTORS[1]
TM = CHARACTER_VECTORS[2]
T0 = CHARACTER_VECTORS[3]
TP = CHARACTER_VECTORS[4]


@dataclass(frozen=True)
class DeviceParams:
    """Static artificial-molecule parameters.

    ``t_so_y`` defaults to 5% of ``t_c`` when left as None.  Field gradients
    are inter-dot differences in tesla.
    """

    g_abs: float = 0.382
    t_c: float = 8.7
    t_so_y: float | None = None
    t_so_z: float = 0.0
    b0: float = 0.109
    dBx_perp: float = 0.0
    dBy_perp: float = 0.0
    dB_par: float = 0.0

    def __post_init__(self):
        if self.t_so_y is None:
            object.__setattr__(self, "t_so_y", 0.05 * self.t_c)
        if not self.g_abs > 0:
            raise ValidationError(f"g_abs must be positive, got {self.g_abs}")
        if not self.t_c >= 0:
            raise ValidationError(f"t_c must be non-negative, got {self.t_c}")
        for name in ("t_so_y", "t_so_z", "b0", "dBx_perp", "dBy_perp", "dB_par"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")

    def zeeman(self, B):
        """Zeeman energy g mu_B (B + b0) in ueV."""
        return self.g_abs * MU_B * (B + self.b0)

    def replace(self, **changes) -> "DeviceParams":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return DeviceParams(**values)

    def spin_conserving(self) -> "DeviceParams":
        """Copy with spin-orbit and gradient terms switched off."""
        return self.replace(t_so_y=0.0, t_so_z=0.0, dBx_perp=0.0, dBy_perp=0.0, dB_par=0.0)


@dataclass(frozen=True)
class FieldPoint:
    B_ext: float
    epsilon: float


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray
    states: np.ndarray  # columns are eigenvectors in the computational basis
    character: np.ndarray = field(repr=False)  # (5 states, 5 characters)

    def dominant_labels(self):
        return [CHARACTER_LABELS[k] for k in np.argmax(self.character, axis=1)]

    def s02_amplitudes(self):
        """<n|S(0,2)> for every eigenstate n."""
        return self.states[IDX_S02, :].conj()


def build_hamiltonian(params: DeviceParams, point: FieldPoint) -> np.ndarray:
    """Return the 5x5 Hamiltonian in ueV."""
    gmu = params.g_abs * MU_B
    ez = gmu * (point.B_ext + params.b0)
    dpar = gmu * params.dB_par
    dperp = gmu * complex(params.dBx_perp, -params.dBy_perp) / 2.0  # (dBx - i dBy)/2
    tc = params.t_c
    ty = params.t_so_y / _SQ2
    tz = params.t_so_z

    h = np.zeros((5, 5), dtype=complex)
    h[0, 0] = ez
    h[1, 1] = -dpar
    h[2, 2] = dpar
    h[3, 3] = -ez
    h[4, 4] = -point.epsilon

    h[0, 1] = dperp
    h[0, 2] = -dperp
    h[1, 3] = -dperp
    h[2, 3] = dperp
    h[0, 4] = -ty
    h[3, 4] = -ty
    h[1, 4] = (-1j * tz - tc) / _SQ2
    h[2, 4] = (-1j * tz + tc) / _SQ2

    upper = np.triu(h, 1)
    return h.real * np.eye(5) + upper + upper.conj().T


def _degenerate_clusters(energies, tol):
    clusters, start = [], 0
    for k in range(1, len(energies) + 1):
        if k == len(energies) or energies[k] - energies[k - 1] > tol:
            clusters.append((start, k))
            start = k
    return clusters


def _canonical_subspace(vecs):
    """Deterministic orthonormal basis of span(vecs) aligned with the computational basis."""
    n, k = vecs.shape
    proj = vecs @ vecs.conj().T
    out = []
    for i in range(n):
        v = proj[:, i].copy()
        for u in out:
            v -= u * (u.conj() @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            out.append(v / norm)
        if len(out) == k:
            break
    return np.column_stack(out)


def _fix_phase(v):
    idx = np.flatnonzero(np.abs(v) > 1e-10)
    if idx.size:
        c = v[idx[0]]
        v = v * (abs(c) / c)
    return v


def eigensystem(h: np.ndarray, herm_tol: float = 1e-12) -> EigenSystem:
    """Diagonalize a Hermitian Hamiltonian with deterministic eigenvector conventions."""
    h = np.asarray(h, dtype=complex)
    scale = max(np.linalg.norm(h), 1.0)
    if np.linalg.norm(h - h.conj().T) > herm_tol * scale:
        raise ValidationError("Hamiltonian is not Hermitian")
    energies, states = np.linalg.eigh(h)
    deg_tol = 1e-9 * scale
    for a, b in _degenerate_clusters(energies, deg_tol):
        if b - a > 1:
            states[:, a:b] = _canonical_subspace(states[:, a:b])
    for k in range(states.shape[1]):
        states[:, k] = _fix_phase(states[:, k])
    character = np.abs(CHARACTER_VECTORS.conj() @ states).T ** 2
    return EigenSystem(energies=energies, states=states, character=character)


def solve(params: DeviceParams, B, epsilon) -> EigenSystem:
    return eigensystem(build_hamiltonian(params, FieldPoint(B, epsilon)))


def exchange_energy(params: DeviceParams, epsilon) -> float:
    """Antibonding singlet above T0 at zero gradient: (-eps + sqrt(eps^2 + 4 t_c^2)) / 2."""
    if not epsilon > 0:
        raise DomainError(f"exchange energy requires epsilon > 0, got {epsilon}")
    tc = params.t_c
    # rationalized form avoids cancellation at large epsilon
    return 2.0 * tc * tc / (epsilon + math.sqrt(epsilon * epsilon + 4.0 * tc * tc))


def st_plus_anticrossing_detuning(params: DeviceParams, B) -> float:
    """Detuning where the bonding singlet crosses T+: (E_z^2 - t_c^2) / E_z."""
    ez = params.zeeman(B)
    if not ez > 0:
        raise NoCrossingError(f"no S-T+ crossing for Zeeman energy {ez:.6g} ueV")
    return (ez * ez - params.t_c ** 2) / ez


def triplet_resonance_field(params: DeviceParams, nu) -> float:
    """External field at which g mu_B (B + b0) = h nu."""
    if not nu > 0:
        raise DomainError("frequency must be positive")
    B = H_PLANCK * nu / (params.g_abs * MU_B) - params.b0
    if not B > 0:
        raise UnreachableFieldError(f"triplet resonance at {nu} GHz needs B = {B:.4g} T")
    return B


@dataclass
class LevelDiagram:
    epsilon: np.ndarray
    energies: np.ndarray  # (n_points, 5), columns follow tracked branches
    labels: list  # per row, list of 5 dominant-character labels
    character: np.ndarray  # (n_points, 5 branches, 5 characters)


def level_diagram(params: DeviceParams, B, epsilon_range, n_points) -> LevelDiagram:
    """Eigenenergies vs detuning with branches tracked by maximum overlap."""
    if n_points < 2:
        raise ValidationError("n_points must be >= 2")
    eps = np.linspace(epsilon_range[0], epsilon_range[1], int(n_points))
    energies = np.empty((eps.size, 5))
    character = np.empty((eps.size, 5, 5))
    prev = None
    for i, e in enumerate(eps):
        es = solve(params, B, e)
        order = np.arange(5)
        if prev is not None:
            overlap = np.abs(prev.conj().T @ es.states)
            _, order = linear_sum_assignment(-overlap)
        states = es.states[:, order]
        energies[i] = es.energies[order]
        character[i] = es.character[order]
        prev = states
    labels = [[CHARACTER_LABELS[k] for k in np.argmax(c, axis=1)] for c in character]
    return LevelDiagram(eps, energies, labels, character)
