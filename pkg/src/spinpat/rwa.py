"""Rotating-frame treatment of the detuning drive.

Eigenlevels are grouped into bands separated by roughly one photon energy.
Each band rotates at its own multiple of the drive frequency, and only drive
terms linking adjacent bands are kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import photon_energy
from .errors import ValidationError
from .hamiltonian import EigenSystem


@dataclass(frozen=True)
class DriveParams:
    nu: float = 11.0  # GHz
    omega: float = 0.5  # ueV, amplitude of the detuning modulation

    def __post_init__(self):
        if not self.nu > 0:
            raise ValidationError("drive frequency must be positive")
        if not self.omega >= 0:
            raise ValidationError("drive amplitude must be non-negative")

    def replace(self, **changes):
        values = {"nu": self.nu, "omega": self.omega}
        values.update(changes)
        return DriveParams(**values)


@dataclass(frozen=True)
class BandAssignment:
    band_index: np.ndarray  # one integer per eigenstate
    projectors: tuple  # eigenbasis projectors, one per occupied band, ascending index
    band_values: tuple  # band index of each projector
    off_ladder: bool = False  # some band sits more than h nu / 3 from its integer rung


@dataclass(frozen=True)
class RotatingFrameModel:
    h_eff: np.ndarray
    v_drive: np.ndarray
    bands: BandAssignment = field(repr=False)


def assign_bands(eig: EigenSystem, nu) -> BandAssignment:
    """Group eigenlevels into photon bands.

    A new cluster starts whenever a level lies more than h nu / 3 above the
    lowest member of the current cluster.  Clusters are mapped to the nearest
    integer number of photons above the ground level; clusters that land on
    the same integer share a band.
    """
    if not nu > 0:
        raise ValidationError("drive frequency must be positive")
    hnu = photon_energy(nu)
    energies = np.asarray(eig.energies)
    order = np.argsort(energies, kind="stable")
    clusters = [[order[0]]]
    for k in order[1:]:
        if energies[k] - energies[clusters[-1][0]] > hnu / 3.0:
            clusters.append([k])
        else:
            clusters[-1].append(k)

    e0 = energies[order[0]]
    band_index = np.empty(energies.size, dtype=int)
    off_ladder = False
    for members in clusters:
        rungs = (energies[members].mean() - e0) / hnu
        n = int(np.rint(rungs))
        if abs(rungs - n) > 1.0 / 3.0:
            off_ladder = True
        band_index[members] = n

    values = tuple(sorted(set(band_index.tolist())))
    projectors = tuple(np.diag((band_index == n).astype(float)) for n in values)
    return BandAssignment(band_index, projectors, values, off_ladder)


def build_drive_perturbation(eig: EigenSystem, bands: BandAssignment, drive: DriveParams) -> RotatingFrameModel:
    """Rotating-frame Hamiltonian and adjacent-band drive coupling, in the eigenbasis."""
    hnu = photon_energy(drive.nu)
    n = bands.band_index
    h_eff = np.diag(eig.energies - n * hnu).astype(complex)

    amp = eig.s02_amplitudes()  # <i|S02>
    coupling = drive.omega * np.outer(amp, amp.conj())  # Omega <i|S02><S02|j>
    upward = (n[None, :] - n[:, None]) == 1
    v = np.where(upward, coupling, 0.0)
    v = v + v.conj().T
    return RotatingFrameModel(h_eff=h_eff, v_drive=v, bands=bands)


def rotating_frame(eig: EigenSystem, drive: DriveParams) -> RotatingFrameModel:
    return build_drive_perturbation(eig, assign_bands(eig, drive.nu), drive)
