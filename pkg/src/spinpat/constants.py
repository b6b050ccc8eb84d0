"""Frozen physical constants in the unit system used throughout the package.

Energies are in micro-electronvolt (ueV), fields in tesla, frequencies in GHz,
times in ns and rates in 1/ns.
"""

from dataclasses import dataclass
import math


@dataclass(frozen=True)
class PhysicalConstants:
    planck_ueV_per_GHz: float = 4.135667
    bohr_magneton_ueV_per_T: float = 57.8838
    boltzmann_ueV_per_K: float = 86.17333

    @property
    def hbar_ueV_ns(self) -> float:
        # h in ueV/GHz equals h in ueV*ns
        return self.planck_ueV_per_GHz / (2.0 * math.pi)


CONSTANTS = PhysicalConstants()

H_PLANCK = CONSTANTS.planck_ueV_per_GHz
MU_B = CONSTANTS.bohr_magneton_ueV_per_T
K_B = CONSTANTS.boltzmann_ueV_per_K
HBAR = CONSTANTS.hbar_ueV_ns


def photon_energy(nu_GHz):
    """Photon energy in ueV for a drive frequency in GHz."""
    return H_PLANCK * nu_GHz
