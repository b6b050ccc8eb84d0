"""Simulation and analysis of spin-flip photon-assisted tunneling in a two-electron double dot."""

__version__ = "0.1.0"

from .constants import CONSTANTS, PhysicalConstants
from .errors import (DomainError, FitFailure, MissingReferenceError, NoCrossingError, NoSteadyStateError,
                     NumericalError, SpinPatError, SteadyStateMultiplicityError, UnreachableFieldError,
                     UnresolvableLineError, ValidationError)
from .hamiltonian import (DeviceParams, EigenSystem, FieldPoint, build_hamiltonian, eigensystem,
                          exchange_energy, level_diagram, solve, st_plus_anticrossing_detuning,
                          triplet_resonance_field)
from .rwa import DriveParams, assign_bands, build_drive_perturbation, rotating_frame
from .dissipation import (PhononBath, build_superoperator, spectral_density, steady_state,
                          transition_rates)
from .spectra import (REFERENCE_DEVICE, ScanSpec, SpectrumGrid, lockin_delta_n, locate_peaks,
                      relaxation_decay_signal, scan_spectrum)
