import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinpat.constants import photon_energy
from spinpat.errors import ValidationError
from spinpat.hamiltonian import DeviceParams, EigenSystem, solve
from spinpat.rwa import DriveParams, assign_bands, build_drive_perturbation, rotating_frame
from spinpat.spectra import REFERENCE_DEVICE

HNU11 = photon_energy(11.0)


def diag_system(energies, states=None):
    e = np.asarray(energies, dtype=float)
    n = e.size
    states = np.eye(n, dtype=complex) if states is None else states
    return EigenSystem(e, states, np.zeros((n, 5)))


def test_drive_params_validation():
    with pytest.raises(ValidationError):
        DriveParams(nu=0.0)
    with pytest.raises(ValidationError):
        DriveParams(omega=-1.0)


def test_two_levels_one_photon_apart():
    b = assign_bands(diag_system([0.0, 45.49, 200, 201, 202]), 11.0)
    assert b.band_index[0] == 0 and b.band_index[1] == 1


def test_clusters_map_to_rungs():
    b = assign_bands(diag_system([0.0, 1.0, 45.0, 46.0, 90.0]), 11.0)
    assert b.band_index.tolist() == [0, 0, 1, 1, 2]
    assert b.band_values == (0, 1, 2)
    assert not b.off_ladder


def test_off_ladder_flag():
    b = assign_bands(diag_system([0.0, 0.5, 1.0, 1.5, 0.5 * HNU11]), 11.0)
    assert b.off_ladder


def test_s02_state_one_band_above_at_negative_detuning():
    es = solve(DeviceParams(g_abs=0.382, t_c=8.7, b0=0.109), 1.5, -30.0)
    b = assign_bands(es, 11.0)
    s02 = int(np.argmax(es.character[:, 0]))
    s11 = int(np.argmax(es.character[:, 1]))
    assert b.band_index[s02] == b.band_index[s11] + 1
    gap = es.energies[s02] - es.energies[s11]
    assert abs(gap - HNU11) < HNU11 / 3


def test_projectors_partition_identity():
    es = solve(REFERENCE_DEVICE, 2.0, 30.0)
    b = assign_bands(es, 11.0)
    total = sum(b.projectors)
    np.testing.assert_array_equal(total, np.eye(5))
    for i, p in enumerate(b.projectors):
        np.testing.assert_array_equal(p @ p, p)
        for q in b.projectors[i + 1:]:
            np.testing.assert_array_equal(p @ q, np.zeros((5, 5)))


def test_zero_amplitude_no_drive():
    es = solve(REFERENCE_DEVICE, 2.0, 30.0)
    model = rotating_frame(es, DriveParams(11.0, 0.0))
    np.testing.assert_array_equal(model.v_drive, 0)


def test_two_level_singlet_coupling_is_half_omega():
    # bonding and antibonding singlets at eps = 0 split by 2 t_c; pick t_c so that 2 t_c = h nu
    dev = DeviceParams(g_abs=0.382, t_c=HNU11 / 2, t_so_y=0.0, b0=0.0)
    es = solve(dev, 0.0, 0.0)
    model = rotating_frame(es, DriveParams(11.0, 0.8))
    assert abs(model.v_drive[0, 4]) == pytest.approx(0.4, rel=1e-12)
    # the drive-coupled pair is degenerate in the rotating frame
    assert model.h_eff[4, 4].real == pytest.approx(model.h_eff[0, 0].real, abs=1e-9)


def test_t_plus_coupling_scales_with_its_s02_admixture():
    dev = REFERENCE_DEVICE
    es = solve(dev, 2.5, 102.5)
    model = rotating_frame(es, DriveParams(11.0, 0.5))
    tp = int(np.argmax(es.character[:, 4]))
    g = int(np.argmin(es.energies))
    amp = es.s02_amplitudes()
    assert abs(model.v_drive[g, tp]) == pytest.approx(0.5 * abs(amp[g] * amp[tp]), rel=1e-12)
    assert abs(model.v_drive[g, tp]) > 0


def test_t_plus_is_dark_without_spin_orbit():
    dev = REFERENCE_DEVICE.replace(t_so_y=0.0, dBx_perp=0.0, dBy_perp=0.0)
    es = solve(dev, 2.5, 102.5)
    model = rotating_frame(es, DriveParams(11.0, 0.5))
    tp = int(np.argmax(es.character[:, 4]))
    assert np.all(model.v_drive[tp] == 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(-80.0, 150.0), st.floats(0.0, 3.0), st.sampled_from([5.0, 11.0, 20.0]))
def test_selection_rules_and_hermiticity(B, eps, omega, nu):
    es = solve(REFERENCE_DEVICE, B, eps)
    model = rotating_frame(es, DriveParams(nu, omega))
    n = model.bands.band_index
    same = n[:, None] == n[None, :]
    far = np.abs(n[:, None] - n[None, :]) != 1
    assert np.all(model.v_drive[same] == 0)
    assert np.all(model.v_drive[far] == 0)
    np.testing.assert_array_equal(model.v_drive, model.v_drive.conj().T)
    np.testing.assert_array_equal(model.h_eff, model.h_eff.conj().T)
    order = np.argsort(es.energies, kind="stable")
    assert np.all(np.diff(n[order]) >= 0)


def test_multiphoton_ladder_exists():
    es = diag_system([0.0, HNU11, 2 * HNU11, 300.0, 301.0],
                     states=np.full((5, 5), 1 / np.sqrt(5), dtype=complex))
    b = assign_bands(es, 11.0)
    model = build_drive_perturbation(es, b, DriveParams(11.0, 1.0))
    assert abs(model.v_drive[0, 1]) > 0 and abs(model.v_drive[1, 2]) > 0
    assert model.v_drive[0, 2] == 0
