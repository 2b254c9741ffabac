import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlchain.correlations import CorrelationMatrices
from qlchain.errors import NumericError, ValidationError
from qlchain.model import BathConfig, ChainSpec, ordered_chain
from qlchain.observables import (
    bose_einstein,
    chain_energy,
    conductivity_scan,
    fit_temperature,
    heat_flux,
    reconstruct_site_temperatures,
    solve_steady_state,
    write_rows,
)

ASYM = ChainSpec(np.array([1.0, 1.2, 0.9, 1.1, 1.0]), [1.3, 0.7, 1.1, 0.9])


@pytest.fixture(scope="module")
def hot_cold():
    return solve_steady_state(ASYM, BathConfig(2.0, 10.0, 5.0, 2.0))


def test_site_energies_sum_to_chain_energy(hot_cold):
    assert hot_cold.energies().sum() == pytest.approx(chain_energy(hot_cold.real, ASYM), rel=1e-12)


def test_bond_fluxes_uniform_and_positive(hot_cold):
    fl = hot_cold.flux()
    assert fl.J > 0
    assert fl.spread <= 1e-8 * fl.J
    assert fl.G_th == pytest.approx(fl.J / 3.0)


def test_no_flux_in_equilibrium():
    st_ = solve_steady_state(ASYM, BathConfig(2.0, 10.0, 1.7, 1.7))
    assert abs(st_.flux().J) < 1e-11


def test_swap_reverses_flux(hot_cold):
    swapped = solve_steady_state(ASYM, BathConfig(2.0, 10.0, 2.0, 5.0))
    assert swapped.flux().J == pytest.approx(-hot_cold.flux().J, rel=1e-8)


def test_classical_flux_linear_in_difference():
    J = [solve_steady_state(ASYM, BathConfig(1.0, 10.0, Ta, 2.0), classical=True).flux().J for Ta in (3.0, 4.0, 7.0)]
    assert J[1] == pytest.approx(2 * J[0], rel=1e-9)
    assert J[2] == pytest.approx(5 * J[0], rel=1e-9)


def test_nonuniform_flux_is_rejected():
    l = 3
    XP = np.zeros((l, l))
    XP[0, 1], XP[1, 2] = 1.0, 0.5
    corr = CorrelationMatrices(np.eye(l), np.eye(l), XP, basis="real")
    with pytest.raises(NumericError):
        heat_flux(corr, ordered_chain(l))


def test_ground_state_profile_is_cold():
    st_ = solve_steady_state(ordered_chain(4), BathConfig(2.0, 10.0, 0.0, 0.0))
    prof = st_.profile()
    assert np.all(prof.T_R == 0)
    occ = st_.occupations()
    np.testing.assert_allclose(occ.n, 0.0, atol=1e-12)


def test_weak_coupling_equilibrium_occupations():
    T = 0.7
    st_ = solve_steady_state(ordered_chain(5), BathConfig(0.01, 10.0, T, T))
    occ = st_.occupations()
    np.testing.assert_allclose(occ.n, bose_einstein(occ.Omega_eff, T), rtol=0.01)
    assert occ.T_fit == pytest.approx(T, rel=0.01)


def test_profile_between_bath_temperatures(hot_cold):
    T = hot_cold.profile().T_R
    assert np.all((T > 2.0) & (T < 5.0))


@settings(max_examples=60, deadline=None)
@given(w=st.floats(0.1, 5.0), T=st.floats(0.02, 50.0))
def test_site_temperature_inversion(w, T):
    E0 = np.array([w / 2])
    E = E0 / np.tanh(w / (2 * T))
    if E[0] <= E0[0] * (1 + 1e-10):
        return
    assert reconstruct_site_temperatures(E, E0)[0] == pytest.approx(T, rel=1e-7)


def test_energy_below_zero_point_rejected():
    with pytest.raises(NumericError):
        reconstruct_site_temperatures(np.array([0.4]), np.array([0.5]))


@pytest.mark.parametrize("T", [0.05, 0.8, 12.0])
def test_fit_temperature_recovers_bose_einstein(T):
    w = np.linspace(0.5, 3.0, 9)
    assert fit_temperature(w, bose_einstein(w, T)) == pytest.approx(T, rel=1e-9)


def test_csv_round_trip(tmp_path):
    x = np.random.default_rng(3).normal(size=(20, 3))
    p = write_rows(tmp_path / "t.csv", ["a", "b", "c"], [tuple(float(v) for v in r) for r in x])
    with p.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["a", "b", "c"]
    np.testing.assert_array_equal(np.array(rows[1:], dtype=float), x)


def test_conductivity_scan_validation():
    with pytest.raises(ValidationError):
        conductivity_scan(ordered_chain(3), BathConfig(2.0), [1.0, 0.5], 0.1)
    with pytest.raises(ValidationError):
        conductivity_scan(ordered_chain(3), BathConfig(2.0), [1.0], 1.5)
