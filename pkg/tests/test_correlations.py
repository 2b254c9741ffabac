import math

import numpy as np
import pytest
from scipy.integrate import dblquad, quad
from scipy.linalg import solve_continuous_lyapunov

from qlchain.correlations import (
    CorrelationMatrices,
    NoiseKernelSpec,
    finite_time_kernel,
    omega_integral_pair,
    stationary_correlations,
    thermal_chain_state,
    time_shifted_stationary,
    to_normal_modes,
    to_real_space,
    transient_correlations,
    transient_pair_integral,
)
from qlchain.model import BathConfig, ChainSpec, build_coupling_matrix, ordered_chain
from qlchain.oracles import lyapunov_stationary, lyapunov_transient
from qlchain.response import response_set
from qlchain.spectral import mode_basis


def _setup(spec, bath):
    b = mode_basis(spec)
    return b, response_set(b, bath)


# --- closed-form double time integral, checked before anything is built on it ----


def _random_tuples(n=20):
    rng = np.random.default_rng(2024)
    for _ in range(n):
        lam = complex(-rng.uniform(0.05, 3), rng.uniform(-3, 3) * rng.integers(0, 2))
        lam2 = complex(-rng.uniform(0.05, 3), rng.uniform(-3, 3) * rng.integers(0, 2))
        yield lam, lam2, rng.uniform(0, 4), rng.uniform(0.1, 4)


@pytest.mark.parametrize("lam, lam2, w, t", list(_random_tuples()))
def test_finite_time_kernel_against_2d_quadrature(lam, lam2, w, t):
    def f(t2, t1, part):
        v = np.exp(lam * (t - t1)) * np.exp(lam2 * (t - t2)) * math.cos(w * (t1 - t2))
        return v.real if part == 0 else v.imag

    kw = dict(epsabs=1e-13, epsrel=1e-12)
    ref = dblquad(f, 0, t, 0, t, args=(0,), **kw)[0] + 1j * dblquad(f, 0, t, 0, t, args=(1,), **kw)[0]
    assert abs(finite_time_kernel(lam, lam2, w, t) - ref) < 1e-8 * max(1, abs(ref))


def _half_line(f):
    pts = np.concatenate([[0.0], np.linspace(0.5, 20, 40), np.geomspace(25, 1e6, 80)])
    re = sum(quad(lambda x: f(x).real, a, b, limit=400, epsabs=1e-15, epsrel=1e-13)[0] for a, b in zip(pts, pts[1:]))
    im = sum(quad(lambda x: f(x).imag, a, b, limit=400, epsabs=1e-15, epsrel=1e-13)[0] for a, b in zip(pts, pts[1:]))
    return re + 1j * im


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("classical", [True, False])
@pytest.mark.parametrize("lam, lam2", [(-0.3 + 1.2j, -0.7), (-0.05 + 2.0j, -0.05 - 2.0j), (-1.5, -0.2)])
def test_transient_pair_integral(lam, lam2, classical):
    k = NoiseKernelSpec(2.0, 10.0, 3.0, classical)
    t = 2.5
    ref = _half_line(lambda x: k.spectrum(x) * finite_time_kernel(lam, lam2, x, t))
    assert transient_pair_integral(lam, lam2, k, t) == pytest.approx(ref, rel=1e-7)


# --- stationary pair integral --------------------------------------------------------


def test_pair_integral_symmetry():
    k = NoiseKernelSpec(1.0, 10.0, 0.7)
    a, b = -0.4 + 1.1j, -1.3
    assert omega_integral_pair(a, b, k) == pytest.approx(omega_integral_pair(b, a, k), rel=1e-12)


@pytest.mark.parametrize("a", [0.1, 1.0, 7.0])
def test_pair_integral_classical_closed_form(a):
    gamma, cutoff, T = 2.0, 10.0, 100.0
    k = NoiseKernelSpec(gamma, cutoff, T, classical=True)
    expected = gamma * T * cutoff / (a * (a + cutoff))
    got = omega_integral_pair(-a, -a, k)
    assert got.real == pytest.approx(expected, rel=1e-10)
    assert abs(got.imag) < 1e-12


def test_pair_integral_zero_temperature_log_grid():
    k = NoiseKernelSpec(1.0, 1e6, 0.0)
    w = np.geomspace(1e-12, 1e12, 1_000_001)
    f = k.spectrum(w) * (1 + w * w) / (1 + w * w) ** 2
    ref = np.trapezoid(f * w, np.log(w))
    assert omega_integral_pair(-1.0, -1.0, k).real == pytest.approx(ref, rel=1e-6)


# --- stationary correlations -------------------------------------------------------


def test_ground_state_uncertainty():
    b, r = _setup(ordered_chain(6), BathConfig(2.0, 10.0, 0.0, 0.0))
    c = stationary_correlations(r)
    q = np.diag(c.QQ)
    assert np.all(q > 0)
    assert np.all(np.diag(c.YY) * q > 0.25)


def test_weak_coupling_equilibrium():
    T = 0.8
    b, r = _setup(ordered_chain(5), BathConfig(0.01, 10.0, T, T))
    c = stationary_correlations(r)
    Om = b.frequencies
    np.testing.assert_allclose(np.diag(c.QQ), Om / 2 / np.tanh(Om / (2 * T)), rtol=0.01)


def test_classical_equipartition():
    b, r = _setup(ChainSpec(np.ones(4), [1.2, 0.8, 1.1]), BathConfig(1.0, 10.0, 100.0, 100.0))
    c = stationary_correlations(r)
    np.testing.assert_allclose(np.diag(c.QQ), 100.0, rtol=0.02)


def test_stationary_structure():
    spec = ChainSpec(np.ones(6), [1.1, 0.9, 1.3, 0.8, 1.0])
    b, r = _setup(spec, BathConfig(2.0, 10.0, 3.0, 0.5))
    c = stationary_correlations(r)
    np.testing.assert_allclose(c.YY, c.YY.T, atol=1e-14)
    np.testing.assert_allclose(c.QQ, c.QQ.T, atol=1e-14)
    assert np.all(np.diag(c.YY) > 0) and np.all(np.diag(c.QQ) > 0)
    assert np.abs(np.diag(c.YQ)).max() < 1e-10 * np.abs(c.YY).max()


def test_quadrature_tolerance_halving():
    spec = ChainSpec(np.ones(5), [1.1, 0.9, 1.3, 0.8])
    b, r = _setup(spec, BathConfig(2.0, 10.0, 3.0, 0.5))
    a = stationary_correlations(r)
    h = stationary_correlations(r, tol_scale=0.5)
    assert np.abs(a.YY - h.YY).max() < 1e-8 * np.abs(a.YY).max()


def test_equal_temperature_parity_and_mirror():
    b, r = _setup(ordered_chain(6), BathConfig(2.0, 10.0, 1.5, 1.5))
    c = stationary_correlations(r)
    even, odd = b.family("even"), b.family("odd")
    assert np.abs(c.YY[np.ix_(even, odd)]).max() < 1e-12
    x = to_real_space(c, b)
    assert x.XX[0, 0] == pytest.approx(x.XX[-1, -1], rel=1e-12)


def test_basis_round_trip():
    b, r = _setup(ordered_chain(2), BathConfig(2.0, 10.0, 1.0, 0.5))
    c = stationary_correlations(r)
    back = to_normal_modes(to_real_space(c, b), b)
    for name in ("YY", "QQ", "YQ"):
        np.testing.assert_allclose(getattr(back, name), getattr(c, name), atol=1e-12)
    assert np.trace(to_real_space(c, b).PP) == pytest.approx(np.trace(c.QQ), rel=1e-13)


def test_classical_stationary_matches_lyapunov():
    spec = ChainSpec(np.ones(5), [1.1, 0.9, 1.3, 0.8])
    bath = BathConfig(0.7, 8.0, 4.0, 1.0)
    b, r = _setup(spec, bath)
    c = to_real_space(stationary_correlations(r, classical=True), b)
    ref = lyapunov_stationary(spec, bath)
    for x, y in ((c.XX, ref.XX), (c.PP, ref.PP), (c.XP, ref.XP)):
        np.testing.assert_allclose(x, y, atol=1e-10 * np.abs(ref.PP).max())


def test_markovian_limit():
    spec = ordered_chain(4)
    gamma, T = 0.5, 100.0
    b, r = _setup(spec, BathConfig(gamma, 1000.0, T, T / 2))
    c = to_real_space(stationary_correlations(r, classical=True), b)
    # white-noise Langevin chain: dP_end = -gamma P_end dt + sqrt(2 gamma T) dW
    l = spec.length
    A = np.zeros((2 * l, 2 * l))
    A[:l, l:] = np.eye(l)
    A[l:, :l] = -build_coupling_matrix(spec)
    A[l, l] = A[2 * l - 1, 2 * l - 1] = -gamma
    D = np.zeros((2 * l, 2 * l))
    D[l, l], D[2 * l - 1, 2 * l - 1] = 2 * gamma * T, 2 * gamma * T / 2
    S = solve_continuous_lyapunov(A, -D)
    np.testing.assert_allclose(np.diag(c.PP), np.diag(S[l:, l:]), rtol=0.02)
    np.testing.assert_allclose(np.diag(c.XX), np.diag(S[:l, :l]), rtol=0.02)


# --- transient and lagged correlations --------------------------------------------------


FIG10 = (ordered_chain(4), BathConfig(0.5, 10.0, 5.0, 2.0))


def test_transient_zero_time_is_initial():
    b, r = _setup(*FIG10)
    init = thermal_chain_state(b, 0.3)
    c = transient_correlations(r, 0.0, init)
    np.testing.assert_array_equal(c.YY, init.YY)
    np.testing.assert_array_equal(c.QQ, init.QQ)


def test_transient_short_time_continuity():
    b, r = _setup(*FIG10)
    init = thermal_chain_state(b, 0.3)
    c = transient_correlations(r, 1e-6, init)
    np.testing.assert_allclose(c.QQ, init.QQ, atol=1e-5)


def test_transient_reaches_stationary():
    b, r = _setup(*FIG10)
    st = stationary_correlations(r)
    t = 200 / abs(r.poles.real.max())
    c = transient_correlations(r, t, thermal_chain_state(b, 0.0))
    np.testing.assert_allclose(c.QQ, st.QQ, atol=1e-8 * np.abs(st.QQ).max())
    np.testing.assert_allclose(c.YY, st.YY, atol=1e-8 * np.abs(st.YY).max())


@pytest.mark.parametrize("t", [0.3, 2.0, 10.0])
def test_classical_transient_matches_lyapunov(t):
    spec, bath = FIG10
    b, r = _setup(spec, bath)
    init = thermal_chain_state(b, 0.0)
    init = CorrelationMatrices(np.diag(1.0 / b.frequencies**2), np.eye(4), np.zeros((4, 4)), 0.0, "mode")
    c = to_real_space(transient_correlations(r, t, init, classical=True), b)
    ref = lyapunov_transient(spec, bath, t, to_real_space(init, b))
    for x, y in ((c.XX, ref.XX), (c.PP, ref.PP), (c.XP, ref.XP)):
        np.testing.assert_allclose(x, y, atol=1e-10 * np.abs(ref.PP).max())


def test_lag_zero_is_stationary():
    b, r = _setup(*FIG10)
    a = stationary_correlations(r)
    c = time_shifted_stationary(r, 0.0)
    np.testing.assert_allclose(np.diag(c.QQ), np.diag(a.QQ), rtol=1e-14)


def test_lagged_decay():
    b, r = _setup(*FIG10)
    q0 = np.diag(stationary_correlations(r).QQ)
    tau = 400 / abs(r.poles.real.max())
    c = time_shifted_stationary(r, tau)
    assert np.all(np.abs(np.diag(c.QQ)) < 1e-6 * q0)


def test_lagged_oscillation_frequency():
    b, r = _setup(ordered_chain(3), BathConfig(0.1, 10.0, 1.0, 1.0))
    for i, Om in enumerate(b.frequencies):
        taus = np.linspace(0, 20 * 2 * np.pi / Om, 1200)
        q = np.array([time_shifted_stationary(r, t).QQ[i, i] for t in taus[::4]])
        crossings = np.sum(np.signbit(q[1:]) != np.signbit(q[:-1]))
        est = crossings * np.pi / taus[::4][-1]
        assert est == pytest.approx(Om, rel=0.1)
