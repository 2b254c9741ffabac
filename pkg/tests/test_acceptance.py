"""Acceptance criteria 1-11, one pass/fail line each in the terminal summary."""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qlchain.correlations import thermal_chain_state, time_shifted_stationary, transient_correlations
from qlchain.entanglement import assemble_covariance, negativity_profile, symplectic_eigenvalues
from qlchain.ensemble import DisorderSpec, flux_length_scan, interior_slopes, run_ensemble
from qlchain.model import BathConfig, ChainSpec, build_coupling_matrix, onsite_frequencies, ordered_chain
from qlchain.observables import conductivity_scan, solve_steady_state
from qlchain.errors import OracleInconclusive
from qlchain.oracles import (
    classical_explicit_bath,
    compare_correlations,
    fourier_stationary_correlations,
)
from qlchain.observables import heat_flux
from qlchain.response import response_set
from qlchain.spectral import mode_basis

pytestmark = pytest.mark.slow

BATH = BathConfig(2.0, 10.0, 5.0, 2.0)


def record(n, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    assert ok, detail


def test_criterion_1_occupation_fit():
    parts, ok = [], True
    for (Ta, Tb), quoted in (((5.0, 2.0), 3.54513), ((0.5, 0.2), 0.450906)):
        t0 = time.perf_counter()
        T = solve_steady_state(ordered_chain(20), BATH.with_temperatures(Ta, Tb)).occupations().T_fit
        dt = time.perf_counter() - t0
        rel = abs(T / quoted - 1)
        ok &= rel < 0.02 and dt < 300
        parts.append(f"({Ta:g},{Tb:g}) T_fit={T:.7g} vs {quoted} rel {rel:.1e} in {dt:.1f}s")
    record(1, ok, "; ".join(parts))


def test_criterion_2_ordered_flatness():
    parts, ok = [], True
    for Ta, Tb in ((5.0, 2.0), (0.5, 0.2)):
        prof = solve_steady_state(ordered_chain(20), BATH.with_temperatures(Ta, Tb)).profile()
        inner = slice(2, 18)  # sites 3..18
        E, T = prof.E[inner], prof.T_R[inner]
        sE = (E.max() - E.min()) / E.mean()
        sT = (T.max() - T.min()) / T.mean()
        between = bool(np.all((T > Tb) & (T < Ta)))
        warm = T.mean() > 0.5 * (Ta + Tb)
        ok &= sE < 0.02 and sT < 0.02 and between and warm
        parts.append(f"({Ta:g},{Tb:g}) E spread {sE:.2e}, T_R spread {sT:.2e}, T_R mean {T.mean():.4f}")
    record(2, ok, "; ".join(parts))


def test_criterion_3_flux_length_ordered():
    J = np.array([solve_steady_state(ordered_chain(l), BATH).flux().J for l in range(5, 21)])
    spread = (J.max() - J.min()) / J.mean()
    record(3, spread < 0.01, f"l=5..20 relative flux spread {spread:.2e}")


def test_criterion_4_flux_gamma():
    gammas = np.geomspace(0.05, 80.0, 25)
    J = np.array([solve_steady_state(ordered_chain(20), BathConfig(g, 10.0, 5.0, 2.0)).flux().J for g in gammas])
    i = int(np.argmax(J))
    tail = [g * solve_steady_state(ordered_chain(20), BathConfig(g, 10.0, 5.0, 2.0)).flux().J for g in (40.0, 80.0)]
    rel = abs(tail[0] / tail[1] - 1)
    ok = 0 < i < gammas.size - 1 and rel < 0.15
    record(4, ok, f"maximum at gamma~{gammas[i]:.3g} (grid index {i}); J*gamma {tail[0]:.4f} vs {tail[1]:.4f}, rel {rel:.1e}")


def test_criterion_5_conductivity_freeze_out():
    spec = ordered_chain(20)
    plateau = conductivity_scan(spec, BATH, [5.0, 6.0, 7.0, 8.0, 9.0, 10.0], 0.01)
    G = np.array([g for _, g in plateau])
    variation = (G.max() - G.min()) / G.mean()
    G01 = conductivity_scan(spec, BATH, [0.1], 0.01)[0][1]
    suppression = G[-1] / G01
    ends = ChainSpec(onsite_frequencies(20, "ends"), np.ones(19))
    Tm = np.geomspace(0.02, 0.2, 9)
    Ge = np.array([g for _, g in conductivity_scan(ends, BATH, Tm, 0.01)])
    slope = np.polyfit(np.log(Tm), np.log(Ge), 1)[0]
    ok = variation < 0.10 and suppression > 10 and abs(slope - 3.0) <= 0.3
    record(5, ok, f"plateau variation {variation:.2e}; suppression x{suppression:.0f}; ends-only log-log slope {slope:.2f} (3.0 +- 0.3)")


def test_criterion_6_disorder_gradient():
    slopes = {}
    for Ta, Tb in ((5.0, 2.0), (0.5, 0.2)):
        for sym in (False, True):
            res = run_ensemble(DisorderSpec(1.0, 0.2, symmetric=sym), 20, BATH.with_temperatures(Ta, Tb), ("T_R",), k=50, seed=1)
            slopes[Ta, sym] = interior_slopes(res)
    un = slopes[5.0, False]
    z = float(un.mean / un.stderr)
    # the symmetric gradient is about half as steep: unsymmetric / symmetric
    ratios = [float(slopes[Ta, False].mean / slopes[Ta, True].mean) for Ta in (5.0, 0.5)]
    ok = abs(z) > 3 and all(1.5 <= r <= 3 for r in ratios)
    record(6, ok, f"unsymmetric slope {float(un.mean):.4f} +- {float(un.stderr):.4f} (z={z:.1f}); "
           f"unsymmetric/symmetric steepness {ratios[0]:.2f} at (5,2), {ratios[1]:.2f} at (0.5,0.2)")


def test_criterion_7_flux_length_scaling():
    wins = []
    for seed in (0, 1, 2):
        _, fits, _ = flux_length_scan(DisorderSpec(1.0, 0.2, symmetric=True), BATH, [5, 10, 20, 40, 65], k=22, seed=seed)
        lin, sq = fits
        wins.append(sq.residual < lin.residual)
        detail = f"seed {seed}: residual linear {lin.residual:.3g}, sqrt {sq.residual:.3g}"
        wins[-1] = (wins[-1], detail)
    n = sum(w for w, _ in wins)
    record(7, n >= 2, f"sqrt(l) law preferred for {n}/3 seeds (" + "; ".join(d for _, d in wins) + ")")


def _vanishing_temperatures(spec, bath, lo=0.1, hi=2.0, steps=14):
    basis = mode_basis(spec)
    resp = response_set(basis, bath)
    lo_k = np.full(spec.length - 1, lo)
    hi_k = np.full(spec.length - 1, hi)
    for _ in range(steps):
        mid = np.sqrt(lo_k * hi_k)
        cache = {}
        for k, m in enumerate(mid):
            if m not in cache:
                b = bath.with_temperatures(1.1 * m, 0.9 * m)
                cache[m] = negativity_profile(solve_steady_state(spec, b, basis=basis, response=resp).real).N
            if cache[m][k] > 0:
                lo_k[k] = m
            else:
                hi_k[k] = m
    return np.sqrt(lo_k * hi_k)


def test_criterion_8_entanglement_thresholds():
    T0 = _vanishing_temperatures(ordered_chain(20), BATH)
    ends = T0[[0, -1]]
    inner = T0[1:-1]
    ok = np.all(np.abs(ends / 0.45 - 1) <= 0.2) and np.all(np.abs(inner / 0.67 - 1) <= 0.2)
    weak = ordered_chain(20, coupling=1e-6)
    Nmax = max(
        negativity_profile(solve_steady_state(weak, BATH.with_temperatures(1.1 * t, 0.9 * t)).real).N.max()
        for t in np.geomspace(0.1, 2.0, 6)
    )
    ok = ok and Nmax <= 1e-10
    record(8, bool(ok), f"N_1, N_19 vanish at {ends[0]:.3f}, {ends[1]:.3f}; interior cuts at "
           f"{inner.min():.3f}..{inner.max():.3f}; f=1e-6 max N {Nmax:.1e} over T_m in [0.1, 2]")


def test_criterion_9_property_suites():
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    worst_re = -np.inf
    for _ in range(1000):
        l = int(rng.integers(2, 11))
        spec = ChainSpec(rng.uniform(0.3, 2.0, l), rng.uniform(0.2, 2.0, l - 1))
        bath = BathConfig(rng.uniform(0.1, 10.0), rng.uniform(1.0, 100.0))
        worst_re = max(worst_re, float(response_set(mode_basis(spec), bath).poles.real.max()))
    checks = {"poles": worst_re < 0}

    uni, eq, anti, unc, sym, orth = 0.0, 0.0, 0.0, np.inf, np.inf, 0.0
    for _ in range(12):
        l = int(rng.integers(2, 9))
        half = rng.uniform(0.4, 1.6, math.ceil((l - 1) / 2))
        spec = ChainSpec(np.ones(l), np.concatenate([half, half[: (l - 1) // 2][::-1]]))
        g, G = rng.uniform(0.3, 5.0), rng.uniform(2.0, 30.0)
        Ta, Tb = rng.uniform(0.1, 6.0, 2)
        st = solve_steady_state(spec, BathConfig(g, G, Ta, Tb))
        fl = st.flux()
        uni = max(uni, fl.spread / abs(fl.J))
        back = solve_steady_state(spec, BathConfig(g, G, Tb, Ta)).flux().J
        anti = max(anti, abs(back + fl.J) / abs(fl.J))
        eq = max(eq, abs(solve_steady_state(spec, BathConfig(g, G, Ta, Ta)).flux().J))
        ground = st.ground()
        unc = min(unc, float(np.min(np.diag(ground.real.XX) * np.diag(ground.real.PP))))
        sym = min(sym, float(symplectic_eigenvalues(assemble_covariance(st.real)).min()))
        b = st.basis
        C = build_coupling_matrix(spec)
        orth = max(orth, np.abs(b.G.T @ b.G - np.eye(l)).max(),
                   np.abs(b.G @ np.diag(b.frequencies**2) @ b.G.T - C).max() / np.abs(C).max())
    checks.update(uniform=uni <= 1e-8, equilibrium=eq <= 1e-9, antisymmetry=anti <= 1e-9,
                  uncertainty=unc > 0.25, physical=sym >= 1 - 1e-9, basis=orth <= 1e-9)
    dt = time.perf_counter() - t0
    ok = all(checks.values()) and dt < 600
    record(9, ok, f"max Re(lambda) {worst_re:.2e} over 1000 draws; bond spread {uni:.1e}; J(T,T) {eq:.1e}; "
           f"swap {anti:.1e}; min <X^2><P^2> {unc:.3f}; min nu {sym:.6f}; basis {orth:.1e}; {dt:.0f}s")


def test_criterion_10_oracle_triangle():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(10):
        l = int(rng.integers(2, 11))
        spec = ChainSpec(rng.uniform(0.5, 1.5, l), rng.uniform(0.5, 1.5, l - 1))
        bath = BathConfig(rng.uniform(0.3, 3.0), rng.uniform(2.0, 15.0), rng.uniform(0, 5), rng.uniform(0, 5))
        pipe = solve_steady_state(spec, bath).real
        worst = max(worst, compare_correlations(pipe, fourier_stationary_correlations(spec, bath)))
    explicit, done, skipped = 0.0, 0, 0
    while done < 3:
        l = int(rng.integers(2, 7))
        spec = ChainSpec(rng.uniform(0.5, 1.5, l), rng.uniform(0.5, 1.5, l - 1))
        bath = BathConfig(rng.uniform(0.3, 3.0), rng.uniform(2.0, 15.0), rng.uniform(80, 150), rng.uniform(50, 80))
        try:
            run = classical_explicit_bath(spec, bath)
        except OracleInconclusive:
            # relaxation slower than any affordable discrete bath can resolve
            skipped += 1
            assert skipped <= 10
            continue
        done += 1
        cl = solve_steady_state(spec, bath, classical=True).real
        dJ = abs(heat_flux(run.correlations, spec, check=False).J / heat_flux(cl, spec).J - 1)
        dP = float(np.abs(np.diag(run.correlations.PP) / np.diag(cl.PP) - 1).max())
        explicit = max(explicit, dJ, dP)
    record(10, worst <= 1e-6 and explicit <= 0.03,
           f"Fourier vs pipeline max {worst:.1e} over 10 configs; explicit bath max rel {explicit:.1e} over 3 configs "
           f"({skipped} slow-relaxing draws inconclusive and redrawn)")


def test_criterion_11_transient():
    spec, bath = ordered_chain(4), BathConfig(0.5, 10.0, 5.0, 2.0)
    basis = mode_basis(spec)
    resp = response_set(basis, bath)
    from qlchain.correlations import stationary_correlations, to_real_space

    st = to_real_space(stationary_correlations(resp), basis)
    late = to_real_space(transient_correlations(resp, 400.0, thermal_chain_state(basis, 0.0)), basis)
    gap = float(np.abs(np.diag(late.PP) / np.diag(st.PP) - 1).max())
    q0 = np.diag(time_shifted_stationary(resp, 0.0).QQ)
    qt = np.diag(time_shifted_stationary(resp, 400.0).QQ)
    decay = float(np.max(np.abs(qt) / q0))
    record(11, gap <= 1e-6 and decay < 1e-6, f"<P_n^2>(t=400) vs stationary rel {gap:.1e}; autocorrelation ratio at tau=400 {decay:.1e}")
