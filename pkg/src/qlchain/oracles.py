"""Independent verification routes.

None of these use the pole expansion. The Fourier solver integrates the
frequency-domain resolvent of the chain with the baths eliminated, the
Lyapunov solver uses a Markovian embedding of the Drude kernel (classical
noise only), and the explicit-bath run keeps thousands of discrete bath
oscillators and propagates them exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import expm, solve_continuous_lyapunov

from .correlations import CorrelationMatrices
from .errors import OracleDisagreement, OracleInconclusive, QuadratureError, ValidationError
from .model import BathConfig, ChainSpec, build_coupling_matrix

__all__ = [
    "ExplicitBathRun",
    "TriangleReport",
    "fourier_stationary_correlations",
    "lyapunov_stationary",
    "lyapunov_transient",
    "classical_explicit_bath",
    "compare_correlations",
    "verify_triangle",
]


def _density(w, gamma, cutoff, T, classical):
    # written out separately from correlations.spectral_density on purpose
    w = np.abs(w)
    lor = cutoff * cutoff / (cutoff * cutoff + w * w)
    if classical:
        return 2.0 * gamma * T * lor / np.pi
    if T == 0:
        return gamma * w * lor / np.pi
    x = w / (2.0 * T)
    thermal = 2.0 * T * (1.0 + x * x / 3.0) if x < 1e-6 else w / math.tanh(x)
    return gamma * lor * thermal / np.pi


def fourier_stationary_correlations(
    spec: ChainSpec, bath: BathConfig, classical: bool = False, epsabs: float = 1e-12, epsrel: float = 1e-11
) -> CorrelationMatrices:
    """Real-space stationary correlations from the frequency-domain resolvent.

    ``R(w) = [C - w^2 - i w gamma Gamma / (Gamma - i w) P_ends]^-1``; each bath
    contributes ``S(w) Re(r r^H)`` to XX, ``w^2`` times that to PP and
    ``-S(w) w Im(r r^H)`` to XP, integrated over ``w > 0``.
    """
    C = build_coupling_matrix(spec)
    l = spec.length
    ends = ((0, bath.Ta), (l - 1, bath.Tb))
    eye = np.eye(l)

    def integrand(w):
        kern = bath.gamma * bath.cutoff / (bath.cutoff - 1j * w)
        D = C - w * w * eye + 0j
        D[0, 0] -= 1j * w * kern
        D[-1, -1] -= 1j * w * kern
        cols = np.linalg.solve(D, eye[:, [0, l - 1]])
        out = np.zeros((3, l, l))
        for c, (_, T) in enumerate(ends):
            r = cols[:, c]
            o = np.outer(r, r.conj())
            S = _density(w, bath.gamma, bath.cutoff, T, classical)
            out[0] += S * o.real
            out[1] += S * w * w * o.real
            out[2] -= S * w * o.imag
        return out

    freqs = np.sqrt(np.linalg.eigvalsh(C))
    top = 50.0 * max(bath.cutoff, freqs[-1])
    total = np.zeros((3, l, l))
    for lo, hi in ((0.0, top), (top, np.inf)):
        pts = freqs if hi == top else None
        val, err = quad_vec(integrand, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=20000, points=pts)
        if not np.isfinite(err) or err > 1e3 * max(epsabs, epsrel * np.abs(val).max()):
            raise QuadratureError(f"Fourier oracle did not converge on [{lo}, {hi}]: error {err:.3e}")
        total += val
    return CorrelationMatrices(total[0], total[1], total[2], basis="real")


def _embedding(spec: ChainSpec, bath: BathConfig):
    """Drift and diffusion of (X, P, z_a, z_b) with dz = -Gamma z dt + gamma Gamma dP_end."""
    C = build_coupling_matrix(spec)
    l = spec.length
    gG, G = bath.gamma * bath.cutoff, bath.cutoff
    n = 2 * l + 2
    A = np.zeros((n, n))
    A[:l, l : 2 * l] = np.eye(l)
    A[l : 2 * l, :l] = -C
    A[l, 2 * l] = A[2 * l - 1, 2 * l + 1] = -1.0
    A[2 * l, l] = A[2 * l + 1, 2 * l - 1] = gG
    A[2 * l, 2 * l] = A[2 * l + 1, 2 * l + 1] = -G
    D = np.zeros((n, n))
    D[2 * l, 2 * l] = 2 * G * gG * bath.Ta
    D[2 * l + 1, 2 * l + 1] = 2 * G * gG * bath.Tb
    return A, D


def _chain_block(S, l, time=math.inf):
    return CorrelationMatrices(S[:l, :l], S[l : 2 * l, l : 2 * l], S[:l, l : 2 * l], time=time, basis="real")


def lyapunov_stationary(spec: ChainSpec, bath: BathConfig) -> CorrelationMatrices:
    """Classical stationary state of the Markovian embedding."""
    A, D = _embedding(spec, bath)
    return _chain_block(solve_continuous_lyapunov(A, -D), spec.length)


def lyapunov_transient(spec: ChainSpec, bath: BathConfig, t: float, initial: CorrelationMatrices) -> CorrelationMatrices:
    """Classical transient from a real-space chain state with the baths starting thermal and uncorrelated.

    The auxiliary variables start at ``gamma Gamma X_end(0)`` plus thermal
    noise, which is the initial-slip convention of the main pipeline.
    """
    A, D = _embedding(spec, bath)
    l = spec.length
    gG = bath.gamma * bath.cutoff
    n = 2 * l + 2
    S0 = np.zeros((n, n))
    S0[:l, :l], S0[l : 2 * l, l : 2 * l] = initial.XX, initial.PP
    S0[:l, l : 2 * l] = initial.XP
    S0[l : 2 * l, :l] = initial.XP.T
    S0[2 * l, 2 * l], S0[2 * l + 1, 2 * l + 1] = gG * bath.Ta, gG * bath.Tb
    L = np.eye(n)
    L[2 * l, 0] = L[2 * l + 1, l - 1] = gG
    S0 = L @ S0 @ L.T
    Sst = solve_continuous_lyapunov(A, -D)
    E = expm(A * t)
    return _chain_block(E @ S0 @ E.T + Sst - E @ Sst @ E.T, l, t)


@dataclass(frozen=True)
class ExplicitBathRun:
    """Result of the discrete-bath simulation, averaged over the late window."""

    N: int
    delta: float
    horizon: float
    samples: int | None
    times: np.ndarray
    correlations: CorrelationMatrices
    trend: float

    @property
    def recurrence_time(self) -> float:
        return 2 * math.pi / self.delta


def _avg_cos(w, t1, t2):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (np.sin(w * t2) - np.sin(w * t1)) / (w * (t2 - t1))
    return np.where(np.abs(w) * (t2 - t1) < 1e-9, 1.0, out)


def _avg_sin(w, t1, t2):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (np.cos(w * t1) - np.cos(w * t2)) / (w * (t2 - t1))
    return np.where(np.abs(w) * (t2 - t1) < 1e-9, 0.0, out)


def _moment_window(Vc, Om, Sqq, Spp, t1, t2, chunk=512):
    """Exact window average of chain second moments under free normal-mode motion.

    Products of cos/sin of two mode phases are averaged in closed form; rows
    of the mode-space covariances are processed in chunks to bound memory.
    """
    l = Vc.shape[0]
    out = np.zeros((3, l, l))
    for a0 in range(0, Om.size, chunk):
        a = slice(a0, a0 + chunk)
        Oa = Om[a, None]
        d, s = Oa - Om[None, :], Oa + Om[None, :]
        cc = 0.5 * (_avg_cos(d, t1, t2) + _avg_cos(s, t1, t2))
        ss = 0.5 * (_avg_cos(d, t1, t2) - _avg_cos(s, t1, t2))
        cs = 0.5 * (_avg_sin(s, t1, t2) - _avg_sin(d, t1, t2))
        sc = 0.5 * (_avg_sin(s, t1, t2) + _avg_sin(d, t1, t2))
        Va = Vc[:, a]
        q, p = Sqq[a], Spp[a]
        out[0] += Va @ (q * cc + p * ss / (Oa * Om)) @ Vc.T
        out[1] += Va @ (q * ss * (Oa * Om) + p * cc) @ Vc.T
        out[2] += Va @ (-q * cs * Om + p * sc / Oa) @ Vc.T
    return out


_SETTLE = 6.0
_WINDOW_START = 0.45  # window [horizon / 2, horizon] with horizon = 0.9 t_rec


def classical_explicit_bath(
    spec: ChainSpec,
    bath: BathConfig,
    N: int | None = None,
    delta: float | None = None,
    horizon: float | None = None,
    samples: int | None = None,
    seed: int = 0,
    T_chain: float | None = None,
    n_times: int = 400,
    trend_tol: float = 0.01,
    N_max: int = 3000,
) -> ExplicitBathRun:
    """Chain plus ``N`` oscillators per bath with ``w_k = k delta`` and Drude-Ullersma couplings.

    The coupled system is diagonalized once and propagated exactly. With
    ``samples=None`` the Gaussian moments are propagated (the limit of
    infinitely many samples); otherwise ``samples`` classical initial states
    are drawn. Correlations are averaged over ``t in [horizon/2, horizon]``.

    The window has to start after the chain has relaxed. The slowest decay
    rate of the Markovian embedding fixes how small ``delta`` must be; with
    ``N=None`` the bath is sized for that (at least 2000 modes, spectrum up to
    8 Gamma). If this needs more than ``N_max`` modes per side, or an explicit
    ``N``/``delta`` is too coarse, OracleInconclusive is raised before any
    work is done.
    """
    l = spec.length
    rate = -np.linalg.eigvals(_embedding(spec, bath)[0]).real.max()
    # covariance transients decay like exp(-2 rate t); start the window at exp(-12)
    settle = _SETTLE / rate
    if N is None:
        need = 2 * math.pi * _WINDOW_START / settle if horizon is None else math.inf
        N = max(2000, math.ceil(8.0 * bath.cutoff / min(need, 8.0 * bath.cutoff / 2000)))
        if N > N_max:
            raise OracleInconclusive(
                f"relaxation time {1 / rate:.3g} needs {N} bath modes per side (limit {N_max})"
            )
    if N < 1:
        raise ValidationError("N must be positive")
    delta = 8.0 * bath.cutoff / N if delta is None else float(delta)
    if N * delta < 4 * bath.cutoff:
        raise ValidationError(f"bath spectrum ends at {N * delta:g}, too close to the cutoff {bath.cutoff:g}")
    t_rec = 2 * math.pi / delta
    horizon = 2 * _WINDOW_START * t_rec if horizon is None else float(horizon)
    if horizon >= t_rec:
        raise ValidationError(f"horizon {horizon:g} reaches the recurrence time {t_rec:g}")
    if horizon / 2 < settle:
        raise OracleInconclusive(
            f"window starts at t = {horizon / 2:.3g} but the chain needs {settle:.3g} to relax; use a finer bath"
        )
    T_chain = 0.5 * (bath.Ta + bath.Tb) if T_chain is None else T_chain

    wk = delta * np.arange(1, N + 1)
    ck = np.sqrt(2 * bath.gamma * wk**2 * delta / np.pi * bath.cutoff**2 / (wk**2 + bath.cutoff**2))
    n = l + 2 * N
    C = build_coupling_matrix(spec)
    K = np.zeros((n, n))
    K[:l, :l] = C
    counter = np.sum(ck**2 / wk**2)
    for end, sl in ((0, slice(l, l + N)), (l - 1, slice(l + N, n))):
        K[end, end] += counter
        idx = np.arange(sl.start, sl.stop)
        K[idx, idx] = wk**2
        K[end, idx] = K[idx, end] = -ck
    w2, V = np.linalg.eigh(K)
    if w2[0] <= 0:
        raise OracleInconclusive("explicit-bath Hamiltonian is not positive definite")
    Om = np.sqrt(w2)

    varx = np.concatenate([np.zeros(l), bath.Ta / wk**2, bath.Tb / wk**2])
    varp = np.concatenate([np.full(l, T_chain), np.full(N, bath.Ta), np.full(N, bath.Tb)])
    Xc0 = T_chain * np.linalg.inv(C)

    Vc = V[:l]
    lo, hi = horizon / 2, horizon
    if samples is None:
        Vb = V[l:]
        Sqq = (V[:l].T @ Xc0 @ V[:l]) + (Vb.T * varx[l:]) @ Vb
        Spp = (V.T * varp) @ V
        first = _moment_window(Vc, Om, Sqq, Spp, lo, 0.5 * (lo + hi))
        second = _moment_window(Vc, Om, Sqq, Spp, 0.5 * (lo + hi), hi)
        times = np.array([lo, hi])
    else:
        rng = np.random.default_rng(seed)
        x0 = np.zeros((n, samples))
        x0[:l] = np.linalg.cholesky(Xc0) @ rng.standard_normal((l, samples))
        x0[l:] = np.sqrt(varx[l:])[:, None] * rng.standard_normal((2 * N, samples))
        p0 = np.sqrt(varp)[:, None] * rng.standard_normal((n, samples))
        q0, pi0 = V.T @ x0, V.T @ p0
        times = np.linspace(lo, hi, n_times)
        acc = np.zeros((n_times, 3, l, l))
        for i, t in enumerate(times):
            c, s = np.cos(Om * t), np.sin(Om * t)
            X = (Vc * c) @ q0 + (Vc * (s / Om)) @ pi0
            P = -(Vc * (Om * s)) @ q0 + (Vc * c) @ pi0
            acc[i] = X @ X.T, P @ P.T, X @ P.T
        acc /= samples
        half = n_times // 2
        first, second = acc[:half].mean(axis=0), acc[half:].mean(axis=0)
    scale = max(np.abs(np.diagonal(first[0])).max(), np.abs(np.diagonal(first[1])).max())
    trend = float(np.abs(first[:2] - second[:2]).max() / scale)
    if trend > trend_tol:
        raise OracleInconclusive(f"window means drift by {trend:.2%}; horizon too short or recurrence reached")
    mean = 0.5 * (first + second)
    corr = CorrelationMatrices(mean[0], mean[1], mean[2], basis="real")
    return ExplicitBathRun(N, delta, horizon, samples, times, corr, trend)


def compare_correlations(a: CorrelationMatrices, b: CorrelationMatrices) -> float:
    """Largest entrywise difference, relative to each block's natural scale.

    XX and PP are scaled by their largest entry, XP by
    ``sqrt(max <X^2> max <P^2>)`` since it can vanish identically.
    """
    sx = max(np.abs(a.XX).max(), np.abs(b.XX).max())
    sp = max(np.abs(a.PP).max(), np.abs(b.PP).max())
    worst = 0.0
    for x, y, scale in ((a.XX, b.XX, sx), (a.PP, b.PP, sp), (a.XP, b.XP, math.sqrt(sx * sp))):
        worst = max(worst, float(np.abs(x - y).max() / max(scale, 1e-300)))
    return worst


@dataclass(frozen=True)
class TriangleReport:
    fourier: float
    lyapunov: float
    explicit_flux: float
    explicit_pp: float
    tol_fourier: float
    tol_explicit: float
    skip_reason: str = ""

    @property
    def explicit_skipped(self) -> bool:
        return math.isnan(self.explicit_flux)

    @property
    def passed(self) -> bool:
        ok = self.fourier <= self.tol_fourier and self.lyapunov <= self.tol_fourier
        if not self.explicit_skipped:
            ok = ok and self.explicit_flux <= self.tol_explicit and self.explicit_pp <= self.tol_explicit
        return ok

    def lines(self) -> list[str]:
        out = [
            f"fourier vs pipeline      {self.fourier:.3e} (tol {self.tol_fourier:g})",
            f"lyapunov vs pipeline     {self.lyapunov:.3e} (tol {self.tol_fourier:g})",
        ]
        if self.explicit_skipped:
            return out + [f"explicit bath            skipped ({self.skip_reason})"]
        return out + [
            f"explicit bath flux       {self.explicit_flux:.3e} (tol {self.tol_explicit:g})",
            f"explicit bath <P^2>      {self.explicit_pp:.3e} (tol {self.tol_explicit:g})",
        ]


def verify_triangle(
    spec: ChainSpec,
    bath: BathConfig,
    classical_bath: BathConfig | None = None,
    tol_fourier: float = 1e-6,
    tol_explicit: float = 0.03,
    N: int | None = None,
    raise_on_fail: bool = False,
    max_explicit_length: int = 6,
) -> TriangleReport:
    """Quantum pipeline vs Fourier; classical pipeline vs Lyapunov and explicit bath.

    ``classical_bath`` defaults to ``bath`` with temperatures raised so that
    both exceed 50. The explicit-bath leg runs only up to
    ``max_explicit_length`` sites, and is skipped (with the reason recorded)
    when the chain relaxes too slowly to settle before the discrete bath
    recurs.
    """
    from .observables import heat_flux, solve_steady_state

    pipe = solve_steady_state(spec, bath).real
    d_fourier = compare_correlations(pipe, fourier_stationary_correlations(spec, bath))

    if classical_bath is None:
        lift = 50.0 / max(min(bath.Ta, bath.Tb), 1e-300)
        lift = max(lift, 1.0)
        classical_bath = bath.with_temperatures(max(bath.Ta * lift, 100.0), max(bath.Tb * lift, 50.0))
    cl = solve_steady_state(spec, classical_bath, classical=True).real
    d_lyap = compare_correlations(cl, lyapunov_stationary(spec, classical_bath))

    skip = ""
    if spec.length > max_explicit_length:
        skip = f"chain longer than {max_explicit_length} sites"
    else:
        try:
            run = classical_explicit_bath(spec, classical_bath, N=N)
        except OracleInconclusive as exc:
            skip = f"inconclusive: {exc}"
    if skip:
        rep = TriangleReport(d_fourier, d_lyap, math.nan, math.nan, tol_fourier, tol_explicit, skip)
        if raise_on_fail and not rep.passed:
            raise OracleDisagreement("; ".join(rep.lines()))
        return rep
    J_pipe = heat_flux(cl, spec, check=False).J
    J_exp = heat_flux(run.correlations, spec, check=False).J
    if classical_bath.Ta != classical_bath.Tb:
        d_flux = abs(J_exp - J_pipe) / abs(J_pipe)
    else:
        d_flux = abs(J_exp - J_pipe) / float(np.diag(cl.PP).max())
    d_pp = float(np.abs(np.diag(run.correlations.PP) / np.diag(cl.PP) - 1).max())

    rep = TriangleReport(d_fourier, d_lyap, d_flux, d_pp, tol_fourier, tol_explicit)
    if raise_on_fail and not rep.passed:
        raise OracleDisagreement("; ".join(rep.lines()))
    return rep
