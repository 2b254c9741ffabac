"""Symmetrized two-point correlations of the chain coordinates.

With ``F_j(t) = sum_k R_jk exp(lambda_k t)`` the double time integral over the
noise kernel is done analytically, which leaves one frequency integral per pole
pair:

    I_kk'(tau) = 1/2 int_{-inf}^{inf} S(w) exp(i w tau) / ((lambda_k + i w)(lambda_k' - i w)) dw
               = [P(lambda_k, tau) + P(lambda_k', -tau)] / (2 (lambda_k + lambda_k'))

    P(z, tau) = int_{-inf}^{inf} S(w) exp(i w tau) / (z + i w) dw

so only one quadrature per pole is needed. ``S`` is even in ``w``. For weakly
damped poles the integrand of ``P`` is nearly singular at ``w = |Im z|``; the
value ``S(|Im z|)`` times the singular factor is subtracted on a window around
that point and integrated in closed form (exponential integrals).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.special import exp1

from . import kernels
from .errors import POLICY, NumericError, QuadratureError, ValidationError
from .model import BathConfig
from .response import ResponseSet
from .spectral import ModeBasis

__all__ = [
    "NoiseKernelSpec",
    "CorrelationMatrices",
    "spectral_density",
    "pole_integral",
    "omega_integral_pair",
    "finite_time_kernel",
    "transient_pair_integral",
    "pair_integrals",
    "stationary_correlations",
    "time_shifted_stationary",
    "transient_correlations",
    "thermal_chain_state",
    "to_real_space",
    "to_normal_modes",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseKernelSpec:
    """Parameters of one bath's symmetrized noise kernel."""

    gamma: float
    cutoff: float
    T: float
    classical: bool = False

    def __post_init__(self):
        if not (self.gamma > 0 and self.cutoff > 0 and self.T >= 0):
            raise ValidationError(f"invalid noise kernel {self}")

    @classmethod
    def from_bath(cls, bath: BathConfig, side: str, classical: bool = False) -> "NoiseKernelSpec":
        T = {"a": bath.Ta, "b": bath.Tb}[side]
        return cls(bath.gamma, bath.cutoff, T, classical)

    def spectrum(self, w):
        return spectral_density(w, self.gamma, self.cutoff, self.T, self.classical)


def spectral_density(w, gamma: float, cutoff: float, T: float, classical: bool = False):
    """``S(w) = (gamma / pi) w Gamma^2 / (Gamma^2 + w^2) coth(w / 2T)``, even in w.

    ``classical`` replaces ``w coth(w / 2T)`` by ``2T``.
    """
    w = np.abs(np.asarray(w, dtype=float))
    drude = cutoff**2 / (cutoff**2 + w**2)
    if classical:
        return 2.0 * gamma * T / np.pi * drude
    if T == 0:
        return gamma / np.pi * w * drude
    x = w / (2.0 * T)
    small = x < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        wcoth = np.where(small, 2.0 * T * (1.0 + x * x / 3.0), w / np.tanh(np.where(small, 1.0, x)))
    return gamma / np.pi * drude * wcoth


@dataclass(frozen=True)
class CorrelationMatrices:
    """Symmetrized equal-time (or lagged) correlations.

    In the ``"mode"`` basis the fields are ``<Y_i Y_j>``, ``<Q_i Q_j>`` and
    ``<Y_i Q_j>``; in the ``"real"`` basis the same slots hold ``XX``, ``PP``
    and ``XP``. ``time`` is ``inf`` for the stationary state. For lagged
    correlations ``lag`` is the delay of the second operator.
    """

    YY: np.ndarray
    QQ: np.ndarray
    YQ: np.ndarray
    time: float = math.inf
    basis: str = "mode"
    lag: float = 0.0

    @property
    def XX(self) -> np.ndarray:
        return self._real("YY")

    @property
    def PP(self) -> np.ndarray:
        return self._real("QQ")

    @property
    def XP(self) -> np.ndarray:
        return self._real("YQ")

    def _real(self, name):
        if self.basis != "real":
            raise ValidationError("XX/PP/XP are real-space fields; call to_real_space first")
        return getattr(self, name)

    def covariance(self) -> np.ndarray:
        """``[[A A^T, A B^T], [B A^T, B B^T]]`` in (positions, momenta) order."""
        return np.block([[self.YY, self.YQ], [self.YQ.T, self.QQ]])


# --- single-pole frequency integrals ----------------------------------------------


def _window_integral(a: float, d: float, tau: float) -> float:
    """``2 int_0^d (a cos(v tau) + v sin(v tau)) / (a^2 + v^2) dv`` for a < 0."""
    if tau == 0:
        return 2.0 * math.atan(d / a)
    t = abs(tau)
    if -a * t > 50.0:
        # the Lorentzian is wide on the scale of the oscillation; plain quadrature
        den = lambda v: a * a + v * v  # noqa: E731
        c = quad(lambda v: a / den(v), 0.0, d, weight="cos", wvar=t, limit=POLICY.quad_limit)[0]
        s = quad(lambda v: v / den(v), 0.0, d, weight="sin", wvar=t, limit=POLICY.quad_limit)[0]
        return 2.0 * (c + s) if tau > 0 else 2.0 * (c - s)
    if tau > 0:
        return -2.0 * math.exp(-a * t) * exp1(complex(-a * t, -d * t)).imag
    # the exponential-integral path crosses the branch cut; continued value
    return -2.0 * math.exp(a * t) * (math.pi + exp1(complex(a * t, d * t)).imag)


def _checked_quad(f, lo, hi, what, **kw):
    kw.setdefault("epsabs", POLICY.quad_epsabs)
    kw.setdefault("epsrel", POLICY.quad_epsrel)
    kw.setdefault("limit", POLICY.quad_limit)
    out = quad(f, lo, hi, full_output=1, **kw)
    val, err = out[0], out[1]
    if len(out) > 3:
        tol = max(kw["epsabs"], kw["epsrel"] * abs(val))
        if not np.isfinite(val) or err > 1e3 * tol:
            raise QuadratureError(
                f"{what} on [{lo:.6g}, {hi:.6g}] did not converge: value {val:.6g}, error {err:.2e} ({out[3][:60]})"
            )
        log.debug("%s: quadrature warning accepted, error %.2e", what, err)
    return val


def pole_integral(
    z: complex,
    kernel: NoiseKernelSpec,
    tau: float = 0.0,
    omega_max: float | None = None,
    backend: str | None = None,
    tol_scale: float = 1.0,
) -> tuple[complex, complex]:
    """``(P(z, tau), P(z, -tau))`` for one pole with ``Re z < 0``."""
    a, b = float(z.real), float(z.imag)
    if not a < 0:
        raise ValidationError(f"pole integral needs Re z < 0, got {z}")
    if omega_max is None:
        omega_max = POLICY.omega_max_factor * max(kernel.cutoff, abs(z))
    x0 = abs(b)
    sigma = 1.0 if b >= 0 else -1.0
    d = min(0.5 * x0, 1.0)
    subtract = x0 > 0 and -a < 0.1 * d
    S0 = float(spectral_density(x0, kernel.gamma, kernel.cutoff, kernel.T, kernel.classical)) if subtract else 0.0
    base = [a, b, kernel.gamma, kernel.cutoff, kernel.T, float(kernel.classical), 0.0, sigma, S0, 0.0]

    if subtract:
        cuts = [0.0, x0 - d, x0, x0 + d, omega_max]
        flags = [0, 1, 1, 0]
    elif 0 < x0 < omega_max:
        cuts, flags = [0.0, x0, omega_max], [0, 0]
    else:
        cuts, flags = [0.0, omega_max], [0]
    segments = [(lo, hi, fl) for lo, hi, fl in zip(cuts[:-1], cuts[1:], flags) if hi > lo]

    eps = dict(epsabs=POLICY.quad_epsabs * tol_scale, epsrel=POLICY.quad_epsrel * tol_scale)

    def integrand(part, flag):
        p = list(base)
        p[6], p[9] = float(part), float(flag)
        return kernels.make_integrand(p, backend)

    t = abs(tau)
    cos_part = 0j
    sin_part = 0j
    for lo, hi, fl in segments:
        if t == 0:
            cos_part += _checked_quad(integrand(0, fl), lo, hi, "P re", **eps)
            cos_part += 1j * _checked_quad(integrand(1, fl), lo, hi, "P im", **eps)
        else:
            w = dict(weight="cos", wvar=t, **eps)
            cos_part += _checked_quad(integrand(0, fl), lo, hi, "P re cos", **w)
            cos_part += 1j * _checked_quad(integrand(1, fl), lo, hi, "P im cos", **w)
            w["weight"] = "sin"
            sin_part += _checked_quad(integrand(2, fl), lo, hi, "P re sin", **w)
            sin_part += 1j * _checked_quad(integrand(3, fl), lo, hi, "P im sin", **w)
    # tail beyond omega_max (QAGI, or QAWF for tau != 0)
    if t == 0:
        # QAGI alone can settle on a wrong value with a tiny error estimate when
        # omega_max is large, so take four decades on finite intervals first
        edges = omega_max * 10.0 ** np.arange(5)
        for lo, hi in zip(edges[:-1], edges[1:]):
            cos_part += _checked_quad(integrand(0, 0), lo, hi, "P tail re", **eps)
            cos_part += 1j * _checked_quad(integrand(1, 0), lo, hi, "P tail im", **eps)
        cos_part += _checked_quad(integrand(0, 0), edges[-1], np.inf, "P tail re", **eps)
        cos_part += 1j * _checked_quad(integrand(1, 0), edges[-1], np.inf, "P tail im", **eps)
    else:
        tail = dict(weight="cos", wvar=t, epsabs=eps["epsabs"], limlst=200)
        cos_part += _checked_quad(integrand(0, 0), omega_max, np.inf, "P tail re cos", **tail)
        cos_part += 1j * _checked_quad(integrand(1, 0), omega_max, np.inf, "P tail im cos", **tail)
        tail["weight"] = "sin"
        sin_part += _checked_quad(integrand(2, 0), omega_max, np.inf, "P tail re sin", **tail)
        sin_part += 1j * _checked_quad(integrand(3, 0), omega_max, np.inf, "P tail im sin", **tail)

    plus = cos_part + sin_part
    minus = cos_part - sin_part
    if subtract:
        plus += S0 * np.exp(-1j * b * t) * _window_integral(a, d, t)
        minus += S0 * np.exp(1j * b * t) * _window_integral(a, d, -t)
    if tau < 0:
        plus, minus = minus, plus
    return complex(plus), complex(minus)


def omega_integral_pair(lam: complex, lam2: complex, kernel: NoiseKernelSpec, tau: float = 0.0) -> complex:
    """``I(lam, lam2; tau)``; at ``tau = 0``

    ``int_0^inf S(w) (lam lam2 + w^2) / ((lam^2 + w^2)(lam2^2 + w^2)) dw``.
    """
    lam, lam2 = complex(lam), complex(lam2)
    wmax = POLICY.omega_max_factor * max(kernel.cutoff, abs(lam), abs(lam2))
    p1, _ = pole_integral(lam, kernel, tau, wmax)
    _, p2 = pole_integral(lam2, kernel, tau, wmax)
    return (p1 + p2) / (2.0 * (lam + lam2))


def finite_time_kernel(lam: complex, lam2: complex, omega: float, t: float) -> complex:
    """``int_0^t int_0^t exp(lam (t - t1)) exp(lam2 (t - t2)) cos(omega (t1 - t2)) dt1 dt2``.

    Equal to ``[g(lam - i w) g(lam2 + i w) + g(lam + i w) g(lam2 - i w)] / 2`` with
    ``g(z) = (exp(z t) - 1) / z``.
    """

    def g(z):
        return t if z == 0 else np.expm1(z * t) / z

    w = 1j * omega
    return 0.5 * (g(lam - w) * g(lam2 + w) + g(lam + w) * g(lam2 - w))


def transient_pair_integral(lam: complex, lam2: complex, kernel: NoiseKernelSpec, t: float) -> complex:
    """``int_0^inf S(w) finite_time_kernel(lam, lam2, w, t) dw`` via single-pole integrals."""
    lam, lam2 = complex(lam), complex(lam2)
    wmax = POLICY.omega_max_factor * max(kernel.cutoff, abs(lam), abs(lam2))
    a0, _ = pole_integral(lam, kernel, 0.0, wmax)
    b0, _ = pole_integral(lam2, kernel, 0.0, wmax)
    a_p, a_m = pole_integral(lam, kernel, t, wmax)
    b_p, b_m = pole_integral(lam2, kernel, t, wmax)
    den = 2.0 * (lam + lam2)
    E, E2 = np.exp(lam * t), np.exp(lam2 * t)
    return ((1 + E * E2) * (a0 + b0) - E * (a_p + b_m) - E2 * (a_m + b_p)) / den


def _pole_table(resp: ResponseSet, kernel: NoiseKernelSpec, tau: float, backend=None, tol_scale=1.0):
    """``P(lambda_k, tau)`` and ``P(lambda_k, -tau)`` for every pole.

    Lower-half-plane poles follow from ``P(conj z, tau) = conj P(z, tau)``.
    """
    lam = resp.poles
    conj = resp.conj_index
    wmax = POLICY.omega_max_factor * max(kernel.cutoff, np.abs(lam).max())
    plus = np.empty(lam.size, dtype=complex)
    minus = np.empty(lam.size, dtype=complex)
    done = np.zeros(lam.size, dtype=bool)
    for k in range(lam.size):
        if done[k]:
            continue
        plus[k], minus[k] = pole_integral(lam[k], kernel, tau, wmax, backend, tol_scale)
        done[k] = True
        c = conj[k]
        if c != k:
            plus[c], minus[c] = np.conj(plus[k]), np.conj(minus[k])
            done[c] = True
    return plus, minus


def pair_integrals(resp: ResponseSet, kernel: NoiseKernelSpec, tau: float = 0.0, backend=None, tol_scale=1.0):
    """Matrix ``I_kk'(tau)`` over all pole pairs."""
    plus, minus = _pole_table(resp, kernel, tau, backend, tol_scale)
    lam = resp.poles
    return (plus[:, None] + minus[None, :]) / (2.0 * (lam[:, None] + lam[None, :]))


# --- assembling correlations ------------------------------------------------------------


def _realify(M: np.ndarray, what: str) -> np.ndarray:
    scale = max(np.abs(M).max(), 1e-300)
    imag = np.abs(M.imag).max()
    if imag > POLICY.realness * max(scale, 1.0):
        raise NumericError(f"{what}: imaginary residue {imag:.2e} exceeds realness tolerance")
    return M.real


def _sandwich(R1, I, R2):
    return R1 @ I @ R2.T


def _kernels(bath: BathConfig, classical: bool):
    return [(side, NoiseKernelSpec.from_bath(bath, side, classical)) for side in ("a", "b")]


def stationary_correlations(
    resp: ResponseSet, bath: BathConfig | None = None, classical: bool = False, backend=None, tol_scale=1.0
) -> CorrelationMatrices:
    """Steady-state ``<YY>``, ``<QQ>``, ``<YQ>`` in the normal-mode basis."""
    return time_shifted_stationary(resp, 0.0, bath, classical, backend, tol_scale)


def time_shifted_stationary(
    resp: ResponseSet,
    tau: float,
    bath: BathConfig | None = None,
    classical: bool = False,
    backend=None,
    tol_scale=1.0,
) -> CorrelationMatrices:
    """Stationary ``<Y_i(t) Y_j(t + tau)>`` etc. as ``t -> inf``."""
    bath = bath or resp.bath
    lam = resp.poles
    YY = QQ = YQ = 0
    for side, kern in _kernels(bath, classical):
        if kern.T == 0 and classical:
            continue
        I = pair_integrals(resp, kern, tau, backend, tol_scale)
        R = resp.residues(side)
        RL = R * lam
        YY = YY + _sandwich(R, I, R)
        QQ = QQ + _sandwich(RL, I, RL)
        YQ = YQ + _sandwich(R, I, RL)
    out = CorrelationMatrices(
        _realify(YY, "YY"), _realify(QQ, "QQ"), _realify(YQ, "YQ"), math.inf, "mode", float(tau)
    )
    if tau == 0:
        out = replace(out, YY=_sym(out.YY), QQ=_sym(out.QQ))
    return out


def _sym(M):
    return 0.5 * (M + M.T)


def thermal_chain_state(basis: ModeBasis, T: float) -> CorrelationMatrices:
    """Thermal state of the isolated chain, in normal modes, at time 0."""
    Om = basis.frequencies
    if T < 0:
        raise ValidationError("chain temperature must be >= 0")
    coth = np.ones_like(Om) if T == 0 else 1.0 / np.tanh(Om / (2.0 * T))
    return CorrelationMatrices(
        np.diag(coth / (2.0 * Om)), np.diag(Om * coth / 2.0), np.zeros((Om.size, Om.size)), 0.0, "mode"
    )


def transient_correlations(
    resp: ResponseSet,
    t: float,
    initial: CorrelationMatrices,
    bath: BathConfig | None = None,
    classical: bool = False,
    backend=None,
) -> CorrelationMatrices:
    """Correlations at time ``t`` after the baths are attached at ``t = 0``.

    ``initial`` holds the mode-basis correlations of the chain at ``t = 0``;
    the chain and bath are uncorrelated initially.
    """
    if initial.basis != "mode":
        raise ValidationError("initial correlations must be given in the normal-mode basis")
    if t < 0:
        raise ValidationError("time must be >= 0")
    if t == 0:
        return replace(initial, time=0.0)
    bath = bath or resp.bath
    lam = resp.poles
    E = np.exp(lam * t)

    # initial conditions: z(t) = Phi(t) z(0), Phi = [[A', A], [A'', A']]
    A0, A1, A2 = (resp.A(t, n)[0] for n in range(3))
    Phi = np.block([[A1, A0], [A2, A1]])
    C0 = initial.covariance()
    C = Phi @ C0 @ Phi.T
    l = resp.basis.size
    YY, QQ, YQ = C[:l, :l], C[l:, l:], C[:l, l:]

    for side, kern in _kernels(bath, classical):
        p0, _ = _pole_table(resp, kern, 0.0, backend)
        pp, pm = _pole_table(resp, kern, t, backend)
        den = 2.0 * (lam[:, None] + lam[None, :])
        I0 = (p0[:, None] + p0[None, :]) / den
        It = (pp[:, None] + pm[None, :]) / den
        Imt = (pm[:, None] + pp[None, :]) / den
        M = (1.0 + np.outer(E, E)) * I0 - E[:, None] * It - E[None, :] * Imt
        R = resp.residues(side)
        RL = R * lam
        YY = YY + _realify(_sandwich(R, M, R), "YY(t)")
        QQ = QQ + _realify(_sandwich(RL, M, RL), "QQ(t)")
        YQ = YQ + _realify(_sandwich(R, M, RL), "YQ(t)")
    return CorrelationMatrices(_sym(YY), _sym(QQ), YQ, float(t), "mode")


def to_real_space(corr: CorrelationMatrices, basis: ModeBasis) -> CorrelationMatrices:
    if corr.basis != "mode":
        raise ValidationError("correlations are not in the normal-mode basis")
    G = basis.G
    return replace(corr, YY=G @ corr.YY @ G.T, QQ=G @ corr.QQ @ G.T, YQ=G @ corr.YQ @ G.T, basis="real")


def to_normal_modes(corr: CorrelationMatrices, basis: ModeBasis) -> CorrelationMatrices:
    if corr.basis != "real":
        raise ValidationError("correlations are not in the real-space basis")
    G = basis.G
    return replace(corr, YY=G.T @ corr.YY @ G, QQ=G.T @ corr.QQ @ G, YQ=G.T @ corr.YQ @ G, basis="mode")
