"""Physical observables from stationary correlations.

Site energies split each spring between its two sites. Effective frequencies
come from a ground-state run (both baths at T = 0) of the same chain, and
temperatures are read off by inverting the thermal energy of an oscillator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .correlations import CorrelationMatrices, stationary_correlations, to_real_space
from .errors import POLICY, NumericError, ValidationError
from .model import BathConfig, ChainSpec, build_coupling_matrix
from .response import ResponseSet, response_set
from .spectral import ModeBasis, mode_basis

__all__ = [
    "SiteProfile",
    "ModeOccupation",
    "FluxReport",
    "SteadyState",
    "solve_steady_state",
    "site_energies",
    "chain_energy",
    "bose_einstein",
    "fit_temperature",
    "effective_frequencies_and_occupations",
    "reconstruct_site_temperatures",
    "heat_flux",
    "site_profile",
    "conductivity_scan",
    "flux_coupling_scan",
    "write_rows",
]


def write_rows(path, header, rows) -> Path:
    """CSV with floats at 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.17g}" if isinstance(x, (float, np.floating)) else x for x in row])
    return path


@dataclass(frozen=True)
class SiteProfile:
    E: np.ndarray
    omega_eff: np.ndarray
    T_R: np.ndarray

    def write_csv(self, path):
        rows = zip(range(1, self.E.size + 1), self.E, self.omega_eff, self.T_R)
        return write_rows(path, ["site", "E", "omega_eff", "T_R"], rows)


@dataclass(frozen=True)
class ModeOccupation:
    Omega_eff: np.ndarray
    n: np.ndarray
    T_fit: float

    def write_csv(self, path):
        rows = zip(range(1, self.n.size + 1), self.Omega_eff, self.n)
        return write_rows(path, ["mode", "Omega_eff", "n"], rows)


@dataclass(frozen=True)
class FluxReport:
    bond_fluxes: np.ndarray
    J: float
    G_th: float

    @property
    def spread(self) -> float:
        return float(np.abs(self.bond_fluxes - self.J).max())


@dataclass
class SteadyState:
    """Everything computed for one chain and bath setting."""

    spec: ChainSpec
    bath: BathConfig
    basis: ModeBasis
    response: ResponseSet
    modes: CorrelationMatrices
    real: CorrelationMatrices
    classical: bool = False
    _ground: "SteadyState | None" = field(default=None, repr=False)

    def ground(self) -> "SteadyState":
        """The same chain with both baths at T = 0 (cached)."""
        if self._ground is None:
            if self.bath.Ta == 0 and self.bath.Tb == 0 and not self.classical:
                self._ground = self
            else:
                self._ground = solve_steady_state(
                    self.spec, self.bath.with_temperatures(0.0, 0.0), basis=self.basis, response=self.response
                )
        return self._ground

    def energies(self) -> np.ndarray:
        return site_energies(self.real, self.spec)

    def profile(self) -> SiteProfile:
        return site_profile(self)

    def occupations(self, exclude_lowest: bool = False) -> ModeOccupation:
        return effective_frequencies_and_occupations(self.modes, self.ground().modes, exclude_lowest)

    def flux(self) -> FluxReport:
        return heat_flux(self.real, self.spec, self.bath)


def solve_steady_state(
    spec: ChainSpec,
    bath: BathConfig,
    classical: bool = False,
    basis: ModeBasis | None = None,
    response: ResponseSet | None = None,
    backend: str | None = None,
) -> SteadyState:
    basis = basis or mode_basis(spec)
    if response is None or response.bath != bath:
        response = response_set(basis, bath)
    modes = stationary_correlations(response, bath, classical=classical, backend=backend)
    return SteadyState(spec, bath, basis, response, modes, to_real_space(modes, basis), classical)


def site_energies(corr: CorrelationMatrices, spec: ChainSpec) -> np.ndarray:
    """``E_n = <P_n^2>/2M + (M w_n^2 + f_{n-1} + f_n)<X_n^2>/2 - f_{n-1}<X_n X_{n-1}> - f_n <X_n X_{n+1}>``.

    The coupling terms are halved once more so that each spring is shared
    between its two sites.
    """
    XX, PP = corr.XX, corr.PP
    f = np.concatenate([[0.0], spec.couplings, [0.0]])
    left, right = f[:-1], f[1:]
    M = spec.mass
    E = np.diag(PP) / (2 * M) + 0.5 * (M * spec.onsite_freqs**2 + left + right) * np.diag(XX)
    off = np.diag(XX, 1)
    E[1:] -= 0.5 * spec.couplings * off
    E[:-1] -= 0.5 * spec.couplings * off
    return E


def chain_energy(corr: CorrelationMatrices, spec: ChainSpec) -> float:
    """``<H_ch> = tr(PP)/2M + tr(C XX)/2``."""
    C = build_coupling_matrix(spec, check=False)
    return float(np.trace(corr.PP) / (2 * spec.mass) + 0.5 * np.sum(C * corr.XX))


def bose_einstein(omega, T: float):
    omega = np.asarray(omega, dtype=float)
    if T == 0:
        return np.zeros_like(omega)
    return 1.0 / np.expm1(omega / T)


def fit_temperature(omega: np.ndarray, n: np.ndarray) -> float:
    """Unweighted least-squares Bose-Einstein temperature."""
    omega, n = np.asarray(omega, float), np.asarray(n, float)
    guess = omega[n > 0] / np.log1p(1.0 / n[n > 0]) if np.any(n > 0) else np.array([1.0])
    x0 = float(np.log(np.median(guess)))
    res = least_squares(lambda x: bose_einstein(omega, math.exp(x[0])) - n, [x0], xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if not res.success:
        raise NumericError(f"temperature fit failed: {res.message}")
    return float(math.exp(res.x[0]))


def effective_frequencies_and_occupations(
    modes: CorrelationMatrices, ground: CorrelationMatrices, exclude_lowest: bool = False, mass: float = 1.0
) -> ModeOccupation:
    """``Omega_eff,i = 2 <Q_i^2>_0 / M`` and ``n_i = <Q_i^2> / (M Omega_eff,i) - 1/2``.

    ``exclude_lowest`` drops the lowest mode from the temperature fit only.
    """
    q0 = np.diag(ground.QQ)
    if np.any(q0 <= 0):
        raise NumericError("ground-state kinetic energy is not positive")
    Om = 2.0 * q0 / mass
    n = np.diag(modes.QQ) / (mass * Om) - 0.5
    sel = np.argsort(Om)[1:] if exclude_lowest else np.arange(Om.size)
    return ModeOccupation(Om, n, fit_temperature(Om[sel], n[sel]))


def reconstruct_site_temperatures(E: np.ndarray, E0: np.ndarray) -> np.ndarray:
    """Invert ``E = (w/2) coth(w / 2T)`` with ``w = 2 E0``.

    The relation has the closed-form inverse ``T = w / (2 artanh(w / 2E))``.
    """
    E, E0 = np.asarray(E, float), np.asarray(E0, float)
    if np.any(E < E0 - 1e-9 * np.maximum(1.0, np.abs(E0))):
        k = int(np.argmin(E - E0))
        raise NumericError(f"site {k + 1}: energy {E[k]:.12g} below zero-point {E0[k]:.12g}")
    w = 2.0 * E0
    T = np.zeros_like(E)
    hot = E > E0 * (1 + 1e-12)
    T[hot] = w[hot] / (2.0 * np.arctanh(w[hot] / (2.0 * E[hot])))
    return T


def site_profile(state: SteadyState) -> SiteProfile:
    E = state.energies()
    E0 = state.ground().energies()
    return SiteProfile(E, 2.0 * E0, reconstruct_site_temperatures(E, E0))


def heat_flux(corr: CorrelationMatrices, spec: ChainSpec, bath: BathConfig | None = None, check: bool = True) -> FluxReport:
    """Bond fluxes ``J_{n,n+1} = (f_n / M) <X_n P_{n+1}>``; positive from bath a to b."""
    J_b = spec.couplings / spec.mass * np.diag(corr.XP, 1)
    J = float(np.mean(J_b))
    if check:
        # absolute floor on the natural scale of <XP> for frozen-out chains
        scale = np.max(spec.couplings) * math.sqrt(np.diag(corr.XX).max() * np.diag(corr.PP).max()) / spec.mass
        tol = max(POLICY.flux_uniformity * abs(J), 1e-12 * scale)
        if np.abs(J_b - J).max() > tol:
            raise NumericError(f"bond fluxes not uniform: spread {np.abs(J_b - J).max():.3e} around J = {J:.6e}")
    dT = (bath.Ta - bath.Tb) if bath is not None else math.nan
    G = J / dT if bath is not None and dT != 0 else math.nan
    return FluxReport(J_b, J, G)


def conductivity_scan(spec: ChainSpec, bath: BathConfig, Tm_grid, eps: float, classical: bool = False):
    """``[(T_m, G_th)]`` with ``T_a = (1 + eps) T_m`` and ``T_b = (1 - eps) T_m``."""
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    grid = np.asarray(Tm_grid, float)
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValidationError("T_m grid must be positive and ascending")
    basis = mode_basis(spec)
    resp = response_set(basis, bath)
    rows = []
    for Tm in grid:
        b = bath.with_temperatures((1 + eps) * Tm, (1 - eps) * Tm)
        st = solve_steady_state(spec, b, classical, basis, resp)
        rows.append((float(Tm), st.flux().G_th))
    return rows


def flux_coupling_scan(length: int, f_grid, gamma_grid, bath: BathConfig, omega0: float = 1.0, refine: bool = True):
    """Flux surface ``J(f, gamma)`` on an ordered chain, plus ``gamma_max(f)``.

    The maximum over gamma is refined by golden-section search on log gamma
    around the best grid point.
    """
    from .model import ordered_chain

    f_grid = np.asarray(f_grid, float)
    g_grid = np.asarray(gamma_grid, float)
    if np.any(f_grid <= 0) or np.any(g_grid <= 0):
        raise ValidationError("coupling and damping grids must be positive")

    def flux(f, g):
        spec = ordered_chain(length, coupling=f, omega0=omega0)
        b = BathConfig(g, bath.cutoff, bath.Ta, bath.Tb)
        return solve_steady_state(spec, b).flux().J

    surface = np.array([[flux(f, g) for g in g_grid] for f in f_grid])
    gmax = np.full(f_grid.size, np.nan)
    for i, f in enumerate(f_grid):
        j = int(np.argmax(surface[i]))
        if not refine or j in (0, g_grid.size - 1):
            gmax[i] = g_grid[j]
            continue
        lo, mid, hi = np.log(g_grid[j - 1 : j + 2])
        res = minimize_scalar(lambda x: -flux(f, math.exp(x)), bracket=(lo, mid, hi), method="golden", tol=1e-6)
        gmax[i] = math.exp(res.x)
    return surface, gmax
