"""Logarithmic negativity of contiguous bipartitions.

The covariance matrix is ``V = 2 [[XX, XP], [PX, PP]]`` over the ordering
``(X_1..X_l, P_1..P_l)``, normalised so that the vacuum of a unit-frequency
oscillator has symplectic eigenvalue 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correlations import CorrelationMatrices
from .errors import POLICY, NumericError, ValidationError

__all__ = [
    "NegativityReport",
    "assemble_covariance",
    "symplectic_form",
    "symplectic_eigenvalues",
    "partial_transpose",
    "log_negativity",
    "negativity_profile",
    "negativity_temperature_scan",
]


@dataclass(frozen=True)
class NegativityReport:
    cuts: np.ndarray
    N: np.ndarray


def symplectic_form(l: int) -> np.ndarray:
    return np.block([[np.zeros((l, l)), np.eye(l)], [-np.eye(l), np.zeros((l, l))]])


def assemble_covariance(corr: CorrelationMatrices, check: bool = True) -> np.ndarray:
    if corr.basis != "real":
        raise ValidationError("covariance needs real-space correlations")
    V = 2.0 * np.block([[corr.XX, corr.XP], [corr.XP.T, corr.PP]])
    V = 0.5 * (V + V.T)
    if check:
        nu = symplectic_eigenvalues(V)
        if nu.min() < 1.0 - POLICY.symplectic_floor:
            raise NumericError(f"unphysical covariance: symplectic eigenvalue {nu.min():.9f} < 1")
    return V


def symplectic_eigenvalues(V: np.ndarray) -> np.ndarray:
    """Moduli of the eigenvalues of ``sigma V``, one per +-pair, ascending."""
    l = V.shape[0] // 2
    try:
        ev = np.linalg.eigvals(symplectic_form(l) @ V)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericError(f"symplectic eigensolve failed: {exc}") from exc
    mod = np.sort(np.abs(ev))
    pairs = mod.reshape(l, 2)
    if np.any(np.abs(pairs[:, 0] - pairs[:, 1]) > 1e-9 * np.maximum(1.0, pairs[:, 1])):
        raise NumericError("symplectic spectrum is not paired")
    return pairs.mean(axis=1)


def partial_transpose(V: np.ndarray, sites) -> np.ndarray:
    """Flip the sign of the momenta of ``sites`` (0-based)."""
    l = V.shape[0] // 2
    s = np.ones(2 * l)
    s[l + np.asarray(sites, dtype=int)] = -1.0
    return V * np.outer(s, s)


def log_negativity(V: np.ndarray, cut: int, transpose: str = "B") -> float:
    """``N_k = -sum_j log2 min(1, nu_j)`` for A = sites 1..k, B = sites k+1..l."""
    l = V.shape[0] // 2
    if not 1 <= cut <= l - 1:
        raise ValidationError(f"cut must lie in 1..{l - 1}")
    sites = range(cut, l) if transpose == "B" else range(cut)
    nu = symplectic_eigenvalues(partial_transpose(V, list(sites)))
    return float(-np.sum(np.log2(np.minimum(1.0, nu)))) + 0.0


def negativity_profile(corr: CorrelationMatrices, cuts=None) -> NegativityReport:
    V = assemble_covariance(corr)
    l = V.shape[0] // 2
    cuts = np.arange(1, l) if cuts is None else np.asarray(cuts, dtype=int)
    return NegativityReport(cuts, np.array([log_negativity(V, int(k)) for k in cuts]))


def negativity_temperature_scan(spec, bath, Tm_grid, eps: float, cuts=None):
    """Rows ``(T_m, cut, N, G_th)`` with ``T_a,b = (1 +- eps) T_m``."""
    from .observables import solve_steady_state
    from .response import response_set
    from .spectral import mode_basis

    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    basis = mode_basis(spec)
    resp = response_set(basis, bath)
    rows = []
    for Tm in np.asarray(Tm_grid, float):
        b = bath.with_temperatures((1 + eps) * Tm, (1 - eps) * Tm)
        st = solve_steady_state(spec, b, basis=basis, response=resp)
        rep = negativity_profile(st.real, cuts)
        G = st.flux().G_th
        rows.extend((float(Tm), int(k), float(n), G) for k, n in zip(rep.cuts, rep.N))
    return rows
