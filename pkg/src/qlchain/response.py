"""Laplace-space response of the chain normal modes to the two baths.

The interaction matrix in normal coordinates is

    B(s) = diag(s**2 + Omega**2) + h(s) W W^T,   h(s) = s * gamma * Gamma / (M (Gamma + s)),

with ``W = [G[0, :], G[-1, :]]^T``. The noise responses ``F^a = B^-1 W[:, 0]``
and ``F^b = B^-1 W[:, 1]`` and the initial-value response ``A = B^-1`` are
strictly proper rational functions whose poles are the zeros of
``det B(s) (Gamma + s)**2``. Each is stored as a pole/residue expansion over
all poles, conjugates included, so ``F(t) = sum_k R_k exp(lambda_k t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial

from .errors import POLICY, DegeneracyError, NumericError, StabilityError, ValidationError
from .model import BathConfig
from .spectral import ModeBasis

__all__ = [
    "ResponseSet",
    "friction",
    "interaction_matrix",
    "interaction_matrix_denominator",
    "poles",
    "family_poles",
    "general_poles",
    "symmetric_response_coefficients",
    "general_response_coefficients",
    "response_set",
]


def friction(s, bath: BathConfig, mass: float = 1.0):
    """``h(s) = s * gamma_hat(s) / M`` and its derivative."""
    g, G = bath.gamma, bath.cutoff
    h = s * g * G / (mass * (G + s))
    dh = g * G * G / (mass * (G + s) ** 2)
    return h, dh


def interaction_matrix(basis: ModeBasis, bath: BathConfig, s: complex) -> np.ndarray:
    W = np.stack(basis.end_amplitudes, axis=1)
    h, _ = friction(s, bath)
    return np.diag(s * s + basis.frequencies**2) + h * (W @ W.T)


@dataclass(frozen=True)
class ResponseSet:
    """Poles and residues of the noise responses ``F^a``, ``F^b``.

    ``residues_a[j, k]`` is the coefficient of ``exp(poles[k] t)`` in
    ``F_j^a(t)``. ``family[k]`` names the parity block the pole belongs to
    (``"even"``, ``"odd"`` or ``"full"``).
    """

    poles: np.ndarray
    residues_a: np.ndarray
    residues_b: np.ndarray
    family: np.ndarray
    basis: ModeBasis = field(repr=False)
    bath: BathConfig

    @property
    def size(self) -> int:
        return self.poles.size

    @cached_property
    def conj_index(self) -> np.ndarray:
        return _conjugate_index(self.poles)

    def residues(self, side: str) -> np.ndarray:
        return {"a": self.residues_a, "b": self.residues_b}[side]

    def F(self, t, side: str = "a", derivative: int = 0) -> np.ndarray:
        """Time-domain response ``d^n/dt^n F_j(t)``, shape ``(l, len(t))``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        R = self.residues(side) * self.poles**derivative
        vals = R @ np.exp(np.outer(self.poles, t))
        return vals.real

    def F_hat(self, s: complex, side: str = "a") -> np.ndarray:
        return self.residues(side) @ (1.0 / (s - self.poles))

    @cached_property
    def initial_residues(self) -> np.ndarray:
        """Residues of ``A(s) = B(s)^-1``, shape ``(K, l, l)``."""
        out = np.empty((self.size, self.basis.size, self.basis.size), dtype=complex)
        W = np.stack(self.basis.end_amplitudes, axis=1)
        for k, lam in enumerate(self.poles):
            if self.family[k] == "full":
                v, norm, _ = _null_vector(self.basis, self.bath, W, lam)
            else:
                # within a parity block B reduces to diag + h g g^T with g = sqrt(2) G_1
                idx = self.basis.family(self.family[k])
                g = np.zeros(self.basis.size)
                g[idx] = np.sqrt(2.0) * self.basis.G[0, idx]
                v, norm, _ = _null_vector(self.basis, self.bath, g[:, None], lam)
            out[k] = np.outer(v, v) / norm
        return out

    def A(self, t, derivative: int = 0) -> np.ndarray:
        """``d^n/dt^n A(t)``, shape ``(len(t), l, l)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        weights = np.exp(np.outer(t, self.poles)) * self.poles**derivative
        return np.einsum("tk,kij->tij", weights, self.initial_residues).real


# --- polynomial route ---------------------------------------------------------


def _family_weights(basis: ModeBasis, family: str) -> tuple[np.ndarray, np.ndarray]:
    if not basis.symmetric:
        raise ValidationError("parity families exist only for mirror-symmetric chains")
    if family not in ("even", "odd"):
        raise ValidationError(f"family must be 'even' or 'odd', got {family!r}")
    idx = basis.family(family)
    return idx, basis.frequencies[idx]


def interaction_matrix_denominator(basis: ModeBasis, bath: BathConfig, family: str) -> Polynomial:
    """Monic denominator ``D(s)`` shared by the responses of one parity family.

    ``D(s) = (s + Gamma) prod_j (s^2 + Omega_j^2)
    + 2 s (gamma Gamma / M) sum_j G_1j^2 prod_{k != j} (s^2 + Omega_k^2)``
    """
    idx, omega = _family_weights(basis, family)
    weights = basis.G[0, idx] ** 2
    quad = [Polynomial([w * w, 0.0, 1.0]) for w in omega]
    total = Polynomial([1.0])
    for q in quad:
        total = total * q
    D = Polynomial([bath.cutoff, 1.0]) * total
    coupling = 2.0 * bath.gamma * bath.cutoff
    for j in range(idx.size):
        others = Polynomial([1.0])
        for k, q in enumerate(quad):
            if k != j:
                others = others * q
        D = D + Polynomial([0.0, coupling * weights[j]]) * others
    return D


def _check_poles(lam: np.ndarray) -> None:
    if lam.size == 0:
        return
    worst = lam.real.max()
    if worst >= -POLICY.pole_stability:
        raise StabilityError(f"response pole with Re(lambda) = {worst:.3e} >= 0")
    scale = np.abs(lam).max()
    diff = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(diff, np.inf)
    if diff.min() < POLICY.pole_degeneracy * scale:
        i, j = np.unravel_index(np.argmin(diff), diff.shape)
        raise DegeneracyError(f"near-degenerate poles {lam[i]:.12g} and {lam[j]:.12g}")


def _conjugate_closure(raw: np.ndarray) -> np.ndarray:
    """Canonical pole list: real poles, then upper half-plane, then their conjugates."""
    scale = max(np.abs(raw).max(), 1.0)
    is_real = np.abs(raw.imag) <= 1e-10 * scale
    reals = np.sort(raw[is_real].real)
    upper = raw[~is_real & (raw.imag > 0)]
    lower = raw[~is_real & (raw.imag < 0)]
    if upper.size != lower.size:
        raise NumericError("pole set is not closed under complex conjugation")
    upper = upper[np.lexsort((upper.imag, upper.real))]
    return np.concatenate([reals.astype(complex), upper, upper.conj()])


def _closure_with_errors(raw: np.ndarray, err: np.ndarray):
    lam = _conjugate_closure(raw)
    # carry the Newton error bound of the nearest raw pole
    near = np.abs(lam[:, None] - raw[None, :]).argmin(axis=1)
    return lam, err[near]


def _conjugate_index(lam: np.ndarray) -> np.ndarray:
    n_real = int(np.sum(lam.imag == 0))
    n_up = (lam.size - n_real) // 2
    idx = np.arange(lam.size)
    idx[n_real : n_real + n_up] += n_up
    idx[n_real + n_up :] -= n_up
    return idx


def poles(denominator: Polynomial | np.ndarray) -> np.ndarray:
    """Roots of a real polynomial via companion-matrix eigenvalues.

    Coefficients are rescaled to unit maximum modulus, each root gets one
    Newton step, and the result is checked for stability and simple roots.
    """
    coef = np.asarray(getattr(denominator, "coef", denominator), dtype=float)
    coef = coef / np.abs(coef).max()
    P = Polynomial(coef)
    roots = P.roots()
    dP = P.deriv()
    for i, r in enumerate(roots):
        d = dP(r)
        if d != 0:
            cand = r - P(r) / d
            if abs(P(cand)) < abs(P(r)):
                roots[i] = cand
    roots = _conjugate_closure(roots)
    _check_poles(roots)
    return roots


# --- structured route -----------------------------------------------------------


def _quad_factor(s, omega):
    """``s**2 + omega**2`` in factored form, accurate for s close to +-i omega."""
    return (s - 1j * omega) * (s + 1j * omega)


def _secular_family(s, omega, g2, bath):
    """phi(s) = 1 + h(s) sum g_j^2 / (s^2 + Omega_j^2) and phi'(s)."""
    h, dh = friction(s, bath)
    q = _quad_factor(s, omega)
    S1 = np.sum(g2 / q)
    S2 = np.sum(g2 / q**2)
    return 1.0 + h * S1, dh * S1 - 2.0 * s * h * S2


def _dominant_mode(s, omega):
    """Mode j whose pole ``+-i Omega_j`` lies much closer to s than any other, or None."""
    dist = np.abs(abs(s.imag) - omega) + abs(s.real)
    j = int(np.argmin(dist))
    gap = np.min(np.abs(np.delete(omega, j) - omega[j]), initial=np.inf)
    return j if dist[j] < 0.25 * gap else None


def _family_secular_at(j, omega, g2, bath):
    """Secular function for Newton near a root; ``q_j phi`` when mode j dominates.

    Multiplying out the pole of phi at ``+-i Omega_j`` keeps Newton well
    conditioned for weakly damped (localized) modes.
    """
    if j is None:
        return lambda s: _secular_family(s, omega, g2, bath)
    mask = np.arange(omega.size) != j

    def func(s):
        h, dh = friction(s, bath)
        q = _quad_factor(s, omega)
        S1 = np.sum(g2[mask] / q[mask])
        S2 = np.sum(g2[mask] / q[mask] ** 2)
        inner = 1.0 + h * S1
        val = q[j] * inner + h * g2[j]
        der = 2.0 * s * inner + q[j] * (dh * S1 - 2.0 * s * h * S2) + dh * g2[j]
        return val, der

    return func


def _polish(lam: np.ndarray, make_func, steps: int = 6):
    """Newton refinement, with the secular function chosen per starting root.

    Returns the refined poles and ``|Re(psi / psi')|`` at each, the remaining
    uncertainty of the real part. For weakly damped poles the imaginary part
    stalls at float spacing long before the real part does, so only the real
    part of the last Newton step is used.
    """
    out = lam.copy()
    err = np.zeros(lam.size)
    for i, r in enumerate(lam):
        func = make_func(r)
        val, der = func(r)
        for _ in range(steps):
            if der == 0 or not np.isfinite(val):
                break
            cand = r - val / der
            new_val, new_der = func(cand)
            if not abs(new_val) < abs(val):
                break
            r, val, der = cand, new_val, new_der
        out[i] = r if np.iscomplexobj(out) else np.real(r)
        err[i] = abs((val / der).real) if der != 0 else np.inf
    return out, err


def _check_structured(lam: np.ndarray, err: np.ndarray) -> None:
    """Stability check for poles refined on a secular function.

    Weakly coupled (localized) modes legitimately have tiny damping; a pole
    only fails when its real part is not resolved as negative.
    """
    bad = lam.real >= -err
    if np.any(bad):
        k = int(np.argmax(lam.real + err))
        raise StabilityError(
            f"response pole with Re(lambda) = {lam[k].real:.3e} not resolved below 0 (error {err[k]:.1e})"
        )
    scale = np.abs(lam).max()
    diff = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(diff, np.inf)
    if diff.min() < POLICY.pole_degeneracy * scale:
        i, j = np.unravel_index(np.argmin(diff), diff.shape)
        raise DegeneracyError(f"near-degenerate poles {lam[i]:.12g} and {lam[j]:.12g}")


def family_poles(basis: ModeBasis, bath: BathConfig, family: str) -> np.ndarray:
    """Zeros of the family denominator from a (2m+1)-dimensional linearization.

    The state matrix below has characteristic polynomial ``D(s)``; its
    eigenvalues avoid the monomial-basis conditioning of ``D`` for long chains.
    """
    idx, omega = _family_weights(basis, family)
    m = idx.size
    g = np.sqrt(2.0) * basis.G[0, idx]
    A = np.zeros((2 * m + 1, 2 * m + 1))
    A[:m, m : 2 * m] = np.eye(m)
    A[m : 2 * m, :m] = -np.diag(omega**2)
    A[m : 2 * m, 2 * m] = -g
    A[2 * m, m : 2 * m] = bath.gamma * bath.cutoff * g
    A[2 * m, 2 * m] = -bath.cutoff
    raw = np.linalg.eigvals(A)
    g2 = g * g
    raw, err = _polish(
        raw, lambda r: _family_secular_at(_dominant_mode(r, omega), omega, g2, bath)
    )
    lam, err = _closure_with_errors(raw, err)
    _check_structured(lam, err)
    return lam


def _secular_general(s, basis, W, bath, j=None):
    """psi(s) = det(I + h W^T R W) with R = diag(1 / (s^2 + Omega^2)), and psi'.

    With ``j`` given, returns ``q_j psi`` instead, using the matrix
    determinant lemma so the pole of mode j never appears.
    """
    omega = basis.frequencies
    h, dh = friction(s, bath)
    q = _quad_factor(s, omega)
    mask = np.ones(omega.size, dtype=bool)
    if j is not None:
        mask[j] = False
    Wm = W[mask]
    r = 1.0 / q[mask]
    M = (Wm.T * r) @ Wm
    dM = (Wm.T * (-2.0 * s * r * r)) @ Wm
    N = np.eye(2) + h * M
    dN = dh * M + h * dM
    det = N[0, 0] * N[1, 1] - N[0, 1] * N[1, 0]
    adj = np.array([[N[1, 1], -N[0, 1]], [-N[1, 0], N[0, 0]]])
    ddet = np.trace(adj @ dN)
    if j is None:
        return det, ddet
    dadj = np.array([[dN[1, 1], -dN[0, 1]], [-dN[1, 0], dN[0, 0]]])
    w = W[j]
    lemma = w @ adj @ w
    val = q[j] * det + h * lemma
    der = 2.0 * s * det + q[j] * ddet + dh * lemma + h * (w @ dadj @ w)
    return val, der


def general_poles(basis: ModeBasis, bath: BathConfig) -> np.ndarray:
    """All 2l + 2 poles from the chain-plus-friction state matrix."""
    l = basis.size
    W = np.stack(basis.end_amplitudes, axis=1)
    A = np.zeros((2 * l + 2, 2 * l + 2))
    A[:l, l : 2 * l] = np.eye(l)
    A[l : 2 * l, :l] = -np.diag(basis.frequencies**2)
    A[l : 2 * l, 2 * l :] = -W
    A[2 * l :, l : 2 * l] = bath.gamma * bath.cutoff * W.T
    A[2 * l :, 2 * l :] = -bath.cutoff * np.eye(2)
    raw = np.linalg.eigvals(A)
    def make(r):
        j = _dominant_mode(r, basis.frequencies)
        return lambda s: _secular_general(s, basis, W, bath, j)

    raw, err = _polish(raw, make)
    lam, err = _closure_with_errors(raw, err)
    if lam.size != 2 * l + 2:
        raise NumericError(f"expected {2 * l + 2} poles, found {lam.size}")
    _check_structured(lam, err)
    return lam


def _null_vector(basis: ModeBasis, bath: BathConfig, W: np.ndarray, lam: complex):
    """Null vector v of B(lam), the normalisation v^T B'(lam) v, and W^T v.

    ``W`` holds one or two coupling columns. Close to a weakly damped mode j,
    ``1 / (lam^2 + Omega_j^2)`` is fixed by float spacing in ``Im lam`` rather
    than by the data, so it is taken from the root condition instead.
    """
    h, dh = friction(lam, bath)
    omega = basis.frequencies
    r = 1.0 / _quad_factor(lam, omega)
    j = _dominant_mode(lam, omega)
    ncol = W.shape[1]
    if j is not None and np.any(W[j] != 0):
        mask = np.arange(omega.size) != j
        Np = np.eye(ncol) + h * ((W[mask].T * r[mask]) @ W[mask])
        if ncol == 1:
            det, lemma = Np[0, 0], W[j, 0] ** 2
        else:
            det = Np[0, 0] * Np[1, 1] - Np[0, 1] * Np[1, 0]
            adj = np.array([[Np[1, 1], -Np[0, 1]], [-Np[1, 0], Np[0, 0]]])
            lemma = W[j] @ adj @ W[j]
        r[j] = -det / (h * lemma)
    N = np.eye(ncol) + h * ((W.T * r) @ W)
    if ncol == 1:
        c = np.ones(1)
    else:
        c1 = np.array([N[0, 1], -N[0, 0]])
        c2 = np.array([N[1, 1], -N[1, 0]])
        c = c1 if np.linalg.norm(c1) >= np.linalg.norm(c2) else c2
        c = c / np.linalg.norm(c)
    v = r * (W @ c)
    Wv = -c / h
    norm = 2.0 * lam * (v @ v) + dh * (Wv @ Wv)
    if abs(norm) < 1e-12 * max(1.0, abs(v @ v)):
        raise NumericError(f"ill-conditioned residue at pole {lam:.12g}")
    return v, norm, Wv


def _closed_residues(lam, compute):
    """Evaluate residues on real and upper poles, mirror onto the conjugates."""
    K = lam.size
    n_real = int(np.sum(lam.imag == 0))
    n_up = (K - n_real) // 2
    cols = [compute(lam[k]) for k in range(n_real + n_up)]
    out = np.array(cols).T
    real_part = out[:, :n_real].real.astype(complex)
    up = out[:, n_real:]
    return np.concatenate([real_part, up, up.conj()], axis=1)


def symmetric_response_coefficients(basis: ModeBasis, bath: BathConfig, family: str):
    """Poles and residues of one parity family.

    Returns ``(poles, residues_a, residues_b)`` with residue arrays of shape
    ``(l, 2m + 1)``; rows of modes outside the family are zero.
    """
    idx = basis.family(family)
    lam = family_poles(basis, bath, family)
    g = np.zeros((basis.size, 1))
    g[idx, 0] = np.sqrt(2.0) * basis.G[0, idx]
    sign = 1.0 if family == "even" else -1.0

    def column(s):
        # the family block is diag + h g g^T, and G_1 = g / sqrt(2) on it
        v, norm, gv = _null_vector(basis, bath, g, s)
        return v * gv[0] / (np.sqrt(2.0) * norm)

    Ra = _closed_residues(lam, column)
    return lam, Ra, sign * Ra


def general_response_coefficients(basis: ModeBasis, bath: BathConfig) -> ResponseSet:
    """Pole/residue expansion for an arbitrary chain (no parity assumed)."""
    W = np.stack(basis.end_amplitudes, axis=1)
    lam = general_poles(basis, bath)

    def column(s):
        v, norm, Wv = _null_vector(basis, bath, W, s)
        return np.concatenate([v * Wv[0] / norm, v * Wv[1] / norm])

    both = _closed_residues(lam, column)
    l = basis.size
    return ResponseSet(lam, both[:l], both[l:], np.array(["full"] * lam.size, dtype=object), basis, bath)


def response_set(basis: ModeBasis, bath: BathConfig, method: str = "auto") -> ResponseSet:
    """Pole/residue expansion, using the parity split when the chain allows it."""
    if method == "auto":
        method = "symmetric" if basis.symmetric else "general"
    if method == "general":
        return general_response_coefficients(basis, bath)
    if method != "symmetric":
        raise ValidationError(f"unknown response method {method!r}")
    parts = [symmetric_response_coefficients(basis, bath, fam) for fam in ("even", "odd")]
    # poles of different families may coincide numerically; each family is its
    # own partial-fraction expansion, so only the conjugate layout is shared
    segments = {"real": [], "up": [], "down": []}
    for name, (lam, Ra, Rb) in zip(("even", "odd"), parts):
        n_real = int(np.sum(lam.imag == 0))
        n_up = (lam.size - n_real) // 2
        for key, sl in (
            ("real", slice(0, n_real)),
            ("up", slice(n_real, n_real + n_up)),
            ("down", slice(n_real + n_up, None)),
        ):
            segments[key].append((lam[sl], Ra[:, sl], Rb[:, sl], [name] * lam[sl].size))
    pieces = segments["real"] + segments["up"] + segments["down"]
    lam = np.concatenate([p[0] for p in pieces])
    Ra = np.concatenate([p[1] for p in pieces], axis=1)
    Rb = np.concatenate([p[2] for p in pieces], axis=1)
    fam = np.concatenate([p[3] for p in pieces])
    return ResponseSet(lam, Ra, Rb, np.asarray(fam, dtype=object), basis, bath)
