"""Normal modes of the isolated chain and their localization."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import POLICY, DegeneracyError, NumericError
from .model import ChainSpec, build_coupling_matrix, detect_symmetry

__all__ = ["ModeBasis", "LocalizationReport", "diagonalize", "mode_basis", "localization"]


@dataclass(frozen=True)
class ModeBasis:
    """Normal modes ``X = G @ Y``; column ``i`` of ``G`` is mode ``i``.

    ``parity`` holds ``"even"``/``"odd"`` for mirror-symmetric chains and
    ``"none"`` otherwise.
    """

    frequencies: np.ndarray
    G: np.ndarray
    parity: np.ndarray

    @property
    def size(self) -> int:
        return self.frequencies.size

    @property
    def end_amplitudes(self) -> tuple[np.ndarray, np.ndarray]:
        return self.G[0].copy(), self.G[-1].copy()

    @property
    def symmetric(self) -> bool:
        return bool(np.all(self.parity != "none"))

    def family(self, name: str) -> np.ndarray:
        return np.flatnonzero(self.parity == name)


@dataclass(frozen=True)
class LocalizationReport:
    frequencies: np.ndarray
    xi: np.ndarray
    participation: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mode_index", "Omega", "xi"])
            for i, (w, x) in enumerate(zip(self.frequencies, self.xi)):
                writer.writerow([i + 1, f"{w:.17g}", f"{x:.17g}"])


def _fix_signs(G: np.ndarray) -> np.ndarray:
    G = G.copy()
    for i in range(G.shape[1]):
        col = G[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-14 * np.abs(col).max())
        lead = col[0] if abs(col[0]) > 1e-14 * np.abs(col).max() else col[nz[0]]
        if lead < 0:
            G[:, i] = -col
    return G


def _parity_blocks(C: np.ndarray):
    """Diagonalize C separately on the mirror-even and mirror-odd subspaces."""
    l = C.shape[0]
    half = l // 2
    blocks = []
    for sign, name in ((1.0, "even"), (-1.0, "odd")):
        vecs = []
        for n in range(half):
            v = np.zeros(l)
            v[n] = 1.0
            v[l - 1 - n] = sign
            vecs.append(v / np.sqrt(2.0))
        if l % 2 == 1 and sign > 0:
            v = np.zeros(l)
            v[half] = 1.0
            vecs.append(v)
        P = np.array(vecs).T
        w2, U = np.linalg.eigh(P.T @ C @ P)
        blocks.append((w2, P @ U, name))
    return blocks


def _check_gaps(w2: np.ndarray, block: str) -> None:
    # modes of opposite parity never mix, so only gaps inside a block matter
    gaps = np.diff(w2)
    if gaps.size and gaps.min() < POLICY.mode_degeneracy:
        i = int(np.argmin(gaps))
        raise DegeneracyError(
            f"degenerate {block} mode frequencies Omega^2 = {w2[i]:.12g}, {w2[i + 1]:.12g}"
        )


def diagonalize(C: np.ndarray, symmetric: bool | None = None) -> ModeBasis:
    """Normal modes of the coupling matrix, ascending in frequency.

    For mirror-symmetric chains the even and odd subspaces are diagonalized
    separately so that every eigenvector has exact parity.
    """
    C = np.asarray(C, dtype=float)
    if symmetric is None:
        J = C[::-1, ::-1]
        symmetric = bool(np.allclose(C, J, rtol=POLICY.symmetry_rtol, atol=0.0))
    try:
        if symmetric:
            parts = _parity_blocks(C)
            for w2_block, _, name in parts:
                _check_gaps(w2_block, name)
            w2 = np.concatenate([p[0] for p in parts])
            G = np.concatenate([p[1] for p in parts], axis=1)
            parity = np.concatenate([[p[2]] * p[0].size for p in parts])
            order = np.argsort(w2, kind="stable")
            w2, G, parity = w2[order], G[:, order], parity[order]
        else:
            w2, G = np.linalg.eigh(C)
            parity = np.array(["none"] * C.shape[0])
            _check_gaps(w2, "full")
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed (cond(C) = {np.linalg.cond(C):.3e})") from exc
    if w2[0] <= 0:
        raise NumericError(f"coupling matrix not positive definite (lowest eigenvalue {w2[0]:.3e})")
    G = _fix_signs(G)
    return ModeBasis(np.sqrt(w2), G, np.asarray(parity, dtype=object))


def mode_basis(spec: ChainSpec) -> ModeBasis:
    return diagonalize(build_coupling_matrix(spec), symmetric=detect_symmetry(spec))


def localization(basis: ModeBasis) -> LocalizationReport:
    """Localization length as the inverse participation number of each mode."""
    participation = np.sum(basis.G**4, axis=0)
    return LocalizationReport(basis.frequencies.copy(), 1.0 / participation, participation)
