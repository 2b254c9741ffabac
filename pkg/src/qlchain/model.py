"""Chain and bath specifications and the chain coupling matrix.

Units are dimensionless throughout: hbar = k_B = M = omega_0 = 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import POLICY, ValidationError

__all__ = [
    "PinningStyle",
    "ChainSpec",
    "BathConfig",
    "build_coupling_matrix",
    "detect_symmetry",
    "ordered_chain",
    "onsite_frequencies",
]


class PinningStyle(str, enum.Enum):
    ONSITE_EVERYWHERE = "everywhere"
    ENDS_ONLY = "ends"

    @classmethod
    def parse(cls, value) -> "PinningStyle":
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(f"pinning: expected one of {[m.value for m in cls]}, got {value!r}") from None


def onsite_frequencies(length: int, style: PinningStyle | str, omega0: float = 1.0) -> np.ndarray:
    style = PinningStyle.parse(style)
    if style is PinningStyle.ONSITE_EVERYWHERE:
        return np.full(length, float(omega0))
    freqs = np.zeros(length)
    freqs[0] = freqs[-1] = omega0
    return freqs


@dataclass(frozen=True)
class ChainSpec:
    """Harmonic chain of ``length`` oscillators with nearest-neighbour springs.

    ``couplings[i]`` connects sites ``i`` and ``i + 1`` (zero based). The two
    chain ends are free towards the baths.
    """

    onsite_freqs: np.ndarray
    couplings: np.ndarray
    mass: float = 1.0

    def __post_init__(self):
        omega = np.array(self.onsite_freqs, dtype=float).reshape(-1)
        f = np.array(self.couplings, dtype=float).reshape(-1)
        object.__setattr__(self, "onsite_freqs", omega)
        object.__setattr__(self, "couplings", f)
        omega.setflags(write=False)
        f.setflags(write=False)
        self.validate()

    @property
    def length(self) -> int:
        return self.onsite_freqs.size

    def validate(self) -> None:
        l = self.length
        if l < 2:
            raise ValidationError(f"length: chain needs at least 2 sites, got {l}")
        if self.couplings.size != l - 1:
            raise ValidationError(
                f"couplings: expected {l - 1} spring constants for length {l}, "
                f"got {self.couplings.size}"
            )
        if self.mass != 1.0:
            raise ValidationError("mass: only M = 1 is supported (unit convention)")
        if not np.all(np.isfinite(self.couplings)) or np.any(self.couplings <= 0):
            raise ValidationError("couplings: all spring constants must be positive")
        if not np.all(np.isfinite(self.onsite_freqs)) or np.any(self.onsite_freqs < 0):
            raise ValidationError("onsite_freqs: frequencies must be non-negative")
        if np.all(self.onsite_freqs == 0):
            raise ValidationError(
                "onsite_freqs: all zero leaves a free translation mode; pin at least the ends"
            )
        lowest = np.linalg.eigvalsh(build_coupling_matrix(self, check=False))[0]
        if lowest < POLICY.singular_eigenvalue:
            raise ValidationError(
                f"onsite_freqs: coupling matrix is singular (smallest eigenvalue {lowest:.3e})"
            )

    @property
    def symmetric(self) -> bool:
        return detect_symmetry(self)


@dataclass(frozen=True)
class BathConfig:
    """Two Drude-Ullersma baths attached to the first (a) and last (b) site."""

    gamma: float
    cutoff: float = 10.0
    Ta: float = 0.0
    Tb: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "cutoff"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValidationError(f"bath.{name}: must be positive, got {value!r}")
        for name in ("Ta", "Tb"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValidationError(f"bath.{name}: must be non-negative, got {value!r}")

    def with_temperatures(self, Ta: float, Tb: float) -> "BathConfig":
        return BathConfig(self.gamma, self.cutoff, Ta, Tb)


def ordered_chain(
    length: int,
    coupling: float = 1.0,
    omega0: float = 1.0,
    pinning: PinningStyle | str = PinningStyle.ONSITE_EVERYWHERE,
) -> ChainSpec:
    return ChainSpec(onsite_frequencies(length, pinning, omega0), np.full(length - 1, float(coupling)))


def build_coupling_matrix(spec: ChainSpec, check: bool = True) -> np.ndarray:
    """Tridiagonal coupling matrix C of the isolated chain.

    ``C_ii = omega_i**2 + (f_{i-1} + f_i) / M`` with ``f_0 = f_l = 0`` and
    ``C_{i,i+1} = -f_i / M``.
    """
    if check:
        spec.validate()
    f = np.concatenate(([0.0], spec.couplings, [0.0]))
    diag = spec.onsite_freqs**2 + (f[:-1] + f[1:]) / spec.mass
    C = np.diag(diag)
    off = -spec.couplings / spec.mass
    idx = np.arange(spec.length - 1)
    C[idx, idx + 1] = off
    C[idx + 1, idx] = off
    return C


def _mirror_equal(a: np.ndarray, rtol: float) -> bool:
    b = a[::-1]
    scale = np.maximum(np.abs(a), np.abs(b))
    return bool(np.all(np.abs(a - b) <= rtol * scale))


def detect_symmetry(spec: ChainSpec, rtol: float = POLICY.symmetry_rtol) -> bool:
    """True if the chain is invariant under the site reflection n -> l + 1 - n."""
    return _mirror_equal(spec.couplings, rtol) and _mirror_equal(spec.onsite_freqs, rtol)
