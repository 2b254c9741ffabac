"""Exception hierarchy and the shared numeric tolerance record."""

from dataclasses import dataclass


class QLChainError(Exception):
    """Base class for all package errors."""


class ValidationError(QLChainError, ValueError):
    """An input violates a documented invariant."""


class NumericError(QLChainError, ArithmeticError):
    """A numerical step failed or produced an unphysical result."""


class StabilityError(NumericError):
    """A response pole was found with non-negative real part."""


class DegeneracyError(NumericError):
    """Two mode frequencies or two poles coincide numerically."""


class QuadratureError(NumericError):
    """An omega integral did not reach the requested accuracy."""


class OracleDisagreement(QLChainError):
    """Independent verification routes disagree beyond tolerance."""


class OracleInconclusive(QLChainError):
    """An oracle run could not reach a trustworthy estimate."""


@dataclass(frozen=True)
class NumericPolicy:
    pole_stability: float = 1e-12
    pole_degeneracy: float = 1e-8
    reconstruction: float = 1e-8
    mode_degeneracy: float = 1e-10
    symmetry_rtol: float = 1e-12
    singular_eigenvalue: float = 1e-10
    quad_epsabs: float = 1e-11
    quad_epsrel: float = 1e-10
    quad_limit: int = 500
    omega_max_factor: float = 50.0
    realness: float = 1e-10
    flux_uniformity: float = 1e-8
    symplectic_floor: float = 1e-6


POLICY = NumericPolicy()
