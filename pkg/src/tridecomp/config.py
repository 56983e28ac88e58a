"""Numerical tolerances and capacity limits.

All arithmetic is IEEE-754 binary64 complex.  The defaults sit well above
machine noise and well below every gap the verified bounds rely on; each one
can be overridden per call or through CLI flags.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class Tolerances:
    norm: float = 1e-9        # unit-norm slack for wavefunctions and components
    herm: float = 1e-9        # Hermiticity slack for density matrices
    psd: float = 1e-10        # eigenvalue dust below zero clamped up to here
    li: float = 1e-8          # linear-independence certificate floor
    orth: float = 1e-8        # orthonormality slack
    deg: float = 1e-7         # degeneracy grouping width for spectra/coefficients
    recon: float = 1e-8       # decomposition reconstruction ceiling
    zero_coeff: float = 1e-12  # coefficients at or below this count as zero

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances()

# Largest product dimension a SumState may be densified into.
DENSIFY_CEILING = 1 << 22
