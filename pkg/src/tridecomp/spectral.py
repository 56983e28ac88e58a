"""Eigenvalue spectra, von Neumann entropy, and checkable spectral bounds.

Entropy is in nats throughout; every serialized report records the base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import DimensionMismatchError, InvalidStateError
from .states import (
    DenseState,
    DensityMatrix,
    SumState,
    aligned_density_matrices,
    partial_trace,
    trace_norm,
)

LOG_BASE_NOTE = "natural log"


@dataclass(frozen=True)
class Spectrum:
    """Decreasing eigenvalue sequence of a PSD matrix, repetitions kept.

    ``clamped_dust`` records the most negative raw eigenvalue that was
    clamped to zero (0.0 when none was).
    """

    values: tuple
    source_trace: float
    clamped_dust: float = 0.0

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if any(a < b for a, b in zip(vals, vals[1:])):
            raise InvalidStateError("spectrum must be non-increasing")
        if abs(sum(vals) - self.source_trace) > 1e-9 * max(1.0,
                                                           self.source_trace):
            raise InvalidStateError("spectrum does not sum to the trace")


@dataclass(frozen=True)
class EntropyValue:
    nats: float
    base_note: str = LOG_BASE_NOTE


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.matrix
    mat = np.asarray(rho, dtype=np.complex128)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidStateError(f"expected a square matrix, got shape {mat.shape}")
    return mat


def spectrum(rho, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Spectrum:
    """Eigenvalues of a PSD matrix, descending, numerical dust clamped to 0.

    Values in [-psd_tolerance, 0) are treated as dust; anything more negative
    is a hard error, distinguishing roundoff from invalid input.
    """
    mat = _as_matrix(rho)
    gap = float(np.max(np.abs(mat - mat.conj().T))) if mat.size else 0.0
    if gap > tolerances.herm:
        raise InvalidStateError(f"not Hermitian: gap {gap!r}")
    vals = np.linalg.eigvalsh((mat + mat.conj().T) / 2.0)
    dust = float(vals[0]) if vals.size and vals[0] < 0 else 0.0
    if dust < -tolerances.psd:
        raise InvalidStateError(f"negative eigenvalue {dust!r} beyond dust tolerance")
    vals = np.clip(vals, 0.0, None)[::-1]
    return Spectrum(tuple(vals), float(np.trace(mat).real), min(dust, 0.0))


def entropy(rho, tolerances: Tolerances = DEFAULT_TOLERANCES) -> EntropyValue:
    """Von Neumann entropy -sum r ln r in nats, with 0 ln 0 := 0."""
    spec = rho if isinstance(rho, Spectrum) else spectrum(rho, tolerances)
    vals = np.asarray(spec.values)
    dim = vals.size
    vals = vals[vals > 0.0]
    nats = max(float(-(vals * np.log(vals)).sum()) if vals.size else 0.0, 0.0)
    # the ln(dim) ceiling is a trace-1 statement; subnormalized reductions
    # may sit slightly above it
    if dim and abs(spec.source_trace - 1.0) <= tolerances.norm and \
            nats > math.log(dim) + 1e-9:
        raise InvalidStateError(
            f"entropy {nats!r} exceeds ln(dim) = {math.log(dim)!r}")
    return EntropyValue(nats)


@dataclass(frozen=True)
class SpectralShiftReport:
    """Eigenvalue-by-eigenvalue gap against the trace-norm distance."""

    max_eigenvalue_gap: float
    trace_norm_diff: float
    bound_holds: bool

    def to_json(self) -> dict:
        return {
            "lemma": "5.1",
            "lhs": self.max_eigenvalue_gap,
            "rhs": self.trace_norm_diff,
            "holds": self.bound_holds,
            "max_eigenvalue_gap": self.max_eigenvalue_gap,
            "trace_norm_diff": self.trace_norm_diff,
        }


def verify_spectral_lemmas(r, s,
                           tolerances: Tolerances = DEFAULT_TOLERANCES,
                           slack: float = 1e-10) -> SpectralShiftReport:
    """Check max_n |r_n - s_n| <= ||R - S||_1 for two PSD trace-class operators.

    ``bound_holds`` must come back True; a False value flags a defect, not a
    property of the inputs.
    """
    if isinstance(r, DensityMatrix) and isinstance(s, DensityMatrix):
        rm, sm = aligned_density_matrices(r, s)
    else:
        rm, sm = _as_matrix(r), _as_matrix(s)
    if rm.shape != sm.shape:
        raise DimensionMismatchError(f"shapes differ: {rm.shape} vs {sm.shape}")
    rv = np.asarray(spectrum(rm, tolerances).values)
    sv = np.asarray(spectrum(sm, tolerances).values)
    max_gap = float(np.max(np.abs(rv - sv))) if rv.size else 0.0
    tn = trace_norm(rm - sm)
    return SpectralShiftReport(max_gap, tn, max_gap <= tn + slack)


@dataclass(frozen=True)
class EntropyBoundReport:
    """Reduced entropies against the ln K ceiling for K-term product sums.

    ``violated`` certifies that no K-term product decomposition exists.
    """

    term_ceiling: int
    entropies: tuple
    ceiling_nats: float
    violated: bool

    def to_json(self) -> dict:
        return {
            "lemma": "4.5",
            "k": self.term_ceiling,
            "entropies": list(self.entropies),
            "lhs": max(self.entropies),
            "rhs": self.ceiling_nats,
            "holds": not self.violated,
            "violated": self.violated,
            "log_base": LOG_BASE_NOTE,
        }


def entropy_decomposition_bound(psi, k: int,
                                tolerances: Tolerances = DEFAULT_TOLERANCES,
                                slack: float = 1e-9) -> EntropyBoundReport:
    """Compare every single-factor reduced entropy of ``psi`` with ln k."""
    if not isinstance(psi, (DenseState, SumState)):
        raise InvalidStateError("expected a state")
    if psi.space.nfactors != 3:
        raise InvalidStateError("the term-count bound is stated on 3 factors")
    k = int(k)
    if k < 1:
        raise InvalidStateError("k must be a positive integer")
    ents = tuple(entropy(partial_trace(psi, (i,)), tolerances).nats
                 for i in range(3))
    ceiling = math.log(k)
    return EntropyBoundReport(k, ents, ceiling,
                              any(e > ceiling + slack for e in ents))


def reduced_spectra(psi, tolerances: Tolerances = DEFAULT_TOLERANCES) -> tuple:
    """Spectra of every single-factor reduction, zero-padded to equal length."""
    specs = [np.asarray(spectrum(partial_trace(psi, (i,)), tolerances).values)
             for i in range(psi.space.nfactors)]
    top = max(s.size for s in specs)
    return tuple(np.pad(s, (0, top - s.size)) for s in specs)


def triortho_necessary_test(psi, tol: float = 1e-8,
                            tolerances: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """True iff all three reduced spectra agree elementwise within ``tol``.

    Agreement is necessary for a triorthogonal decomposition to exist, so a
    False return certifies non-triorthogonality.
    """
    if psi.space.nfactors != 3:
        raise InvalidStateError("the necessary condition is stated on 3 factors")
    s1, s2, s3 = reduced_spectra(psi, tolerances)
    return bool(np.max(np.abs(s1 - s2)) <= tol and
                np.max(np.abs(s1 - s3)) <= tol and
                np.max(np.abs(s2 - s3)) <= tol)
