"""Schmidt decomposition, product-sum decompositions of three-factor states,
uniqueness-condition certificates, triorthogonal extraction, and equivalence.

A decomposition that passes its variant's certificate is guaranteed unique
(up to term order and phases), so verification stands in for re-proving
uniqueness.  Extraction goes through the Schmidt structure: a triorthogonal
decomposition is simultaneously a Schmidt decomposition across every
bipartition, which pins the coefficients and, away from degeneracies, the
components.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import DEFAULT_TOLERANCES, DENSIFY_CEILING, Tolerances
from .errors import CapacityError, DimensionMismatchError, InvalidStateError
from .spectral import triortho_necessary_test
from .states import (
    DenseState,
    ProductSpace,
    ProductTerm,
    SumState,
    as_dense,
    densify,
    inner,
    norm,
    sparse_vector,
    sv_inner,
    sv_scale,
)


class Variant(Enum):
    """Which uniqueness conditions a decomposition claims to satisfy."""

    LI_TWO_FACTORS = "LI_TWO_FACTORS"   # two factors independent, third with no collinear pair
    LI_ALL = "LI_ALL"                   # all three factors linearly independent
    ORTHONORMAL = "ORTHONORMAL"         # all three factors orthonormal


# ---------------------------------------------------------------------------
# Schmidt decomposition


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    space: ProductSpace
    bipartition: tuple          # (left factor indices, right factor indices)
    coefficients: np.ndarray    # descending positive reals
    left_vectors: np.ndarray    # dim_left x rank, orthonormal columns
    right_vectors: np.ndarray   # dim_right x rank, orthonormal columns

    def reconstruct(self) -> DenseState:
        left, right = self.bipartition
        mat = (self.left_vectors * self.coefficients) @ self.right_vectors.T
        tensor = mat.reshape([self.space.dims[i] for i in left] +
                             [self.space.dims[i] for i in right])
        order = list(left) + list(right)
        inverse = np.argsort(order)
        return DenseState(self.space,
                          tensor.transpose(inverse).ravel(), normalized=None)


def _bipartition(space: ProductSpace, left) -> tuple:
    left = tuple(sorted({int(i) for i in left}))
    if not left or len(left) >= space.nfactors:
        raise InvalidStateError("bipartition must be a nonempty proper subset")
    if any(i < 0 or i >= space.nfactors for i in left):
        raise InvalidStateError(f"factor index out of range: {left}")
    right = tuple(i for i in range(space.nfactors) if i not in left)
    return left, right


def _matricize(psi: DenseState, left, right) -> np.ndarray:
    dl = math.prod(psi.space.dims[i] for i in left)
    return psi.tensor.transpose(left + right).reshape(dl, -1)


def _canonical_column_phases(left: np.ndarray, right: np.ndarray,
                             zero_tol: float = 1e-12):
    """Make each left column's first significant entry real positive."""
    left = left.copy()
    right = right.copy()
    for j in range(left.shape[1]):
        col = left[:, j]
        sig = np.nonzero(np.abs(col) > zero_tol)[0]
        if sig.size == 0:
            continue
        phase = col[sig[0]] / abs(col[sig[0]])
        left[:, j] = col / phase
        right[:, j] = right[:, j] * phase
    return left, right


def schmidt(psi, left, tolerances: Tolerances = DEFAULT_TOLERANCES,
            sv_floor: float = 1e-12) -> SchmidtDecomposition:
    """SVD of the amplitude matrix across ``left`` | complement.

    Coefficients come back descending with numerically-zero tails dropped.
    Ties within the degeneracy width are ordered deterministically by
    lexicographic comparison of the phase-canonicalized left columns.
    """
    psi_d = as_dense(psi)
    left, right = _bipartition(psi_d.space, left)
    if np.linalg.norm(psi_d.amplitudes) == 0.0:
        raise InvalidStateError("cannot decompose the zero state")
    mat = _matricize(psi_d, left, right)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    keep = s > sv_floor
    u, s, v = u[:, keep], s[keep], vh[keep, :].T
    u, v = _canonical_column_phases(u, v)
    # deterministic tie-breaking inside degenerate groups
    order = list(range(s.size))
    i = 0
    while i < s.size:
        j = i + 1
        while j < s.size and s[i] - s[j] <= tolerances.deg:
            j += 1
        if j - i > 1:
            block = order[i:j]
            block.sort(key=lambda k: tuple(
                x for e in u[:, k] for x in (e.real, e.imag)))
            order[i:j] = block
        i = j
    u, s, v = u[:, order], s[order], v[:, order]
    return SchmidtDecomposition(psi_d.space, (left, right),
                                s.copy(), u, v)


def schmidt_rank(psi, left, tol: float) -> int:
    """Number of Schmidt coefficients above ``tol``; 1 means a product."""
    psi_d = as_dense(psi)
    left, right = _bipartition(psi_d.space, left)
    s = np.linalg.svd(_matricize(psi_d, left, right), compute_uv=False)
    return int((s > tol).sum())


def linear_independence(vectors, tol: float, dim: int = None):
    """Smallest singular value of the column matrix, and whether it beats tol.

    More vectors than dimensions is structural dependence: (0.0, False).
    Sparse vectors are compressed onto their touched indices before the SVD.
    """
    vectors = list(vectors)
    if not vectors:
        raise InvalidStateError("need at least one vector")
    if all(isinstance(v, np.ndarray) for v in vectors):
        lens = {v.shape[0] for v in vectors}
        if len(lens) != 1:
            raise DimensionMismatchError("vectors have mixed dimensions")
        d = lens.pop()
        mat = np.column_stack([np.asarray(v, dtype=np.complex128)
                               for v in vectors])
    else:
        svs = [v if isinstance(v, tuple) else sparse_vector(v) for v in vectors]
        touched = sorted({i for v in svs for i, _ in v})
        pos = {i: p for p, i in enumerate(touched)}
        d = dim if dim is not None else (max(touched) + 1 if touched else 0)
        mat = np.zeros((max(len(touched), 1), len(svs)), dtype=np.complex128)
        for c, v in enumerate(svs):
            for i, a in v:
                mat[pos[i], c] = a
    k = len(vectors)
    if dim is not None:
        d = int(dim)
    if k > d or mat.shape[0] < k:
        return 0.0, False
    smin = float(np.linalg.svd(mat, compute_uv=False)[-1])
    return smin, smin > tol


# ---------------------------------------------------------------------------
# Product-sum decompositions


@dataclass(frozen=True)
class TriCertificate:
    """Outcome of checking a decomposition against its variant's conditions."""

    passed: bool
    variant: str
    failed_condition: str
    reconstruction_error: float
    min_coefficient: float
    min_singular_values: tuple
    max_offdiag_overlaps: tuple
    max_pairwise_overlaps: tuple
    li_factors: tuple
    tolerances: dict

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "variant": self.variant,
            "failed_condition": self.failed_condition,
            "reconstruction_error": self.reconstruction_error,
            "min_coefficient": self.min_coefficient,
            "min_singular_values": list(self.min_singular_values),
            "max_offdiag_overlaps": list(self.max_offdiag_overlaps),
            "max_pairwise_overlaps": list(self.max_pairwise_overlaps),
            "li_factors": list(self.li_factors) if self.li_factors else None,
            "tolerances": dict(self.tolerances),
        }


@dataclass(frozen=True, eq=False)
class TriDecomposition:
    """Finite sum of weighted three-factor product terms."""

    space: ProductSpace
    terms: tuple           # ProductTerm per term, components unit per factor
    variant: Variant
    certificate: TriCertificate = None

    def __post_init__(self):
        if self.space.nfactors != 3:
            raise InvalidStateError("decompositions are defined on 3 factors")
        terms = tuple(self.terms)
        for t in terms:
            if not isinstance(t, ProductTerm) or len(t.factors) != 3:
                raise InvalidStateError("terms must be 3-factor ProductTerms")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "variant", Variant(self.variant))

    @property
    def nterms(self) -> int:
        return len(self.terms)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([t.coeff for t in self.terms], dtype=np.complex128)

    def to_sum_state(self) -> SumState:
        return SumState(self.space, self.terms)

    def term_state(self, k: int) -> SumState:
        return SumState(self.space, (self.terms[k],))


@dataclass(frozen=True)
class Block:
    """Terms sharing one coefficient magnitude in an ordered decomposition."""

    magnitude: float
    indices: tuple


@dataclass(frozen=True, eq=False)
class OrderedTriortho:
    """Orthonormal-variant decomposition with |a_1| >= |a_2| >= ... and the
    grouping into strictly decreasing distinct-magnitude blocks."""

    decomposition: TriDecomposition
    blocks: tuple

    @property
    def nblocks(self) -> int:
        return len(self.blocks)


def ordered_triortho(d: TriDecomposition,
                     tol_deg: float = DEFAULT_TOLERANCES.deg) -> OrderedTriortho:
    """Sort terms by descending |a| and group them into degeneracy blocks."""
    if d.variant is not Variant.ORTHONORMAL:
        raise InvalidStateError("ordering is defined for orthonormal decompositions")
    order = sorted(range(d.nterms), key=lambda k: -abs(d.terms[k].coeff))
    terms = tuple(d.terms[k] for k in order)
    sorted_d = replace(d, terms=terms)
    mags = [abs(t.coeff) for t in terms]
    blocks = []
    i = 0
    while i < len(mags):
        j = i + 1
        while j < len(mags) and mags[j - 1] - mags[j] <= tol_deg:
            j += 1
        blocks.append(Block(mags[i], tuple(range(i, j))))
        i = j
    return OrderedTriortho(sorted_d, tuple(blocks))


def truncate_terms(d: TriDecomposition, delta: float) -> TriDecomposition:
    """Drop terms with |a_k| <= delta (preprocessing for near-infinite sums)."""
    kept = tuple(t for t in d.terms if abs(t.coeff) > delta)
    return replace(d, terms=kept, certificate=None)


def term_distance(a_coeff, a_factors, b_coeff, b_factors) -> float:
    """|| a (x)psi_i  -  b (x)phi_i ||, computed from factor overlaps."""
    ov = 1.0 + 0j
    for fa, fb in zip(a_factors, b_factors):
        ov *= sv_inner(fa, fb)
    val = (abs(a_coeff) ** 2 + abs(b_coeff) ** 2
           - 2.0 * (complex(a_coeff).conjugate() * complex(b_coeff) * ov).real)
    return math.sqrt(max(val, 0.0))


def reconstruction_error(d: TriDecomposition, psi) -> float:
    """|| psi - sum_k a_k term_k ||.

    Dense targets are compared by direct subtraction; SumState targets through
    the three inner products, which cancels exactly when the decomposition's
    terms are the state's own.
    """
    dec = d.to_sum_state()
    if isinstance(psi, DenseState):
        if d.space.dim > DENSIFY_CEILING:
            raise CapacityError(
                "decomposition space too large to compare against a dense state")
        dims = tuple(max(x, y) for x, y in zip(psi.space.dims, d.space.dims))
        big = ProductSpace(dims)
        a = np.zeros(dims, dtype=np.complex128)
        a[tuple(slice(0, s) for s in psi.space.dims)] = psi.tensor
        b = densify(SumState(big, dec.terms)).tensor
        return float(np.linalg.norm(a - b))
    if isinstance(psi, SumState):
        val = (inner(psi, psi).real - 2.0 * inner(psi, dec).real
               + inner(dec, dec).real)
        return math.sqrt(max(val, 0.0))
    raise InvalidStateError("target must be a state")


def _component_gram(d: TriDecomposition, i: int) -> np.ndarray:
    vecs = [t.factors[i] for t in d.terms]
    g = np.empty((len(vecs), len(vecs)), dtype=np.complex128)
    for a in range(len(vecs)):
        for b in range(a, len(vecs)):
            g[a, b] = sv_inner(vecs[a], vecs[b])
            g[b, a] = g[a, b].conjugate()
    return g


def verify_tridecomposition(d: TriDecomposition, psi,
                            tolerances: Tolerances = DEFAULT_TOLERANCES
                            ) -> TriCertificate:
    """Check reconstruction, coefficients, and the variant's conditions.

    A passing certificate means the decomposition is THE decomposition of
    ``psi`` for its variant, up to re-ordering and phase changes.
    """
    tol_echo = tolerances.as_dict()
    grams = [_component_gram(d, i) for i in range(3)] if d.terms else []
    min_sv, max_off, max_pair = [], [], []
    for i in range(3):
        if not d.terms:
            break
        sv, _ = linear_independence([t.factors[i] for t in d.terms],
                                    tolerances.li, dim=d.space.dims[i])
        min_sv.append(sv)
        g = grams[i]
        off = np.abs(g - np.diag(np.diag(g)))
        max_off.append(float(np.max(np.abs(g - np.eye(len(g))))))
        max_pair.append(float(off.max()) if len(g) > 1 else 0.0)

    def certificate(failed, recon, min_coeff, li_factors=None):
        return TriCertificate(
            passed=failed is None,
            variant=d.variant.value,
            failed_condition=failed,
            reconstruction_error=recon,
            min_coefficient=min_coeff,
            min_singular_values=tuple(min_sv),
            max_offdiag_overlaps=tuple(max_off),
            max_pairwise_overlaps=tuple(max_pair),
            li_factors=li_factors,
            tolerances=tol_echo,
        )

    if not d.terms:
        return certificate("no_terms", math.inf, 0.0)
    min_coeff = min(abs(t.coeff) for t in d.terms)
    if min_coeff <= tolerances.zero_coeff:
        return certificate("zero_coefficient", math.nan, min_coeff)
    recon = reconstruction_error(d, psi)
    if recon > tolerances.recon:
        return certificate("reconstruction", recon, min_coeff)

    if d.variant is Variant.LI_ALL:
        for i in range(3):
            if min_sv[i] <= tolerances.li:
                return certificate(f"linear_independence_factor_{i}",
                                   recon, min_coeff)
        return certificate(None, recon, min_coeff)
    if d.variant is Variant.ORTHONORMAL:
        for i in range(3):
            if max_off[i] >= tolerances.orth:
                return certificate(f"orthonormality_factor_{i}",
                                   recon, min_coeff)
        return certificate(None, recon, min_coeff)
    # LI_TWO_FACTORS: some pair independent, remaining factor free of
    # collinear pairs
    for third in (2, 1, 0):
        pair = tuple(i for i in range(3) if i != third)
        if all(min_sv[i] > tolerances.li for i in pair) and \
                max_pair[third] < 1.0 - tolerances.orth:
            return certificate(None, recon, min_coeff, li_factors=pair)
    return certificate("two_factor_independence", recon, min_coeff)


def canonical_phase(d: TriDecomposition, reference: TriDecomposition = None,
                    zero_tol: float = 1e-12) -> TriDecomposition:
    """Push component phases into the coefficients; rank-1 terms are unchanged.

    Without a reference, each component's first significant entry becomes
    real positive.  With a reference (terms matched positionally), phases are
    chosen so <component | reference component> >= 0.
    """
    new_terms = []
    for k, t in enumerate(d.terms):
        coeff = complex(t.coeff)
        comps = []
        for i, comp in enumerate(t.factors):
            mult = 1.0 + 0j
            if reference is not None:
                ov = sv_inner(comp, reference.terms[k].factors[i])
                if abs(ov) > zero_tol:
                    mult = cmath.exp(1j * cmath.phase(ov))
            else:
                for _, amp in comp:
                    if abs(amp) > zero_tol:
                        mult = cmath.exp(-1j * cmath.phase(amp))
                        break
            comps.append(sv_scale(comp, mult))
            coeff *= mult.conjugate()
        new_terms.append(ProductTerm(coeff, tuple(comps)))
    return replace(d, terms=tuple(new_terms))


def decompositions_equivalent(d1: TriDecomposition, d2: TriDecomposition,
                              tol: float,
                              tolerances: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """True iff a term bijection matches |a_k| and the rank-1 term tensors.

    Terms are sorted by descending |a|; inside each degeneracy group the
    pairing is the optimal assignment on the |<term|term>| matrix, since a
    greedy match can fail under degeneracy.
    """
    if d1.nterms != d2.nterms:
        return False
    if d1.nterms == 0:
        return True
    t1 = sorted(d1.terms, key=lambda t: -abs(t.coeff))
    t2 = sorted(d2.terms, key=lambda t: -abs(t.coeff))
    mags1 = np.array([abs(t.coeff) for t in t1])
    mags2 = np.array([abs(t.coeff) for t in t2])
    if np.max(np.abs(mags1 - mags2)) > tol:
        return False
    i = 0
    while i < len(t1):
        j = i + 1
        while j < len(t1) and mags1[j - 1] - mags1[j] <= tolerances.deg:
            j += 1
        group1, group2 = t1[i:j], t2[i:j]
        ov = np.empty((len(group1), len(group2)))
        for a, ta in enumerate(group1):
            for b, tb in enumerate(group2):
                prod = 1.0 + 0j
                for fa, fb in zip(ta.factors, tb.factors):
                    prod *= sv_inner(fa, fb)
                ov[a, b] = abs(prod)
        rows, cols = linear_sum_assignment(-ov)
        for a, b in zip(rows, cols):
            ta, tb = group1[a], group2[b]
            if abs(abs(ta.coeff) - abs(tb.coeff)) > tol:
                return False
            if term_distance(ta.coeff, ta.factors, tb.coeff, tb.factors) > tol:
                return False
        i = j
    return True


# ---------------------------------------------------------------------------
# Triorthogonal extraction


@dataclass(frozen=True)
class NotTriorthogonal:
    """Certified absence of a triorthogonal decomposition."""

    reason: str


@dataclass(frozen=True)
class Undetermined:
    """Extraction could not certify either way (degenerate block unresolved)."""

    reason: str


def _rank_one_split(block: np.ndarray, tol: float):
    """Split a bipartite vector (as a matrix) into u (x) v; None if rank > 1."""
    u, s, vh = np.linalg.svd(block, full_matrices=False)
    residual = float(s[1]) if s.size > 1 else 0.0
    if residual > tol:
        return None, None, residual
    return u[:, 0], vh[0, :], residual


def _resolve_degenerate_block(left_cols, right_cols, svals, d2, d3, seed, tol):
    """Try to split a degenerate Schmidt block into orthonormal products.

    The right vectors are jointly reduced on factor 2 with a seeded generic
    positive weight on factor 3; distinct eigenvalues force the candidate
    components, which are then checked.  Each member keeps its own singular
    value through the basis rotation, so near-ties inside the grouping width
    reconstruct exactly.  Returns (coeff, left, mid, right) tuples, or a
    NotTriorthogonal / Undetermined verdict.
    """
    g = right_cols.shape[1]
    mats = [right_cols[:, j].reshape(d2, d3) for j in range(g)]
    for attempt in range(3):
        rng = np.random.default_rng([seed, attempt])
        b = rng.standard_normal((d3, d3)) + 1j * rng.standard_normal((d3, d3))
        h = b @ b.conj().T
        weight = np.eye(d3) + h / np.linalg.norm(h, 2)
        joint = sum(m @ weight.T @ m.conj().T for m in mats)
        joint = (joint + joint.conj().T) / 2.0
        vals, vecs = np.linalg.eigh(joint)
        vals, vecs = vals[::-1], vecs[:, ::-1]
        if vals.size < g or vals[g - 1] < 0.5:
            return Undetermined("degenerate block has deficient joint reduction")
        gaps = -np.diff(vals[:g])
        if (vals[g - 1] - (vals[g] if vals.size > g else 0.0)) < tol or \
                (gaps.size and gaps.min() < tol):
            continue  # weight collision; retry with a fresh seed
        mids = [vecs[:, j] for j in range(g)]
        rights = []
        for mid in mids:
            t = np.column_stack([m.conj().T @ mid for m in mats])
            proj = t @ t.conj().T
            pv, pw = np.linalg.eigh(proj)
            if pv.size > 1 and pv[-2] > tol:
                return NotTriorthogonal(
                    "degenerate block does not split into products")
            rights.append(pw[:, -1].conj())
        gram3 = np.array([[np.vdot(x, y) for y in rights] for x in rights])
        if np.max(np.abs(gram3 - np.eye(g))) > math.sqrt(tol):
            return NotTriorthogonal(
                "degenerate block components are not orthonormal")
        xs = np.column_stack([np.kron(m, r) for m, r in zip(mids, rights)])
        unitary = right_cols.conj().T @ xs
        defect = float(np.max(np.abs(unitary.conj().T @ unitary - np.eye(g))))
        if defect > math.sqrt(tol):
            return NotTriorthogonal(
                "degenerate block products do not span the Schmidt block")
        weighted = (left_cols * np.asarray(svals)) @ unitary.conj()
        out = []
        for j in range(g):
            coeff = float(np.linalg.norm(weighted[:, j]))
            out.append((coeff, weighted[:, j] / coeff, mids[j], rights[j]))
        return out
    return Undetermined("could not separate a degenerate coefficient block")


def extract_triortho(psi, tolerances: Tolerances = DEFAULT_TOLERANCES,
                     seed: int = 0):
    """Extract the triorthogonal decomposition of a three-factor wavefunction.

    Returns an OrderedTriortho on success, NotTriorthogonal when absence is
    certified, and Undetermined when a degenerate block resists resolution.
    """
    psi_d = as_dense(psi)
    if psi_d.space.nfactors != 3:
        raise InvalidStateError("extraction is defined on 3 factors")
    n = norm(psi_d)
    if abs(n - 1.0) > tolerances.norm:
        raise InvalidStateError(f"expected a wavefunction, norm = {n!r}")
    if not triortho_necessary_test(psi_d, tol=tolerances.deg,
                                   tolerances=tolerances):
        return NotTriorthogonal("reduced spectra disagree across the factors")

    sd = schmidt(psi_d, (0,), tolerances=tolerances)
    d2, d3 = psi_d.space.dims[1], psi_d.space.dims[2]
    coeffs = sd.coefficients
    triples = []
    i = 0
    while i < coeffs.size:
        j = i + 1
        while j < coeffs.size and coeffs[j - 1] - coeffs[j] <= tolerances.deg:
            j += 1
        if j - i == 1:
            mid, right, residual = _rank_one_split(
                sd.right_vectors[:, i].reshape(d2, d3), 10 * tolerances.orth)
            if mid is None:
                return NotTriorthogonal(
                    "a nondegenerate Schmidt vector is not a product "
                    f"(residual {residual:.3e})")
            triples.append((coeffs[i], sd.left_vectors[:, i], mid, right))
        else:
            resolved = _resolve_degenerate_block(
                sd.left_vectors[:, i:j], sd.right_vectors[:, i:j],
                coeffs[i:j], d2, d3, seed, tolerances.deg)
            if isinstance(resolved, (NotTriorthogonal, Undetermined)):
                return resolved
            triples.extend(resolved)
        i = j

    terms = tuple(
        ProductTerm(c, (sparse_vector(lv), sparse_vector(mv), sparse_vector(rv)))
        for c, lv, mv, rv in triples)
    candidate = canonical_phase(
        TriDecomposition(psi_d.space, terms, Variant.ORTHONORMAL))
    cert = verify_tridecomposition(candidate, psi_d, tolerances)
    if not cert.passed:
        return NotTriorthogonal(
            f"assembled candidate fails {cert.failed_condition}")
    return ordered_triortho(replace(candidate, certificate=cert),
                            tolerances.deg)
