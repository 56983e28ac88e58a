"""Exact generators for the named example families, witnesses, and the
instability constructions, parameterized as in their defining statements.

Every generator self-checks the invariants its output is supposed to carry
(certificates, norms, overlap ceilings) and raises VerificationError when a
check fails, so a returned bundle is already verified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .decomp import (
    TriDecomposition,
    Variant,
    ordered_triortho,
    OrderedTriortho,
    verify_tridecomposition,
)
from .errors import (
    CapacityError,
    InvalidStateError,
    PreconditionError,
    VerificationError,
)
from .states import (
    DenseState,
    DensityMatrix,
    ProductSpace,
    ProductTerm,
    SumState,
    _factor_overlap,
    densify,
    inner,
    norm,
    partial_trace,
    sparse_vector,
    sparsify,
    trace_norm,
)

_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def _basis_vec(dim: int, n: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.complex128)
    v[n] = 1.0
    return v


def _check_theta(theta: float):
    if not 0.0 < theta <= math.pi / 2.0:
        raise InvalidStateError(f"theta must lie in (0, pi/2], got {theta!r}")


def _verified(d: TriDecomposition, target, tolerances) -> TriDecomposition:
    cert = verify_tridecomposition(d, target, tolerances)
    if not cert.passed:
        raise VerificationError(
            f"generator self-check failed: {cert.failed_condition}")
    return TriDecomposition(d.space, d.terms, d.variant, certificate=cert)


# ---------------------------------------------------------------------------
# Rotation families on three qubits


@dataclass(frozen=True, eq=False)
class Example31Result:
    """Singlet-based family: two verified expansions collapsing to one limit."""

    theta: float
    psi: DenseState            # the common theta -> 0 limit
    phi_theta: DenseState
    psi_theta: DenseState
    phi_decomposition: TriDecomposition
    psi_decomposition: TriDecomposition


def example31(theta: float,
              tolerances: Tolerances = DEFAULT_TOLERANCES) -> Example31Result:
    """Two distinct verified 2-term expansions whose states merge as theta -> 0.

    The limit state is a first-factor vector times a singlet on factors 2, 3;
    the two families re-expand that singlet in rotated bases and tilt the
    repeated first-factor component by theta to restore independence.
    """
    _check_theta(theta)
    space = ProductSpace((2, 2, 2))
    e0, e1 = _basis_vec(2, 0), _basis_vec(2, 1)

    psi_amp = np.zeros((2, 2, 2), dtype=np.complex128)
    psi_amp[0, 0, 1] = _INV_SQRT2
    psi_amp[0, 1, 0] = -_INV_SQRT2
    psi = DenseState(space, psi_amp.ravel(), normalized=True)

    tilted = -math.cos(theta) * e0 - math.sin(theta) * e1
    phi2 = ((e0 - e1) * _INV_SQRT2, (e0 + e1) * _INV_SQRT2)
    phi3 = ((e0 + e1) * _INV_SQRT2, (e0 - e1) * _INV_SQRT2)
    phi_terms = (
        ProductTerm(_INV_SQRT2, (sparse_vector(e0),
                                 sparse_vector(phi2[0]), sparse_vector(phi3[0]))),
        ProductTerm(_INV_SQRT2, (sparse_vector(tilted),
                                 sparse_vector(phi2[1]), sparse_vector(phi3[1]))),
    )
    psi_terms = (
        ProductTerm(_INV_SQRT2, (sparse_vector(e0),
                                 sparse_vector(e0), sparse_vector(e1))),
        ProductTerm(_INV_SQRT2, (sparse_vector(tilted),
                                 sparse_vector(e1), sparse_vector(e0))),
    )
    phi_state = densify(SumState(space, phi_terms))
    psi_state = densify(SumState(space, psi_terms))
    d_phi = _verified(TriDecomposition(space, phi_terms, Variant.LI_ALL),
                      phi_state, tolerances)
    d_psi = _verified(TriDecomposition(space, psi_terms, Variant.LI_ALL),
                      psi_state, tolerances)
    return Example31Result(theta, psi, phi_state, psi_state, d_phi, d_psi)


@dataclass(frozen=True, eq=False)
class SchmidtRotationResult:
    """Two 2-term product expansions of the same bipartite vector.

    The rotated expansion's factor-2 vectors are unit while its factor-3
    vectors carry the split weights, exactly as the rotation identity writes
    them.
    """

    p1: float
    p2: float
    alpha: float
    schmidt_terms: tuple       # ((coeff, vec2, vec3), ...)
    rotated_terms: tuple       # ((vec2 unit, vec3 weighted), ...)
    state: DenseState


def schmidt_rotation(p1: float, p2: float, alpha: float) -> SchmidtRotationResult:
    """Rewrite sqrt(p1) u1 v1 + sqrt(p2) u2 v2 through a rotation by alpha."""
    if not p1 >= p2 > 0:
        raise InvalidStateError("need p1 >= p2 > 0")
    space = ProductSpace((2, 2))
    e0, e1 = _basis_vec(2, 0), _basis_vec(2, 1)
    c, s = math.cos(alpha), math.sin(alpha)
    r1, r2 = math.sqrt(p1), math.sqrt(p2)
    schmidt_terms = ((r1, e0, e0.copy()), (r2, e1, e1.copy()))
    rotated_terms = (
        (c * e0 + s * e1, r1 * c * e0 + r2 * s * e1),
        (s * e0 - c * e1, r1 * s * e0 - r2 * c * e1),
    )
    amp = r1 * np.outer(e0, e0) + r2 * np.outer(e1, e1)
    rebuilt = sum(np.outer(u, v) for u, v in rotated_terms)
    if np.max(np.abs(amp - rebuilt)) > 1e-12:
        raise VerificationError("rotation identity failed to reconstruct")
    return SchmidtRotationResult(p1, p2, alpha, schmidt_terms, rotated_terms,
                                 DenseState(space, amp.ravel(), normalized=None))


@dataclass(frozen=True, eq=False)
class Example32Result:
    """Two reduced states with unique product-projector decompositions whose
    trace-norm gap closes while every cross overlap stays below 1/sqrt(2)."""

    theta: float
    rho_phi: DensityMatrix
    rho_psi: DensityMatrix
    weights: tuple
    phi_products: tuple        # ((vec1, vec2), ...) per term
    psi_products: tuple
    cross_overlaps: np.ndarray
    trace_norm_gap: float


def example32(theta: float,
              tolerances: Tolerances = DEFAULT_TOLERANCES) -> Example32Result:
    """Partial traces of the rotation family on factors (1, 2).

    The overlap ceiling 1/sqrt(2) is asserted with 1e-10 headroom; it is
    attained only in the limit.
    """
    base = example31(theta, tolerances)
    rho_phi = partial_trace(base.phi_theta, (0, 1))
    rho_psi = partial_trace(base.psi_theta, (0, 1))

    def products(d: TriDecomposition):
        out = []
        for t in d.terms:
            v1 = np.zeros(2, dtype=np.complex128)
            v2 = np.zeros(2, dtype=np.complex128)
            for i, a in t.factors[0]:
                v1[i] = a
            for i, a in t.factors[1]:
                v2[i] = a
            out.append((v1, v2))
        return tuple(out)

    phi_products = products(base.phi_decomposition)
    psi_products = products(base.psi_decomposition)
    for rho, prods in ((rho_phi, phi_products), (rho_psi, psi_products)):
        rebuilt = sum(0.5 * np.outer(np.kron(v1, v2), np.kron(v1, v2).conj())
                      for v1, v2 in prods)
        if np.max(np.abs(rho.matrix - rebuilt)) > 1e-12:
            raise VerificationError("reduced state does not match its "
                                    "product decomposition")
    cross = np.empty((2, 2))
    for i, (a1, a2) in enumerate(phi_products):
        for j, (b1, b2) in enumerate(psi_products):
            cross[i, j] = abs(np.vdot(a1, b1) * np.vdot(a2, b2))
    if cross.max() > _INV_SQRT2 + 1e-10:
        raise VerificationError("cross overlap exceeded the 1/sqrt(2) ceiling")
    gap = trace_norm(rho_phi.matrix - rho_psi.matrix)
    return Example32Result(theta, rho_phi, rho_psi, (0.5, 0.5),
                           phi_products, psi_products, cross, gap)


@dataclass(frozen=True, eq=False)
class Example33Result:
    """Product-state limit with diverging expansion coefficients."""

    theta: float
    raw_coefficients: tuple    # (1 - 1/sqrt(theta), 1/sqrt(theta))
    phi_raw: DenseState        # before normalization
    psi_theta: DenseState
    decomposition: TriDecomposition
    limit: DenseState          # the product state psi1 psi1 psi1


def example33(theta: float,
              tolerances: Tolerances = DEFAULT_TOLERANCES) -> Example33Result:
    """Normalized 2-term expansion approaching a product state while the raw
    coefficient 1/sqrt(theta) diverges."""
    _check_theta(theta)
    c1 = 1.0 - 1.0 / math.sqrt(theta)
    c2 = 1.0 / math.sqrt(theta)
    if abs(c1) <= tolerances.zero_coeff:
        raise InvalidStateError(
            "theta = 1 makes the first coefficient vanish; the expansion "
            "degenerates to a single term")
    space = ProductSpace((2, 2, 2))
    e0, e1 = _basis_vec(2, 0), _basis_vec(2, 1)
    tilted = math.cos(theta) * e0 + math.sin(theta) * e1
    comp1 = (sparse_vector(e0),) * 3
    comp2 = (sparse_vector(tilted),) * 3
    raw_terms = (ProductTerm(c1, comp1), ProductTerm(c2, comp2))
    phi_raw = densify(SumState(space, raw_terms))
    nrm = norm(phi_raw)
    psi_theta = DenseState(space, phi_raw.amplitudes / nrm, normalized=True)
    terms = (ProductTerm(c1 / nrm, comp1), ProductTerm(c2 / nrm, comp2))
    d = _verified(TriDecomposition(space, terms, Variant.LI_ALL),
                  psi_theta, tolerances)
    limit = np.zeros((2, 2, 2), dtype=np.complex128)
    limit[0, 0, 0] = 1.0
    return Example33Result(theta, (c1, c2), phi_raw, psi_theta, d,
                           DenseState(space, limit.ravel(), normalized=True))


# ---------------------------------------------------------------------------
# Flat-overlap basis and the dense instability pair


def dft_basis(n: int) -> np.ndarray:
    """Orthonormal basis columns with |<u_k|v_m>| = 1/sqrt(n) for all k, m.

    v[:, m] has entries exp(2 pi i (k+1)(m+1) / n) / sqrt(n).
    """
    n = int(n)
    if n < 1:
        raise InvalidStateError("basis size must be at least 1")
    k = np.arange(1, n + 1)
    return np.exp(2j * math.pi * np.outer(k, k) / n) / math.sqrt(n)


@dataclass(frozen=True, eq=False)
class InstabilityPair:
    """Two nearby wavefunctions with disjoint verified expansions.

    Each component of the first expansion is within theta of a chosen basis
    direction while every cross overlap against the second expansion stays
    small; both certificates pass.
    """

    epsilon: float
    theta: float
    truncation_size: int
    space: ProductSpace
    phi1: SumState
    phi2: SumState
    decomposition1: TriDecomposition
    decomposition2: TriDecomposition
    basis_indices1: tuple     # multi-index n(k) per term of phi1
    basis_indices2: tuple
    distances: tuple          # (||psi - phi1||, ||psi - phi2||)
    basis_overlap_min: float  # min |<component | chosen basis direction>|
    cross_overlap_max: float  # max |<phi1 component | phi2 component>|


def _truncation_size(psi: DenseState, epsilon: float) -> int:
    tensor = psi.tensor
    dims = psi.space.dims
    for n in range(1, max(dims) + 1):
        block = tensor[tuple(slice(0, min(n, d)) for d in dims)]
        weight = float(np.linalg.norm(block))
        if weight > 1.0 - (epsilon / 4.0) ** 2 and \
                math.sqrt(max(2.0 - 2.0 * weight, 0.0)) < epsilon / 2.0:
            return n
    return max(dims)


def _flat_expansion_entries(psi: DenseState, n: int, zero_tol: float = 1e-12):
    """Coefficient tensors of the truncation in the u- and v-product bases."""
    dims = psi.space.dims
    a = np.zeros((n, n, n), dtype=np.complex128)
    sl = tuple(slice(0, min(n, d)) for d in dims)
    a[sl] = psi.tensor[sl]
    a /= np.linalg.norm(a)
    cols = dft_basis(n)
    b = np.einsum("ai,bj,ck,abc->ijk", cols.conj(), cols.conj(), cols.conj(), a)
    entries_u = [(tuple(int(x) for x in idx), complex(a[idx]))
                 for idx in zip(*np.nonzero(np.abs(a) > zero_tol))]
    entries_v = [(tuple(int(x) for x in idx), complex(b[idx]))
                 for idx in zip(*np.nonzero(np.abs(b) > zero_tol))]
    return entries_u, entries_v, cols


def _perturbed_sum(entries, cols, n, theta, space) -> tuple:
    """Perturb each product component by theta into a fresh direction."""
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    terms = []
    for j, (multi, coeff) in enumerate(entries, start=1):
        fresh = n + j
        facs = []
        for i in range(3):
            if cols is None:
                base = ((multi[i], cos_t + 0j),)
            else:
                col = cols[:, multi[i]]
                base = tuple((r, cos_t * col[r]) for r in range(n))
            facs.append(base + ((fresh, sin_t + 0j),))
        terms.append(ProductTerm(coeff, tuple(facs)))
    state = SumState(space, tuple(terms))
    nrm = norm(state)
    state = SumState(space, tuple(ProductTerm(t.coeff / nrm, t.factors)
                                  for t in terms))
    return state, tuple(multi for multi, _ in entries)


def _pair_metrics(psi, phi1, phi2, indices1, theta):
    d1 = math.sqrt(max(2.0 - 2.0 * inner(psi, phi1).real, 0.0))
    d2 = math.sqrt(max(2.0 - 2.0 * inner(psi, phi2).real, 0.0))
    basis_min = min(
        abs(dict(t.factors[i]).get(indices1[k][i], 0.0))
        for k, t in enumerate(phi1.terms) for i in range(3))
    cross = max(
        float(np.max(np.abs(_factor_overlap(phi1._packed[i], phi2._packed[i]))))
        for i in range(3))
    return d1, d2, basis_min, cross


def instability_pair(psi: DenseState, epsilon: float, theta: float = None,
                     tolerances: Tolerances = DEFAULT_TOLERANCES,
                     term_ceiling: int = 4000) -> InstabilityPair:
    """Two wavefunctions within epsilon of ``psi`` whose unique expansions
    have mutually far components.

    The truncation of ``psi`` is expanded in the computational product basis
    and in the flat-overlap basis, every component is tilted by theta into a
    fresh direction to restore independence, and both expansions are
    certified.  When ``theta`` is omitted, the largest value on a 1/2^j grid
    keeping all conclusion inequalities with 10% slack is selected.
    """
    if not isinstance(psi, DenseState):
        raise InvalidStateError("the construction expands a dense state")
    if psi.space.nfactors != 3:
        raise InvalidStateError("three factors required")
    if not 0.0 < epsilon < 1.0:
        raise InvalidStateError("epsilon must lie in (0, 1)")
    if abs(norm(psi) - 1.0) > tolerances.norm:
        raise InvalidStateError("psi must be a wavefunction")

    n0 = _truncation_size(psi, epsilon)
    n = n0
    while 1.0 / math.sqrt(n) >= epsilon / 2.0:
        n += 1
    entries_u, entries_v, cols = _flat_expansion_entries(psi, n)
    if len(entries_u) + len(entries_v) > term_ceiling:
        raise CapacityError(
            f"expansion would carry {len(entries_u) + len(entries_v)} terms; "
            "raise term_ceiling to proceed")
    ambient = n + max(len(entries_u), len(entries_v)) + 1
    space = ProductSpace((ambient,) * 3)

    def build(theta_val):
        phi1, idx1 = _perturbed_sum(entries_u, None, n, theta_val, space)
        phi2, idx2 = _perturbed_sum(entries_v, cols, n, theta_val, space)
        return phi1, phi2, idx1, idx2

    if theta is None:
        chosen = None
        for j in range(1, 41):
            cand = 2.0 ** -j
            phi1, phi2, idx1, idx2 = build(cand)
            d1, d2, basis_min, cross = _pair_metrics(psi, phi1, phi2, idx1, cand)
            if d1 <= 0.9 * epsilon and d2 <= 0.9 * epsilon and \
                    basis_min >= 1.0 - 0.9 * epsilon and cross <= 0.9 * epsilon:
                chosen = cand
                break
        if chosen is None:
            raise VerificationError("no theta on the grid meets the bounds")
        theta = chosen
    else:
        _check_theta(theta)
        phi1, phi2, idx1, idx2 = build(theta)
        d1, d2, basis_min, cross = _pair_metrics(psi, phi1, phi2, idx1, theta)
        failed = None
        if not (d1 < epsilon and d2 < epsilon):
            failed = f"||psi - phi_j|| < epsilon (got {max(d1, d2):.6f})"
        elif not basis_min > 1.0 - epsilon:
            failed = f"basis overlap > 1 - epsilon (got {basis_min:.6f})"
        elif not cross < epsilon:
            failed = f"cross overlap < epsilon (got {cross:.6f})"
        if failed:
            raise PreconditionError(f"theta too large: {failed}")

    d1_final, d2_final, basis_min, cross = _pair_metrics(psi, phi1, phi2,
                                                         idx1, theta)
    dec1 = _verified(TriDecomposition(space, phi1.terms, Variant.LI_ALL),
                     phi1, tolerances)
    dec2 = _verified(TriDecomposition(space, phi2.terms, Variant.LI_ALL),
                     phi2, tolerances)
    return InstabilityPair(epsilon, theta, n, space, phi1, phi2, dec1, dec2,
                           idx1, idx2, (d1_final, d2_final), basis_min, cross)


# ---------------------------------------------------------------------------
# Moving one tensor product structure onto another


def _scaled_terms(coeff: complex, state: SumState) -> tuple:
    return tuple(ProductTerm(coeff * t.coeff, t.factors) for t in state.terms)


def _as_sum(state) -> SumState:
    return state if isinstance(state, SumState) else sparsify(state)


@dataclass(frozen=True, eq=False)
class MoverUnitary:
    """Unitary sending one wavefunction to another, identity elsewhere.

    The correction U - 1 has rank 2 and lives on span{phi1, phi1_perp}, so
    the operator is stored through its four states and certified on that
    2-dimensional coordinate representation; application and moved inner
    products expand the rank-2 correction against cached brackets.
    """

    phi1: SumState
    phi2: SumState
    phi1_perp: SumState
    phi2_perp: SumState
    alpha: complex
    beta: float
    identity: bool = False

    @cached_property
    def _brackets(self) -> dict:
        if self.identity:
            return {}
        return {
            "n11": inner(self.phi1, self.phi1),
            "n12": inner(self.phi1, self.phi1_perp),
            "n22": inner(self.phi1_perp, self.phi1_perp),
        }

    def _correction_coeffs(self, state) -> tuple:
        c1 = inner(self.phi2, state) - inner(self.phi1, state)
        c2 = inner(self.phi2_perp, state) - inner(self.phi1_perp, state)
        return c1, c2

    def apply(self, state):
        """U state, materialized (term count grows by the correction's)."""
        if self.identity:
            return state
        s = _as_sum(state)
        c1, c2 = self._correction_coeffs(s)
        terms = s.terms + _scaled_terms(c1, self.phi1) \
            + _scaled_terms(c2, self.phi1_perp)
        return SumState(self.phi1.space, terms)

    def moved_inner(self, a, b) -> complex:
        """<U a | U b> with the rank-2 correction expanded term by term."""
        if self.identity:
            return inner(a, b)
        br = self._brackets
        ca1, ca2 = self._correction_coeffs(a)
        cb1, cb2 = self._correction_coeffs(b)
        val = inner(a, b)
        val += cb1 * inner(a, self.phi1) + cb2 * inner(a, self.phi1_perp)
        val += ca1.conjugate() * inner(self.phi1, b) \
            + ca2.conjugate() * inner(self.phi1_perp, b)
        val += ca1.conjugate() * cb1 * br["n11"]
        val += ca1.conjugate() * cb2 * br["n12"]
        val += ca2.conjugate() * cb1 * br["n12"].conjugate()
        val += ca2.conjugate() * cb2 * br["n22"]
        return complex(val)

    def minus_identity_matrix(self) -> np.ndarray:
        """U - 1 on the orthonormal pair (phi1, phi1_perp), built honestly
        from inner products of the stored states."""
        if self.identity:
            return np.zeros((2, 2), dtype=np.complex128)
        basis = (self.phi1, self.phi1_perp)
        out = np.empty((2, 2), dtype=np.complex128)
        for j, ej in enumerate(basis):
            c1, c2 = self._correction_coeffs(ej)
            for i, ei in enumerate(basis):
                br = self._brackets
                pieces = c1 * (br["n11"] if i == 0 else br["n12"].conjugate())
                pieces += c2 * (br["n12"] if i == 0 else br["n22"])
                out[i, j] = pieces
        return out

    def trace_norm_minus_identity(self) -> float:
        return float(np.linalg.svd(self.minus_identity_matrix(),
                                   compute_uv=False).sum())


@dataclass(frozen=True, eq=False)
class TensorStructurePair:
    """A mover together with the relabeled-overlap evaluator it induces.

    ``relabeled_overlap`` evaluates the bracket between a factor vector of
    the original structure and a moved factor vector of the new structure,
    using auxiliary basis indices on the remaining factors; the value is
    independent of that auxiliary choice.
    """

    mover: MoverUnitary
    space: ProductSpace

    def relabeled_overlap(self, i: int, psi_vec, phi_vec, aux) -> complex:
        aux = tuple(int(x) for x in aux)
        if len(aux) != self.space.nfactors - 1:
            raise InvalidStateError(
                "need one auxiliary basis index per remaining factor")

        def embed(vec):
            facs = []
            it = iter(aux)
            for f in range(self.space.nfactors):
                if f == i:
                    facs.append(sparse_vector(vec) if not isinstance(vec, tuple)
                                else vec)
                else:
                    facs.append(((next(it), 1.0 + 0j),))
            return SumState(self.space, (ProductTerm(1.0, tuple(facs)),))

        return self.mover.moved_inner(embed(psi_vec), embed(phi_vec))


def structure_mover(phi1, phi2,
                    tolerances: Tolerances = DEFAULT_TOLERANCES
                    ) -> TensorStructurePair:
    """Build the unitary mapping ``phi2`` to ``phi1`` (identity elsewhere)
    and the relabeled-overlap evaluator between the two induced structures.

    Equal inputs give the identity mover; collinear-but-unequal inputs have
    no rank-2 mover and are rejected.
    """
    for name, st in (("phi1", phi1), ("phi2", phi2)):
        if abs(norm(st) - 1.0) > tolerances.norm:
            raise InvalidStateError(f"{name} must be a wavefunction")
    s1, s2 = _as_sum(phi1), _as_sum(phi2)
    if s1.space.nfactors != s2.space.nfactors:
        raise InvalidStateError("states live on different factor counts")
    dims = tuple(max(a, b) for a, b in zip(s1.space.dims, s2.space.dims))
    space = ProductSpace(dims)
    s1 = SumState(space, s1.terms)
    s2 = SumState(space, s2.terms)
    alpha = inner(s2, s1)
    dist = math.sqrt(max(2.0 - 2.0 * alpha.real, 0.0))
    if dist <= tolerances.norm:
        mover = MoverUnitary(s1, s2, s1, s2, 1.0 + 0j, 0.0, identity=True)
        return TensorStructurePair(mover, space)
    beta_sq = max(1.0 - abs(alpha) ** 2, 0.0)
    if beta_sq <= 1e-10:
        raise InvalidStateError(
            "states are collinear up to phase; no rank-2 mover exists")
    beta = math.sqrt(beta_sq)
    phi2_perp = SumState(space, _scaled_terms(1.0 / beta, s1)
                         + _scaled_terms(-alpha / beta, s2))
    phi1_perp = SumState(space, _scaled_terms(alpha.conjugate() / beta, s1)
                         + _scaled_terms(-1.0 / beta, s2))
    mover = MoverUnitary(s1, s2, phi1_perp, phi2_perp, alpha, beta)

    if abs(abs(alpha) ** 2 + beta ** 2 - 1.0) > 1e-10:
        raise VerificationError("mover phase convention broke |a|^2 + |b|^2 = 1")
    m = mover.minus_identity_matrix() + np.eye(2)
    if np.max(np.abs(m.conj().T @ m - np.eye(2))) > 1e-9:
        raise VerificationError("mover is not unitary on its correction plane")
    coords2 = np.array([alpha.conjugate(), -beta])  # phi2 on (phi1, phi1_perp)
    moved = m @ coords2
    if np.max(np.abs(moved - np.array([1.0, 0.0]))) > 1e-9:
        raise VerificationError("mover does not send phi2 to phi1")
    return TensorStructurePair(mover, space)


# ---------------------------------------------------------------------------
# Isolation witnesses and the spectra-mismatch perturbation


def isolation_witness_3(n1: int, dims: tuple = None) -> DenseState:
    """Three-factor state whose factor-3 entropy is ln(n1 + 1), above the
    ceiling any expansion with n1 independent first-factor components allows."""
    n1 = int(n1)
    if n1 < 2:
        raise InvalidStateError("n1 must be at least 2")
    if dims is None:
        dims = (n1, 2, n1 + 1)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or dims[0] < n1 or dims[1] < 2 or dims[2] < n1 + 1:
        raise InvalidStateError(
            f"dims {dims} too small for the witness with n1 = {n1}")
    amp = np.zeros(dims, dtype=np.complex128)
    w = 1.0 / math.sqrt(n1 + 1.0)
    for k in range(n1):
        amp[k, 0, k] = w
    amp[0, 1, n1] = w
    return DenseState(ProductSpace(dims), amp.ravel(), normalized=True)


def isolation_witness_4(n: int, dims: tuple = None) -> DenseState:
    """Four-factor state whose (2,3)-entropy is ln(n + 1)."""
    n = int(n)
    if n < 2:
        raise InvalidStateError("n must be at least 2")
    if dims is None:
        dims = (n, n, n, n)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4 or any(d < n for d in dims):
        raise InvalidStateError(
            f"dims {dims} must all be at least {n} (padding above is fine)")
    amp = np.zeros(dims, dtype=np.complex128)
    w = 1.0 / math.sqrt(n + 1.0)
    for k in range(n):
        amp[k, k, 0, 0] = w
    amp[0, 0, 1, 1] = w
    return DenseState(ProductSpace(dims), amp.ravel(), normalized=True)


def _orthogonal_unit(vec: np.ndarray, zero_tol: float = 1e-9) -> np.ndarray:
    """First basis direction orthogonalized against ``vec``."""
    d = vec.shape[0]
    for j in range(d):
        cand = _basis_vec(d, j) - vec * vec.conj()[j]
        n = np.linalg.norm(cand)
        if n > 0.5:
            return cand / n
    for j in range(d):
        cand = _basis_vec(d, j) - vec * vec.conj()[j]
        n = np.linalg.norm(cand)
        if n > zero_tol:
            return cand / n
    raise InvalidStateError("no orthogonal direction available")


def non_triortho_perturb(psi, epsilon: float,
                         tolerances: Tolerances = DEFAULT_TOLERANCES
                         ) -> DenseState:
    """Perturb a triorthogonal state so no neighbour is triorthogonal.

    The third factor of the leading term is tilted toward the second term's
    third component (single-term inputs first get fresh orthogonal
    directions), which splits the top reduced eigenvalue of factor 3 away
    from factors 1 and 2 while moving the state by at most sqrt(2 epsilon).
    """
    if isinstance(psi, OrderedTriortho):
        ordered = psi
    elif isinstance(psi, TriDecomposition):
        ordered = ordered_triortho(psi, tolerances.deg)
    else:
        raise InvalidStateError("expected an (ordered) orthonormal decomposition")
    if not 0.0 < epsilon < 1.0:
        raise InvalidStateError("epsilon must lie in (0, 1)")
    d = ordered.decomposition
    dims = d.space.dims
    eta = math.sqrt(1.0 - epsilon)
    eta_p = math.sqrt(epsilon)

    def dense_factors(term):
        return [np.asarray([dict(term.factors[i]).get(j, 0.0)
                            for j in range(dims[i])], dtype=np.complex128)
                for i in range(3)]

    amp = np.zeros(dims, dtype=np.complex128)
    if d.nterms == 1:
        lead = dense_factors(d.terms[0])
        fresh = [_orthogonal_unit(v) for v in lead]
        a1 = d.terms[0].coeff
        mixed = eta * lead[2] + eta_p * fresh[2]
        amp += a1 * eta * np.multiply.outer(
            lead[0], np.multiply.outer(lead[1], mixed))
        amp += a1 * eta_p * np.multiply.outer(
            fresh[0], np.multiply.outer(fresh[1], fresh[2]))
    else:
        lead = dense_factors(d.terms[0])
        second = dense_factors(d.terms[1])
        mixed = eta * lead[2] + eta_p * second[2]
        amp += d.terms[0].coeff * np.multiply.outer(
            lead[0], np.multiply.outer(lead[1], mixed))
        for term in d.terms[1:]:
            f = dense_factors(term)
            amp += term.coeff * np.multiply.outer(
                f[0], np.multiply.outer(f[1], f[2]))
    out = DenseState(d.space, amp.ravel(), normalized=None)
    if abs(norm(out) - 1.0) > 1e-12:
        raise VerificationError("perturbed state failed to stay normalized")
    return out
