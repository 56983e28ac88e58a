"""Quantitative matching between neighbouring decompositions.

``match_single_product`` compares one weighted product against an orthonormal
product sum on two factors and certifies the coefficient and overlap bounds.
``match_components`` lifts it to full three-factor orthonormal decompositions
through the projection route: collapse factor 3 onto a component, match on
factors (1, 2), then collapse factor 1 to recover the factor-3 overlap.  The
projection route inherits the uniqueness guarantee of the underlying bound,
so no global optimizer is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .decomp import OrderedTriortho, TriDecomposition, Variant, term_distance
from .errors import PreconditionError, VerificationError
from .states import (
    ProductSpace,
    ProductTerm,
    SumState,
    aligned_density_matrices,
    norm,
    partial_trace,
    sv_inner,
    trace_norm,
)


def _distance(a: SumState, b: SumState) -> float:
    neg = tuple(ProductTerm(-t.coeff, t.factors) for t in b.terms)
    return norm(SumState(a.space, a.terms + neg))


def _require(condition: bool, inequality: str):
    if not condition:
        raise PreconditionError(f"precondition failed: {inequality}")


@dataclass(frozen=True)
class ProductMatchReport:
    """Every quantity entering the single-product matching bound."""

    matched_index: int
    eps: float
    eps_prime: float
    trace_norm_gap: float
    coeff_sq_gap: float
    max_other_coeff_sq: float
    unique: bool
    state_distance: float
    second_part: bool
    second_part_skipped: str
    term_distance: float
    overlaps: tuple
    holds: bool

    def to_json(self) -> dict:
        return {
            "matched_index": self.matched_index,
            "eps": self.eps,
            "eps_prime": self.eps_prime,
            "trace_norm_gap": self.trace_norm_gap,
            "coeff_sq_gap": self.coeff_sq_gap,
            "max_other_coeff_sq": self.max_other_coeff_sq,
            "unique": self.unique,
            "state_distance": self.state_distance,
            "second_part": self.second_part,
            "second_part_skipped": self.second_part_skipped,
            "term_distance": self.term_distance,
            "overlaps": list(self.overlaps),
            "holds": self.holds,
        }


def _check_orthonormal_factors(phi: SumState, tol: float):
    for i in range(phi.space.nfactors):
        vecs = [t.factors[i] for t in phi.terms]
        for a in range(len(vecs)):
            for b in range(a + 1, len(vecs)):
                if abs(sv_inner(vecs[a], vecs[b])) >= tol:
                    raise PreconditionError(
                        f"precondition failed: factor {i} sequence of the "
                        "product sum is not orthonormal")


def match_single_product(psi: SumState, phi: SumState, eps: float,
                         eps_prime: float,
                         tolerances: Tolerances = DEFAULT_TOLERANCES
                         ) -> ProductMatchReport:
    """Locate the unique term of ``phi`` matching the single product ``psi``.

    ``psi`` is one weighted product on two factors; ``phi`` is a finite sum
    of products whose factor sequences are orthonormal.  Neither needs to be
    normalized.  The first conclusion isolates the matching coefficient
    within eps_prime; when the states are also close in norm, the matched
    term is close and both factor overlaps exceed 1 - eps.
    """
    if psi.space.nfactors != 2 or phi.space.nfactors != 2:
        raise PreconditionError("precondition failed: two-factor states required")
    if len(psi.terms) != 1:
        raise PreconditionError("precondition failed: psi must be a single product")
    if not phi.terms:
        raise PreconditionError("precondition failed: phi has no terms")
    _check_orthonormal_factors(phi, max(10 * tolerances.orth, 1e-7))

    a = complex(psi.terms[0].coeff)
    _require(eps_prime > 0.0, "eps_prime > 0")
    _require(abs(a) ** 2 <= 1.0 + tolerances.norm, "|a|^2 <= 1")
    _require(abs(a) ** 2 > 2.0 * eps_prime, "|a|^2 > 2*eps_prime")
    gap = trace_norm(np.subtract(*aligned_density_matrices(
        partial_trace(psi, (0,)), partial_trace(phi, (0,)))))
    _require(gap < eps_prime,
             "trace_norm(rho1(psi) - rho1(phi)) < eps_prime")

    b_sq = np.abs(phi.coeffs) ** 2
    m = int(np.argmax(b_sq))
    coeff_gap = abs(abs(a) ** 2 - b_sq[m])
    others = np.delete(b_sq, m)
    max_other = float(others.max()) if others.size else 0.0
    other_gaps = np.abs(abs(a) ** 2 - others)
    unique = bool((other_gaps >= eps_prime).all()) if others.size else True

    distance = _distance(psi, phi)
    second, skipped = True, ""
    if not distance < eps_prime:
        second, skipped = False, "||psi - phi|| < eps_prime"
    elif not (math.sqrt(eps_prime) <= abs(a) * eps / 3.0 < 1.0):
        second, skipped = False, "sqrt(eps_prime) <= |a|*eps/3 < 1"

    tdist, ov1, ov2 = math.nan, math.nan, math.nan
    holds = coeff_gap < eps_prime and max_other < eps_prime and unique
    if second:
        pt, mt = psi.terms[0], phi.terms[m]
        tdist = term_distance(pt.coeff, pt.factors, mt.coeff, mt.factors)
        ov1 = abs(sv_inner(pt.factors[0], mt.factors[0]))
        ov2 = abs(sv_inner(pt.factors[1], mt.factors[1]))
        holds = holds and tdist < eps and ov1 > 1.0 - eps and ov2 > 1.0 - eps
    return ProductMatchReport(m, eps, eps_prime, gap, coeff_gap, max_other,
                              unique, distance, second, skipped, tdist,
                              (ov1, ov2), holds)


@dataclass(frozen=True)
class PairRecord:
    """One matched term pair with the three bound families evaluated."""

    block: int
    index: int
    matched: int
    coeff_sq_gap: float
    coeff_bound: float
    overlaps: tuple
    overlap_floor: float
    term_distance: float
    term_bound: float
    holds: bool

    def to_json(self) -> dict:
        return {
            "block": self.block,
            "index": self.index,
            "matched": self.matched,
            "coeff_sq_gap": self.coeff_sq_gap,
            "coeff_bound": self.coeff_bound,
            "overlaps": list(self.overlaps),
            "overlap_floor": self.overlap_floor,
            "term_distance": self.term_distance,
            "term_bound": self.term_bound,
            "holds": self.holds,
        }


@dataclass(frozen=True)
class MatchReport:
    """Injective pairing between two decompositions with all bound records."""

    pairing: tuple          # ((block, index, matched), ...)
    records: tuple          # PairRecord per matched pair
    level: int              # how many leading blocks were matched
    eps: float
    eps_prime: float
    state_distance: float
    distance_bound: float
    all_bounds_hold: bool

    def to_json(self) -> dict:
        return {
            "pairing": [list(p) for p in self.pairing],
            "records": [r.to_json() for r in self.records],
            "level": self.level,
            "eps": self.eps,
            "eps_prime": self.eps_prime,
            "state_distance": self.state_distance,
            "distance_bound": self.distance_bound,
            "all_bounds_hold": self.all_bounds_hold,
        }


def _projected_pair(space2: ProductSpace, keep: tuple, term: ProductTerm,
                    other: TriDecomposition, project_axis: int):
    """Collapse ``project_axis`` of both sides onto the term's component.

    Returns the single-product state of the term restricted to ``keep`` and
    the projected product sum of ``other`` on the same two factors.
    """
    comp = term.factors[project_axis]
    single = SumState(space2, (ProductTerm(
        term.coeff, (term.factors[keep[0]], term.factors[keep[1]])),))
    projected = []
    for t in other.terms:
        c = t.coeff * sv_inner(comp, t.factors[project_axis])
        projected.append(ProductTerm(c, (t.factors[keep[0]],
                                         t.factors[keep[1]])))
    return single, SumState(space2, tuple(projected))


def match_components(psi: OrderedTriortho, phi: TriDecomposition, level: int,
                     eps: float,
                     tolerances: Tolerances = DEFAULT_TOLERANCES) -> MatchReport:
    """Match every term in the first ``level`` blocks of ``psi`` into ``phi``.

    Both decompositions must be orthonormal-variant wavefunction
    decompositions with ||psi - phi|| below |a_level|^2 eps^2 / 18 for an
    eps in (0, 1/4).  Each matched pair certifies the coefficient gap below
    3 eps, all three factor overlaps above 1 - eps, and the rank-1 term
    distance below 3 sqrt(eps).  Ambiguous matchings raise, since the bound
    guarantees uniqueness.
    """
    dpsi = psi.decomposition
    if dpsi.variant is not Variant.ORTHONORMAL or \
            phi.variant is not Variant.ORTHONORMAL:
        raise PreconditionError(
            "precondition failed: orthonormal decompositions required")
    _require(0.0 < eps < 0.25, "eps in (0, 1/4)")
    level = int(level)
    _require(1 <= level <= psi.nblocks, "1 <= level <= number of blocks")
    psi_state = dpsi.to_sum_state()
    phi_state = phi.to_sum_state()
    for name, st in (("psi", psi_state), ("phi", phi_state)):
        n = norm(st)
        _require(abs(n - 1.0) <= tolerances.norm, f"{name} is a wavefunction")

    a_level = psi.blocks[level - 1].magnitude
    distance = _distance(psi_state, phi_state)
    bound = a_level ** 2 * eps ** 2 / 18.0
    _require(distance < bound, "||psi - phi|| < |a_L|^2 * eps^2 / 18")
    eps_prime = a_level ** 2 * eps ** 2 / 9.0

    dims = dpsi.space.dims
    space_12 = ProductSpace((dims[0], dims[1]))
    space_23 = ProductSpace((dims[1], dims[2]))
    pairing, records = [], []
    used = {}
    for bi, block in enumerate(psi.blocks[:level]):
        for k in block.indices:
            term = dpsi.terms[k]
            # For the last block sqrt(eps') equals |a| eps / 3 exactly, so a
            # one-ulp rounding could flip the guaranteed gate; shave it.
            eps_p = min(eps_prime,
                        (abs(term.coeff) * eps / 3.0) ** 2 * (1.0 - 1e-12))
            single, projected = _projected_pair(space_12, (0, 1), term, phi, 2)
            front = match_single_product(single, projected, eps, eps_p,
                                         tolerances)
            if not front.second_part:
                raise VerificationError(
                    "projection chain lost the matching hypothesis: "
                    + front.second_part_skipped)
            single_b, projected_b = _projected_pair(space_23, (1, 2), term,
                                                    phi, 0)
            back = match_single_product(single_b, projected_b, eps, eps_p,
                                        tolerances)
            if front.matched_index != back.matched_index:
                raise VerificationError(
                    "matching ambiguity: the two projection routes disagree")
            kp = front.matched_index
            if kp in used:
                raise VerificationError(
                    f"matching ambiguity: term {kp} matched twice")
            used[kp] = (bi, k)
            other = phi.terms[kp]
            ov = (front.overlaps[0], front.overlaps[1], back.overlaps[1])
            coeff_gap = abs(abs(term.coeff) ** 2 - abs(other.coeff) ** 2)
            tdist = term_distance(term.coeff, term.factors,
                                  other.coeff, other.factors)
            rec = PairRecord(
                block=bi + 1, index=k, matched=kp,
                coeff_sq_gap=coeff_gap, coeff_bound=3.0 * eps,
                overlaps=ov, overlap_floor=1.0 - eps,
                term_distance=tdist, term_bound=3.0 * math.sqrt(eps),
                holds=(coeff_gap < 3.0 * eps
                       and all(o > 1.0 - eps for o in ov)
                       and tdist < 3.0 * math.sqrt(eps)))
            pairing.append((bi + 1, k, kp))
            records.append(rec)
    return MatchReport(tuple(pairing), tuple(records), level, eps, eps_prime,
                       distance, bound,
                       all(r.holds for r in records))
