import cmath
import math

import numpy as np
import pytest

from tridecomp.constructions import example31, isolation_witness_3
from tridecomp.decomp import (
    NotTriorthogonal,
    OrderedTriortho,
    TriDecomposition,
    Undetermined,
    Variant,
    _resolve_degenerate_block,
    canonical_phase,
    decompositions_equivalent,
    extract_triortho,
    linear_independence,
    ordered_triortho,
    schmidt,
    schmidt_rank,
    truncate_terms,
    verify_tridecomposition,
)
from tridecomp.errors import InvalidStateError
from tridecomp.spectral import spectrum
from tridecomp.states import (
    DenseState,
    ProductSpace,
    ProductTerm,
    SumState,
    densify,
    haar_random_state,
    norm,
    partial_trace,
    sparse_vector,
    sv_dense,
    sv_inner,
    sv_scale,
)

from conftest import random_triortho, random_unit

INV_SQRT2 = 1.0 / math.sqrt(2.0)


def singlet_state():
    amp = np.zeros((2, 2, 2), dtype=complex)
    amp[0, 0, 1] = INV_SQRT2
    amp[0, 1, 0] = -INV_SQRT2
    return DenseState(ProductSpace((2, 2, 2)), amp.ravel())


def product_state(rng, dims=(3, 3, 3)):
    vecs = [random_unit(rng, d) for d in dims]
    t = ProductTerm(1.0, tuple(sparse_vector(v) for v in vecs))
    return densify(SumState(ProductSpace(dims), (t,)))


class TestSchmidt:
    def test_product_state_single_coefficient(self, rng):
        sd = schmidt(product_state(rng), (0,))
        assert sd.coefficients.shape == (1,)
        assert sd.coefficients[0] == pytest.approx(1.0)

    def test_singlet_coefficients(self):
        sd = schmidt(singlet_state(), (1,))
        assert np.allclose(sd.coefficients, [INV_SQRT2, INV_SQRT2], atol=1e-12)

    def test_coefficients_square_to_reduced_spectrum(self):
        psi = haar_random_state(ProductSpace((3, 4, 2)), 17)
        sd = schmidt(psi, (0, 2))
        specs = np.asarray(spectrum(partial_trace(psi, (0, 2))).values)
        assert np.allclose(np.sort(sd.coefficients ** 2)[::-1],
                           specs[:sd.coefficients.size], atol=1e-10)

    def test_reconstruction(self):
        for seed in range(10):
            psi = haar_random_state(ProductSpace((3, 3, 3)), seed)
            sd = schmidt(psi, (1,))
            err = np.linalg.norm(sd.reconstruct().amplitudes - psi.amplitudes)
            assert err <= 1e-8

    def test_zero_state_rejected(self):
        zero = DenseState(ProductSpace((2, 2)), np.zeros(4, dtype=complex),
                          normalized=False)
        with pytest.raises(InvalidStateError):
            schmidt(zero, (0,))

    def test_degenerate_ordering_deterministic(self):
        amp = np.zeros((2, 2, 2), dtype=complex)
        amp[0, 0, 0] = amp[1, 1, 1] = INV_SQRT2
        ghz = DenseState(ProductSpace((2, 2, 2)), amp.ravel())
        a = schmidt(ghz, (0,))
        b = schmidt(ghz, (0,))
        assert np.array_equal(a.left_vectors, b.left_vectors)
        assert np.array_equal(a.right_vectors, b.right_vectors)

    def test_bipartition_validation(self):
        psi = singlet_state()
        with pytest.raises(InvalidStateError):
            schmidt(psi, (0, 1, 2))


class TestSchmidtRank:
    def test_product_is_rank_one(self, rng):
        assert schmidt_rank(product_state(rng), (0,), 1e-9) == 1

    def test_singlet_is_rank_two(self):
        assert schmidt_rank(singlet_state(), (1,), 1e-9) == 2

    def test_witness_rank(self):
        for n1 in (2, 4):
            w = isolation_witness_3(n1)
            assert schmidt_rank(w, (2,), 1e-9) == n1 + 1


class TestLinearIndependence:
    def test_orthonormal_set(self):
        vals = [np.array([1, 0, 0], dtype=complex),
                np.array([0, 1, 0], dtype=complex)]
        sv, ok = linear_independence(vals, 1e-8)
        assert sv == pytest.approx(1.0)
        assert ok

    def test_tilted_pair_depends_on_angle(self):
        e0 = np.array([1, 0], dtype=complex)
        e1 = np.array([0, 1], dtype=complex)
        for theta in (0.5, 0.01):
            sv, ok = linear_independence(
                [e0, -math.cos(theta) * e0 - math.sin(theta) * e1], 1e-8)
            assert ok and sv > 0
        sv, ok = linear_independence([e0, -e0], 1e-8)
        assert not ok and sv == pytest.approx(0.0, abs=1e-12)

    def test_duplicate_vector(self, rng):
        v = random_unit(rng, 4)
        sv, ok = linear_independence([v, v.copy()], 1e-8)
        assert not ok and sv == pytest.approx(0.0, abs=1e-8)

    def test_more_vectors_than_dimensions(self, rng):
        vecs = [random_unit(rng, 2) for _ in range(3)]
        assert linear_independence(vecs, 1e-8) == (0.0, False)

    def test_sparse_input(self):
        vecs = [(((0, 1.0 + 0j),)), (((5, 1.0 + 0j),))]
        sv, ok = linear_independence(vecs, 1e-8, dim=10)
        assert ok and sv == pytest.approx(1.0)


class TestVerify:
    def test_rotation_family_verifies(self):
        fam = example31(math.pi / 4)
        cert = verify_tridecomposition(fam.phi_decomposition, fam.phi_theta)
        assert cert.passed and cert.failed_condition is None
        assert min(cert.min_singular_values) > 1e-8

    def test_collinear_limit_fails(self):
        # the same two terms at theta = 0 collapse onto collinear components
        space = ProductSpace((2, 2, 2))
        e0 = np.array([1, 0], dtype=complex)
        plus = np.array([1, 1], dtype=complex) / math.sqrt(2)
        minus = np.array([1, -1], dtype=complex) / math.sqrt(2)
        terms = (
            ProductTerm(INV_SQRT2, (sparse_vector(e0), sparse_vector(minus),
                                    sparse_vector(plus))),
            ProductTerm(INV_SQRT2, (sparse_vector(-e0), sparse_vector(plus),
                                    sparse_vector(minus))),
        )
        target = densify(SumState(space, terms))
        cert = verify_tridecomposition(
            TriDecomposition(space, terms, Variant.LI_ALL), target)
        assert not cert.passed
        assert cert.failed_condition == "linear_independence_factor_0"

    def test_orthonormal_round_trip(self):
        d = random_triortho(4)
        cert = verify_tridecomposition(d, densify(d.to_sum_state()))
        assert cert.passed
        assert max(cert.max_offdiag_overlaps) < 1e-8

    def test_reconstruction_failure_named(self):
        d = random_triortho(5)
        other = haar_random_state(d.space, 99)
        cert = verify_tridecomposition(d, other)
        assert not cert.passed
        assert cert.failed_condition == "reconstruction"

    def test_zero_coefficient_rejected(self, rng):
        space = ProductSpace((2, 2, 2))
        comps = tuple(sparse_vector(random_unit(rng, 2)) for _ in range(3))
        terms = (ProductTerm(1.0, comps), ProductTerm(0.0, comps))
        cert = verify_tridecomposition(
            TriDecomposition(space, terms, Variant.LI_ALL),
            densify(SumState(space, terms)))
        assert not cert.passed
        assert cert.failed_condition == "zero_coefficient"

    def test_two_factor_variant(self):
        # independent components on factors 1 and 2; the factor-3 components
        # are pairwise non-collinear yet span only two dimensions
        space = ProductSpace((3, 3, 3))
        e = np.eye(3, dtype=complex)
        third = (e[0], e[1], (e[0] + e[1]) / math.sqrt(2))
        terms = tuple(
            ProductTerm(c, (sparse_vector(e[k]), sparse_vector(e[k]),
                            sparse_vector(third[k])))
            for k, c in enumerate((0.8, 0.6, 0.4)))
        target = densify(SumState(space, terms))
        d = TriDecomposition(space, terms, Variant.LI_TWO_FACTORS)
        cert = verify_tridecomposition(d, target)
        assert cert.passed
        assert cert.li_factors == (0, 1)
        all_li = verify_tridecomposition(
            TriDecomposition(space, terms, Variant.LI_ALL), target)
        assert not all_li.passed
        assert all_li.failed_condition == "linear_independence_factor_2"

    def test_certificate_sharpness(self):
        # pushing one component further than the certificate's margin must
        # break reconstruction
        fam = example31(0.7)
        d = fam.phi_decomposition
        bad = sv_scale(d.terms[0].factors[2], cmath.exp(0.3j))
        bumped = np.array([dict(bad).get(i, 0.0) for i in range(2)])
        bumped[0] += 0.25
        bumped /= np.linalg.norm(bumped)
        terms = (ProductTerm(d.terms[0].coeff,
                             d.terms[0].factors[:2] + (sparse_vector(bumped),)),
                 d.terms[1])
        cert = verify_tridecomposition(
            TriDecomposition(d.space, terms, Variant.LI_ALL), fam.phi_theta)
        assert not cert.passed
        assert cert.failed_condition == "reconstruction"


class TestCanonicalPhase:
    @staticmethod
    def _term_tensor(space, term):
        return densify(SumState(space, (term,))).amplitudes

    def test_idempotent(self):
        d = canonical_phase(random_triortho(6))
        again = canonical_phase(d)
        for a, b in zip(d.terms, again.terms):
            assert a.coeff == pytest.approx(b.coeff, abs=1e-14)
            assert np.allclose(self._term_tensor(d.space, a),
                               self._term_tensor(d.space, b), atol=1e-13)

    def test_gauge_invariance(self):
        d = random_triortho(7)
        t = d.terms[0]
        rotated = ProductTerm(t.coeff * cmath.exp(-0.9j),
                              (sv_scale(t.factors[0], cmath.exp(0.9j)),)
                              + t.factors[1:])
        d2 = TriDecomposition(d.space, (rotated,) + d.terms[1:], d.variant)
        c1, c2 = canonical_phase(d), canonical_phase(d2)
        assert c1.terms[0].coeff == pytest.approx(c2.terms[0].coeff, abs=1e-12)
        assert np.allclose(self._term_tensor(d.space, c1.terms[0]),
                           self._term_tensor(d.space, c2.terms[0]), atol=1e-12)

    def test_rank_one_terms_invariant(self):
        d = random_triortho(8)
        canon = canonical_phase(d)
        for a, b in zip(d.terms, canon.terms):
            assert np.allclose(self._term_tensor(d.space, a),
                               self._term_tensor(d.space, b), atol=1e-12)

    def test_reference_alignment(self):
        d = random_triortho(9)
        t = d.terms[0]
        rotated = ProductTerm(t.coeff * cmath.exp(1.3j),
                              (sv_scale(t.factors[0], cmath.exp(-1.3j)),)
                              + t.factors[1:])
        d2 = TriDecomposition(d.space, (rotated,) + d.terms[1:], d.variant)
        aligned = canonical_phase(d2, reference=d)
        for k in range(d.nterms):
            for i in range(3):
                ov = sv_inner(aligned.terms[k].factors[i], d.terms[k].factors[i])
                assert ov.real > 0 and abs(ov.imag) < 1e-10


class TestEquivalence:
    def test_permuted_and_rephased(self):
        d = random_triortho(10)
        scrambled = []
        for j, t in enumerate(reversed(d.terms)):
            phase = cmath.exp(1j * (0.3 + j))
            scrambled.append(ProductTerm(
                t.coeff * phase,
                (sv_scale(t.factors[0], 1.0 / phase),) + t.factors[1:]))
        d2 = TriDecomposition(d.space, tuple(scrambled), d.variant)
        assert decompositions_equivalent(d, d2, 1e-7)

    def test_rotation_families_differ(self):
        fam = example31(math.pi / 4)
        assert not decompositions_equivalent(
            fam.phi_decomposition, fam.psi_decomposition, 1e-7)

    def test_changed_coefficient_detected(self):
        tol = 1e-7
        d = random_triortho(11)
        t = d.terms[0]
        shifted = ProductTerm(t.coeff * (1 + 10 * tol / abs(t.coeff)),
                              t.factors)
        d2 = TriDecomposition(d.space, (shifted,) + d.terms[1:], d.variant)
        assert not decompositions_equivalent(d, d2, tol)

    def test_term_count_mismatch(self):
        d = random_triortho(12, k=3)
        d2 = truncate_terms(d, abs(d.terms[-1].coeff) + 1e-12)
        assert d2.nterms == 2
        assert not decompositions_equivalent(d, d2, 1e-7)

    def test_degenerate_blocks_matched_by_assignment(self):
        d = random_triortho(13, k=3, tie=True)
        d2 = TriDecomposition(d.space, tuple(reversed(d.terms)), d.variant)
        assert decompositions_equivalent(d, d2, 1e-7)


class TestExtraction:
    def test_round_trip_nondegenerate(self):
        d = random_triortho(14, dims=(4, 5, 6), k=4)
        out = extract_triortho(densify(d.to_sum_state()))
        assert isinstance(out, OrderedTriortho)
        assert decompositions_equivalent(out.decomposition, d, 1e-7)
        assert out.decomposition.certificate.passed

    def test_product_state_single_term(self, rng):
        out = extract_triortho(product_state(rng))
        assert isinstance(out, OrderedTriortho)
        assert out.decomposition.nterms == 1
        assert abs(out.decomposition.terms[0].coeff) == pytest.approx(1.0)

    def test_singlet_family_rejected(self):
        out = extract_triortho(singlet_state())
        assert isinstance(out, NotTriorthogonal)
        assert "spectra" in out.reason

    def test_w_state_rejected_at_product_split(self):
        amp = np.zeros((2, 2, 2), dtype=complex)
        amp[1, 0, 0] = amp[0, 1, 0] = amp[0, 0, 1] = 1 / math.sqrt(3)
        w = DenseState(ProductSpace((2, 2, 2)), amp.ravel())
        out = extract_triortho(w)
        assert isinstance(out, NotTriorthogonal)
        assert "not a product" in out.reason

    def test_degenerate_block_resolved(self):
        amp = np.zeros((2, 2, 2), dtype=complex)
        amp[0, 0, 0] = amp[1, 1, 1] = INV_SQRT2
        ghz = DenseState(ProductSpace((2, 2, 2)), amp.ravel())
        out = extract_triortho(ghz)
        assert isinstance(out, OrderedTriortho)
        assert out.decomposition.nterms == 2
        assert len(out.blocks) == 1
        assert out.blocks[0].indices == (0, 1)

    def test_exact_tie_round_trip(self):
        d = random_triortho(15, dims=(4, 4, 4), k=3, tie=True)
        out = extract_triortho(densify(d.to_sum_state()))
        assert isinstance(out, OrderedTriortho)
        assert decompositions_equivalent(out.decomposition, d, 1e-7)

    def test_extracted_spectra_match_coefficients(self):
        d = random_triortho(16, dims=(5, 5, 5), k=3)
        psi = densify(d.to_sum_state())
        out = extract_triortho(psi)
        coeffs = np.abs(out.decomposition.coefficients) ** 2
        for i in range(3):
            vals = np.asarray(spectrum(partial_trace(psi, (i,))).values)
            assert np.allclose(vals[:3], coeffs, atol=1e-9)

    def test_requires_wavefunction(self):
        sub = DenseState(ProductSpace((2, 2, 2)),
                         np.full(8, 0.1, dtype=complex), normalized=False)
        with pytest.raises(InvalidStateError):
            extract_triortho(sub)

    def test_deficient_degenerate_block_undetermined(self):
        # two orthonormal right vectors sharing one factor-2 direction give a
        # rank-deficient joint reduction; resolution must stay honest
        e = np.eye(4, dtype=complex)
        r1 = np.kron(e[:, 0], e[:, 1])
        r2 = np.kron(e[:, 0], e[:, 2])
        left = np.eye(2, dtype=complex)
        out = _resolve_degenerate_block(
            left, np.column_stack([r1, r2]).astype(complex),
            np.array([0.5, 0.5]), 4, 4, 0, 1e-7)
        assert isinstance(out, Undetermined)

    def test_uniqueness_against_independent_derivation(self):
        # re-derive the verified expansion through the dual basis of the
        # first factor and check equivalence
        fam = example31(0.8)
        d = fam.phi_decomposition
        cols = np.column_stack([sv_dense(t.factors[0], 2) for t in d.terms])
        dual = np.linalg.inv(cols.conj().T @ cols) @ cols.conj().T
        tensor = fam.phi_theta.tensor
        rederived = []
        for k in range(d.nterms):
            block = np.einsum("a,abc->bc", dual[k].conj(), tensor)
            u, s, vh = np.linalg.svd(block)
            assert s[1] < 1e-10
            rederived.append(ProductTerm(
                s[0], (d.terms[k].factors[0], sparse_vector(u[:, 0]),
                       sparse_vector(vh[0, :]))))
        d2 = TriDecomposition(d.space, tuple(rederived), Variant.LI_ALL)
        assert verify_tridecomposition(d2, fam.phi_theta).passed
        assert decompositions_equivalent(d, d2, 1e-7)


class TestOrderedForm:
    def test_blocks_strictly_decreasing(self):
        d = random_triortho(18, k=4)
        po = ordered_triortho(d)
        mags = [b.magnitude for b in po.blocks]
        assert all(a > b for a, b in zip(mags, mags[1:]))
        sizes = sum(len(b.indices) for b in po.blocks)
        assert sizes == d.nterms

    def test_tie_grouped(self):
        d = random_triortho(19, k=3, tie=True)
        po = ordered_triortho(d)
        assert len(po.blocks[0].indices) == 2

    def test_requires_orthonormal_variant(self):
        fam = example31(0.5)
        with pytest.raises(InvalidStateError):
            ordered_triortho(fam.phi_decomposition)
