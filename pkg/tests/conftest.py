import numpy as np
import pytest

from tridecomp.decomp import TriDecomposition, Variant
from tridecomp.states import ProductSpace, ProductTerm, sparse_vector


def random_unit(rng, d):
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)


def random_orthonormal(rng, d, k):
    z = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
    q, _ = np.linalg.qr(z)
    return q[:, :k]


def random_triortho(seed, dims=(5, 6, 7), k=3, tie=False, min_ratio=1.5,
                    max_ratio=2.5):
    """Random orthonormal-variant decomposition with well-separated (or
    deliberately tied) coefficient magnitudes."""
    rng = np.random.default_rng(seed)
    mags = [1.0]
    for _ in range(k - 1):
        mags.append(mags[-1] / rng.uniform(min_ratio, max_ratio))
    mags = np.asarray(mags)
    mags = mags / np.linalg.norm(mags)
    if tie and k >= 2:
        mags[1] = mags[0]  # bitwise tie; renormalizing keeps it exact
        mags = mags / np.linalg.norm(mags)
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, k))
    comps = [random_orthonormal(rng, d, k) for d in dims]
    terms = tuple(
        ProductTerm(mags[i] * phases[i],
                    tuple(sparse_vector(c[:, i]) for c in comps))
        for i in range(k))
    return TriDecomposition(ProductSpace(dims), terms, Variant.ORTHONORMAL)


def random_psd(rng, d, top=1.0):
    """Random PSD matrix with eigenvalues in [0, top]."""
    q = random_orthonormal(rng, d, d)
    vals = rng.uniform(0.0, top, d)
    return (q * vals) @ q.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
