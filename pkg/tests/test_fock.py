from math import comb

import numpy as np
import pytest
import scipy.sparse as sp

from hallpump import _backend
from hallpump.fock import DimensionCapError, apply_monomial, build_sector_basis, charge_diagonal, monomial_matrix
from hallpump.lattice import make_torus, named_regions


def _jw(n):
    """Dense-in-spirit Jordan-Wigner lowering operators on the full Fock space (bit i = site i)."""
    Z = sp.diags([1.0, -1.0])
    I = sp.identity(2)
    a = sp.csr_matrix([[0.0, 1.0], [0.0, 0.0]])
    out = []
    for i in range(n):
        M = sp.identity(1)
        for j in range(n):
            M = sp.kron(Z if j < i else (a if j == i else I), M, format="csr")
        out.append(M)
    return out


@pytest.fixture(scope="module")
def jw():
    return _jw(16)


@pytest.mark.parametrize("backend", _backend.available())
def test_monomials_match_jordan_wigner(jw, backend):
    _backend.use_backend(backend)
    try:
        lat = make_torus(4)
        rng = np.random.default_rng(0)
        for N in (2, 3):
            b = build_sector_basis(lat, N)
            idx = b.states.astype(np.int64)
            for _ in range(6):
                s = rng.choice(16, size=4, replace=False)
                ops = [(s[0], True), (s[1], False), (s[2], True), (s[3], False)]
                D = jw[s[0]].T @ jw[s[1]] @ jw[s[2]].T @ jw[s[3]]
                assert abs(D[np.ix_(idx, idx)] - monomial_matrix(ops, b)).max() == 0
    finally:
        _backend.use_backend(_backend.available()[-1])


def test_sector_changing_and_apply(jw):
    lat = make_torus(4)
    b2, b3 = build_sector_basis(lat, 2), build_sector_basis(lat, 3)
    M = monomial_matrix([(5, "+")], b2, target=b3)
    D = jw[5].T[np.ix_(b3.states.astype(np.int64), b2.states.astype(np.int64))]
    assert abs(D - M).max() == 0
    v = np.random.default_rng(1).normal(size=(b2.dim, 2))
    assert np.allclose(apply_monomial([(5, "+")], v, b2, target=b3), M @ v)
    with pytest.raises(ValueError):
        monomial_matrix([(5, "+")], b2)


def test_basis_size_and_cap():
    lat = make_torus(4)
    assert build_sector_basis(lat, 4).dim == comb(16, 4)
    with pytest.raises(DimensionCapError):
        build_sector_basis(make_torus(6), 9, cap=10**5)


def test_backends_agree():
    if "cython" not in _backend.available():
        pytest.skip("compiled kernels not built")
    from hallpump import _ckernels, _pykernels
    st_c = _ckernels.enumerate_states(16, 5)
    st_p = _pykernels.enumerate_states(16, 5)
    assert np.array_equal(st_c, st_p)
    assert np.array_equal(_ckernels.occupations(st_c, 16), _pykernels.occupations(st_p, 16))
    sites = np.array([3, 9, 9, 3], dtype=np.int64)
    dags = np.array([1, 0, 1, 0], dtype=np.uint8)
    rc = _ckernels.monomial_action(st_c, sites, dags, st_c)
    rp = _pykernels.monomial_action(st_p, sites, dags, st_p)
    for x, y in zip(rc, rp):
        assert np.array_equal(np.asarray(x), np.asarray(y))


def test_charge_diagonal_counts():
    lat = make_torus(4)
    b = build_sector_basis(lat, 3)
    eta = named_regions(lat)["eta"]
    q = charge_diagonal(eta, b)
    occ = b.occupations
    assert np.array_equal(q, occ[:, sorted(eta.members)].sum(axis=1))
    assert q.min() >= 0 and q.max() <= 3
