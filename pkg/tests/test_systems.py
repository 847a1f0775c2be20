"""Cross-checks between the three many-body backends."""

import numpy as np
import pytest
from scipy.sparse.linalg import expm_multiply

from hallpump.krylov import expm_krylov
from hallpump.systems import QuasiFreeSystem, SectorSystem, make_system


def test_backend_choice(qf4, block4):
    assert qf4.kind == "quasifree"
    assert block4.kind == "sector" and block4.B is not None
    assert block4.dim == 464 and block4.full_dim == 1820


@pytest.mark.parametrize("phi", [0.0, 1.3, 4.0])
def test_block_ground_state_is_the_full_one(fam4_int, block4, phi):
    full = SectorSystem(fam4_int, 4)
    a, b = block4.spectrum(phi), full.spectrum(phi)
    assert abs(a.E[0] - b.E[0]) < 1e-10
    ga, gb = block4.to_full(a.ground()), b.ground()
    assert abs(abs(np.vdot(ga, gb)[()]) - 1) < 1e-9
    for obs in ("current", "q_nu"):
        A = block4.current(phi) if obs == "current" else block4.q_nu
        B = full.current(phi) if obs == "current" else full.q_nu
        assert abs(block4.expect(a.ground(), A) - full.expect(b.ground(), B)) < 1e-9


@pytest.mark.parametrize("phi", [0.0, 2.2])
def test_quasifree_matches_sector(fam4_free, qf4, phi):
    sec = SectorSystem(fam4_free, 4)
    a, b = qf4.spectrum(phi), sec.spectrum(phi)
    assert abs(a.E[:4].sum() - b.E[0]) < 1e-10
    ja = qf4.expect(a.ground(), qf4.current(phi))
    jb = sec.expect(b.ground(), sec.current(phi))
    assert abs(ja - jb) < 1e-10


def test_krylov_against_scipy(block4):
    H = block4.hamiltonian(0.7)
    v = np.random.default_rng(0).normal(size=block4.dim) + 0j
    v /= np.linalg.norm(v)
    assert np.abs(expm_krylov(H, v, 2.0) - expm_multiply(-2j * H, v)).max() < 1e-10


def test_frame_metrics(qf4, block4):
    for s in (qf4, block4):
        g0 = s.spectrum(0.0).ground()
        assert s.projector_distance(g0, g0) < 1e-12
        assert abs(s.fidelity(g0, g0) - 1) < 1e-12
        assert s.gram_defect(g0) < 1e-12
        assert s.frame_difference(g0, g0) < 1e-7
        g1 = s.spectrum(2.0).ground()
        assert s.projector_distance(g0, g1) > 1e-3


def test_dimension_cap(fam4_int):
    from hallpump.fock import DimensionCapError
    with pytest.raises(DimensionCapError):
        make_system(fam4_int, 4, cap=100)
