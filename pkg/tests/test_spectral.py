import numpy as np
import pytest
import scipy.sparse as sp

from hallpump.evolution import DrivingProfile
from hallpump.models import HofstadterParams, build_hofstadter
from hallpump.spectral import GapTooSmallError, gap_scan, ground_snapshot, write_gap_csv
from hallpump.systems import SectorSystem, make_system


def test_snapshot_dense_and_iterative_agree(block4):
    H = block4.hamiltonian(0.3)
    dense = ground_snapshot(H.toarray(), 1)
    a = ground_snapshot(H, 1)            # dim 464 -> iterative path
    assert abs(a.E0 - dense.E0) < 1e-10 and abs(a.gap - dense.gap) < 1e-9
    assert a.residual < 1e-8
    assert abs(abs(np.vdot(a.vectors[:, 0], dense.vectors[:, 0])) - 1) < 1e-8


def test_degeneracy_flag():
    H = sp.diags([0.0, 0.0, 1.0, 2.0])
    sn = ground_snapshot(H, 1)
    assert sn.degenerate
    assert not ground_snapshot(H, 2).degenerate


def test_scan_consistent_under_refinement(qf4):
    a = gap_scan(qf4, np.linspace(0, 2 * np.pi, 17))
    b = gap_scan(qf4, np.linspace(0, 2 * np.pi, 33))
    assert abs(a.min_gap - b.min_gap) < 1e-6
    assert a.p_constant


def test_gapless_model_aborts():
    # half filling at flux 1/2: the two bands touch
    fam = build_hofstadter(HofstadterParams(L=4, q=2, V=0.0, N=8))
    with pytest.raises(GapTooSmallError):
        gap_scan(make_system(fam, 8), [0.0], threshold=1e-3)


def test_gap_csv(tmp_path, qf4):
    scan = gap_scan(qf4, np.linspace(0, 2 * np.pi, 5), profile=DrivingProfile("compliant"))
    path = tmp_path / "gap.csv"
    write_gap_csv(scan, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,phi,E0,E1,gap,p"
    assert len(lines) == 6
    s = [float(l.split(",")[0]) for l in lines[1:]]
    assert s[0] == 0.0 and abs(s[-1] - 1.0) < 1e-12 and np.all(np.diff(s) > 0)


def test_interacting_reference_energy(block4):
    """E0 of the interacting block at phi = 0 against a dense solve of the full sector."""
    full = SectorSystem(block4.family, 4)
    E = np.linalg.eigvalsh(full.hamiltonian(0.0).toarray())
    assert abs(block4.spectrum(0.0).E[0] - E[0]) < 1e-10
    assert abs(E[0] - (-11.0697)) < 1e-3
