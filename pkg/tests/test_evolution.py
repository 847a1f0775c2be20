import numpy as np
import pytest
from scipy.linalg import expm

from hallpump.evolution import DrivingProfile, dump_frame, load_frame, propagate_parallel, propagate_schrodinger


def test_profile_endpoints_and_inverse():
    for kind in ("compliant", "ramp"):
        pr = DrivingProfile(kind)
        s = np.linspace(0, 1, 101)
        ph = pr.phi(s)
        assert ph[0] == 0 and abs(ph[-1] - 2 * np.pi) < 1e-13
        assert np.all(np.diff(ph) >= 0)
        for x in (0.1, 0.37, 0.9):
            assert abs(pr.inverse(float(pr.phi(x))) - x) < 1e-10
        h = 1e-6
        fd = (pr.phi(0.4 + h) - pr.phi(0.4 - h)) / (2 * h)
        assert abs(fd - pr.dphi(0.4)) < 1e-6
    with pytest.raises(ValueError):
        DrivingProfile("sine")


def test_compliant_endpoints_flat_ramp_not():
    d = DrivingProfile("compliant").endpoint_derivatives(4)
    assert max(abs(v) for pair in d.values() for v in pair) < 1e-6
    r = DrivingProfile("ramp").endpoint_derivatives(1)
    # one-sided jump: the ramp's first derivative does not vanish at the ends
    assert abs(r[1][0]) > 1.0


def test_static_flow_is_exact_exponential(qf4):
    F0 = qf4.spectrum(0.9).ground()
    H = np.asarray(qf4.hamiltonian(0.0))
    eps = 0.5
    run = propagate_schrodinger(qf4, DrivingProfile("static"), eps, F0, n_nodes=5)
    assert np.abs(run.final - expm(-1j * H / eps) @ F0).max() < 1e-8
    assert run.diagnostics["unitarity_defect"] < 1e-12


def test_adiabatic_limit(qf4):
    pr = DrivingProfile("compliant")
    F0 = qf4.spectrum(0.0).ground()
    infid = []
    for eps in (0.2, 0.05):
        run = propagate_schrodinger(qf4, pr, eps, F0)
        infid.append(1 - qf4.fidelity(run.final, F0))
        assert run.diagnostics["unitarity_defect"] < 1e-9
    assert infid[1] < 1e-2 and infid[1] < infid[0]


def test_parallel_transport_contract(block4, filt_block4):
    pr = DrivingProfile("compliant")
    F0 = block4.spectrum(0.0).ground()
    cps = np.linspace(0, 1, 9)
    run = propagate_parallel(block4, pr, filt_block4, F0, n_steps=32, checkpoints=cps)
    for c in cps:
        ph = float(pr.phi(c))
        k = int(np.flatnonzero(run.phi == ph)[0])
        assert block4.projector_distance(run.frames[k], block4.spectrum(ph).ground()) < 1e-5
    assert run.diagnostics["unitarity_defect"] < 1e-9


def test_cfm4_convergence_order(qf4, filt_qf4):
    F0 = qf4.spectrum(0.0).ground()
    pr = DrivingProfile("ramp")
    ref = propagate_parallel(qf4, pr, filt_qf4, F0, n_steps=128).final
    errs = [np.abs(propagate_parallel(qf4, pr, filt_qf4, F0, n_steps=m).final - ref).max() for m in (8, 16)]
    assert errs[0] / errs[1] > 10           # fourth order: ~16 per halving
    mid = [np.abs(propagate_parallel(qf4, pr, filt_qf4, F0, n_steps=m, stepper="midpoint").final - ref).max()
           for m in (16, 32)]
    assert 3 < mid[0] / mid[1] < 5.5          # second order


def test_reverse_cycle_undoes_forward(qf4, filt_qf4):
    F0 = qf4.spectrum(0.0).ground()
    pr = DrivingProfile("ramp")
    fwd = propagate_parallel(qf4, pr, filt_qf4, F0, n_steps=32)
    back = propagate_parallel(qf4, pr, filt_qf4, fwd.final, n_steps=32, reverse=True)
    assert qf4.frame_difference(back.final, F0) < 1e-6


def test_frame_dump_roundtrip(tmp_path):
    F = np.random.default_rng(2).normal(size=(7, 3)) + 1j * np.random.default_rng(3).normal(size=(7, 3))
    p = tmp_path / "f.bin"
    dump_frame(p, F)
    assert np.array_equal(load_frame(p), F)
    raw = p.read_bytes()
    assert raw[:8] == b"HPFRAME1" and len(raw) == 8 + 16 + 7 * 3 * 16
    (tmp_path / "bad.bin").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError):
        load_frame(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-16])
    with pytest.raises(ValueError):
        load_frame(tmp_path / "short.bin")


def test_rejects_non_orthonormal_frame(qf4):
    with pytest.raises(Exception):
        propagate_schrodinger(qf4, DrivingProfile("ramp"), 0.1, 2 * qf4.spectrum(0.0).ground())
