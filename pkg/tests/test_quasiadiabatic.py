import numpy as np
import pytest

from hallpump.lattice import named_regions
from hallpump.quasiadiabatic import (GapViolationError, WeightFilter, build_K, build_K_quadrature,
                                     locality_profile, smoothstep)
from hallpump.systems import SectorSystem


@pytest.mark.parametrize("shape", ["smooth", "cubic"])
def test_filter_outside_gap_and_odd(shape):
    f = WeightFilter(1.3, shape)
    om = np.array([-5.0, -1.3, 1.3, 2.0, 40.0])
    assert np.allclose(f(om) * 1j * om, 1.0)
    x = np.linspace(-3, 3, 601)
    assert np.allclose(f(-x), -f(x))
    assert np.allclose(f(x).real, 0.0)
    # continuous across the gap edge
    assert abs(f(1.3 - 1e-9)[()] - f(1.3)[()]) < 1e-6


def test_smoothstep_flat_ends():
    assert smoothstep(0.0) == 0.0 and smoothstep(1.0) == 1.0
    h = 1e-3
    assert smoothstep(h) < 1e-100 and 1 - smoothstep(1 - h) < 1e-100
    assert abs(smoothstep(0.5) - 0.5) < 1e-15


def test_time_profile_decays_and_inverts():
    f = WeightFilter(1.0)
    u = np.array([1.0, 10.0, 40.0, 80.0])
    W = np.abs(f.time_profile(u))
    assert W[0] > 1e-2 and W[2] < 1e-4 * W[0] and W[3] < W[2]
    # Fourier transform back to w at a few frequencies
    uu = np.linspace(-150, 150, 60001)
    Wu = f.time_profile(uu)
    for om in (0.4, 1.5, 3.0):
        val = np.trapezoid(Wu * np.exp(1j * uu * om), uu)
        assert abs(val - f(om)[()]) < 1e-3


def test_K_spectral_equals_quadrature(qf4, filt_qf4):
    ph = 0.9
    spec = qf4.spectrum(ph)
    K = build_K(spec, qf4.dhamiltonian(ph), filt_qf4).dense()
    Kq = build_K_quadrature(np.asarray(qf4.hamiltonian(ph)), np.asarray(qf4.dhamiltonian(ph)), filt_qf4)
    assert np.abs(K - Kq).max() < 1e-4 * np.abs(K).max()


@pytest.mark.parametrize("which", ["qf4", "block4"])
def test_K_transports_the_projector(request, which):
    system = request.getfixturevalue(which)
    filt = request.getfixturevalue("filt_" + which.replace("4", "") + "4")
    ph, h = 1.7, 1e-5
    spec = system.spectrum(ph)
    K = build_K(spec, system.dhamiltonian(ph), filt)
    assert K.hermiticity_defect() < 1e-14
    P = spec.ground() @ spec.ground().conj().T
    Pp = system.spectrum(ph + h).ground()
    Pm = system.spectrum(ph - h).ground()
    dP = (Pp @ Pp.conj().T - Pm @ Pm.conj().T) / (2 * h)
    Kd = K.dense()
    assert np.abs(dP - (-1j) * (Kd @ P - P @ Kd)).max() < 1e-7


def test_gap_violation(qf4):
    spec = qf4.spectrum(0.0)
    with pytest.raises(GapViolationError):
        build_K(spec, qf4.dhamiltonian(0.0), WeightFilter(1.01 * spec.gap))


def test_locality_two_backends_agree(fam4_free, qf4, filt_qf4):
    """dGamma norm formula (quasi-free) against eigen-solving [K, parity] on the sector."""
    ref = named_regions(fam4_free.lattice)["eta_-"]
    sec = SectorSystem(fam4_free, 4)
    a = locality_profile(qf4, build_K(qf4.spectrum(0.0), qf4.dhamiltonian(0.0), filt_qf4), ref)
    b = locality_profile(sec, build_K(sec.spectrum(0.0), sec.dhamiltonian(0.0), filt_qf4), ref)
    assert [r for r, _ in a] == [r for r, _ in b] == [0, 1]
    for (_, x), (_, y) in zip(a, b):
        assert abs(x - y) < 1e-8
    assert a[1][1] < a[0][1]


def test_locality_tail_decays_L6():
    from hallpump.models import HofstadterParams, build_hofstadter
    from hallpump.systems import make_system
    fam = build_hofstadter(HofstadterParams(L=6, V=0.0))
    qf = make_system(fam, 9)
    gap = min(qf.spectrum(x).gap for x in np.linspace(0, 2 * np.pi, 9))
    K = build_K(qf.spectrum(0.0), qf.dhamiltonian(0.0), WeightFilter(0.8 * gap))
    rows = locality_profile(qf, K, named_regions(fam.lattice)["eta_-"])
    vals = [v for _, v in rows]
    assert len(vals) == 3 and all(b < a for a, b in zip(vals, vals[1:]))


def test_locality_refuses_reduced_sector(block4, filt_block4):
    K = build_K(block4.spectrum(0.0), block4.dhamiltonian(0.0), filt_block4)
    with pytest.raises(ValueError):
        locality_profile(block4, K, named_regions(block4.family.lattice)["eta_-"])
