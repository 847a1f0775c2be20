import numpy as np
import pytest

from hallpump.evolution import DrivingProfile, propagate_parallel, propagate_schrodinger
from hallpump.quasiadiabatic import WeightFilter
from hallpump.systems import SectorSystem
from hallpump.transport import (EpsResult, SplitError, TransportReport, charge_split_integrand, exactness_fit,
                                simpson, transported_charge_eps, transported_charge_parallel,
                                write_transport_csv)


def test_simpson_exact_on_cubics():
    x = np.linspace(0, 2, 9)
    y = 3 * x ** 3 - x + 1
    assert abs(simpson(y, x[1] - x[0]) - (3 * 4 - 2 + 2)) < 1e-12
    with pytest.raises(ValueError):
        simpson(y[:-1], 0.1)


def test_fit_recovers_eps4():
    eps = np.array([0.2, 0.14, 0.1, 0.07, 0.05, 0.035, 0.025])
    rng = np.random.default_rng(5)
    dev = 0.7 * eps ** 4 * (1 + 0.01 * rng.normal(size=eps.size))
    fit = exactness_fit(eps, dev)
    assert fit.status == "ok" and abs(fit.slope - 4.0) <= 0.05
    # a floor removes the smallest points from the window
    fit2 = exactness_fit(eps, dev + 1e-7, floor=1e-7, factor=10)
    assert fit2.status == "ok" and 0.025 not in fit2.window and abs(fit2.slope - 4) < 0.3
    assert exactness_fit(eps, dev, floor=1.0).status == "floor-limited"


@pytest.fixture(scope="module")
def par_qf(qf4, filt_qf4):
    run = propagate_parallel(qf4, DrivingProfile("ramp"), filt_qf4, qf4.spectrum(0.0).ground(), n_steps=32)
    return transported_charge_parallel(run)


@pytest.mark.slow
def test_parallel_charge_two_backends(fam4_free, par_qf, filt_qf4):
    """Quasi-free orbitals and the unreduced many-body sector give the same Delta Q_par."""
    sec = SectorSystem(fam4_free, 4)
    run = propagate_parallel(sec, DrivingProfile("ramp"), filt_qf4, sec.spectrum(0.0).ground(), n_steps=16)
    res = transported_charge_parallel(run, resolve=False)
    assert abs(res.value - par_qf.value) < 1e-6
    # finite-size value of the 4x4 torus at lowest-band filling
    assert abs(par_qf.value - (-0.62459)) < 1e-4
    assert par_qf.nearest_integer == -1


def test_two_boundary_and_term_resolution(par_qf):
    assert abs(par_qf.q_difference) < 1e-6
    assert par_qf.imag_max < 1e-10
    assert abs(sum(par_qf.term_totals.values()) - (par_qf.value + par_qf.truncated)) < 1e-10
    assert par_qf.quadrature_change < 1e-4


def test_filter_independence(qf4, par_qf):
    gap = min(qf4.spectrum(x).gap for x in np.linspace(0, 2 * np.pi, 17))
    for f in (WeightFilter(0.5 * gap), WeightFilter(0.8 * gap, "cubic")):
        run = propagate_parallel(qf4, DrivingProfile("ramp"), f, qf4.spectrum(0.0).ground(), n_steps=32)
        assert abs(transported_charge_parallel(run, resolve=False).value - par_qf.value) < 1e-5


def test_driven_charge_approaches_parallel(qf4, par_qf):
    devs = []
    for eps in (0.2, 0.05):
        run = propagate_schrodinger(qf4, DrivingProfile("ramp"), eps, qf4.spectrum(0.0).ground())
        r = transported_charge_eps(run)
        assert r.imag_max < 1e-10 and r.quadrature_error < 1e-5
        devs.append(abs(r.value - par_qf.value))
    assert devs[1] < devs[0] < 0.06


def test_source_split_guard(block4, filt_block4):
    with pytest.raises(SplitError):
        charge_split_integrand(block4, 0.3, block4.spectrum(0.3).ground(), filt_block4, split="source")


@pytest.mark.slow
def test_source_and_current_splits_agree_unreduced(fam4_int, filt_block4):
    """Both splits integrate to the same transported charge."""
    sec = SectorSystem(fam4_int, 4)
    run = propagate_parallel(sec, DrivingProfile("ramp"), filt_block4, sec.spectrum(0.0).ground(), n_steps=8)
    a = transported_charge_parallel(run, "current", resolve=False).value
    b = transported_charge_parallel(run, "source", resolve=False).value
    assert abs(a - b) < 2e-2


def test_transport_csv(tmp_path):
    rep = TransportReport(-1.0, {e: EpsResult(e, -1 + e ** 4, 1e-9, 0.0) for e in (0.2, 0.1, 0.05)})
    eps, dev = rep.deviations()
    rep.fit = exactness_fit(eps, dev)
    p = tmp_path / "t.csv"
    write_transport_csv(rep, p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("eps,dQ_eps,dQ_par,deviation")
    assert len(lines) == 4 and float(lines[1].split(",")[0]) == 0.2
