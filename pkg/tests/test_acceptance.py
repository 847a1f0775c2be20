"""Acceptance criteria 1-9, each printed as one PASS/FAIL line at the end of the session.

The numerical criteria run the real pipeline (``run_experiment``) on the
stated configurations and read its checks; nothing is re-thresholded here.
"""

import json

import numpy as np
import pytest

from hallpump.config import ExperimentConfig
from hallpump.fock import build_sector_basis, charge_operator
from hallpump.lattice import named_regions
from hallpump.models import HofstadterParams, build_hofstadter, chern_oracle, hofstadter_hoppings
from hallpump.observables import current_decomposition, twist
from hallpump.pipeline import run_experiment
from hallpump.transport import exactness_fit

from .conftest import ACCEPTANCE

EPS7 = (0.2, 0.14, 0.1, 0.07, 0.05, 0.035, 0.025)


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def _checks(summary):
    return {c["name"]: c for c in summary["checks"]}


def _cfg(stages, **model):
    cfg = ExperimentConfig().replace("run", stages=tuple(stages))
    cfg = cfg.replace("quasiadiabatic", locality=False).replace("evolution", dump_frames=False)
    return cfg.replace("model", **model) if model else cfg


@pytest.fixture(scope="module")
def l4_interacting(tmp_path_factory):
    """L=4, V=0.25: 33-point checkpoints, compliant and ramp sweeps over the seven eps."""
    cfg = _cfg(("validate", "gap", "parallel", "sweep"), L=4, V=0.25).replace("evolution", eps=EPS7)
    return run_experiment(cfg, tmp_path_factory.mktemp("c1"), log=lambda m: None)


@pytest.fixture(scope="module")
def l6_free(tmp_path_factory):
    cfg = _cfg(("validate", "gap", "parallel", "index", "proposition"), L=6, V=0.0)
    return run_experiment(cfg, tmp_path_factory.mktemp("l6"), log=lambda m: None)


def test_criterion_1_exactness_scaling(l4_interacting):
    ck = _checks(l4_interacting)
    s, r = ck.get("exactness.slope"), ck.get("exactness.ramp_slope")
    ok = s is not None and r is not None and s["pass"] and r["pass"]
    record(1, ok, f"L=4 V=0.25 compliant slope {s and s['value']} (need >= 3.0); "
                  f"ramp slope {r and r['value']} (need <= 2.0)")


def test_criterion_2_quantization(l6_free, tmp_path):
    ck = _checks(l6_free)
    par = next(st for st in l6_free["stages"] if st["name"] == "parallel")["info"]
    free_ok = ck["transport.quantization"]["pass"] and ck["transport.oracle_match"]["pass"]
    cfg = _cfg(("validate", "gap", "parallel"), L=6, V=0.25)
    inter = run_experiment(cfg, tmp_path, log=lambda m: None)
    ick = _checks(inter)
    int_ok = "transport.quantization" in ick and ick["transport.quantization"]["pass"] \
        and ick["transport.oracle_match"]["pass"]
    diag = next((st.get("diagnostic") for st in inter["stages"] if st["status"] != "ok"), "")
    record(2, free_ok and int_ok,
           f"V=0 L=6 dQ_par={par['dQ_par']:.5f} oracle={par['oracle']} "
           f"(|dQ-n| {ck['transport.quantization']['value']:.4f} <= 0.05); V=0.25 L=6: "
           + (f"residual {ick['transport.quantization']['value']:.4f}" if "transport.quantization" in ick
              else f"not computable ({diag})"))


def test_criterion_3_parallel_transport(l4_interacting):
    c = _checks(l4_interacting)["parallel.transport"]
    record(3, c["pass"], f"max projector distance on 33 s-points {c['value']:.3e} <= 1e-4")


def test_criterion_4_index_suite(l6_free):
    ck = _checks(l6_free)
    names = ("index.identity", "index.integrality", "index.additivity", "index.reversal")
    ok = all(ck[n]["pass"] for n in names)
    record(4, ok, "; ".join(f"{n.split('.')[1]} {ck[n]['value']:.3e}" for n in names))


def test_criterion_5_single_shot(l6_free, tmp_path):
    d6 = _checks(l6_free)["proposition.single_shot_distance"]["value"]
    s4 = run_experiment(_cfg(("validate", "gap", "proposition"), L=4, V=0.0), tmp_path, log=lambda m: None)
    d4 = _checks(s4)["proposition.single_shot_distance"]["value"]
    record(5, d6 < d4 and d6 <= 0.1, f"||(U_par - U_ss)P|| L=4 {d4:.4f}, L=6 {d6:.4f} (need L6 < L4 and <= 0.1)")


def test_criterion_6_structure(l4_interacting):
    ck = _checks(l4_interacting)
    fam = build_hofstadter(HofstadterParams(L=4, V=0.25))
    lat = fam.lattice
    reg = named_regions(lat)
    b = build_sector_basis(lat, 4)
    Q = charge_operator(lat.region(range(lat.n_sites)), b)
    Qnu = charge_operator(reg["nu"], b)
    worst_conserve = worst_split = worst_idem = 0.0
    for ph in np.linspace(0, 2 * np.pi, 7):
        Hobs = twist(fam, ph)
        H = Hobs.assemble(b)
        worst_conserve = max(worst_conserve, abs(H @ Q - Q @ H).max())
        jm, jp = current_decomposition(Hobs, reg["nu"], reg["nu_-"], reg["nu_+"])
        worst_split = max(worst_split, abs(1j * (H @ Qnu - Qnu @ H) - jm.assemble(b) - jp.assemble(b)).max())
        E, V = np.linalg.eigh(H.toarray())
        P = V[:, :1] @ V[:, :1].conj().T
        worst_idem = max(worst_idem, np.abs(P @ P - P).max())
    periodic = twist(fam, 2 * np.pi).equals(twist(fam, 0.0), atol=1e-10)
    unit = max(c["value"] for n, c in ck.items() if n.endswith("unitarity"))
    two = ck["transport.two_boundary"]["value"]
    ok = (worst_conserve <= 1e-10 and periodic and worst_split <= 1e-10 and two <= 1e-6 and unit <= 1e-9
          and worst_idem <= 1e-10 and ck["structure.charge_conservation"]["pass"])
    record(6, ok, f"[H,Q] {worst_conserve:.1e}; H_2pi=H_0 {periodic}; split {worst_split:.1e}; "
                  f"two-boundary {two:.1e}; unitarity {unit:.1e}; idempotency {worst_idem:.1e}")


def test_criterion_7_lieb_robinson(tmp_path):
    cfg = _cfg(("lr",)).replace("lrdiag", enabled=True)
    s = run_experiment(cfg, tmp_path, log=lambda m: None)
    ck = _checks(s)
    info = next(st for st in s["stages"] if st["name"] == "lr").get("info", {})
    ok = all(ck[n]["pass"] for n in ("lr.outside_cone", "lr.k_wider", "lr.outside_points"))
    record(7, ok, f"outside/peak {ck['lr.outside_cone']['value']:.2e} <= 1e-3 over "
                  f"{ck['lr.outside_points']['value']:.0f} points (v_hat {info.get('v_hat', 0):.2f}); "
                  f"K minus H width {ck['lr.k_wider']['value']:.3f} > 0")


def test_criterion_8_oracle_self_tests():
    model = hofstadter_hoppings(1, 4)
    rng = np.random.default_rng(2024)
    vals = {chern_oracle(model, [0], grid=24, rng=rng) for _ in range(10)}
    eps = np.array(EPS7)
    fit = exactness_fit(eps, 0.3 * eps ** 4)
    ok = vals == {-1} and abs(fit.slope - 4.0) <= 0.05
    record(8, ok, f"rephased Chern values {sorted(vals)}; synthetic eps^4 slope {fit.slope:.4f}")


def test_criterion_9_determinism(tmp_path):
    cfg = _cfg(("validate", "gap", "parallel", "sweep"), L=4, V=0.0)
    cfg = cfg.replace("evolution", eps=(0.2, 0.1), parallel_steps=16, checkpoints=5).replace(
        "quasiadiabatic", locality=True).replace("spectral", phi_points=9)
    a = run_experiment(cfg, tmp_path / "a", log=lambda m: None)
    b = run_experiment(cfg.replace("run", threads=2), tmp_path / "b", log=lambda m: None)
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    record(9, same and len(files) >= 5, f"{len(files)} CSV files bit-identical across runs: {same}")
