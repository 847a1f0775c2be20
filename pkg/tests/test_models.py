import numpy as np
import pytest

from hallpump.lattice import make_torus
from hallpump.models import (BlochHoppings, GapClosedError, HofstadterParams, bloch_matrix, build_hofstadter,
                             chern_oracle, hofstadter_hoppings, plaquette_phases)


def test_lowest_band_chern_minus_one():
    assert chern_oracle(hofstadter_hoppings(1, 4), [0], grid=24) == -1


def test_chern_gauge_invariance():
    model = hofstadter_hoppings(1, 4)
    rng = np.random.default_rng(11)
    vals = {chern_oracle(model, [0], grid=24, rng=rng) for _ in range(10)}
    assert vals == {-1}


def test_chern_sum_rule_and_grid_independence():
    # flux 1/3: three isolated bands; the Chern numbers add up to zero
    model = hofstadter_hoppings(1, 3)
    cs = [chern_oracle(model, [b], grid=24) for b in range(3)]
    assert sum(cs) == 0
    assert chern_oracle(model, [0], grid=30) == cs[0]


def test_gap_closing_detected():
    # q = 4: the two middle bands touch at zero energy
    with pytest.raises(GapClosedError):
        chern_oracle(hofstadter_hoppings(1, 4), [1], grid=24)


def test_bloch_hermitian_and_spectrum_symmetric():
    model = hofstadter_hoppings(1, 4)
    h = bloch_matrix(model, 0.3, 1.7)
    assert np.allclose(h, h.conj().T)
    # bipartite lattice: spectrum symmetric about zero
    E = np.linalg.eigvalsh(h)
    assert np.allclose(np.sort(E), np.sort(-E))


def test_trivial_model_has_zero_chern():
    model = BlochHoppings(1, ((0, 0, (1, 0), -1.0), (0, 0, (-1, 0), -1.0)))
    assert chern_oracle(model, [0], grid=12) == 0


@pytest.mark.parametrize("L", [4, 6])
def test_uniform_flux_per_plaquette(L):
    ph = plaquette_phases(make_torus(L), 1, 4)
    assert np.allclose(ph, np.exp(2j * np.pi / 4))


def test_build_defaults_and_validation():
    fam = build_hofstadter(HofstadterParams(L=4, V=0.25))
    assert fam.params.filling == 4
    assert len(fam.base) == 2 * 16
    with pytest.raises(ValueError):
        build_hofstadter(HofstadterParams(L=4, q=3))


def test_torus_spectrum_matches_bloch():
    """One-body torus spectrum = union of Bloch spectra on the allowed momenta."""
    fam = build_hofstadter(HofstadterParams(L=4, V=0.0))
    h = fam.base.one_body_matrix()
    E_torus = np.sort(np.linalg.eigvalsh(h))
    model = hofstadter_hoppings(1, 4)
    ks = [(2 * np.pi * i, 2 * np.pi * j / 4) for i in range(1) for j in range(4)]
    E_bloch = np.sort(np.concatenate([np.linalg.eigvalsh(bloch_matrix(model, *k)) for k in ks]))
    assert np.allclose(E_torus, E_bloch, atol=1e-10)
