from collections import deque

import numpy as np
import pytest

from hallpump.lattice import boundary, fatten, make_torus, named_regions


def bfs(lat, src):
    dist = {src: 0}
    todo = deque([src])
    while todo:
        i = todo.popleft()
        for j in lat.neighbours(i):
            if j not in dist:
                dist[j] = dist[i] + 1
                todo.append(j)
    return np.array([dist[j] for j in range(lat.n_sites)])


@pytest.mark.parametrize("L", [4, 6])
def test_distance_matches_graph_search(L):
    lat = make_torus(L)
    for i in range(lat.n_sites):
        assert np.array_equal(lat.distance_matrix[i], bfs(lat, i))
    assert lat.distance_matrix.max() == L


@pytest.mark.parametrize("L", [3, 5, 2, 0])
def test_bad_sizes_rejected(L):
    with pytest.raises(ValueError):
        make_torus(L)


def test_index_coord_roundtrip():
    lat = make_torus(6)
    for i in range(lat.n_sites):
        assert lat.index(*lat.coord(i)) == i
    # canonical wrap
    assert lat.index(4, -2) == lat.index(-2, 4)


def test_fatten_brute_force():
    lat = make_torus(6)
    rng = np.random.default_rng(3)
    for _ in range(10):
        Z = lat.region(rng.choice(lat.n_sites, size=4, replace=False))
        for r in range(4):
            want = {y for y in range(lat.n_sites) if any(lat.distance(y, z) <= r for z in Z)}
            assert fatten(Z, r).members == want


def test_named_regions_shapes():
    lat = make_torus(6)
    reg = named_regions(lat)
    assert len(reg["eta"]) == 18 and len(reg["eta_-"]) == 6
    assert reg["eta_-"].members <= reg["eta"].members and reg["eta_+"].members <= reg["eta"].members
    assert not (reg["eta_-"] & reg["eta_+"]).members
    # boundary of the strip is the two edge rows plus the rows just outside
    assert len(boundary(reg["eta"])) == 4 * 6


def test_region_distance():
    lat = make_torus(4)
    Z = lat.region([0])
    assert Z.distance_to([lat.index(*np.add(lat.coord(0), (2, 2)))]) == 4
    with pytest.raises(ValueError):
        lat.region([]).distance_to([0])
