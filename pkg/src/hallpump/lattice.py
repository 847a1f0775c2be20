"""Discrete torus geometry: sites, graph distance, named strips and fattenings.

Sites carry canonical coordinates (x1, x2) with each x_i in {-L/2+1, ..., L/2}.
The linear site index is ``i = (x1 + L/2 - 1) * L + (x2 + L/2 - 1)``, which is
also the bit position used by the occupation-number bases in :mod:`fock`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np

__all__ = [
    "TorusLattice",
    "Region",
    "make_torus",
    "named_regions",
    "fatten",
    "boundary",
]


@dataclass(frozen=True)
class TorusLattice:
    """Periodic L x L square lattice with the nearest-neighbour graph metric."""

    L: int

    def __post_init__(self):
        if not isinstance(self.L, (int, np.integer)) or self.L % 2 or self.L < 4:
            raise ValueError(f"torus size must be an even integer >= 4, got {self.L!r}")

    @property
    def half(self) -> int:
        return self.L // 2

    @property
    def n_sites(self) -> int:
        return self.L * self.L

    def canon(self, a: int) -> int:
        """Canonical representative of ``a`` mod L in {-L/2+1, ..., L/2}."""
        return (a + self.half - 1) % self.L - self.half + 1

    def index(self, x1: int, x2: int) -> int:
        x1, x2 = self.canon(x1), self.canon(x2)
        return (x1 + self.half - 1) * self.L + (x2 + self.half - 1)

    def coord(self, i: int) -> tuple[int, int]:
        a, b = divmod(int(i), self.L)
        return a - self.half + 1, b - self.half + 1

    @cached_property
    def coords(self) -> np.ndarray:
        """(n_sites, 2) integer array of canonical coordinates in index order."""
        return np.array([self.coord(i) for i in range(self.n_sites)], dtype=np.int64)

    def sites(self) -> Iterator[tuple[int, int]]:
        for i in range(self.n_sites):
            yield self.coord(i)

    def _axis_dist(self, a, b):
        d = np.abs(np.asarray(a) - np.asarray(b)) % self.L
        return np.minimum(d, self.L - d)

    def distance(self, i: int, j: int) -> int:
        ci, cj = self.coords[i], self.coords[j]
        return int(self._axis_dist(ci[0], cj[0]) + self._axis_dist(ci[1], cj[1]))

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        c = self.coords
        d1 = self._axis_dist(c[:, None, 0], c[None, :, 0])
        d2 = self._axis_dist(c[:, None, 1], c[None, :, 1])
        return (d1 + d2).astype(np.int64)

    @property
    def diameter(self) -> int:
        return self.L

    def diam(self, sites: Iterable[int]) -> int:
        s = np.fromiter(sites, dtype=np.int64)
        if s.size < 2:
            return 0
        return int(self.distance_matrix[np.ix_(s, s)].max())

    def dist_to_set(self, sites: Iterable[int]) -> np.ndarray:
        """Distance from every site to the set (``inf`` distances never occur for nonempty sets)."""
        s = np.fromiter(sites, dtype=np.int64)
        if s.size == 0:
            return np.full(self.n_sites, np.iinfo(np.int64).max)
        return self.distance_matrix[:, s].min(axis=1)

    def neighbours(self, i: int) -> list[int]:
        x1, x2 = self.coord(i)
        return [self.index(x1 + 1, x2), self.index(x1 - 1, x2),
                self.index(x1, x2 + 1), self.index(x1, x2 - 1)]

    def region(self, members: Iterable[int], label: str | None = None) -> "Region":
        return Region(self, frozenset(int(m) for m in members), label)

    def where(self, predicate, label: str | None = None) -> "Region":
        """Region of all sites whose coordinates satisfy ``predicate(x1, x2)``."""
        return self.region((i for i, (a, b) in enumerate(self.sites()) if predicate(a, b)), label)


@dataclass(frozen=True)
class Region:
    """An explicit set of site indices of one lattice."""

    lattice: TorusLattice
    members: frozenset
    label: str | None = None

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, i) -> bool:
        return int(i) in self.members

    def __iter__(self):
        return iter(sorted(self.members))

    def _check(self, other: "Region"):
        if other.lattice != self.lattice:
            raise ValueError("regions live on different lattices")

    def __or__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.lattice, self.members | other.members)

    def __and__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.lattice, self.members & other.members)

    def __sub__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.lattice, self.members - other.members)

    def complement(self) -> "Region":
        return Region(self.lattice, frozenset(range(self.lattice.n_sites)) - self.members)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.lattice.n_sites, dtype=bool)
        m[list(self.members)] = True
        return m

    def meets(self, sites: Iterable[int]) -> bool:
        return any(int(s) in self.members for s in sites)

    def distance_to(self, sites: Iterable[int]) -> int:
        s = list(sites)
        if not s or not self.members:
            raise ValueError("distance to an empty set is undefined")
        dm = self.lattice.distance_matrix
        return int(dm[np.ix_(sorted(self.members), s)].min())

    def with_label(self, label: str) -> "Region":
        return Region(self.lattice, self.members, label)


def make_torus(L: int) -> TorusLattice:
    """Build the L x L torus; L must be even and at least 4."""
    return TorusLattice(L)


def named_regions(lat: TorusLattice) -> dict[str, Region]:
    """The strips eta (horizontal) and nu (vertical) with their boundary lines.

    eta = {0 <= x2 < L/2}, eta_- = {x2 = 0}, eta_+ = {x2 = L/2 - 1}; nu is the
    same construction in x1.
    """
    h = lat.half
    return {
        "eta": lat.where(lambda a, b: 0 <= b < h, "eta"),
        "eta_-": lat.where(lambda a, b: b == 0, "eta_-"),
        "eta_+": lat.where(lambda a, b: b == h - 1, "eta_+"),
        "nu": lat.where(lambda a, b: 0 <= a < h, "nu"),
        "nu_-": lat.where(lambda a, b: a == 0, "nu_-"),
        "nu_+": lat.where(lambda a, b: a == h - 1, "nu_+"),
    }


def fatten(Z: Region, r: int) -> Region:
    """All sites within graph distance r of Z."""
    if r < 0:
        raise ValueError("fattening radius must be nonnegative")
    if not Z.members:
        return Z
    d = Z.lattice.dist_to_set(Z.members)
    return Region(Z.lattice, frozenset(np.flatnonzero(d <= r).tolist()), Z.label)


def boundary(Z: Region) -> Region:
    """Sites within distance 1 of both Z and its complement."""
    lat = Z.lattice
    zc = Z.complement()
    if not Z.members or not zc.members:
        return Region(lat, frozenset())
    near_z = lat.dist_to_set(Z.members) <= 1
    near_c = lat.dist_to_set(zc.members) <= 1
    return Region(lat, frozenset(np.flatnonzero(near_z & near_c).tolist()))
