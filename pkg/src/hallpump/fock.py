"""Fixed-particle-number sectors of the fermionic Fock space over a torus.

Basis states are occupation bitstrings, bit ``i`` being the site with linear
index ``i``.  Ladder operators follow the Jordan-Wigner convention for that
site order::

    a_x |n>  = (-1)^(n_0 + ... + n_{x-1}) |n - e_x>
    a+_x |n> = (-1)^(n_0 + ... + n_{x-1}) |n + e_x>
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import _backend
from .lattice import Region, TorusLattice

__all__ = [
    "DEFAULT_DIM_CAP",
    "DimensionCapError",
    "SectorBasis",
    "ChargeAssignment",
    "build_sector_basis",
    "charge_diagonal",
    "charge_operator",
    "monomial_matrix",
    "apply_monomial",
    "parse_monomial",
]

DEFAULT_DIM_CAP = 2_000_000


class DimensionCapError(ValueError):
    """Raised when a sector would exceed the configured dimension cap."""


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Sorted occupation bitstrings with exactly ``N`` particles."""

    lattice: TorusLattice
    N: int
    states: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    def index_of(self, words) -> np.ndarray:
        """Positions of the given bitstrings, -1 where not in the basis."""
        return _backend.active().lookup(self.states, np.atleast_1d(np.asarray(words, dtype=np.uint64)))

    @cached_property
    def occupations(self) -> np.ndarray:
        return _backend.active().occupations(self.states, self.n_sites)

    def bits(self, k: int) -> str:
        """Occupation string of basis state ``k``, site 0 first."""
        s = int(self.states[k])
        return "".join("1" if (s >> i) & 1 else "0" for i in range(self.n_sites))


def build_sector_basis(lat: TorusLattice, N: int, cap: int = DEFAULT_DIM_CAP) -> SectorBasis:
    """Enumerate the N-particle sector; refuses sectors larger than ``cap``."""
    n = lat.n_sites
    if not 0 <= N <= n:
        raise ValueError(f"particle number {N} outside [0, {n}]")
    if n > 63:
        raise ValueError("bitstring basis supports at most 63 sites")
    dim = comb(n, N)
    if dim > cap:
        raise DimensionCapError(f"sector dimension C({n},{N}) = {dim} exceeds cap {cap}")
    states = _backend.active().enumerate_states(n, N)
    return SectorBasis(lat, N, states)


def parse_monomial(ops) -> tuple[np.ndarray, np.ndarray]:
    """Normalise a monomial to (sites, daggers) arrays.

    ``ops`` is a sequence of ``(site, dagger)`` pairs in written order; dagger
    may be a bool or one of the strings ``'+'``/``'-'``.
    """
    sites, dags = [], []
    for site, d in ops:
        if isinstance(d, str):
            if d not in "+-" or len(d) != 1:
                raise ValueError(f"ladder tag must be '+' or '-', got {d!r}")
            d = d == "+"
        sites.append(int(site))
        dags.append(bool(d))
    return np.asarray(sites, dtype=np.int64), np.asarray(dags, dtype=np.uint8)


def _target_basis(basis: SectorBasis, dags: np.ndarray, target: SectorBasis | None) -> SectorBasis:
    shift = int(2 * dags.astype(int).sum() - len(dags))
    if target is None:
        if shift != 0:
            raise ValueError("monomial changes the particle number; pass the target sector")
        return basis
    if target.N != basis.N + shift:
        raise ValueError(f"monomial maps N={basis.N} to N={basis.N + shift}, target has N={target.N}")
    return target


def monomial_matrix(ops, basis: SectorBasis, target: SectorBasis | None = None) -> sp.csr_matrix:
    """Sparse matrix of a ladder-operator product from ``basis`` to ``target``."""
    sites, dags = parse_monomial(ops)
    tgt = _target_basis(basis, dags, target)
    if len(sites) == 0:
        return sp.identity(basis.dim, dtype=float, format="csr")
    rows, cols, signs = _backend.active().monomial_action(basis.states, sites, dags, tgt.states)
    return sp.csr_matrix((signs.astype(float), (rows, cols)), shape=(tgt.dim, basis.dim))


def apply_monomial(ops, vec: np.ndarray, basis: SectorBasis, target: SectorBasis | None = None) -> np.ndarray:
    """Apply a ladder-operator product to a vector (or columns of a matrix)."""
    sites, dags = parse_monomial(ops)
    tgt = _target_basis(basis, dags, target)
    vec = np.asarray(vec)
    out = np.zeros((tgt.dim,) + vec.shape[1:], dtype=np.result_type(vec, float))
    if len(sites) == 0:
        out[...] = vec
        return out
    rows, cols, signs = _backend.active().monomial_action(basis.states, sites, dags, tgt.states)
    sg = signs.astype(float).reshape((-1,) + (1,) * (vec.ndim - 1))
    np.add.at(out, rows, sg * vec[cols])
    return out


@dataclass(frozen=True)
class ChargeAssignment:
    """Local charges q(X) as integer combinations of number-operator products.

    ``terms`` maps a support (frozenset of sites) to a tuple of
    ``(integer coefficient, tuple of sites)`` meaning coefficient * prod n_s.
    The default assigns q({x}) = n_x.
    """

    lattice: TorusLattice
    terms: dict

    @classmethod
    def default(cls, lat: TorusLattice) -> "ChargeAssignment":
        return cls(lat, {frozenset([i]): ((1, (i,)),) for i in range(lat.n_sites)})

    @property
    def range(self) -> int:
        return max((self.lattice.diam(X) for X in self.terms), default=0)

    def validate(self) -> list[str]:
        """Problems found; empty when every q(X) is a valid local charge.

        Products of number operators are diagonal, hence mutually commuting;
        integer coefficients make their spectra integer.  Supports must
        contain every site used by their term.
        """
        problems = []
        for X, parts in self.terms.items():
            for coeff, prod in parts:
                if int(coeff) != coeff:
                    problems.append(f"non-integer coefficient {coeff} on {sorted(X)}")
                if not set(prod) <= set(X):
                    problems.append(f"term on {sorted(X)} uses sites {sorted(set(prod) - set(X))} outside its support")
        return problems

    def is_default(self) -> bool:
        return self == ChargeAssignment.default(self.lattice)

    def diagonal(self, region: Region, basis: SectorBasis) -> np.ndarray:
        occ = basis.occupations
        out = np.zeros(basis.dim, dtype=np.int64)
        for X, parts in self.terms.items():
            if not X <= region.members:
                continue
            for coeff, prod in parts:
                out += int(coeff) * np.all(occ[:, list(prod)] == 1, axis=1)
        return out


def charge_diagonal(region: Region, basis: SectorBasis,
                    assignment: ChargeAssignment | None = None) -> np.ndarray:
    """Diagonal of Q_Z in the sector basis (integer valued)."""
    if assignment is None:
        if not region.members:
            return np.zeros(basis.dim, dtype=np.int64)
        return basis.occupations[:, sorted(region.members)].sum(axis=1, dtype=np.int64)
    return assignment.diagonal(region, basis)


def charge_operator(region: Region, basis: SectorBasis,
                    assignment: ChargeAssignment | None = None) -> sp.dia_matrix:
    """Q_Z as a sparse diagonal matrix on the sector."""
    return sp.diags(charge_diagonal(region, basis, assignment).astype(float), format="csr")
