"""Magnetic-translation blocks of a fixed-N sector.

A lattice translation x -> pi(x) combined with a gauge transformation
a+_z -> e^{i chi(z)} a+_z is a symmetry of a family when every hopping
coefficient satisfies h[pi y, pi x] = e^{i(chi(pi y) - chi(pi x))} h[y, x] and
diagonal terms are translation invariant.  The gauge function is solved for
on the bond graph and then verified on every monomial.

On the sector, U|s> for |s> = a+_{i1} ... a+_{iN}|0> (i1 < ... < iN) is the
permuted bitstring times the reordering sign and the gauge phase.  Orbits of
U give an orthonormal eigenbasis; each eigenvalue lambda labels a block.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fock import SectorBasis
from .lattice import TorusLattice

__all__ = ["NoSymmetryError", "TranslationBlocks", "translation_permutation", "solve_gauge", "translation_blocks"]


class NoSymmetryError(ValueError):
    """The family is not invariant under the requested magnetic translation."""


def translation_permutation(lat: TorusLattice, shift=(1, 0)) -> np.ndarray:
    return np.array([lat.index(a + shift[0], b + shift[1]) for a, b in lat.sites()], dtype=np.int64)


def _monomial_tables(observables):
    for obs in observables:
        yield obs.monomial_table()


def solve_gauge(observables, perm: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Gauge function chi making U = G T commute with every observable given."""
    n = len(perm)
    edges = {}
    tables = list(_monomial_tables(observables))
    for table in tables:
        for mono, c in table.items():
            if len(mono) == 2 and mono[0][1] and not mono[1][1] and mono[0][0] != mono[1][0]:
                y, x = mono[0][0], mono[1][0]
                img = ((int(perm[y]), True), (int(perm[x]), False))
                c2 = table.get(img, 0)
                if abs(c2) < tol or abs(abs(c2) - abs(c)) > tol * max(1, abs(c)):
                    raise NoSymmetryError(f"hop {x}->{y} has no translated partner of equal modulus")
                edges.setdefault(int(perm[x]), []).append((int(perm[y]), np.angle(c2 / c)))
                edges.setdefault(int(perm[y]), []).append((int(perm[x]), -np.angle(c2 / c)))
    chi = np.full(n, np.nan)
    for root in range(n):
        if not np.isnan(chi[root]):
            continue
        chi[root] = 0.0
        todo = deque([root])
        while todo:
            a = todo.popleft()
            for b, d in edges.get(a, ()):
                if np.isnan(chi[b]):
                    chi[b] = chi[a] + d
                    todo.append(b)
    for table in tables:
        for mono, c in table.items():
            img = tuple((int(perm[s]), d) for s, d in mono)
            phase = np.exp(1j * sum((chi[int(perm[s])] if d else -chi[int(perm[s])]) for s, d in mono))
            # creators stay left of annihilators, so reordering the image into
            # normal form only permutes within each group: a pure sign
            order = sorted(range(len(img)), key=lambda i: (0, img[i][0]) if img[i][1] else (1, -img[i][0]))
            perm_sign = _perm_sign(order)
            key = tuple(img[i] for i in order)
            if abs(table.get(key, 0) - perm_sign * phase * c) > tol * max(1, abs(c)):
                raise NoSymmetryError(f"monomial {mono} is not mapped onto itself by the translation")
    return chi


def _perm_sign(order) -> int:
    order = list(order)
    sign = 1
    seen = [False] * len(order)
    for i in range(len(order)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = order[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _unitary_on_sector(basis: SectorBasis, perm: np.ndarray, chi: np.ndarray) -> sp.csr_matrix:
    n = basis.n_sites
    occ = basis.occupations.astype(bool)
    dim = basis.dim
    targets = np.zeros(dim, dtype=np.uint64)
    vals = np.zeros(dim, dtype=complex)
    weights = np.uint64(1) << perm.astype(np.uint64)
    for k in range(dim):
        sites = np.flatnonzero(occ[k])
        img = perm[sites]
        sign = _perm_sign(np.argsort(img, kind="stable"))
        targets[k] = np.bitwise_or.reduce(weights[sites]) if len(sites) else np.uint64(0)
        vals[k] = sign * np.exp(1j * chi[img].sum())
    rows = basis.index_of(targets)
    if np.any(rows < 0):
        raise RuntimeError("translation left the sector")
    return sp.csr_matrix((vals, (rows, np.arange(dim))), shape=(dim, dim))


@dataclass
class TranslationBlocks:
    """Eigenspaces of a magnetic translation on one sector."""

    basis: SectorBasis
    U: sp.csr_matrix
    labels: np.ndarray          # block label (eigenvalue angle in [0, 2pi)) of each column of ``vectors``
    vectors: sp.csc_matrix      # orthonormal eigenvectors, one column per orbit state

    def keys(self):
        return sorted(set(self.labels.tolist()))

    def isometry(self, key: float) -> sp.csr_matrix:
        cols = np.flatnonzero(self.labels == key)
        return self.vectors[:, cols].tocsr()


def translation_blocks(basis: SectorBasis, observables, shift=(1, 0), digits: int = 9) -> TranslationBlocks:
    """Block decomposition of ``basis`` under the magnetic translation by ``shift``."""
    perm = translation_permutation(basis.lattice, shift)
    chi = solve_gauge(observables, perm)
    U = _unitary_on_sector(basis, perm, chi)
    dim = basis.dim
    # follow orbits: U maps column k to row rows[k] with phase vals[k]
    coo = U.tocoo()
    nxt = np.empty(dim, dtype=np.int64)
    ph = np.empty(dim, dtype=complex)
    nxt[coo.col] = coo.row
    ph[coo.col] = coo.data
    seen = np.zeros(dim, dtype=bool)
    rows, cols, vals, labels = [], [], [], []
    col = 0
    for s in range(dim):
        if seen[s]:
            continue
        orbit, phases = [s], [1.0 + 0j]
        seen[s] = True
        cur, acc = s, 1.0 + 0j
        while True:
            acc = acc * ph[cur]
            cur = nxt[cur]
            if cur == s:
                break
            seen[cur] = True
            orbit.append(cur)
            phases.append(acc)
        ell = len(orbit)
        c = acc  # U^ell |s> = c |s>
        base = np.angle(c) / ell
        for j in range(ell):
            lam_angle = (base + 2 * np.pi * j / ell) % (2 * np.pi)
            lam = np.exp(1j * lam_angle)
            coeff = np.array([lam ** (-r) * phases[r] for r in range(ell)]) / np.sqrt(ell)
            rows.extend(orbit)
            cols.extend([col] * ell)
            vals.extend(coeff.tolist())
            labels.append(round(lam_angle, digits) % round(2 * np.pi, digits))
            col += 1
    vec = sp.csc_matrix((vals, (rows, cols)), shape=(dim, col))
    return TranslationBlocks(basis, U, np.array(labels), vec)
