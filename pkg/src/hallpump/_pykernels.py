"""Numpy implementations of the basis and monomial kernels.

Same signatures and results as the compiled ``_ckernels`` module; used when the
extension is not built, and as the reference side of the benchmark.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

NAME = "python"


def enumerate_states(n_sites: int, n_particles: int) -> np.ndarray:
    """All n_sites-bit words with n_particles bits set, ascending."""
    if n_particles < 0 or n_particles > n_sites:
        return np.zeros(0, dtype=np.uint64)
    if n_particles == 0:
        return np.zeros(1, dtype=np.uint64)
    weights = np.uint64(1) << np.arange(n_sites, dtype=np.uint64)
    combos = np.array(list(combinations(range(n_sites), n_particles)), dtype=np.int64)
    states = np.bitwise_or.reduce(weights[combos], axis=1)
    return np.sort(states)


def lookup(states: np.ndarray, words: np.ndarray) -> np.ndarray:
    """Position of each word in the sorted ``states`` array, -1 where absent."""
    words = np.asarray(words, dtype=np.uint64)
    pos = np.searchsorted(states, words)
    pos_c = np.minimum(pos, max(len(states) - 1, 0))
    hit = (pos < len(states)) & (states[pos_c] == words) if len(states) else np.zeros(words.shape, bool)
    return np.where(hit, pos_c, -1).astype(np.int64)


def monomial_action(states: np.ndarray, sites: np.ndarray, daggers: np.ndarray,
                    target: np.ndarray):
    """Matrix entries of a product of ladder operators between two bases.

    The product is written left to right as ``sites``/``daggers``; it acts on a
    ket from the right.  Returns ``(rows, cols, signs)`` with rows indexing
    ``target`` and cols indexing ``states``.
    """
    s = states.astype(np.uint64).copy()
    sign = np.ones(len(s), dtype=np.int8)
    alive = np.ones(len(s), dtype=bool)
    one = np.uint64(1)
    for x, dag in zip(sites[::-1], daggers[::-1]):
        bit = one << np.uint64(x)
        occ = (s & bit) != 0
        alive &= ~occ if dag else occ
        below = s & (bit - one)
        par = (np.bitwise_count(below) & 1).astype(np.int8)
        sign = sign * (1 - 2 * par)
        s = s ^ bit
    cols = np.flatnonzero(alive)
    rows = lookup(target, s[cols])
    keep = rows >= 0
    return rows[keep], cols[keep], sign[cols][keep]


def occupations(states: np.ndarray, n_sites: int) -> np.ndarray:
    """(dim, n_sites) uint8 table of occupation numbers."""
    shifts = np.arange(n_sites, dtype=np.uint64)
    return ((states[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
