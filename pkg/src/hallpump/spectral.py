"""Ground-state snapshots and gap scans along the flux path."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, ArpackNoConvergence

__all__ = [
    "GapTooSmallError",
    "EigensolverError",
    "SpectralSnapshot",
    "GapScan",
    "ground_snapshot",
    "gap_scan",
    "write_gap_csv",
]

_DENSE_BELOW = 400


class GapTooSmallError(RuntimeError):
    """A gap on the scan grid fell below the configured threshold."""

    def __init__(self, phi: float, gap: float, threshold: float):
        super().__init__(f"gap {gap:.3e} at phi={phi:.6g} is below the threshold {threshold:.3e}")
        self.phi, self.gap, self.threshold = phi, gap, threshold


class EigensolverError(RuntimeError):
    pass


@dataclass
class SpectralSnapshot:
    phi: float
    energies: np.ndarray        # lowest computed levels (many-body energies)
    vectors: np.ndarray         # (dim, p) ground frame
    p: int
    degenerate: bool = False    # level p+1 within tolerance of level p
    residual: float = 0.0
    s: float = float("nan")

    @property
    def E0(self) -> float:
        return float(self.energies[0])

    @property
    def E1(self) -> float:
        """Lowest level above the ground space."""
        return float(self.energies[self.p])

    @property
    def gap(self) -> float:
        return float(self.energies[self.p] - self.energies[self.p - 1])

    def projector(self) -> np.ndarray:
        return self.vectors @ self.vectors.conj().T


def ground_snapshot(H, p_expected: int = 1, k_extra: int = 2, tol: float = 1e-12, seed: int = 0,
                    degeneracy_tol: float = 1e-8, phi: float = float("nan")) -> SpectralSnapshot:
    """Lowest p_expected + k_extra eigenpairs of a Hermitian sector operator.

    Small operators are diagonalised densely, larger ones by ARPACK with a
    seeded start vector (tolerance ``tol``).  A (p+1)-th level within
    ``degeneracy_tol`` of the p-th raises the ``degenerate`` flag; it is
    never resolved silently.
    """
    n = H.shape[0]
    k = min(p_expected + k_extra, n)
    if k <= p_expected:
        raise ValueError("operator too small for the requested ground space")
    if n <= _DENSE_BELOW:
        M = H.toarray() if sp.issparse(H) else np.asarray(H)
        E, V = np.linalg.eigh(M)
        E, V = E[:k], V[:, :k]
    else:
        v0 = np.random.default_rng(seed).normal(size=n)
        try:
            E, V = eigsh(H, k=k, which="SA", tol=tol, v0=v0, ncv=max(2 * k + 1, 20))
        except ArpackNoConvergence as exc:
            raise EigensolverError(f"ARPACK did not converge: {exc}") from exc
        order = np.argsort(E)
        E, V = E[order], V[:, order]
    scale = max(1.0, float(np.abs(E).max()))
    res = float(max(np.linalg.norm(H @ V[:, j] - E[j] * V[:, j]) for j in range(k)))
    if res > 1e-8 * scale:
        raise EigensolverError(f"eigenpair residual {res:.2e} exceeds 1e-8 |H|")
    deg = bool(E[p_expected] - E[p_expected - 1] < degeneracy_tol)
    return SpectralSnapshot(float(phi), E, V[:, :p_expected], p_expected, deg, res)


def _system_snapshot(system, phi) -> SpectralSnapshot:
    spec = system.spectrum(phi)
    if system.kind == "quasifree":
        N = system.N
        e = spec.E
        E0 = e[:N].sum()
        levels = np.array([E0, E0 + (e[N] - e[N - 1]) if N < len(e) else np.inf])
        return SpectralSnapshot(float(phi), levels, spec.ground(), 1, bool(levels[1] - levels[0] < 1e-8))
    p = system.p
    return SpectralSnapshot(float(phi), spec.E[: p + 2], spec.ground(), p, bool(spec.gap < 1e-8))


@dataclass
class GapScan:
    snapshots: list
    threshold: float | None = None
    rows: list = field(default_factory=list)

    @property
    def min_gap(self) -> float:
        return float(min(sn.gap for sn in self.snapshots))

    @property
    def argmin_phi(self) -> float:
        return float(min(self.snapshots, key=lambda sn: sn.gap).phi)

    @property
    def p_constant(self) -> bool:
        return len({sn.p for sn in self.snapshots}) == 1 and not any(sn.degenerate for sn in self.snapshots)


def gap_scan(source, phis, threshold: float | None = None, profile=None, p: int = 1, seed: int = 0) -> GapScan:
    """Snapshots over a phi grid.

    ``source`` is a system (``SectorSystem`` or ``QuasiFreeSystem``; dense
    spectra of its level space) or a callable ``phi -> sparse H`` for the
    iterative path.  Gaps below ``threshold`` abort with GapTooSmallError.
    """
    snaps = []
    for ph in phis:
        ph = float(ph)
        if callable(source) and not hasattr(source, "spectrum"):
            sn = ground_snapshot(source(ph), p, seed=seed, phi=ph)
        else:
            sn = _system_snapshot(source, ph)
        if profile is not None and profile.kind != "static":
            sn.s = profile.inverse(ph % (2 * np.pi) if ph < 2 * np.pi else 2 * np.pi)
        if threshold is not None and sn.gap < threshold:
            raise GapTooSmallError(ph, sn.gap, threshold)
        snaps.append(sn)
    return GapScan(snaps, threshold, [(sn.s, sn.phi, sn.E0, sn.E1, sn.gap, sn.p) for sn in snaps])


def write_gap_csv(scan: GapScan, path) -> None:
    """Columns: s, phi, E0, E1, gap, p."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "phi", "E0", "E1", "gap", "p"])
        for s, ph, e0, e1, g, p in scan.rows:
            w.writerow([repr(float(s)), repr(float(ph)), repr(float(e0)), repr(float(e1)), repr(float(g)), int(p)])
