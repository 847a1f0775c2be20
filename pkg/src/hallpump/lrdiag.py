"""Empirical Lieb-Robinson cones.

C(t, d) = max over sites y at distance d from x of ||[tau_t(O_x), O_y]||,
with tau_t(A) = e^{iGt} A e^{-iGt} and density probes O_x = n_x.  The norm is
estimated from below: a few power iterations of C^dagger C from each of
``n_vectors`` random normalised starts, keeping the largest Rayleigh value.

Generators are second-quantised one-body matrices dGamma(g) restricted to a
small particle sector (the default scan uses N = 2 on the 6x6 torus, dim 630),
where tau_t is applied through a dense eigendecomposition.  Diagonal probes
make the commutator an entrywise product,
[A, O_y]_{ab} = A_{ab} (o_y(b) - o_y(a)).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fock import build_sector_basis, monomial_matrix

__all__ = ["ConeFitError", "ConeProfile", "second_quantise", "cone_scan", "fit_cone", "write_cone_csv",
           "plot_cone"]

_DENSE_LIMIT = 4000


class ConeFitError(ValueError):
    """The grid is too small to fit a cone."""


def second_quantise(h: np.ndarray, basis, tail: float = 0.0) -> sp.csr_matrix:
    """sum_ij h_ij a+_i a_j on a sector; entries with |h_ij| <= tail are dropped."""
    n = basis.n_sites
    out = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for i in range(n):
        for j in range(n):
            if abs(h[i, j]) > tail:
                out = out + h[i, j] * monomial_matrix([(i, True), (j, False)], basis)
    return out.tocsr()


@dataclass
class ConeProfile:
    t: np.ndarray
    d: np.ndarray
    C: np.ndarray                   # (len(t), len(d))
    tag: str                        # 'finite-range' | 'generalized'
    probe_site: int
    n_vectors: int
    seed: int
    fit: dict = field(default_factory=dict)

    @property
    def peak(self) -> float:
        return float(self.C.max())

    def outside(self, margin: float = 3.0):
        """Grid values with d >= v t + delta + margin for the fitted cone."""
        f = self.fit
        rows = []
        for i, t in enumerate(self.t):
            edge = f["front"](t) + margin
            for j, d in enumerate(self.d):
                if d >= edge:
                    rows.append((float(t), int(d), float(self.C[i, j])))
        return rows

    def width(self) -> np.ndarray:
        """Mean distance sum_d d C(t, d) / sum_d C(t, d) for each t."""
        w = self.C.sum(axis=1)
        with np.errstate(invalid="ignore"):
            return np.where(w > 0, (self.C * self.d[None, :]).sum(axis=1) / np.where(w > 0, w, 1), 0.0)

    def monotone_fraction(self, margin: float = 0.0) -> float:
        """Share of (t, d) steps beyond the front where C does not increase (10% noise allowance)."""
        ok = tot = 0
        for i, t in enumerate(self.t):
            edge = self.fit["front"](t) + margin if self.fit else 0.0
            for j in range(1, len(self.d)):
                if self.d[j - 1] >= edge:
                    tot += 1
                    ok += self.C[i, j] <= 1.1 * self.C[i, j - 1] + 1e-14
        return ok / tot if tot else 1.0


def _norm_estimate(M: np.ndarray, starts: np.ndarray, n_power: int) -> float:
    X = starts
    best = 0.0
    for _ in range(n_power):
        Y = M @ X
        best = max(best, float(np.linalg.norm(Y, axis=0).max()))
        X = M.conj().T @ Y
        nrm = np.linalg.norm(X, axis=0)
        if not np.any(nrm > 0):
            break
        X = X / np.where(nrm > 0, nrm, 1.0)
    return best


def cone_scan(g: np.ndarray, lattice, N: int, probe_site: int, times, distances=None, n_vectors: int = 20,
              n_power: int = 6, seed: int = 0, tag: str = "finite-range", exact: bool = False) -> ConeProfile:
    """C(t, d) for the dynamics generated by dGamma(g) on the N-particle sector.

    ``exact=True`` replaces the random-vector estimate by the spectral norm
    (cross-check for small sectors).
    """
    basis = build_sector_basis(lattice, N)
    if basis.dim > _DENSE_LIMIT:
        raise ValueError(f"sector dim {basis.dim} above the dense cone-scan limit {_DENSE_LIMIT}")
    G = second_quantise(np.asarray(g), basis).toarray()
    E, V = np.linalg.eigh(0.5 * (G + G.conj().T))
    occ = basis.occupations.astype(float)
    dist = lattice.distance_matrix[probe_site]
    if distances is None:
        distances = np.arange(0, int(dist.max()) + 1)
    distances = np.asarray(distances)
    rng = np.random.default_rng(seed)
    starts = rng.normal(size=(basis.dim, n_vectors)) + 1j * rng.normal(size=(basis.dim, n_vectors))
    starts /= np.linalg.norm(starts, axis=0)
    Ox = occ[:, probe_site]
    Vd = V.conj().T
    C = np.zeros((len(times), len(distances)))
    for i, t in enumerate(times):
        ph = np.exp(1j * E * t)
        A = (V * ph) @ ((Vd * Ox[None, :]) @ (V * ph.conj())) @ Vd     # e^{iGt} O_x e^{-iGt}
        for j, d in enumerate(distances):
            best = 0.0
            for y in np.flatnonzero(dist == d):
                oy = occ[:, y]
                M = A * (oy[None, :] - oy[:, None])
                val = np.linalg.norm(M, 2) if exact else _norm_estimate(M, starts, n_power)
                best = max(best, val)
            C[i, j] = best
    return ConeProfile(np.asarray(times, dtype=float), distances, C, tag, probe_site, n_vectors, seed)


def fit_cone(profile: ConeProfile, level: float = 1e-2, shape: str = "affine", alpha: float = 2.0,
             min_past: int = 4) -> dict:
    """Fit the front d*(t) = max{d : C(t, d) >= level * peak}.

    shape 'affine': d* = delta + v t;  shape 'power': d* = delta + c t^(1/alpha).
    Fits use the t > 0 rows; ``min_past`` distances beyond the front are
    required at the earliest time.
    """
    peak = profile.peak
    if peak == 0:
        fit = {"shape": shape, "v": 0.0, "delta": 0.0, "level": level, "front": lambda t: 0.0}
        profile.fit = fit
        return fit
    ts, fronts = [], []
    for i, t in enumerate(profile.t):
        if t <= 0:
            continue
        above = profile.d[profile.C[i] >= level * peak]
        ts.append(t)
        fronts.append(float(above.max()) if len(above) else 0.0)
    if len(ts) < 2:
        raise ConeFitError("need at least two positive times")
    if int((profile.d > fronts[0]).sum()) < min_past:
        raise ConeFitError("fewer than the required distances lie past the cone")
    ts, fronts = np.array(ts), np.array(fronts)
    x = ts if shape == "affine" else ts ** (1.0 / alpha)
    A = np.vstack([x, np.ones_like(x)]).T
    (v, delta), *_ = np.linalg.lstsq(A, fronts, rcond=None)
    # lift the line so every measured front lies on or below it
    delta = float(delta + max(0.0, (fronts - (v * x + delta)).max()))
    if shape == "affine":
        front = lambda t, v=float(v), d0=delta: v * t + d0
    else:
        front = lambda t, v=float(v), d0=delta, a=alpha: v * t ** (1.0 / a) + d0
    fit = {"shape": shape, "v": float(v), "delta": delta, "level": level, "alpha": alpha, "front": front,
           "fronts": fronts.tolist()}
    profile.fit = fit
    return fit


def write_cone_csv(profile: ConeProfile, path) -> None:
    """Columns: t, d, C, C_rel (C / peak), tag."""
    peak = profile.peak or 1.0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "d", "C", "C_rel", "tag"])
        for i, t in enumerate(profile.t):
            for j, d in enumerate(profile.d):
                w.writerow([repr(float(t)), int(d), repr(float(profile.C[i, j])),
                            repr(float(profile.C[i, j] / peak)), profile.tag])


def plot_cone(profile: ConeProfile, path) -> None:
    """Heat map of log10(C / peak) over (d, t) with the fitted front, as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rel = np.log10(np.maximum(profile.C / (profile.peak or 1.0), 1e-16))
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(rel, origin="lower", aspect="auto", cmap="viridis", vmin=-12, vmax=0,
                   extent=[profile.d[0] - 0.5, profile.d[-1] + 0.5, profile.t[0], profile.t[-1]])
    if profile.fit:
        tt = np.linspace(profile.t[0], profile.t[-1], 100)
        ax.plot([profile.fit["front"](t) for t in tt], tt, "w--", lw=1)
        ax.set_xlim(profile.d[0] - 0.5, profile.d[-1] + 0.5)
    ax.set_xlabel("distance d")
    ax.set_ylabel("time t")
    ax.set_title(f"log10 C/peak ({profile.tag})")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
