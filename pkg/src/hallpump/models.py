"""Shipped model families and the single-particle Chern-number oracle.

Hofstadter gauge.  A hop x -> y enters as ``-t e^{i theta} a+_y a_x + h.c.``
with

* vertical bonds (x1, x2) -> (x1, x2+1): theta = B x1,
* horizontal bonds (x1, x2) -> (x1+1, x2): theta = 0, except across the
  x1 = L/2 seam where theta = -B L x2,

and B = 2 pi p/q.  Every plaquette, traversed counter-clockwise in the
(x1, x2) plane, then carries e^{iB}.  Reflecting x2 -> -x2 - 1 and conjugating
maps the family at phi to itself at phi, so ground-state currents across the
vertical cut vanish identically.

Chern sign convention.  The oracle returns
``C = (1/2pi) sum_plaquettes arg(U_2(k) U_1(k+e2) U_2(k+e1)^* U_1(k)^*)``,
i.e. plaquettes traversed k2 first, then k1, where U_mu are the normalised
link determinants along k1 (conjugate to x1) and k2 (conjugate to x2).  With
this orientation the charge pumped across the x1 = -1|0 line per flux
quantum inserted through the eta cut equals C; the lowest p/q = 1/4 band has
C = -1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import eigh

from .fock import ChargeAssignment
from .lattice import TorusLattice, make_torus, named_regions
from .observables import ExtensiveObservable, FermionPoly, HamiltonianFamily, validate_extensive

__all__ = [
    "HofstadterParams",
    "BlochHoppings",
    "GapClosedError",
    "build_hofstadter",
    "hofstadter_bonds",
    "hofstadter_hoppings",
    "plaquette_phases",
    "bloch_matrix",
    "chern_oracle",
]


@dataclass(frozen=True)
class HofstadterParams:
    L: int = 4
    p: int = 1
    q: int = 4
    t: float = 1.0
    V: float = 0.0
    N: int | None = None

    @property
    def flux(self) -> Fraction:
        return Fraction(self.p, self.q)

    @property
    def filling(self) -> int:
        """Particle number: explicit N, else the lowest-band filling L^2/q."""
        return self.N if self.N is not None else (self.L * self.L) // self.q

    def check(self) -> None:
        TorusLattice(self.L)
        if self.q <= 0:
            raise ValueError("flux denominator must be positive")
        if (self.L * self.L * self.p) % self.q:
            raise ValueError(f"flux {self.p}/{self.q} is not realisable on a {self.L}x{self.L} torus "
                             "(L^2 p/q must be an integer)")
        if self.t < 0 or self.V < 0:
            raise ValueError("hopping and interaction strengths must be nonnegative")
        if not 0 <= self.filling <= self.L * self.L:
            raise ValueError("particle number outside the Fock space")


def hofstadter_bonds(lat: TorusLattice, p: int, q: int):
    """Directed bonds (src, dst, theta, kind) with kind 'v' or 'h'."""
    B = 2 * np.pi * p / q
    L, h = lat.L, lat.half
    out = []
    for i in range(lat.n_sites):
        x1, x2 = lat.coord(i)
        out.append((i, lat.index(x1, x2 + 1), B * x1, "v"))
        out.append((i, lat.index(x1 + 1, x2), -B * L * x2 if x1 == h else 0.0, "h"))
    return out


def plaquette_phases(lat: TorusLattice, p: int, q: int) -> np.ndarray:
    """exp(i * sum of hop phases) around each elementary plaquette (counter-clockwise)."""
    th = {(s, d): np.exp(1j * t) for s, d, t, _ in hofstadter_bonds(lat, p, q)}

    def link(a, b):
        return th[(a, b)] if (a, b) in th else np.conj(th[(b, a)])

    out = []
    for i in range(lat.n_sites):
        x1, x2 = lat.coord(i)
        c = [i, lat.index(x1 + 1, x2), lat.index(x1 + 1, x2 + 1), lat.index(x1, x2 + 1)]
        out.append(link(c[0], c[1]) * link(c[1], c[2]) * link(c[2], c[3]) * link(c[3], c[0]))
    return np.array(out)


def build_hofstadter(params: HofstadterParams, validate: bool = True) -> HamiltonianFamily:
    """Twisted Hofstadter family with nearest-neighbour repulsion V n_x n_y."""
    params.check()
    lat = make_torus(params.L)
    reg = named_regions(lat)
    H = ExtensiveObservable(lat, {}, R=1, m=1.0)
    for src, dst, theta, _ in hofstadter_bonds(lat, params.p, params.q):
        term = FermionPoly()
        if params.t:
            term = term + FermionPoly.hop(src, dst, -params.t * np.exp(1j * theta))
        if params.V:
            term = term + FermionPoly.number(src) * FermionPoly.number(dst) * params.V
        if term.terms:
            H.add((src, dst), term)
    H.m = float(max(params.t, params.V, 1e-300))
    if validate:
        rep = validate_extensive(H)
        # a bond term t(hop) + V n n has norm max(t, V) or slightly above when both act;
        # the declared bound is the true local norm
        H.m = max(H.m, rep.strength_found)
        rep = validate_extensive(H)
        if not rep.ok:
            raise ValueError(f"Hofstadter terms failed validation: {rep.summary()}")
    fam = HamiltonianFamily(H, reg["eta"], reg["eta_-"], ChargeAssignment.default(lat), reg["eta_+"],
                            label=f"hofstadter L={params.L} p/q={params.p}/{params.q} t={params.t} V={params.V}")
    fam.params = params
    return fam


@dataclass(frozen=True)
class BlochHoppings:
    """Translation-invariant single-particle hoppings on a rectangular magnetic cell.

    ``hops`` holds ``(orb_from, orb_to, (n1, n2), amplitude)``: the amplitude of
    a+_{to, R + n} a_{from, R}.  Onsite energies are hops with zero shift and
    equal orbitals.  Hermiticity is the caller's responsibility and is checked.
    """

    n_orb: int
    hops: tuple = field(default_factory=tuple)


def hofstadter_hoppings(p: int, q: int, t: float = 1.0) -> BlochHoppings:
    """Magnetic cell of q sites along x1 in the gauge used by the torus model."""
    B = 2 * np.pi * p / q
    hops = []
    for a in range(q):
        amp = -t * np.exp(1j * B * a)
        hops += [(a, a, (0, 1), amp), (a, a, (0, -1), np.conj(amp))]
        b, n1 = (a + 1, 0) if a + 1 < q else (0, 1)
        hops += [(a, b, (n1, 0), -t), (b, a, (-n1, 0), -t)]
    return BlochHoppings(q, tuple(hops))


def bloch_matrix(model: BlochHoppings, k1: float, k2: float) -> np.ndarray:
    h = np.zeros((model.n_orb, model.n_orb), dtype=complex)
    for a, b, (n1, n2), amp in model.hops:
        h[b, a] += amp * np.exp(1j * (k1 * n1 + k2 * n2))
    return h


class GapClosedError(ValueError):
    """The selected bands touch the others somewhere on the momentum grid."""


def chern_oracle(model: BlochHoppings, bands, grid: int | tuple = 24, gap_tol: float = 1e-6,
                 rng: np.random.Generator | None = None, return_details: bool = False):
    """Chern number of a band group by the lattice field-strength method.

    ``bands`` lists band indices (0 = lowest).  Momenta run over the
    magnetic Brillouin zone [0, 2 pi)^2 in cell units.  The group must be
    separated from the remaining bands by more than ``gap_tol`` at every grid
    point.  ``rng`` re-phases every eigenvector randomly, which must not
    change the result.
    """
    n1, n2 = (grid, grid) if np.isscalar(grid) else grid
    bands = sorted(int(b) for b in np.atleast_1d(bands))
    if not bands or bands[0] < 0 or bands[-1] >= model.n_orb:
        raise ValueError("band selection outside the available bands")
    probe = bloch_matrix(model, 0.37, 1.21)
    if np.abs(probe - probe.conj().T).max() > 1e-12:
        raise ValueError("Bloch hoppings are not Hermitian")
    others = [b for b in range(model.n_orb) if b not in bands]
    frames = np.empty((n1, n2, model.n_orb, len(bands)), dtype=complex)
    min_gap = np.inf
    for i in range(n1):
        for j in range(n2):
            E, V = eigh(bloch_matrix(model, 2 * np.pi * i / n1, 2 * np.pi * j / n2))
            if others:
                sep = min(abs(E[b] - E[o]) for b in bands for o in others)
                min_gap = min(min_gap, sep)
            vec = V[:, bands]
            if rng is not None:
                vec = vec * np.exp(2j * np.pi * rng.random(len(bands)))[None, :]
            frames[i, j] = vec
    if others and min_gap <= gap_tol:
        raise GapClosedError(f"band gap closes on the grid (min separation {min_gap:.3e})")

    def link(a, b):
        d = np.linalg.det(a.conj().T @ b)
        if abs(d) < 1e-12:
            raise GapClosedError("degenerate link overlap; refine the grid")
        return d / abs(d)

    U1 = np.empty((n1, n2), dtype=complex)
    U2 = np.empty((n1, n2), dtype=complex)
    for i in range(n1):
        for j in range(n2):
            U1[i, j] = link(frames[i, j], frames[(i + 1) % n1, j])
            U2[i, j] = link(frames[i, j], frames[i, (j + 1) % n2])
    F = np.angle(U2 * np.roll(U1, -1, axis=1) * np.conj(np.roll(U2, -1, axis=0)) * np.conj(U1))
    total = F.sum() / (2 * np.pi)
    c = int(np.rint(total))
    if abs(total - c) > 1e-6:
        raise RuntimeError(f"field-strength sum {total} is not an integer")
    if return_details:
        return c, {"sum": total, "min_gap": float(min_gap), "grid": (n1, n2)}
    return c
