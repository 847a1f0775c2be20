"""Extensive observables as interaction maps, the flux twist, and boundary currents.

A local term is a :class:`FermionPoly`, a dictionary from normal-ordered
monomials to complex coefficients.  A monomial is a tuple of ``(site, dagger)``
pairs in written order; the normal form puts creators first with ascending
sites, then annihilators with descending sites, so ``n_x`` is
``((x, True), (x, False))``.

An :class:`ExtensiveObservable` maps support sets ``X`` (frozensets of site
indices) to local terms.  Everything that the module does to an observable
(restriction, twisting, commutators with charges, current splits) is a
term-by-term operation on that map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .fock import ChargeAssignment, SectorBasis, monomial_matrix
from .lattice import Region, TorusLattice

__all__ = [
    "FermionPoly",
    "ExtensiveObservable",
    "ValidationReport",
    "HamiltonianFamily",
    "LatticeTooSmallError",
    "validate_extensive",
    "twist",
    "twist_antitwist",
    "boundary_commutator",
    "current_decomposition",
    "local_dense",
    "dumps",
    "loads",
]

COEFF_TOL = 1e-14


def _key(op):
    site, dag = op
    return (0, site) if dag else (1, -site)


@lru_cache(maxsize=65536)
def _normal_order(word: tuple) -> tuple:
    """Normal form of a ladder word as a tuple of (monomial, integer coefficient)."""
    for i in range(len(word) - 1):
        a, b = word[i], word[i + 1]
        if a == b:
            return ()
        if _key(a) > _key(b):
            swapped = word[:i] + (b, a) + word[i + 2:]
            out: dict = {}
            for m, c in _normal_order(swapped):
                out[m] = out.get(m, 0) - c
            if a[0] == b[0] and not a[1] and b[1]:
                for m, c in _normal_order(word[:i] + word[i + 2:]):
                    out[m] = out.get(m, 0) + c
            return tuple((m, c) for m, c in out.items() if c != 0)
    return ((word, 1),)


class FermionPoly:
    """Polynomial in fermionic ladder operators, kept in normal order."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping | None = None):
        self.terms: dict = {}
        if terms:
            for m, c in terms.items():
                self._add_word(tuple((int(s), bool(d)) for s, d in m), complex(c))

    def _add_word(self, word, c):
        for m, k in _normal_order(word):
            self.terms[m] = self.terms.get(m, 0j) + k * c
            if abs(self.terms[m]) <= COEFF_TOL * max(1.0, abs(c)):
                del self.terms[m]

    @classmethod
    def monomial(cls, ops, coeff=1.0) -> "FermionPoly":
        ops = tuple((int(s), (d == "+") if isinstance(d, str) else bool(d)) for s, d in ops)
        return cls({ops: coeff})

    @classmethod
    def number(cls, x: int) -> "FermionPoly":
        return cls({((x, True), (x, False)): 1.0})

    @classmethod
    def hop(cls, src: int, dst: int, amp: complex) -> "FermionPoly":
        """amp * a+_dst a_src + h.c."""
        return cls({((dst, True), (src, False)): amp, ((src, True), (dst, False)): np.conj(amp)})

    def copy(self) -> "FermionPoly":
        p = FermionPoly()
        p.terms = dict(self.terms)
        return p

    def __add__(self, other: "FermionPoly") -> "FermionPoly":
        out = self.copy()
        for m, c in other.terms.items():
            out._add_word(m, c)
        return out

    def __sub__(self, other: "FermionPoly") -> "FermionPoly":
        return self + other * (-1.0)

    def __mul__(self, other):
        if isinstance(other, FermionPoly):
            out = FermionPoly()
            for m1, c1 in self.terms.items():
                for m2, c2 in other.terms.items():
                    out._add_word(m1 + m2, c1 * c2)
            return out
        out = FermionPoly()
        out.terms = {m: c * complex(other) for m, c in self.terms.items() if c * complex(other) != 0}
        return out

    __rmul__ = __mul__

    def adjoint(self) -> "FermionPoly":
        out = FermionPoly()
        for m, c in self.terms.items():
            out._add_word(tuple((s, not d) for s, d in reversed(m)), np.conj(c))
        return out

    def commutator(self, other: "FermionPoly") -> "FermionPoly":
        return self * other - other * self

    def sites(self) -> frozenset:
        return frozenset(s for m in self.terms for s, _ in m)

    def norm1(self) -> float:
        return float(sum(abs(c) for c in self.terms.values()))

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.terms.values())

    def map_coeffs(self, fn: Callable) -> "FermionPoly":
        """New polynomial with each coefficient replaced by ``fn(monomial, coeff)``."""
        out = FermionPoly()
        for m, c in self.terms.items():
            v = fn(m, c)
            if v != 0:
                out.terms[m] = complex(v)
        return out

    def allclose(self, other: "FermionPoly", atol: float = 1e-12) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0) - other.terms.get(k, 0)) <= atol for k in keys)

    def __eq__(self, other):
        return isinstance(other, FermionPoly) and self.terms == other.terms

    def __repr__(self):
        parts = []
        for m, c in sorted(self.terms.items()):
            word = " ".join(f"a{'+' if d else ''}_{s}" for s, d in m)
            parts.append(f"({c.real:+.6g}{c.imag:+.6g}j) {word}")
        return "FermionPoly(" + " + ".join(parts) + ")"


def charge_change(monomial, mask: np.ndarray) -> int:
    """Creators minus annihilators inside the region given by a boolean site mask."""
    return int(sum((1 if d else -1) for s, d in monomial if mask[s]))


def local_dense(poly: FermionPoly, support: Iterable[int] | None = None) -> np.ndarray:
    """Dense matrix of ``poly`` on the 2^|X| Fock space of its support.

    The local Jordan-Wigner string runs over the support sites in ascending
    global order; for even operators this is the restriction of the global
    operator, so norms, hermiticity and spectra are faithful.
    """
    sites = sorted(set(support) if support is not None else poly.sites())
    k = len(sites)
    pos = {s: i for i, s in enumerate(sites)}
    sm = np.array([[0.0, 1.0], [0.0, 0.0]])
    zz = np.diag([1.0, -1.0])
    eye = np.eye(2)

    def lower(i):
        mats = [zz] * i + [sm] + [eye] * (k - i - 1)
        out = np.ones((1, 1))
        for m in mats:
            out = np.kron(out, m)
        return out

    ann = [lower(i) for i in range(k)]
    dim = 2 ** k
    total = np.zeros((dim, dim), dtype=complex)
    for mono, c in poly.terms.items():
        M = np.eye(dim, dtype=complex)
        for s, d in mono:
            a = ann[pos[s]]
            M = M @ (a.T if d else a)
        total += c * M
    return total


@dataclass
class ExtensiveObservable:
    """Interaction map X -> Psi(X) with declared range and strength."""

    lattice: TorusLattice
    terms: dict = field(default_factory=dict)
    R: int = 1
    m: float = 1.0

    def add(self, support: Iterable[int], poly: FermionPoly) -> None:
        X = frozenset(int(s) for s in support)
        if not poly.sites() <= X:
            raise ValueError(f"term uses sites {sorted(poly.sites() - X)} outside its support {sorted(X)}")
        if X in self.terms:
            poly = self.terms[X] + poly
        if poly.is_zero():
            self.terms.pop(X, None)
        else:
            self.terms[X] = poly

    def items(self):
        return self.terms.items()

    def __len__(self):
        return len(self.terms)

    def copy(self) -> "ExtensiveObservable":
        return ExtensiveObservable(self.lattice, {X: p.copy() for X, p in self.terms.items()}, self.R, self.m)

    def map_terms(self, fn: Callable) -> "ExtensiveObservable":
        """Apply ``fn(X, poly) -> poly`` to every term, dropping zeros."""
        out = ExtensiveObservable(self.lattice, {}, self.R, self.m)
        for X, p in self.terms.items():
            q = fn(X, p)
            if q is not None and not q.is_zero():
                out.terms[X] = q
        return out

    def restrict(self, Z: Region) -> "ExtensiveObservable":
        """S_Z: the terms supported inside Z."""
        return ExtensiveObservable(self.lattice, {X: p for X, p in self.terms.items() if X <= Z.members},
                                   self.R, self.m)

    def select(self, keep: Callable) -> "ExtensiveObservable":
        return ExtensiveObservable(self.lattice, {X: p for X, p in self.terms.items() if keep(X, p)},
                                   self.R, self.m)

    def __add__(self, other: "ExtensiveObservable") -> "ExtensiveObservable":
        out = self.copy()
        for X, p in other.terms.items():
            out.add(X, p)
        out.R = max(self.R, other.R)
        out.m = max(self.m, other.m)
        return out

    def scaled(self, c) -> "ExtensiveObservable":
        return self.map_terms(lambda X, p: p * c)

    def total(self) -> FermionPoly:
        out = FermionPoly()
        for p in self.terms.values():
            out = out + p
        return out

    def equals(self, other: "ExtensiveObservable", atol: float = 1e-12) -> bool:
        """Term-by-term equality of the two interaction maps."""
        keys = set(self.terms) | set(other.terms)
        empty = FermionPoly()
        return all(self.terms.get(X, empty).allclose(other.terms.get(X, empty), atol) for X in keys)

    def differing_supports(self, other: "ExtensiveObservable", atol: float = 1e-12) -> set:
        keys = set(self.terms) | set(other.terms)
        empty = FermionPoly()
        return {X for X in keys if not self.terms.get(X, empty).allclose(other.terms.get(X, empty), atol)}

    def monomial_table(self) -> dict:
        """Summed coefficients per monomial across all terms."""
        table: dict = {}
        for p in self.terms.values():
            for mono, c in p.terms.items():
                table[mono] = table.get(mono, 0j) + c
        return table

    def assemble(self, basis: SectorBasis) -> sp.csr_matrix:
        """Sparse matrix of the total observable on a charge-conserving sector."""
        dim = basis.dim
        rows, cols, vals = [], [], []
        for mono, c in self.monomial_table().items():
            if c == 0:
                continue
            if sum(1 if d else -1 for _, d in mono) != 0:
                raise ValueError("assembly on one sector needs charge-conserving monomials")
            M = monomial_matrix(mono, basis).tocoo()
            rows.append(M.row)
            cols.append(M.col)
            vals.append(c * M.data)
        if not rows:
            return sp.csr_matrix((dim, dim), dtype=complex)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(dim, dim), dtype=complex)

    def one_body_matrix(self) -> np.ndarray:
        """Matrix h with total = sum_ij h_ij a+_i a_j; rejects non-quadratic terms."""
        n = self.lattice.n_sites
        h = np.zeros((n, n), dtype=complex)
        for mono, c in self.monomial_table().items():
            if len(mono) != 2 or not mono[0][1] or mono[1][1]:
                raise ValueError(f"monomial {mono} is not of the form a+_i a_j")
            h[mono[0][0], mono[1][0]] += c
        return h

    def is_quadratic(self) -> bool:
        return all(len(m) == 2 and m[0][1] and not m[1][1] for m in self.monomial_table())


@dataclass
class ValidationReport:
    ok: bool
    range_found: int
    strength_found: float
    range_violations: list
    strength_violations: list
    hermiticity_violations: list
    conservation_violations: list

    def summary(self) -> str:
        if self.ok:
            return f"ok (range {self.range_found}, strength {self.strength_found:.6g})"
        parts = []
        for name in ("range", "strength", "hermiticity", "conservation"):
            v = getattr(self, f"{name}_violations")
            if v:
                parts.append(f"{len(v)} {name}")
        return "violations: " + ", ".join(parts)


def validate_extensive(obs: ExtensiveObservable, tol: float = 1e-10) -> ValidationReport:
    """Check declared range and strength, hermiticity and charge conservation of every term."""
    lat = obs.lattice
    rng, strength = 0, 0.0
    bad_r, bad_m, bad_h, bad_q = [], [], [], []
    for X, p in obs.terms.items():
        d = lat.diam(X)
        rng = max(rng, d)
        if d > obs.R:
            bad_r.append((sorted(X), d))
        M = local_dense(p, X)
        if np.abs(M - M.conj().T).max(initial=0.0) > tol:
            bad_h.append(sorted(X))
        nrm = float(np.linalg.norm(M, 2)) if M.size else 0.0
        strength = max(strength, nrm)
        if nrm > obs.m * (1 + tol):
            bad_m.append((sorted(X), nrm))
        num = np.zeros_like(M)
        for s in X:
            num += local_dense(FermionPoly.number(s), X)
        if np.abs(M @ num - num @ M).max(initial=0.0) > tol:
            bad_q.append(sorted(X))
    ok = not (bad_r or bad_m or bad_h or bad_q)
    return ValidationReport(ok, rng, strength, bad_r, bad_m, bad_h, bad_q)


class LatticeTooSmallError(ValueError):
    """A current term meets both boundary lines, so the split is ambiguous."""


def _linear_weights(charge: ChargeAssignment | None, region: Region) -> np.ndarray:
    """Site weights c_x with Q_region = sum c_x n_x; rejects non-linear charges."""
    n = region.lattice.n_sites
    if charge is None:
        return region.mask().astype(float)
    w = np.zeros(n)
    for X, parts in charge.terms.items():
        if not X <= region.members:
            continue
        for coeff, prod in parts:
            if len(prod) != 1:
                raise NotImplementedError("twists and current splits need charges linear in the number operators")
            w[prod[0]] += coeff
    return w


def _dq(monomial, weights: np.ndarray) -> float:
    return sum((weights[s] if d else -weights[s]) for s, d in monomial)


def _conjugate(poly: FermionPoly, weights: np.ndarray, phi: float) -> FermionPoly:
    """exp(i phi Q) poly exp(-i phi Q) for Q = sum w_x n_x."""
    return poly.map_coeffs(lambda m, c: c * np.exp(1j * phi * _dq(m, weights)))


def _d_conjugate(poly: FermionPoly, weights: np.ndarray, phi: float) -> FermionPoly:
    return poly.map_coeffs(lambda m, c: c * 1j * _dq(m, weights) * np.exp(1j * phi * _dq(m, weights)))


@dataclass
class HamiltonianFamily:
    """Base observable H, charges, and the twist region eta with its cut eta_-.

    ``evaluate(phi)`` conjugates by exp(i phi Q_eta) exactly those terms whose
    support meets both eta_- and its complement; with nearest-neighbour
    hopping these are the bonds crossing the eta_- cut.
    """

    base: ExtensiveObservable
    eta: Region
    eta_minus: Region
    charge: ChargeAssignment | None = None
    eta_plus: Region | None = None
    label: str = ""

    def __post_init__(self):
        self._w = _linear_weights(self.charge, self.eta)

    @property
    def lattice(self) -> TorusLattice:
        return self.base.lattice

    def _crosses_minus(self, X) -> bool:
        return self.eta_minus.meets(X) and not X <= self.eta_minus.members

    def _crosses_eta(self, X) -> bool:
        return bool(X & self.eta.members) and not X <= self.eta.members

    def evaluate(self, phi: float) -> ExtensiveObservable:
        return self.base.map_terms(lambda X, p: _conjugate(p, self._w, phi) if self._crosses_minus(X) else p)

    def derivative(self, phi: float) -> ExtensiveObservable:
        """d/dphi of ``evaluate``; supported on the cut-crossing terms only."""
        out = ExtensiveObservable(self.lattice, {}, self.base.R, self.base.m)
        for X, p in self.base.terms.items():
            if self._crosses_minus(X):
                q = _d_conjugate(p, self._w, phi)
                if not q.is_zero():
                    out.terms[X] = q
        return out

    def evaluate_antitwist(self, phi: float) -> ExtensiveObservable:
        return self.base.map_terms(lambda X, p: _conjugate(p, self._w, phi) if self._crosses_eta(X) else p)

    def derivative_antitwist(self, phi: float) -> ExtensiveObservable:
        out = ExtensiveObservable(self.lattice, {}, self.base.R, self.base.m)
        for X, p in self.base.terms.items():
            if self._crosses_eta(X):
                q = _d_conjugate(p, self._w, phi)
                if not q.is_zero():
                    out.terms[X] = q
        return out

    def fourier_components(self, antitwist: bool = False) -> dict[int, ExtensiveObservable]:
        """Observables H^(k) with H_phi = sum_k exp(i k phi) H^(k)."""
        if np.any(self._w != np.round(self._w)):
            raise ValueError("Fourier split needs integer charge weights")
        cross = self._crosses_eta if antitwist else self._crosses_minus
        comps: dict[int, ExtensiveObservable] = {}
        for X, p in self.base.terms.items():
            for mono, c in p.terms.items():
                k = int(round(_dq(mono, self._w))) if cross(X) else 0
                obs = comps.setdefault(k, ExtensiveObservable(self.lattice, {}, self.base.R, self.base.m))
                obs.add(X, FermionPoly({mono: c}))
        return comps

    def with_cut(self, eta: Region, eta_minus: Region, eta_plus: Region | None = None) -> "HamiltonianFamily":
        """Same base Hamiltonian twisted along a different cut."""
        return HamiltonianFamily(self.base, eta, eta_minus, self.charge, eta_plus, self.label + "/recut")


def twist(H: HamiltonianFamily, phi: float) -> ExtensiveObservable:
    """H_phi: cut-crossing terms conjugated by exp(i phi Q_eta)."""
    return H.evaluate(phi)


def twist_antitwist(H: HamiltonianFamily, phi: float) -> ExtensiveObservable:
    """Full gauge conjugation exp(i phi Q_eta) H exp(-i phi Q_eta), term by term."""
    return H.evaluate_antitwist(phi)


def _charge_polys(charge: ChargeAssignment | None, Z: Region) -> dict:
    if charge is None:
        return {frozenset([s]): FermionPoly.number(s) for s in Z.members}
    out = {}
    for X, parts in charge.terms.items():
        if X <= Z.members:
            p = FermionPoly()
            for coeff, prod in parts:
                q = FermionPoly({(): float(coeff)})
                for s in prod:
                    q = q * FermionPoly.number(s)
                p = p + q
            out[X] = p
    return out


def boundary_commutator(S: ExtensiveObservable, Z: Region, charge: ChargeAssignment | None = None,
                        check: bool = True) -> tuple[ExtensiveObservable, bool]:
    """[S, Q_Z] as local terms keyed by X union Y, plus a support-verification flag.

    The flag is True when every nonzero term meets both Z and the
    1-neighbourhood of the complement of Z.
    """
    if check:
        rep = validate_extensive(S)
        if rep.conservation_violations:
            raise ValueError(f"observable is not charge conserving on {rep.conservation_violations[:3]}")
    qs = _charge_polys(charge, Z)
    lat = S.lattice
    out = ExtensiveObservable(lat, {}, S.R, 2 * S.m)
    for X, p in S.terms.items():
        for Y, q in qs.items():
            if not (X & Y):
                continue
            c = p.commutator(q)
            if not c.is_zero(1e-15):
                out.add(X | Y, c)
    from .lattice import fatten
    near_c = fatten(Z.complement(), 1) if len(Z) < lat.n_sites else Region(lat, frozenset())
    ok = all(Z.meets(X) and near_c.meets(X) for X in out.terms)
    return out, ok


def current_decomposition(H: ExtensiveObservable, nu: Region, nu_minus: Region, nu_plus: Region,
                          charge: ChargeAssignment | None = None):
    """Split i[H, Q_nu] into the terms living at nu_- and at nu_+.

    Each term goes to the unique boundary line its support meets; a term
    meeting neither goes to the nearer line.  Terms meeting both, or tied in
    distance, mean the torus is too small for the split.
    """
    comm, _ = boundary_commutator(H, nu, charge, check=False)
    j_minus = ExtensiveObservable(H.lattice, {}, H.R + 1, 2 * H.m)
    j_plus = ExtensiveObservable(H.lattice, {}, H.R + 1, 2 * H.m)
    for X, c in comm.terms.items():
        term = c * 1j
        a, b = nu_minus.meets(X), nu_plus.meets(X)
        if a and b:
            raise LatticeTooSmallError(f"current term on {sorted(X)} meets both boundary lines")
        if not (a or b):
            da, db = nu_minus.distance_to(X), nu_plus.distance_to(X)
            if da == db:
                raise LatticeTooSmallError(f"current term on {sorted(X)} is equidistant from both lines")
            a = da < db
        (j_minus if a else j_plus).add(X, term)
    return j_minus, j_plus


_FORMAT = "hallpump.interaction-map"


def dumps(obs: ExtensiveObservable) -> str:
    """Serialise an interaction map to JSON text.

    Schema: ``{"format", "version", "L", "range", "strength", "terms": [
    {"support": [sites], "monomials": [{"ops": [[site, "+"|"-"], ...],
    "re": float, "im": float}]}]}``.  Floats are written with ``repr`` so a
    load/dump cycle is bit-exact.
    """
    records = []
    for X in sorted(obs.terms, key=lambda s: sorted(s)):
        p = obs.terms[X]
        monos = [{"ops": [[s, "+" if d else "-"] for s, d in m], "re": c.real, "im": c.imag}
                 for m, c in sorted(p.terms.items())]
        records.append({"support": sorted(X), "monomials": monos})
    doc = {"format": _FORMAT, "version": 1, "L": obs.lattice.L, "range": obs.R,
           "strength": obs.m, "terms": records}
    return json.dumps(doc, indent=1)


def loads(text: str) -> ExtensiveObservable:
    doc = json.loads(text)
    if doc.get("format") != _FORMAT:
        raise ValueError("not an interaction-map document")
    lat = TorusLattice(int(doc["L"]))
    obs = ExtensiveObservable(lat, {}, int(doc["range"]), doc["strength"])
    for rec in doc["terms"]:
        p = FermionPoly()
        for mono in rec["monomials"]:
            key = tuple((int(s), t == "+") for s, t in mono["ops"])
            p.terms[key] = complex(mono["re"], mono["im"])
        obs.terms[frozenset(rec["support"])] = p
    return obs
