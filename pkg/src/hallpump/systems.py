"""Operator backends: a many-body sector and an exact quasi-free reduction.

Both expose the same surface to the dynamical modules.  Operators live on a
"level space": the (possibly symmetry-reduced) sector for
:class:`SectorSystem`, the one-particle space for :class:`QuasiFreeSystem`.
A frame is a matrix of level-space columns:

* sector: p orthonormal many-body vectors; expectations are averaged over
  columns (p^-1 sum_k <psi_k|A|psi_k>);
* quasi-free: N orthonormal orbitals of one Slater determinant; one-body
  operators A act as second quantised dGamma(A), so expectations are
  traces over the orbitals.

Every family is a finite Fourier series in phi, H_phi = sum_k e^{ik phi} H^(k),
so operators at any phi are cheap linear combinations of pre-assembled parts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, expm

from .fock import SectorBasis, build_sector_basis, charge_diagonal, DEFAULT_DIM_CAP
from .krylov import expm_krylov
from .lattice import named_regions
from .observables import ExtensiveObservable, HamiltonianFamily, current_decomposition
from .symmetry import translation_blocks, NoSymmetryError

__all__ = ["Spectrum", "SectorSystem", "QuasiFreeSystem", "make_system"]


@dataclass
class Spectrum:
    """Full eigendecomposition of the level-space Hamiltonian at one phi."""

    phi: float
    E: np.ndarray
    V: np.ndarray
    n_ground: int     # columns of V spanning the ground frame (p, or N orbitals)

    @property
    def gap(self) -> float:
        if self.n_ground >= len(self.E):
            return np.inf
        return float(self.E[self.n_ground] - self.E[self.n_ground - 1])

    def ground(self) -> np.ndarray:
        return self.V[:, : self.n_ground]

    def rotate(self, A) -> np.ndarray:
        """V^dagger A V for a level-space operator."""
        AV = A @ self.V
        return self.V.conj().T @ np.asarray(AV)


def _fourier_sum(parts: dict, phi: float, deriv: bool = False):
    out = None
    for k, M in parts.items():
        c = np.exp(1j * k * phi) * (1j * k if deriv else 1.0)
        if c == 0:
            continue
        out = c * M if out is None else out + c * M
    if out is None:
        M = next(iter(parts.values()))
        out = 0 * M
    return out


class _Base:
    """Shared Fourier bookkeeping; subclasses supply ``_lift``."""

    kind = "base"

    def _setup(self, family: HamiltonianFamily, antitwist: bool):
        self.family = family
        self.antitwist = antitwist
        self.regions = named_regions(family.lattice)
        self.comps = family.fourier_components(antitwist)
        nu, nm, npl = self.regions["nu"], self.regions["nu_-"], self.regions["nu_+"]
        self._Hk, self._jm, self._jp = {}, {}, {}
        self._jobs = {"-": {}, "+": {}}
        for k, obs in self.comps.items():
            self._Hk[k] = self._lift(obs)
            jm, jp = current_decomposition(obs, nu, nm, npl, family.charge)
            self._jobs["-"][k], self._jobs["+"][k] = jm, jp
            self._jm[k] = self._lift(jm)
            self._jp[k] = self._lift(jp)
        self._spec_cache: dict = {}
        self._term_cache: dict = {}

    # operators -----------------------------------------------------------
    def hamiltonian(self, phi: float):
        return _fourier_sum(self._Hk, phi)

    def dhamiltonian(self, phi: float):
        return _fourier_sum(self._Hk, phi, deriv=True)

    def current(self, phi: float, side: str = "-"):
        """j_{nu_-} (side '-') or j_{nu_+} (side '+') at phi."""
        return _fourier_sum(self._jm if side == "-" else self._jp, phi)

    def _term_parts(self, which: str) -> dict:
        """Per-support lifted Fourier parts: {X: {k: operator}}."""
        if which in self._term_cache:
            return self._term_cache[which]
        if which == "dH":
            src = {k: obs for k, obs in self.comps.items() if k != 0}
        else:
            src = self._jobs[which]
        out: dict = {}
        for k, obs in src.items():
            for X, poly in obs.items():
                single = ExtensiveObservable(obs.lattice, {X: poly}, obs.R, obs.m)
                out.setdefault(X, {})[k] = self._lift(single)
        self._term_cache[which] = out
        return out

    def dhamiltonian_terms(self, phi: float):
        """[(X, dh_X)]: the derivative resolved into its source terms."""
        return [(X, _fourier_sum(parts, phi, deriv=True)) for X, parts in self._term_parts("dH").items()]

    def current_terms(self, phi: float, side: str = "-"):
        """[(X, j_X)]: the boundary current resolved into its local terms."""
        return [(X, _fourier_sum(parts, phi)) for X, parts in self._term_parts(side).items()]

    def hamiltonian_combo(self, weights):
        """sum_j c_j H_{phi_j} for ``weights`` = [(c_j, phi_j), ...]."""
        parts = {k: sum(c * np.exp(1j * k * ph) for c, ph in weights) for k in self._Hk}
        out = None
        for k, M in self._Hk.items():
            out = parts[k] * M if out is None else out + parts[k] * M
        return out

    def spectrum(self, phi: float) -> Spectrum:
        key = float(phi)
        if key in self._spec_cache:
            return self._spec_cache[key]
        H = self.hamiltonian(phi)
        H = H.toarray() if sp.issparse(H) else np.asarray(H)
        E, V = eigh(H, driver="evr")
        sp_ = Spectrum(key, E, V, self.n_ground)
        if len(self._spec_cache) >= self.cache_size:
            self._spec_cache.pop(next(iter(self._spec_cache)))
        self._spec_cache[key] = sp_
        return sp_

    def clear_cache(self):
        self._spec_cache.clear()


class SectorSystem(_Base):
    """Many-body family on one fixed-N sector.

    ``reduce=True`` restricts everything to the magnetic-translation block
    holding the ground state at phi = 0 (exact: the block is invariant under
    H_phi, its derivative and hence under every generator built from them).
    Operators that break the symmetry (currents, Q_nu) are compressed onto
    the block; frames never leave it, so their expectations are unchanged.
    """

    kind = "sector"

    def __init__(self, family: HamiltonianFamily, N: int, p: int = 1, antitwist: bool = False,
                 reduce: bool = False, cap: int = DEFAULT_DIM_CAP, basis: SectorBasis | None = None,
                 block=None, cache_size: int = 3):
        self.basis = basis if basis is not None else build_sector_basis(family.lattice, N, cap)
        self.N = N
        self.p = p
        self.n_ground = p
        self.cache_size = cache_size
        self.B = None
        self.block_key = None
        if reduce or block is not None:
            comps = list(family.fourier_components(False).values()) + \
                list(family.fourier_components(True).values())
            tb = translation_blocks(self.basis, comps)
            self._blocks = tb
            if block is None:
                block = self._ground_block(family, tb)
            self.block_key = block
            self.B = tb.isometry(block)
        self._setup(family, antitwist)
        regs = self.regions
        self.q_nu = self._lift_diag(charge_diagonal(regs["nu"], self.basis, family.charge))
        self.q_eta = self._lift_diag(charge_diagonal(family.eta, self.basis, family.charge))

    @property
    def dim(self) -> int:
        return self.basis.dim if self.B is None else self.B.shape[1]

    @property
    def full_dim(self) -> int:
        return self.basis.dim

    def _ground_block(self, family, tb):
        H = family.evaluate(0.0).assemble(self.basis)
        best, best_key = np.inf, None
        for key in tb.keys():
            Bk = tb.isometry(key)
            Hk = (Bk.conj().T @ H @ Bk).toarray()
            e0 = np.linalg.eigvalsh(Hk)[0]
            if e0 < best - 1e-12:
                best, best_key = e0, key
        return best_key

    def _lift(self, obs):
        M = obs.assemble(self.basis)
        if self.B is not None:
            M = (self.B.conj().T @ M @ self.B).tocsr()
        return M

    def _lift_diag(self, d):
        M = sp.diags(d.astype(float), format="csr")
        if self.B is not None:
            M = (self.B.conj().T @ M @ self.B).tocsr()
        return M

    def lift_observable(self, obs):
        return self._lift(obs)

    def to_full(self, frame: np.ndarray) -> np.ndarray:
        """Frame columns in the full sector basis."""
        return frame if self.B is None else np.asarray(self.B @ frame)

    # frame algebra -------------------------------------------------------
    def expect(self, frame, A) -> complex:
        AF = A @ frame
        return complex(np.mean(np.einsum("ij,ij->j", frame.conj(), np.asarray(AF))))

    def expect_level(self, coeffs, Ap) -> complex:
        """Expectation when frame columns are given in an eigenbasis and Ap is rotated."""
        return complex(np.mean(np.einsum("ij,ij->j", coeffs.conj(), Ap @ coeffs)))

    def gram_defect(self, frame) -> float:
        G = frame.conj().T @ frame
        return float(np.abs(G - np.eye(G.shape[0])).max())

    def projector_distance(self, frame, target) -> float:
        """Operator norm of F F^+ - G G^+ for equal-rank orthonormal frames."""
        s = np.linalg.svd(target.conj().T @ frame, compute_uv=False)
        return float(np.sqrt(max(0.0, 1.0 - s.min() ** 2)))

    def fidelity(self, frame, target) -> float:
        """Mean squared overlap of the frame with ran of the target frame."""
        M = target.conj().T @ frame
        return float(np.sum(np.abs(M) ** 2) / frame.shape[1])

    def frame_difference(self, frame, other) -> float:
        """||(U1 - U2) P|| for frames U1 F and U2 F of the same orthonormal F."""
        return float(np.linalg.norm(frame - other, 2))

    def exp_apply(self, G, frame, tau: float, tol: float = 1e-12):
        """exp(-i tau G) frame."""
        return expm_krylov(G, frame, tau, tol)

    def many_body_dim(self) -> int:
        return self.basis.dim


class QuasiFreeSystem(_Base):
    """Exact reduction of a quadratic family to one-particle matrices.

    The many-body ground state at filling N is the Slater determinant of the
    lowest N orbitals; propagators act orbital-wise, overlaps are
    determinants, and one-body expectations are orbital traces.
    """

    kind = "quasifree"

    def __init__(self, family: HamiltonianFamily, N: int, antitwist: bool = False, cache_size: int = 64):
        if not family.base.is_quadratic():
            raise ValueError("quasi-free backend needs a quadratic Hamiltonian (V = 0)")
        if family.charge is not None and not family.charge.is_default():
            raise ValueError("quasi-free backend uses the site-number charge assignment")
        self.N = N
        self.p = 1
        self.n_ground = N
        self.cache_size = cache_size
        self._setup(family, antitwist)
        regs = self.regions
        self.q_nu = np.diag(regs["nu"].mask().astype(float))
        self.q_eta = np.diag(family.eta.mask().astype(float))

    @property
    def dim(self) -> int:
        return self.family.lattice.n_sites

    full_dim = dim

    def _lift(self, obs):
        if not obs.terms:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return obs.one_body_matrix()

    def lift_observable(self, obs):
        return self._lift(obs)

    def to_full(self, frame):
        return frame

    def expect(self, frame, A) -> complex:
        return complex(np.trace(frame.conj().T @ (A @ frame)))

    def expect_level(self, coeffs, Ap) -> complex:
        return complex(np.trace(coeffs.conj().T @ (Ap @ coeffs)))

    def gram_defect(self, frame) -> float:
        G = frame.conj().T @ frame
        return float(np.abs(G - np.eye(G.shape[0])).max())

    def overlap(self, frame, target) -> complex:
        """Many-body overlap <Psi_target|Psi_frame> of two Slater determinants."""
        return complex(np.linalg.det(target.conj().T @ frame))

    def projector_distance(self, frame, target) -> float:
        ov = abs(self.overlap(frame, target))
        return float(np.sqrt(max(0.0, 1.0 - ov ** 2)))

    def fidelity(self, frame, target) -> float:
        return float(abs(self.overlap(frame, target)) ** 2)

    def frame_difference(self, frame, other) -> float:
        """Many-body ||Psi_1 - Psi_2|| of the two Slater determinants."""
        return float(np.sqrt(max(0.0, 2.0 - 2.0 * self.overlap(frame, other).real)))

    def exp_apply(self, G, frame, tau: float, tol: float = 1e-12):
        return expm(-1j * tau * np.asarray(G)) @ frame

    def many_body_dim(self) -> int:
        return comb(self.dim, self.N)


def make_system(family: HamiltonianFamily, N: int, backend: str = "auto", p: int = 1,
                antitwist: bool = False, reduce: bool | str = "auto", cap: int = DEFAULT_DIM_CAP):
    """Pick the backend: quasi-free for quadratic families, else the sector.

    ``reduce='auto'`` uses translation blocks when the family admits them.
    """
    if backend == "auto":
        backend = "quasifree" if family.base.is_quadratic() and p == 1 else "sector"
    if backend == "quasifree":
        return QuasiFreeSystem(family, N, antitwist)
    if backend != "sector":
        raise ValueError(f"unknown backend {backend!r}")
    if reduce == "auto":
        try:
            return SectorSystem(family, N, p, antitwist, reduce=True, cap=cap)
        except NoSymmetryError:
            return SectorSystem(family, N, p, antitwist, reduce=False, cap=cap)
    return SectorSystem(family, N, p, antitwist, reduce=bool(reduce), cap=cap)
