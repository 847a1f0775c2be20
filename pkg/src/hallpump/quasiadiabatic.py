"""The parallel-transport generator K and the single-shot unitary.

Conventions.  K is assembled in the instantaneous eigenbasis as

    <m|K|n> = w(E_m - E_n) <m|dH|n>,   w(omega) = -i/omega for |omega| >= gamma,

and generates Hamiltonian-type flow d psi/ds = -i K psi.  With this
orientation the flow carries P_phi along (dP = -i[K, P] dphi reproduces
first-order perturbation theory) and U* Q U - Q = i int U* [K, Q] U.

Inside the gap w is -i chi(|omega|)/omega with chi a smooth step from 0 to 1
on [lo*gamma, gamma]; the default step is the C-infinity exp-ratio step, so w
is smooth and odd-imaginary.  Only the in-gap values are free: they change
the locality of K, never the transport of ran P.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.sparse.linalg import eigsh, LinearOperator

from .lattice import Region, fatten
from .systems import Spectrum

__all__ = [
    "GapViolationError",
    "WeightFilter",
    "KOperator",
    "build_K",
    "build_K_quadrature",
    "locality_profile",
    "SingleShot",
    "single_shot_unitary",
]


class GapViolationError(ValueError):
    """The filter gap exceeds the spectral gap, so K would not transport P."""


def smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class WeightFilter:
    """Spectral filter w with w(omega) * (i omega) = 1 outside (-gamma, gamma).

    shape 'smooth': w = -i chi(|omega|)/omega with chi the C-infinity step
    between lo*gamma and gamma.  shape 'cubic': w = -(i/gamma)(2x - x^3) with
    x = omega/gamma inside the gap, matching value and slope at |x| = 1.
    """

    gamma: float
    shape: str = "smooth"
    lo: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("filter gap must be positive")
        if self.shape not in ("smooth", "cubic"):
            raise ValueError(f"unknown filter shape {self.shape!r}")
        if not 0 <= self.lo < 1:
            raise ValueError("lo must lie in [0, 1)")

    def __call__(self, omega):
        om = np.asarray(omega, dtype=float)
        out = np.zeros(om.shape, dtype=complex)
        a = np.abs(om)
        big = a >= self.gamma
        out[big] = -1j / om[big]
        inner = ~big & (a > 0)
        if self.shape == "smooth":
            x = (a[inner] / self.gamma - self.lo) / (1 - self.lo)
            out[inner] = -1j * smoothstep(x) / om[inner]
        else:
            x = om[inner] / self.gamma
            out[inner] = -1j / self.gamma * (2 * x - x ** 3)
        return out

    def real_part_profile(self, omega):
        """f(omega) with w = -i f; real and odd."""
        return (1j * self(omega)).real

    def time_profile(self, u, n_nodes: int = 800):
        """W(u) with int W(u) e^{i u omega} du = w(omega).

        W(u) = -(1/pi) int_0^inf f(omega) sin(u omega) d omega, evaluated as
        the closed-form tail (pi/2) sign(u) minus a finite in-gap integral
        done by Gauss-Legendre (the integrand is smooth on [0, gamma]).
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        x, wts = np.polynomial.legendre.leggauss(n_nodes)
        om = 0.5 * self.gamma * (x + 1)
        wts = 0.5 * self.gamma * wts
        g = (1.0 / om - self.real_part_profile(om)) * wts
        inner = np.sin(np.outer(u, om)) @ g
        out = -(np.pi / 2 * np.sign(u) - inner) / np.pi
        return out if out.size > 1 else float(out[0])


def _check_gap(spec: Spectrum, filt: WeightFilter, tol: float = 0.0):
    if spec.gap < filt.gamma * (1 - tol):
        raise GapViolationError(f"spectral gap {spec.gap:.6g} below filter gap {filt.gamma:.6g} at phi={spec.phi}")


@dataclass
class KOperator:
    """K in the eigenbasis of one spectrum: K = V Kp V^dagger."""

    spec: Spectrum
    Kp: np.ndarray
    filt: WeightFilter

    def matvec(self, x):
        V = self.spec.V
        return V @ (self.Kp @ (V.conj().T @ x))

    __call__ = matvec

    def dense(self) -> np.ndarray:
        V = self.spec.V
        return V @ self.Kp @ V.conj().T

    def hermiticity_defect(self) -> float:
        n = np.abs(self.Kp).max(initial=0.0)
        return float(np.abs(self.Kp - self.Kp.conj().T).max(initial=0.0) / max(n, 1e-300))


def build_K(spec: Spectrum, dH, filt: WeightFilter, check_gap: bool = True) -> KOperator:
    """Spectral-filter form of K for the level-space derivative ``dH``."""
    if check_gap:
        _check_gap(spec, filt)
    dHp = spec.rotate(dH)
    W = filt(spec.E[:, None] - spec.E[None, :])
    Kp = W * dHp
    Kp = 0.5 * (Kp + Kp.conj().T)
    return KOperator(spec, Kp, filt)


def build_K_quadrature(H: np.ndarray, dH: np.ndarray, filt: WeightFilter, u_max: float = 120.0,
                       n_u: int = 24001) -> np.ndarray:
    """Time-integral form K = int W(u) e^{iuH} dH e^{-iuH} du (cross-check only).

    Dense and O(n_u) exponentials; meant for small matrices.
    """
    E, V = np.linalg.eigh(H)
    dHp = V.conj().T @ dH @ V
    u = np.linspace(-u_max, u_max, n_u)
    du = u[1] - u[0]
    Wu = filt.time_profile(u)
    wts = np.full(n_u, du)
    wts[0] = wts[-1] = du / 2
    om = E[:, None] - E[None, :]
    # e^{iuH} dH e^{-iuH} in the eigenbasis is dH_mn e^{iu(E_m - E_n)}
    F = np.tensordot(Wu * wts, np.exp(1j * u[:, None, None] * om[None]), axes=(0, 0))
    return V @ (F * dHp) @ V.conj().T


def _op_norm_hermitian(A) -> float:
    if sp.issparse(A) or isinstance(A, LinearOperator):
        n = A.shape[0]
        if n <= 64:
            return float(np.abs(np.linalg.eigvalsh(A.toarray() if sp.issparse(A) else A @ np.eye(n))).max())
        v0 = np.ones(n) / np.sqrt(n)
        return float(abs(eigsh(A, k=1, which="LM", v0=v0, return_eigenvectors=False)[0]))
    return float(np.abs(np.linalg.eigvalsh(A)).max())


def _second_quantised_norm(a: np.ndarray, N: int) -> float:
    """Norm of dGamma(a) on the N-particle sector for Hermitian one-body a."""
    ev = np.linalg.eigvalsh(a)
    return float(max(abs(ev[-N:].sum()), abs(ev[:N].sum())))


def locality_profile(system, K, reference: Region, radii=None):
    """Commutator-probe tail of K outside fattenings of ``reference``.

    For each r the value is max over sites x outside reference_(r) of
    ||[K, (-1)^{n_x}]|| / (2 ||K||), the probe being the single-site parity
    unitary.  Radii whose fattening covers the torus are omitted.  ``K`` is
    a level-space operator: one-body for the quasi-free backend, the
    unreduced sector for the many-body backend.
    """
    lat = system.family.lattice
    if radii is None:
        radii = range(0, lat.L + 1)
    if system.kind == "quasifree":
        k = K.dense() if isinstance(K, KOperator) else np.asarray(K)
        N = system.N
        knorm = _second_quantised_norm(k, N)
        per_site = {}
        for x in range(lat.n_sites):
            u = np.ones(lat.n_sites)
            u[x] = -1
            a = u[:, None] * k * u[None, :] - k
            # [dGamma(k), V] = V dGamma(u k u - k) with V unitary
            per_site[x] = _second_quantised_norm(a, N) / 2
    else:
        if system.B is not None:
            raise ValueError("locality probes need the unreduced sector (site parities break the symmetry)")
        Kd = K.dense() if isinstance(K, KOperator) else (K.toarray() if sp.issparse(K) else np.asarray(K))
        knorm = _op_norm_hermitian(Kd)
        occ = system.basis.occupations
        per_site = {}
        for x in range(lat.n_sites):
            par = 1.0 - 2.0 * occ[:, x]
            C = 1j * (Kd * par[None, :] - par[:, None] * Kd)
            per_site[x] = _op_norm_hermitian(C) / 2
    rows = []
    for r in radii:
        inside = fatten(reference, r).members
        outside = [per_site[x] for x in range(lat.n_sites) if x not in inside]
        if not outside:  # the fattening already covers the torus
            break
        rows.append((int(r), float(max(outside) / max(knorm, 1e-300))))
    return rows


@dataclass
class SingleShot:
    """Generator of the single-shot unitary U = exp(-2 pi i (Kt_minus + Q_eta)).

    Written with the opposite sign convention for K this is the familiar
    exp(2 pi i (Kt_- - Q_eta)).
    """

    kt_minus: KOperator
    q_eta: object
    dH_minus: object
    dH_plus: object

    def generator_matvec(self, x):
        return self.kt_minus.matvec(x) + self.q_eta @ x

    def generator_dense(self) -> np.ndarray:
        q = self.q_eta.toarray() if sp.issparse(self.q_eta) else np.asarray(self.q_eta)
        return self.kt_minus.dense() + q

    def apply(self, system, frame, tol: float = 1e-12):
        if system.kind == "quasifree":
            return expm(-2j * np.pi * self.generator_dense()) @ frame
        return system.exp_apply(self.generator_matvec, frame, 2 * np.pi, tol)


def single_shot_unitary(system, tilde_system, filt: WeightFilter) -> SingleShot:
    """Kt_- from the eta_- half of dH~/dphi at phi = 0.

    ``system`` carries the twist family, ``tilde_system`` the same family
    with twist and antitwist.  At phi = 0 both Hamiltonians coincide, and the
    eta_--assigned half of i[Q_eta, H~] is exactly the twist derivative.
    """
    spec = system.spectrum(0.0)
    dH_minus = system.dhamiltonian(0.0)
    dH_total = tilde_system.dhamiltonian(0.0)
    dH_plus = dH_total - dH_minus
    K = build_K(spec, dH_minus, filt)
    return SingleShot(K, system.q_eta, dH_minus, dH_plus)
