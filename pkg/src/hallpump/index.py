"""Many-body index of generator-represented, charge-conserving unitaries.

A unitary enters only together with a generator path, d psi/du = -i G_u psi
on [0, 1], so that

    U* Q U - Q = i int_0^1 U(u)* [G_u, Q] U(u) du

and the nu_- part of the integrand is defined by the boundary split of
i[G_u, Q].  The index Ind_P(U) = Tr P (U* Q U - Q)_- is then p times the
frame average of the integrated split current, evaluated along the path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .evolution import DrivingProfile, propagate_parallel
from .quasiadiabatic import WeightFilter
from .transport import charge_split_integrand

__all__ = [
    "IndexPreconditionError",
    "Segment",
    "GeneratedUnitary",
    "IndexResult",
    "index_of",
    "additivity_check",
    "homotopy_scan",
]


class IndexPreconditionError(ValueError):
    """U does not commute with P to the required tolerance."""

    def __init__(self, defect: float, tol: float):
        super().__init__(f"frame-projector conjugation defect {defect:.3e} exceeds {tol:.1e}")
        self.defect = defect


@dataclass(frozen=True)
class Segment:
    """One piece of a generator path.

    kind 'parallel': G_u = 2 pi K_{2 pi u} (or the reversed path);
    kind 'constant': G_u = G fixed, with ``split`` giving <(i[G, Q])_-> on a
    frame, or None when G commutes with every charge.
    """

    kind: str
    filt: WeightFilter | None = None
    n_steps: int = 64
    reverse: bool = False
    generator: object = None
    split: object = None
    n_quad: int = 16
    label: str = ""

    def inverse(self) -> "Segment":
        if self.kind == "parallel":
            return Segment("parallel", self.filt, self.n_steps, not self.reverse, label=self.label + "^-1")
        gen = None if self.generator is None else _neg(self.generator)
        spl = None if self.split is None else (lambda sy, F, _s=self.split: -_s(sy, F))
        return Segment("constant", generator=gen, split=spl, n_quad=self.n_quad, label=self.label + "^-1")


def _neg(G):
    if callable(G) and not hasattr(G, "shape"):
        return lambda x: -G(x)
    return -G


@dataclass(frozen=True)
class GeneratedUnitary:
    """A path-ordered exponential; segments run first to last."""

    segments: tuple = ()
    label: str = "U"

    @classmethod
    def identity(cls) -> "GeneratedUnitary":
        return cls((), "1")

    @classmethod
    def parallel(cls, filt: WeightFilter, n_steps: int = 64, reverse: bool = False) -> "GeneratedUnitary":
        seg = Segment("parallel", filt, n_steps, reverse, label="U_par")
        return cls((seg,), "U_par^-1" if reverse else "U_par")

    @classmethod
    def charge_phase(cls, system, theta: float, region=None) -> "GeneratedUnitary":
        """exp(i theta Q_Z), generator -theta Q_Z (Z = whole torus by default)."""
        lat = system.family.lattice
        if region is None:
            mask = np.ones(lat.n_sites)
        else:
            mask = region.mask().astype(float)
        if system.kind == "quasifree":
            G = -theta * np.diag(mask)
        else:
            occ = system.basis.occupations.astype(float) @ mask
            G = sp.diags(-theta * occ, format="csr")
            if system.B is not None:
                G = (system.B.conj().T @ G @ system.B).tocsr()
        # [Q_Z, Q_nu] = 0 for diagonal charges: no boundary current
        return cls((Segment("constant", generator=G, split=None, label=f"exp(i{theta:g}Q)"),), f"exp(i{theta:g}Q)")

    @classmethod
    def constant(cls, generator, split=None, label: str = "exp(-iG)", n_quad: int = 16) -> "GeneratedUnitary":
        return cls((Segment("constant", generator=generator, split=split, n_quad=n_quad, label=label),), label)

    def __matmul__(self, other: "GeneratedUnitary") -> "GeneratedUnitary":
        """self o other: ``other`` acts first."""
        return GeneratedUnitary(other.segments + self.segments, f"{self.label}.{other.label}")

    def inverse(self) -> "GeneratedUnitary":
        return GeneratedUnitary(tuple(s.inverse() for s in reversed(self.segments)), f"({self.label})^-1")


@dataclass
class IndexResult:
    value: float
    defect: float
    p: int
    contributions: list = field(default_factory=list)
    quality: str = "ok"

    @property
    def nearest_integer(self) -> int:
        return int(np.rint(self.value))

    @property
    def residual(self) -> float:
        return abs(self.value - self.nearest_integer)


def _run_segment(system, seg: Segment, frame):
    """Propagate ``frame`` through one segment; return (frame, integral)."""
    if seg.kind == "parallel":
        run = propagate_parallel(system, DrivingProfile("ramp"), seg.filt, frame, n_steps=seg.n_steps,
                                 reverse=seg.reverse)
        vals = np.array([charge_split_integrand(system, float(ph), F, seg.filt)[0]
                         for ph, F in zip(run.phi, run.frames)])
        h = 2 * np.pi / seg.n_steps
        integral = h * (0.5 * vals[0] + vals[1:-1].sum() + 0.5 * vals[-1])
        # along the reversed path the generator is -2 pi K_{2 pi (1-u)}
        return run.final, (-integral if seg.reverse else integral)
    if seg.kind == "constant":
        if seg.generator is None:
            return frame, 0.0
        if seg.split is None:
            return system.exp_apply(seg.generator, frame, 1.0), 0.0
        # Gauss-Legendre in u on [0, 1], frames from exact exponentials
        x, w = np.polynomial.legendre.leggauss(seg.n_quad)
        u = 0.5 * (x + 1)
        total = 0.0
        for uj, wj in zip(u, w):
            total += 0.5 * wj * seg.split(system, system.exp_apply(seg.generator, frame, float(uj)))
        return system.exp_apply(seg.generator, frame, 1.0), total
    raise ValueError(f"unknown segment kind {seg.kind!r}")


def index_of(U: GeneratedUnitary, system, frame=None, tol_commute: float = 1e-6) -> IndexResult:
    """Ind_P(U) = Tr P (U* Q U - Q)_- along the generator path of ``U``.

    ``frame`` spans ran P (default: the ground frame at phi = 0).  Refuses
    when the final frame leaves ran P by more than ``tol_commute``.
    """
    if frame is None:
        frame = system.spectrum(0.0).ground()
    F = frame.astype(complex)
    contribs = []
    total = 0.0
    for seg in U.segments:
        F, val = _run_segment(system, seg, F)
        contribs.append((seg.label, val))
        total += val
    defect = system.projector_distance(F, frame)
    if defect > tol_commute:
        raise IndexPreconditionError(defect, tol_commute)
    p = system.p
    return IndexResult(float(p * total), float(defect), p, [(l, p * v) for l, v in contribs])


def additivity_check(U1: GeneratedUnitary, U2: GeneratedUnitary, system, frame=None,
                     tol_commute: float = 1e-6) -> dict:
    """|Ind(U1 o U2) - Ind(U1) - Ind(U2)| with the three indices."""
    i1 = index_of(U1, system, frame, tol_commute)
    i2 = index_of(U2, system, frame, tol_commute)
    i12 = index_of(U1 @ U2, system, frame, tol_commute)
    return {"ind_1": i1.value, "ind_2": i2.value, "ind_12": i12.value,
            "residual": abs(i12.value - i1.value - i2.value)}


def homotopy_scan(system, filters, n_steps: int = 64, frame=None) -> list:
    """Ind(U_par) for a family of filters: a smooth deformation of the path."""
    return [(f, index_of(GeneratedUnitary.parallel(f, n_steps), system, frame).value) for f in filters]
