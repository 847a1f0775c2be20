"""Driven Schroedinger flow and parallel-transport flow on frames.

A frame is a (dim, p) array of orthonormal level-space columns (orbitals for
the quasi-free backend).  Both flows use a commutator-free fourth-order
Magnus stepper by default,

    psi <- exp(-i h (a1 G1 + a2 G2)) exp(-i h (a2 G1 + a1 G2)) psi,

with G1, G2 the generator at the Gauss nodes of the step; the exponential
midpoint rule is available as ``stepper='midpoint'``.  Each factor is an
exact unitary (Krylov action or dense expm), so unitarity is limited only by
the exponential tolerance.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .quasiadiabatic import WeightFilter, build_K, GapViolationError

__all__ = [
    "IntegratorError",
    "DrivingProfile",
    "PropagationRun",
    "propagate_schrodinger",
    "propagate_parallel",
    "dump_frame",
    "load_frame",
]

_A1 = (3 - 2 * np.sqrt(3)) / 12
_A2 = (3 + 2 * np.sqrt(3)) / 12
_C1 = 0.5 - np.sqrt(3) / 6
_C2 = 0.5 + np.sqrt(3) / 6


class IntegratorError(RuntimeError):
    """Step-size underflow or a broken frame."""


def _bump(u):
    u = np.asarray(u, dtype=float)
    inside = (u > 0) & (u < 1)
    out = np.zeros_like(u)
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (ui * (1 - ui)))
    return out


class DrivingProfile:
    """phi: [0, 1] -> [0, 2 pi].

    kinds: 'compliant' (phi = 2 pi B(s), B the normalised integral of the bump
    exp(-1/(u(1-u))); all derivatives vanish at both ends), 'ramp'
    (phi = 2 pi s) and 'static' (phi = 0, a constant family for checks).
    """

    _PANELS = 256
    _ORDER = 24

    def __init__(self, kind: str = "compliant"):
        if kind not in ("compliant", "ramp", "static"):
            raise ValueError(f"unknown profile {kind!r}")
        self.kind = kind
        if kind == "compliant":
            x, w = np.polynomial.legendre.leggauss(self._ORDER)
            self._gl = (x, w)
            edges = np.linspace(0, 1, self._PANELS + 1)
            h = 1.0 / self._PANELS
            mids = 0.5 * (edges[:-1] + edges[1:])
            vals = _bump(mids[:, None] + 0.5 * h * x[None, :]) @ w * 0.5 * h
            self._cum = np.concatenate([[0.0], np.cumsum(vals)])
            self._Z = self._cum[-1]

    def __repr__(self):
        return f"DrivingProfile({self.kind!r})"

    def _B(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        k = np.minimum((s * self._PANELS).astype(int), self._PANELS - 1)
        a = k / self._PANELS
        x, w = self._gl
        half = 0.5 * (s - a)
        part = (_bump(a[..., None] + half[..., None] * (x + 1)) @ w) * half
        return (self._cum[k] + part) / self._Z

    def phi(self, s):
        if self.kind == "ramp":
            return 2 * np.pi * np.clip(np.asarray(s, dtype=float), 0, 1)
        if self.kind == "static":
            return np.zeros_like(np.asarray(s, dtype=float))
        return 2 * np.pi * self._B(s)

    def dphi(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "ramp":
            return np.full_like(s, 2 * np.pi)
        if self.kind == "static":
            return np.zeros_like(s)
        return 2 * np.pi * _bump(s) / self._Z

    def inverse(self, phi: float) -> float:
        """s with phi(s) = phi (the smallest such s for flat stretches)."""
        if self.kind == "static":
            raise ValueError("the static profile is not invertible")
        if phi <= 0:
            return 0.0
        if phi >= 2 * np.pi:
            return 1.0
        if self.kind == "ramp":
            return phi / (2 * np.pi)
        return float(brentq(lambda s: float(self.phi(s)) - phi, 0.0, 1.0, xtol=1e-15, rtol=1e-15))

    def endpoint_derivatives(self, order: int = 4, h: float = 0.01):
        """Finite-difference derivatives of phi of orders 1..order at s = 0 and s = 1.

        One-sided stencils on the constant extension phi(s<0) = 0,
        phi(s>1) = 2 pi; a compliant profile gives values at round-off.
        """
        from math import comb

        def ext(s):
            return np.where(s < 0, 0.0, np.where(s > 1, 2 * np.pi, self.phi(np.clip(s, 0, 1))))

        out = {}
        for n in range(1, order + 1):
            ks = np.arange(-n, n + 1, 2) / 2.0
            coef = np.array([(-1) ** (n - j) * comb(n, j) for j in range(n + 1)], dtype=float)
            d0 = float(coef @ ext(0.0 + ks * h)) / h ** n
            d1 = float(coef @ ext(1.0 + ks * h)) / h ** n
            out[n] = (d0, d1)
        return out


@dataclass
class PropagationRun:
    """Frames along a flow, stored at every output node."""

    kind: str                   # 'schrodinger' | 'parallel'
    eps: float | None
    s: np.ndarray
    phi: np.ndarray
    frames: np.ndarray          # (n_nodes, dim, p)
    system: object = field(repr=False)
    profile: DrivingProfile | None = None
    filt: WeightFilter | None = None
    quad_mask: np.ndarray | None = None   # nodes used by the transport quadrature
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.frames[-1]

    @property
    def initial(self) -> np.ndarray:
        return self.frames[0]

    def frame_at(self, s: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.s - s)))
        if abs(self.s[k] - s) > 1e-12:
            raise KeyError(f"no output node at s={s}")
        return self.frames[k]


def _check_frame(system, frame, tol=1e-9):
    if frame.ndim != 2:
        raise ValueError("frame must be a (dim, p) array")
    d = system.gram_defect(frame)
    if d > tol:
        raise IntegratorError(f"frame is not orthonormal (Gram defect {d:.2e})")


def _combine(system, parts):
    """Linear combination of level-space operators, dense or sparse, or matvec callables."""
    if any(callable(P) and not hasattr(P, "shape") for _, P in parts):
        def mv(x):
            out = 0
            for c, P in parts:
                out = out + c * (P(x) if callable(P) and not hasattr(P, "shape") else P @ x)
            return out
        return mv
    out = None
    for c, P in parts:
        out = c * P if out is None else out + c * P
    return out


class _Stepper:
    def __init__(self, system, gen_at, kind: str, tol_exp: float):
        if kind not in ("cfm4", "midpoint"):
            raise ValueError(f"unknown stepper {kind!r}")
        self.system = system
        self.gen_at = gen_at
        self.kind = kind
        self.order = 4 if kind == "cfm4" else 2
        self.tol_exp = tol_exp
        self.n_exp = 0

    def step(self, t, h, frame):
        sy = self.system
        if self.kind == "midpoint":
            G = self.gen_at(t + 0.5 * h)
            self.n_exp += 1
            return sy.exp_apply(G, frame, h, self.tol_exp)
        G1, G2 = self.gen_at(t + _C1 * h), self.gen_at(t + _C2 * h)
        frame = sy.exp_apply(_combine(sy, [(_A2, G1), (_A1, G2)]), frame, h, self.tol_exp)
        frame = sy.exp_apply(_combine(sy, [(_A1, G1), (_A2, G2)]), frame, h, self.tol_exp)
        self.n_exp += 2
        return frame


def _adaptive_segment(stepper, t0, t1, frame, tol, h, diag, h_min=1e-12):
    """Step-doubling control from t0 to t1; returns (frame, next h)."""
    p = stepper.order
    fac = 2 ** p - 1
    t = t0
    while t < t1 - 1e-15 * max(1.0, abs(t1)):
        h = min(h, t1 - t)
        if h < h_min:
            raise IntegratorError(f"step size underflow at t={t:.6g} (h={h:.2e})")
        full = stepper.step(t, h, frame)
        half = stepper.step(t, h / 2, frame)
        half = stepper.step(t + h / 2, h / 2, half)
        err = float(np.abs(full - half).max()) / fac
        if err <= tol:
            frame = half
            t += h
            diag["steps"] += 1
            grow = 2.0 if err == 0 else min(2.0, 0.9 * (tol / err) ** (1.0 / (p + 1)))
            h = h * max(grow, 0.3)
        else:
            diag["rejected"] += 1
            h = h * max(0.3, 0.9 * (tol / err) ** (1.0 / (p + 1)))
    return frame, h


def propagate_schrodinger(system, profile: DrivingProfile, eps: float, frame: np.ndarray,
                          n_nodes: int | None = None, quad_density: float = 24.0, tol: float = 1e-9,
                          stepper: str = "cfm4", h0: float | None = None) -> PropagationRun:
    """Solve i eps d psi/ds = H_{phi(s)} psi on [0, 1].

    Output nodes are uniform in s (an even number of intervals, default
    ceil(quad_density/eps)); the adaptive integrator steps between them with
    local error target ``tol`` per unit step.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    _check_frame(system, frame)
    if n_nodes is None:
        n_int = int(np.ceil(quad_density / eps))
    else:
        n_int = int(n_nodes) - 1
    n_int += n_int % 2
    s = np.linspace(0.0, 1.0, n_int + 1)

    def gen_at(t):
        return system.hamiltonian(float(profile.phi(t))) * (1.0 / eps)

    st = _Stepper(system, gen_at, stepper, tol_exp=tol * 1e-2)
    diag = {"steps": 0, "rejected": 0, "unitarity_defect": 0.0, "tol": tol, "stepper": stepper}
    frames = np.empty((len(s),) + frame.shape, dtype=complex)
    frames[0] = frame
    cur = frame.astype(complex)
    h = h0 if h0 is not None else min(s[1], eps / 4)
    for k in range(1, len(s)):
        cur, h = _adaptive_segment(st, s[k - 1], s[k], cur, tol, h, diag)
        frames[k] = cur
        diag["unitarity_defect"] = max(diag["unitarity_defect"], system.gram_defect(cur))
    diag["exponentials"] = st.n_exp
    return PropagationRun("schrodinger", eps, s, np.asarray(profile.phi(s)), frames, system, profile,
                          quad_mask=np.ones(len(s), dtype=bool), diagnostics=diag)


def propagate_parallel(system, profile: DrivingProfile, filt: WeightFilter, frame: np.ndarray,
                       n_steps: int = 64, checkpoints=(), stepper: str = "cfm4",
                       reverse: bool = False) -> PropagationRun:
    """Solve d psi/dphi = -i K_phi psi over one flux cycle.

    The flow is reparametrisation invariant, so it is integrated in phi:
    ``n_steps`` uniform steps over [0, 2 pi] (the rebuild density; K is
    rebuilt from the exact spectrum at each Gauss node).  Nodes phi(s) for
    the requested ``checkpoints`` in s are added as extra output points.
    ``reverse`` runs the cycle backwards (phi from 2 pi to 0), the inverse
    path.
    """
    _check_frame(system, frame)
    uniform = np.linspace(0.0, 2 * np.pi, n_steps + 1)
    extra = np.array([float(profile.phi(c)) for c in checkpoints]) if len(checkpoints) else np.zeros(0)
    nodes = np.unique(np.concatenate([uniform, extra]))
    quad_mask = np.isin(nodes, uniform)
    if reverse:
        nodes = nodes[::-1]
        quad_mask = quad_mask[::-1]
    dphi_max = 2 * np.pi / n_steps

    def gen_at(ph):
        spec = system.spectrum(float(ph))
        K = build_K(spec, system.dhamiltonian(float(ph)), filt)
        if system.kind == "quasifree":
            return K.dense()
        return K.matvec

    st = _Stepper(system, gen_at, stepper, tol_exp=1e-13)
    diag = {"steps": 0, "unitarity_defect": 0.0, "n_steps": n_steps, "stepper": stepper,
            "gamma": filt.gamma, "min_gap": np.inf}
    frames = np.empty((len(nodes),) + frame.shape, dtype=complex)
    frames[0] = frame
    cur = frame.astype(complex)
    for k in range(1, len(nodes)):
        a, b = nodes[k - 1], nodes[k]
        n_sub = max(1, int(np.ceil(abs(b - a) / dphi_max - 1e-9)))
        h = (b - a) / n_sub
        for j in range(n_sub):
            cur = st.step(a + j * h, h, cur)
            diag["steps"] += 1
        frames[k] = cur
        diag["unitarity_defect"] = max(diag["unitarity_defect"], system.gram_defect(cur))
    for ph in nodes[quad_mask]:
        diag["min_gap"] = min(diag["min_gap"], system.spectrum(float(ph)).gap)
    diag["exponentials"] = st.n_exp
    s = np.array([profile.inverse(ph) for ph in nodes]) if profile.kind != "static" else np.zeros(len(nodes))
    return PropagationRun("parallel", None, s, nodes, frames, system, profile, filt, quad_mask, diag)


_MAGIC = b"HPFRAME1"


def dump_frame(path, frame: np.ndarray) -> None:
    """Binary layout: 8-byte magic, int64 dim, int64 p, then dim*p complex128
    values in column-major order (little endian)."""
    frame = np.asarray(frame, dtype="<c16")
    dim, p = frame.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qq", dim, p))
        fh.write(np.asfortranarray(frame).tobytes(order="F"))


def load_frame(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a frame dump")
        dim, p = struct.unpack("<qq", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != dim * p:
        raise ValueError("truncated frame dump")
    return data.reshape((dim, p), order="F").astype(complex)
