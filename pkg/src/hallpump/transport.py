"""Transported charge across nu_- : the parallel and the driven functionals.

Parallel transport.  With U* Q U - Q = i int U* [K, Q] U, the nu_- part is
int <(i[K, Q])_->.  Two splits of i[K, Q] are provided.

* ``'current'`` (default): K acts on the charge through the Hamiltonian's
  boundary current.  Q^(-) is defined in the instantaneous eigenbasis by
  i[H, Q^(-)] = j_-, i.e. Q^(-)_mn = -i (j_-)_mn / (E_m - E_n), with half of
  Q on degenerate pairs; then (i[K, Q])_- = i[K, Q^(-)].  Both pieces are
  local near nu_-, and Q^(-) + Q^(+) = Q on all non-degenerate pairs.
* ``'source'``: K is resolved into the filtered images K_X of the source
  terms dh_X of the derivative; i[K_X, Q] goes to the line nearer to X, ties
  halved.

The driven functional integrates the Hamiltonian current itself,
Delta Q_eps = eps^-1 int <j_-(phi(s))> ds, by composite Simpson on the run's
uniform nodes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .quasiadiabatic import build_K

__all__ = [
    "SplitError",
    "ParallelResult",
    "EpsResult",
    "FitResult",
    "TransportReport",
    "charge_split_integrand",
    "transported_charge_parallel",
    "transported_charge_eps",
    "exactness_fit",
    "write_transport_csv",
    "plot_transport",
    "simpson",
]


class SplitError(ValueError):
    """The requested boundary split is unavailable or ill-posed."""


def simpson(y, h: float) -> float:
    """Composite Simpson on an even number of uniform intervals."""
    y = np.asarray(y)
    n = len(y) - 1
    if n < 2 or n % 2:
        raise ValueError("Simpson needs an even number of intervals")
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def _line_weight(lat, X, nu_minus, nu_plus) -> float:
    """Share of a term at X assigned to nu_-: 1, 0 or 1/2 on ties."""
    a, b = nu_minus.meets(X), nu_plus.meets(X)
    if a != b:
        return 1.0 if a else 0.0
    da, db = nu_minus.distance_to(X), nu_plus.distance_to(X)
    if da == db:
        return 0.5
    return 1.0 if da < db else 0.0


def _cut_charge(spec, jp, Qp, deg_tol):
    dE = spec.E[:, None] - spec.E[None, :]
    deg = np.abs(dE) < deg_tol
    with np.errstate(divide="ignore", invalid="ignore"):
        X = np.where(deg, 0.5 * Qp, -1j * jp / np.where(deg, 1.0, dE))
    return X


def _comm_expect(system, c, Kp, Xp) -> complex:
    """<i[K, X]> for Hermitian K, X in the eigenbasis, frame coefficients c."""
    z = system.expect_level(c, Kp @ Xp)
    return complex(-2 * z.imag)


def charge_split_integrand(system, phi: float, frame, filt, split: str = "current", deg_tol: float = 1e-9,
                           resolve: bool = False):
    """<(i[K_phi, Q_nu])_-> on one frame, optionally resolved into local terms.

    Returns ``(value, terms)`` with ``terms`` a list of (support, value) whose
    sum is ``value`` (empty unless ``resolve``).  Also usable with a K built
    from a different derivative by passing ``filt=(spec, KOperator)``.
    """
    if isinstance(filt, tuple):
        spec, K = filt
    else:
        spec = system.spectrum(phi)
        K = build_K(spec, system.dhamiltonian(phi), filt)
    c = spec.V.conj().T @ frame
    Kp = K.Kp
    terms = []
    if split == "current":
        Qp = spec.rotate(system.q_nu)
        if resolve:
            val = 0.0
            parts = system.current_terms(phi, "-")
            for X, jX in parts:
                # each local current term carries its share of Q^(-); degenerate
                # pairs are shared evenly among the terms
                Xp = _cut_charge(spec, spec.rotate(jX), Qp / max(len(parts), 1), deg_tol)
                v = _comm_expect(system, c, Kp, Xp)
                terms.append((X, v.real))
                val += v.real
            return val, terms
        Xp = _cut_charge(spec, spec.rotate(system.current(phi, "-")), Qp, deg_tol)
        return _comm_expect(system, c, Kp, Xp).real, terms
    if split == "source":
        if getattr(system, "B", None) is not None:
            # single source terms break the translation symmetry; compressing
            # them onto one block drops the intermediate states of the others
            raise SplitError("the source split needs an unreduced sector")
        regs = system.regions
        lat = system.family.lattice
        Qp = spec.rotate(system.q_nu)
        W = filt(spec.E[:, None] - spec.E[None, :]) if not isinstance(filt, tuple) else None
        if W is None:
            raise SplitError("the source split needs the filter, not a prebuilt K")
        val = 0.0
        for X, dh in system.dhamiltonian_terms(phi):
            w = _line_weight(lat, X, regs["nu_-"], regs["nu_+"])
            if w == 0:
                continue
            KX = W * spec.rotate(dh)
            KX = 0.5 * (KX + KX.conj().T)
            v = w * _comm_expect(system, c, KX, Qp).real
            terms.append((X, v))
            val += v
        return val, terms
    raise SplitError(f"unknown split {split!r}")


@dataclass
class ParallelResult:
    value: float
    integrand: np.ndarray
    phi: np.ndarray
    split: str
    term_totals: dict = field(default_factory=dict)   # support -> integrated contribution
    truncated: float = 0.0
    dropped_terms: int = 0
    q_difference: float = 0.0
    imag_max: float = 0.0
    quadrature_change: float = 0.0    # |value - value on every other node|

    @property
    def nearest_integer(self) -> int:
        return int(np.rint(self.value))

    @property
    def residual(self) -> float:
        return abs(self.value - self.nearest_integer)

    def localization(self, lattice, anchor) -> list:
        """(d, sum |contribution| of terms at distance >= d from ``anchor``)."""
        rows = {}
        for X, v in self.term_totals.items():
            d = min(lattice.distance(a, b) for a in X for b in anchor)
            rows.setdefault(d, 0.0)
            rows[d] += abs(v)
        ds = sorted(rows)
        return [(d, sum(rows[e] for e in ds if e >= d)) for d in ds]


def transported_charge_parallel(run, split: str = "current", tail: float = 1e-8,
                                resolve: bool = True) -> ParallelResult:
    """Delta Q_par = p^-1 sum_k int_0^{2 pi} <psi_k|(i[K_phi, Q])_-|psi_k> dphi.

    Uses the run's uniform phi nodes (trapezoid, exact for the periodic
    integrand up to spectral accuracy).  With ``resolve`` the integral is also
    resolved into local terms; terms whose combined weight is below
    ``tail`` times the total absolute weight are dropped from ``value``.
    """
    if run.kind != "parallel":
        raise ValueError("need a parallel-transport run")
    system = run.system
    idx = np.flatnonzero(run.quad_mask)
    phis = run.phi[idx]
    order = np.argsort(phis)
    idx, phis = idx[order], phis[order]
    vals = np.empty(len(idx))
    per_term: dict = {}
    for j, k in enumerate(idx):
        v, terms = charge_split_integrand(system, float(phis[j]), run.frames[k], run.filt, split, resolve=resolve)
        vals[j] = v
        for X, tv in terms:
            per_term.setdefault(X, np.zeros(len(idx)))[j] = tv
    n = len(idx) - 1
    h = 2 * np.pi / n

    def trap(y):
        return h * (0.5 * y[0] + y[1:-1].sum() + 0.5 * y[-1])

    total = trap(vals)
    coarse = 2 * h * (0.5 * vals[0] + vals[2:-1:2].sum() + 0.5 * vals[-1]) if n % 2 == 0 else np.nan
    totals = {X: trap(y) for X, y in per_term.items()}
    value, dropped, truncated = total, 0, 0.0
    if totals:
        mags = sorted(totals.items(), key=lambda kv: abs(kv[1]))
        scale = sum(abs(v) for _, v in mags)
        acc = 0.0
        for X, v in mags:
            if acc + abs(v) > tail * scale:
                break
            acc += abs(v)
            truncated += v
            dropped += 1
        value = total - truncated
    q0 = system.expect(run.initial, system.q_nu)
    q1 = system.expect(run.final, system.q_nu)
    return ParallelResult(float(value), vals, phis, split, totals, float(truncated), dropped,
                          float((q1 - q0).real), float(abs(q1.imag) + abs(q0.imag)),
                          float(abs(total - coarse)) if not np.isnan(coarse) else np.nan)


@dataclass
class EpsResult:
    eps: float
    value: float
    quadrature_error: float
    imag_max: float
    integrand: np.ndarray = field(repr=False, default=None)


def transported_charge_eps(run) -> EpsResult:
    """Delta Q_eps = eps^-1 int_0^1 <j_-(phi(s))> ds (composite Simpson).

    The quadrature error is estimated from Simpson on every other node when
    the interval count allows it, else from the trapezoid difference.
    """
    if run.kind != "schrodinger":
        raise ValueError("need a Schroedinger run")
    system = run.system
    y = np.array([system.expect(F, system.current(float(ph), "-")) for F, ph in zip(run.frames, run.phi)])
    n = len(y) - 1
    h = 1.0 / n
    val = simpson(y.real, h) / run.eps
    if n % 4 == 0:
        err = abs(val - simpson(y.real[::2], 2 * h) / run.eps) / 15
    else:
        trap = h * (0.5 * y.real[0] + y.real[1:-1].sum() + 0.5 * y.real[-1]) / run.eps
        err = abs(val - trap)
    return EpsResult(run.eps, float(val), float(err), float(np.abs(y.imag).max()), y)


@dataclass
class FitResult:
    status: str                   # 'ok' | 'floor-limited'
    slope: float
    intercept: float
    window: tuple
    floor: float
    residuals: np.ndarray

    def __str__(self):
        if self.status != "ok":
            return f"floor-limited (floor {self.floor:.2e})"
        return f"slope {self.slope:.3f} on eps in [{min(self.window):g}, {max(self.window):g}]"


def exactness_fit(eps, deviation, floor: float = 0.0, factor: float = 10.0, min_points: int = 3) -> FitResult:
    """Least-squares slope of log|deviation| against log eps.

    Only points with deviation > factor * floor enter; fewer than
    ``min_points`` of them means the scaling is unmeasurable.
    """
    eps = np.asarray(eps, dtype=float)
    dev = np.abs(np.asarray(deviation, dtype=float))
    if len(eps) != len(dev) or len(eps) < 2:
        raise ValueError("need matching eps and deviation arrays")
    keep = dev > factor * floor
    keep &= dev > 0
    if keep.sum() < min_points:
        return FitResult("floor-limited", math.nan, math.nan, tuple(eps[keep]), floor, np.zeros(0))
    x, y = np.log(eps[keep]), np.log(dev[keep])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    return FitResult("ok", float(slope), float(icpt), tuple(eps[keep]), floor, y - A @ np.array([slope, icpt]))


@dataclass
class TransportReport:
    dq_par: float
    dq_eps: dict                       # eps -> EpsResult
    chern: int | None = None
    fit: FitResult | None = None
    floor: float = 0.0
    profile: str = "compliant"
    extra: dict = field(default_factory=dict)

    @property
    def par_residual(self) -> float:
        return abs(self.dq_par - round(self.dq_par))

    def deviations(self):
        eps = sorted(self.dq_eps, reverse=True)
        return np.array(eps), np.array([abs(self.dq_eps[e].value - self.dq_par) for e in eps])


def write_transport_csv(report: TransportReport, path) -> None:
    """Columns: eps, dQ_eps, dQ_par, deviation, quad_err, in_window, slope, floor, profile."""
    eps, dev = report.deviations()
    fit = report.fit
    window = set(fit.window) if fit is not None else set()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "dQ_eps", "dQ_par", "deviation", "quad_err", "in_window", "slope", "floor", "profile"])
        for e, d in zip(eps, dev):
            r = report.dq_eps[e]
            w.writerow([repr(float(e)), repr(r.value), repr(report.dq_par), repr(float(d)), repr(r.quadrature_error),
                        int(e in window), repr(fit.slope) if fit is not None else "", repr(report.floor),
                        report.profile])


def plot_transport(reports: dict, path) -> None:
    """Log-log deviation plot, one series per profile, as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for name, rep in reports.items():
        eps, dev = rep.deviations()
        lab = name if rep.fit is None or rep.fit.status != "ok" else f"{name} (slope {rep.fit.slope:.2f})"
        ax.loglog(eps, dev, "o-", label=lab)
        if rep.floor > 0:
            ax.axhline(10 * rep.floor, ls=":", color="grey", lw=0.8)
    ax.set_xlabel("eps")
    ax.set_ylabel("|dQ_eps - dQ_par|")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
