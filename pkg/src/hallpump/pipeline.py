"""Experiment pipeline: validate, gap, parallel, sweep, index, proposition, lr.

Each stage reads the shared context, writes its artifacts into the output
directory and appends checks {name, value, threshold, pass}.  A failing
stage is recorded with its diagnostic and the later stages that depend on it
are skipped.
"""

from __future__ import annotations

import json
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, STAGES, parse_config
from .evolution import DrivingProfile, dump_frame, propagate_parallel, propagate_schrodinger
from .fock import DimensionCapError
from .index import GeneratedUnitary, IndexPreconditionError, additivity_check, index_of
from .lattice import named_regions
from .lrdiag import ConeFitError, cone_scan, fit_cone, plot_cone, write_cone_csv
from .models import HofstadterParams, build_hofstadter, chern_oracle, hofstadter_hoppings
from .observables import dumps, validate_extensive
from .quasiadiabatic import WeightFilter, build_K, locality_profile, single_shot_unitary
from .spectral import gap_scan, write_gap_csv
from .systems import SectorSystem, make_system
from .transport import (TransportReport, exactness_fit, plot_transport, transported_charge_eps,
                        transported_charge_parallel, write_transport_csv)

__all__ = ["Check", "Context", "run_experiment", "oracle_integer", "SUMMARY_SCHEMA"]

SUMMARY_SCHEMA = "hallpump.summary/1"

_DEPENDS = {
    "validate": (),
    "gap": ("validate",),
    "parallel": ("gap",),
    "sweep": ("parallel",),
    "index": ("gap",),
    "proposition": ("gap",),
    "lr": (),
}


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    relation: str = "<="

    def as_dict(self):
        return {"name": self.name, "value": _num(self.value), "threshold": _num(self.threshold),
                "relation": self.relation, "pass": bool(self.passed)}


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else repr(x)


@dataclass
class Context:
    cfg: ExperimentConfig
    out: Path
    checks: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def check(self, name, value, threshold, relation="<="):
        ok = bool(value <= threshold) if relation == "<=" else bool(value >= threshold)
        if relation == "==":
            ok = bool(value == threshold)
        self.checks.append(Check(name, float(value), float(threshold), ok, relation))
        return ok


def _params(cfg) -> HofstadterParams:
    m = cfg.model
    return HofstadterParams(L=m.L, p=m.p, q=m.q, t=m.t, V=m.V, N=m.N)


def oracle_integer(cfg: ExperimentConfig) -> int:
    """Chern integer of the filled bands of the model's single-particle spectrum."""
    prm = _params(cfg)
    n_bands, rem = divmod(prm.filling * prm.q, prm.L * prm.L)
    if rem or not 0 < n_bands < prm.q:
        raise ValueError(f"filling N={prm.filling} is not a whole number of bands")
    return chern_oracle(hofstadter_hoppings(prm.p, prm.q, prm.t), list(range(n_bands)))


def _filter(cfg, gap) -> WeightFilter:
    q = cfg.quasiadiabatic
    return WeightFilter(q.gamma_fraction * gap, q.filter_shape, q.filter_lo)


# stages ------------------------------------------------------------------
def _stage_validate(ctx: Context):
    cfg = ctx.cfg
    fam = build_hofstadter(_params(cfg))
    (ctx.out / "hamiltonian.json").write_text(dumps(fam.base))
    rep = validate_extensive(fam.base)
    ctx.check("structure.charge_conservation", len(rep.conservation_violations), 0, "==")
    diff = fam.evaluate(2 * np.pi).differing_supports(fam.evaluate(0.0), atol=1e-10)
    ctx.check("structure.periodicity", len(diff), 0, "==")
    system = make_system(fam, fam.params.filling, backend=cfg.run.backend)
    ctx.data.update(family=fam, system=system)
    return {"dim": system.dim, "many_body_dim": system.many_body_dim(), "backend": system.kind}


def _stage_gap(ctx: Context):
    cfg, system = ctx.cfg, ctx.data["system"]
    phis = np.linspace(0, 2 * np.pi, cfg.spectral.phi_points)
    prof = DrivingProfile(cfg.evolution.profile)
    scan = gap_scan(system, phis, profile=prof)
    write_gap_csv(scan, ctx.out / "gap.csv")
    _plot_gap(scan, ctx.out / "gap.svg")
    ctx.check("spectral.min_gap", scan.min_gap, cfg.spectral.gap_threshold, ">=")
    if scan.min_gap < cfg.spectral.gap_threshold:
        raise RuntimeError(f"gap {scan.min_gap:.3e} at phi={scan.argmin_phi:.4f} below threshold")
    ctx.data["filter"] = _filter(cfg, scan.min_gap)
    ctx.data["min_gap"] = scan.min_gap
    return {"min_gap": scan.min_gap, "p_constant": scan.p_constant}


def _stage_parallel(ctx: Context):
    cfg, system, filt = ctx.cfg, ctx.data["system"], ctx.data["filter"]
    ev = cfg.evolution
    prof = DrivingProfile(ev.profile)
    F0 = system.spectrum(0.0).ground()
    cps = np.linspace(0, 1, ev.checkpoints)
    run = propagate_parallel(system, prof, filt, F0, n_steps=ev.parallel_steps, checkpoints=cps,
                             stepper=ev.stepper)
    cp_phi = {float(prof.phi(c)) for c in cps}
    dist = max(system.projector_distance(F, system.spectrum(float(ph)).ground())
               for F, ph in zip(run.frames, run.phi) if float(ph) in cp_phi)
    ctx.check("parallel.transport", dist, ev.tol_transport)
    ctx.check("parallel.unitarity", run.diagnostics["unitarity_defect"], 1e-9)
    res = transported_charge_parallel(run, cfg.transport.split, cfg.transport.tail)
    half = propagate_parallel(system, prof, filt, F0, n_steps=ev.parallel_steps // 2, stepper=ev.stepper)
    res_half = transported_charge_parallel(half, cfg.transport.split, cfg.transport.tail, resolve=False)
    step_change = abs(res.value - res_half.value)
    ctx.check("parallel.step_halving", step_change, 1e-4)
    ctx.check("transport.two_boundary", abs(res.q_difference), 1e-6)
    ctx.check("transport.quantization", res.residual, cfg.transport.quant_tol)
    try:
        n = oracle_integer(cfg)
        ctx.check("transport.oracle_match", abs(res.nearest_integer - n), 0, "==")
    except ValueError:
        n = None
    ctx.data.update(parallel=res, chern=n, par_floor=max(step_change / 15, res.quadrature_change or 0.0))
    with open(ctx.out / "parallel.csv", "w") as fh:
        fh.write("phi,integrand\n")
        for ph, v in zip(res.phi, res.integrand):
            fh.write(f"{ph!r},{v!r}\n")
    if ev.dump_frames:
        dump_frame(ctx.out / "parallel_final.bin", system.to_full(run.final))
    if cfg.quasiadiabatic.locality:
        _locality(ctx)
    return {"dQ_par": res.value, "oracle": n, "max_checkpoint_distance": dist, "step_change": step_change}


def _locality(ctx: Context):
    system, filt = ctx.data["system"], ctx.data["filter"]
    if system.kind == "sector" and system.B is not None:
        if system.full_dim > 4000:
            return
        system = SectorSystem(system.family, system.N, system.p, reduce=False, basis=system.basis, cache_size=1)
    K = build_K(system.spectrum(0.0), system.dhamiltonian(0.0), filt)
    rows = locality_profile(system, K, named_regions(system.family.lattice)["eta_-"])
    with open(ctx.out / "locality.csv", "w") as fh:
        fh.write("r,relative_tail\n")
        for r, v in rows:
            fh.write(f"{r},{v!r}\n")


def _sweep_one(cfg_text: str, profile: str, eps: float):
    cfg = parse_config(cfg_text)
    fam = build_hofstadter(_params(cfg))
    system = make_system(fam, fam.params.filling, backend=cfg.run.backend)
    return _sweep_run(cfg, system, profile, eps)


def _sweep_run(cfg, system, profile, eps):
    ev = cfg.evolution
    F0 = system.spectrum(0.0).ground()
    run = propagate_schrodinger(system, DrivingProfile(profile), eps, F0, quad_density=ev.quad_density,
                                tol=ev.tol, stepper=ev.stepper)
    r = transported_charge_eps(run)
    r.integrand = None
    fid = system.fidelity(run.final, F0)
    frame = system.to_full(run.final) if ev.dump_frames else None
    return r, fid, run.diagnostics, frame


def _stage_sweep(ctx: Context):
    cfg = ctx.cfg
    ev = cfg.evolution
    profiles = [ev.profile] + (["ramp"] if ev.contrast and ev.profile != "ramp" else [])
    jobs = [(p, e) for p in profiles for e in ev.eps]
    if cfg.run.threads > 1:
        text = cfg.dumps()
        with ProcessPoolExecutor(max_workers=cfg.run.threads) as pool:
            outs = list(pool.map(_sweep_one, [text] * len(jobs), [p for p, _ in jobs], [e for _, e in jobs]))
    else:
        outs = [_sweep_run(cfg, ctx.data["system"], p, e) for p, e in jobs]
    par = ctx.data["parallel"].value
    reports = {}
    summary = {}
    for prof in profiles:
        dq = {}
        fids = {}
        floor = ctx.data["par_floor"]
        for (p, e), (r, fid, diag, frame) in zip(jobs, outs):
            if p != prof:
                continue
            dq[e] = r
            fids[e] = fid
            floor = max(floor, r.quadrature_error, 10 * diag["tol"] * diag["steps"] / e)
            ctx.check(f"sweep.{prof}.eps={e!r}.imag", r.imag_max, 1e-9)
            ctx.check(f"sweep.{prof}.eps={e!r}.unitarity", diag["unitarity_defect"], 1e-9)
            if frame is not None:
                dump_frame(ctx.out / f"frame_{prof}_eps{e!r}.bin", frame)
        rep = TransportReport(par, dq, ctx.data.get("chern"), profile=prof, floor=floor)
        eps, dev = rep.deviations()
        rep.fit = exactness_fit(eps, dev, floor, cfg.transport.floor_factor)
        write_transport_csv(rep, ctx.out / f"transport_{prof}.csv")
        reports[prof] = rep
        summary[prof] = {"slope": rep.fit.slope, "status": rep.fit.status, "floor": floor,
                         "fidelity": {repr(k): v for k, v in fids.items()}}
        slope = rep.fit.slope if rep.fit.status == "ok" else float("nan")
        if prof == "compliant":
            ctx.check("exactness.slope", slope, cfg.transport.slope_min, ">=")
        else:
            ctx.check(f"exactness.{prof}_slope", slope, cfg.transport.contrast_slope_max)
    plot_transport(reports, ctx.out / "transport.svg")
    ctx.data["reports"] = reports
    return summary


def _stage_index(ctx: Context):
    cfg, system, filt = ctx.cfg, ctx.data["system"], ctx.data["filter"]
    ix = cfg.index
    Up = GeneratedUnitary.parallel(filt, ix.steps)
    ind_id = index_of(GeneratedUnitary.identity(), system, tol_commute=ix.tol_commute)
    ctx.check("index.identity", abs(ind_id.value), 0.0, "==")
    ind = index_of(Up, system, tol_commute=ix.tol_commute)
    ctx.check("index.integrality", ind.residual, ix.residual_tol)
    add = additivity_check(Up, Up, system, tol_commute=ix.tol_commute)
    ctx.check("index.additivity", add["residual"], ix.residual_tol)
    rev = index_of(Up @ Up.inverse(), system, tol_commute=ix.tol_commute)
    ctx.check("index.reversal", abs(rev.value), ix.residual_tol)
    phase = index_of(GeneratedUnitary.charge_phase(system, 0.7), system, tol_commute=ix.tol_commute)
    ctx.check("index.charge_phase", abs(phase.value), 0.0, "==")
    with open(ctx.out / "index.csv", "w") as fh:
        fh.write("unitary,index,nearest_integer,residual,defect\n")
        for name, r in (("identity", ind_id), ("U_par", ind), ("U_par^-1.U_par", rev), ("exp(0.7iQ)", phase)):
            fh.write(f"{name},{r.value!r},{r.nearest_integer},{r.residual!r},{r.defect!r}\n")
        fh.write(f"U_par.U_par,{add['ind_12']!r},{int(round(add['ind_12']))},"
                 f"{abs(add['ind_12'] - round(add['ind_12']))!r},\n")
    return {"index": ind.value, "additivity_residual": add["residual"], "reversal": rev.value}


def _stage_proposition(ctx: Context):
    cfg, system, filt, fam = ctx.cfg, ctx.data["system"], ctx.data["filter"], ctx.data["family"]
    if system.kind == "sector":
        tilde = SectorSystem(fam, system.N, system.p, antitwist=True, basis=system.basis,
                             block=system.block_key) if system.B is not None else \
            SectorSystem(fam, system.N, system.p, antitwist=True, basis=system.basis)
    else:
        tilde = make_system(fam, system.N, backend="quasifree", antitwist=True)
    F0 = system.spectrum(0.0).ground()
    run = propagate_parallel(system, DrivingProfile("ramp"), filt, F0, n_steps=cfg.evolution.parallel_steps)
    ss = single_shot_unitary(system, tilde, filt)
    d = system.frame_difference(run.final, ss.apply(system, F0))
    ctx.check("proposition.single_shot_distance", d, 0.1)
    return {"distance": d}


def _stage_lr(ctx: Context):
    cfg = ctx.cfg
    lr = cfg.lrdiag
    prm = HofstadterParams(L=lr.L, p=cfg.model.p, q=cfg.model.q, t=cfg.model.t, V=0.0)
    fam = build_hofstadter(prm)
    qf = make_system(fam, prm.filling, backend="quasifree")
    lat = fam.lattice
    h = np.asarray(qf.hamiltonian(0.0))
    gap = min(qf.spectrum(x).gap for x in np.linspace(0, 2 * np.pi, 17))
    k = build_K(qf.spectrum(0.0), qf.dhamiltonian(0.0), _filter(cfg, gap)).dense()
    ts = np.linspace(0, lr.t_max, lr.t_points)
    x = lat.index(0, 0)
    ph = cone_scan(h / np.linalg.norm(h, 2), lat, lr.N, x, ts, n_vectors=lr.n_vectors, seed=cfg.run.seed)
    pk = cone_scan(k / np.linalg.norm(k, 2), lat, lr.N, x, ts, n_vectors=lr.n_vectors, seed=cfg.run.seed,
                   tag="generalized")
    fit = fit_cone(ph, lr.level)
    try:
        fit_cone(pk, lr.level, shape="power")
        k_fit = "power"
    except ConeFitError:
        k_fit = "unresolved (front at the largest distance)"
    pts = ph.outside(lr.margin)
    outside = max((c for *_, c in pts), default=0.0) / ph.peak
    ctx.check("lr.outside_cone", outside, lr.outside_max)
    # the bound must be tested somewhere: the grid has to reach past the cone
    ctx.check("lr.outside_points", len(pts), 1, ">=")
    wider = float(np.min(pk.width()[1:] - ph.width()[1:]))
    ctx.check("lr.k_wider", wider, 0.0, ">=")
    for name, pr in (("h", ph), ("k", pk)):
        write_cone_csv(pr, ctx.out / f"cone_{name}.csv")
        plot_cone(pr, ctx.out / f"cone_{name}.svg")
    return {"v_hat": fit["v"], "delta": fit["delta"], "outside_rel": outside, "outside_points": len(pts),
            "k_fit": k_fit, "min_width_gain": wider}


_RUNNERS = {
    "validate": _stage_validate,
    "gap": _stage_gap,
    "parallel": _stage_parallel,
    "sweep": _stage_sweep,
    "index": _stage_index,
    "proposition": _stage_proposition,
    "lr": _stage_lr,
}


def _plot_gap(scan, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([r[1] for r in scan.rows], [r[4] for r in scan.rows], "o-")
    ax.set_xlabel("phi")
    ax.set_ylabel("gap")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _closure(names):
    need = set()

    def add(n):
        if n in need:
            return
        need.add(n)
        for d in _DEPENDS[n]:
            add(d)

    for n in names:
        add(n)
    return [s for s in STAGES if s in need]


def run_experiment(cfg: ExperimentConfig, out=None, stage: str | None = None, log=print) -> dict:
    """Run the configured stages (or ``stage`` with its prerequisites); write summary.json."""
    cfg.validate()
    out = Path(out or cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, out)
    wanted = [stage] if stage else [s for s in cfg.run.stages if s != "lr" or cfg.lrdiag.enabled]
    order = _closure(wanted)
    (out / "config.cfg").write_text(cfg.dumps())
    failed = set()
    for name in order:
        if any(d in failed for d in _DEPENDS[name]):
            ctx.stages.append({"name": name, "status": "skipped", "diagnostic": "prerequisite failed"})
            failed.add(name)
            continue
        t0 = time.perf_counter()
        log(f"[{name}] start")
        try:
            info = _RUNNERS[name](ctx)
            rec = {"name": name, "status": "ok", "info": _jsonable(info)}
        except (DimensionCapError, IndexPreconditionError, RuntimeError, ValueError) as exc:
            rec = {"name": name, "status": "aborted", "diagnostic": f"{type(exc).__name__}: {exc}"}
            failed.add(name)
            log(f"[{name}] aborted: {exc}")
        except Exception as exc:  # keep the summary even on unexpected failures
            rec = {"name": name, "status": "aborted", "diagnostic": traceback.format_exc(limit=3)}
            failed.add(name)
            log(f"[{name}] aborted: {exc!r}")
        rec["seconds"] = round(time.perf_counter() - t0, 3)
        ctx.stages.append(rec)
        log(f"[{name}] {rec['status']} in {rec['seconds']:.1f}s")
    ok = not failed and all(c.passed for c in ctx.checks)
    summary = {"schema": SUMMARY_SCHEMA, "ok": ok, "seed": cfg.run.seed,
               "checks": [c.as_dict() for c in ctx.checks], "stages": ctx.stages}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return _num(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x
