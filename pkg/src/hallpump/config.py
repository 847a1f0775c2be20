"""Experiment configuration: a sectioned key-value text file.

Sections mirror the modules.  Every key has a default, so a config only
lists what it changes.  Floats are written with ``repr`` so that
``parse(dump(cfg)) == cfg`` holds bit for bit.

    [model]          L, p, q, t, V, N (blank: lowest-band filling)
    [spectral]       phi_points, gap_threshold
    [quasiadiabatic] gamma_fraction, filter_shape, filter_lo, locality
    [evolution]      profile, contrast, eps, quad_density, tol, stepper,
                     parallel_steps, checkpoints, tol_transport, dump_frames
    [transport]      split, tail, floor_factor, slope_min, contrast_slope_max,
                     quant_tol
    [index]          enabled, steps, tol_commute, residual_tol
    [lrdiag]         enabled, L, N, t_max, t_points, n_vectors, level,
                     margin, outside_max
    [run]            out, seed, threads, backend, stages
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, asdict

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "STAGES"]

STAGES = ("validate", "gap", "parallel", "sweep", "index", "proposition", "lr")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSection:
    L: int = 4
    p: int = 1
    q: int = 4
    t: float = 1.0
    V: float = 0.25
    N: int | None = None


@dataclass(frozen=True)
class SpectralSection:
    phi_points: int = 33
    gap_threshold: float = 0.5


@dataclass(frozen=True)
class QuasiadiabaticSection:
    gamma_fraction: float = 0.8
    filter_shape: str = "smooth"
    filter_lo: float = 0.0
    locality: bool = True


@dataclass(frozen=True)
class EvolutionSection:
    profile: str = "compliant"
    contrast: bool = True
    eps: tuple = (0.2, 0.14, 0.1, 0.07, 0.05, 0.035, 0.025)
    quad_density: float = 24.0
    tol: float = 1e-9
    stepper: str = "cfm4"
    parallel_steps: int = 64
    checkpoints: int = 33
    tol_transport: float = 1e-4
    dump_frames: bool = True


@dataclass(frozen=True)
class TransportSection:
    split: str = "current"
    tail: float = 1e-8
    floor_factor: float = 10.0
    slope_min: float = 3.0
    contrast_slope_max: float = 2.0
    quant_tol: float = 0.05


@dataclass(frozen=True)
class IndexSection:
    enabled: bool = True
    steps: int = 64
    tol_commute: float = 1e-6
    residual_tol: float = 0.05


@dataclass(frozen=True)
class LrdiagSection:
    enabled: bool = False
    L: int = 6
    N: int = 2
    t_max: float = 0.3
    t_points: int = 7
    n_vectors: int = 20
    level: float = 1e-2
    margin: float = 3.0
    outside_max: float = 1e-3


@dataclass(frozen=True)
class RunSection:
    out: str = "hallpump-out"
    seed: int = 0
    threads: int = 1
    backend: str = "auto"
    stages: tuple = STAGES


_SECTIONS = {
    "model": ModelSection,
    "spectral": SpectralSection,
    "quasiadiabatic": QuasiadiabaticSection,
    "evolution": EvolutionSection,
    "transport": TransportSection,
    "index": IndexSection,
    "lrdiag": LrdiagSection,
    "run": RunSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSection = field(default_factory=ModelSection)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    quasiadiabatic: QuasiadiabaticSection = field(default_factory=QuasiadiabaticSection)
    evolution: EvolutionSection = field(default_factory=EvolutionSection)
    transport: TransportSection = field(default_factory=TransportSection)
    index: IndexSection = field(default_factory=IndexSection)
    lrdiag: LrdiagSection = field(default_factory=LrdiagSection)
    run: RunSection = field(default_factory=RunSection)

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, **{section: replace(getattr(self, section), **changes)})

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for name in _SECTIONS:
            sec = getattr(self, name)
            cp[name] = {f.name: _fmt(getattr(sec, f.name)) for f in fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def validate(self) -> None:
        m = self.model
        if m.L < 4 or m.L % 2:
            raise ConfigError(f"model.L must be even and >= 4, got {m.L}")
        if m.q <= 0 or (m.L * m.L * m.p) % m.q:
            raise ConfigError(f"flux {m.p}/{m.q} is not realisable on an {m.L}x{m.L} torus")
        if m.t < 0 or m.V < 0:
            raise ConfigError("model.t and model.V must be nonnegative")
        if m.N is not None and not 0 < m.N < m.L * m.L:
            raise ConfigError("model.N outside (0, L^2)")
        ev = self.evolution
        if ev.profile not in ("compliant", "ramp"):
            raise ConfigError(f"evolution.profile must be compliant or ramp, got {ev.profile!r}")
        if ev.stepper not in ("cfm4", "midpoint"):
            raise ConfigError(f"unknown stepper {ev.stepper!r}")
        if not ev.eps or any(e <= 0 for e in ev.eps):
            raise ConfigError("evolution.eps must be a nonempty list of positive values")
        if list(ev.eps) != sorted(ev.eps, reverse=True) or len(set(ev.eps)) != len(ev.eps):
            raise ConfigError("evolution.eps must be strictly descending")
        positive = {
            "spectral.gap_threshold": self.spectral.gap_threshold,
            "quasiadiabatic.gamma_fraction": self.quasiadiabatic.gamma_fraction,
            "evolution.quad_density": ev.quad_density,
            "evolution.tol": ev.tol,
            "evolution.tol_transport": ev.tol_transport,
            "transport.tail": self.transport.tail,
            "transport.floor_factor": self.transport.floor_factor,
            "transport.quant_tol": self.transport.quant_tol,
            "index.tol_commute": self.index.tol_commute,
            "index.residual_tol": self.index.residual_tol,
            "lrdiag.t_max": self.lrdiag.t_max,
            "lrdiag.level": self.lrdiag.level,
            "lrdiag.outside_max": self.lrdiag.outside_max,
        }
        for k, v in positive.items():
            if not v > 0:
                raise ConfigError(f"{k} must be positive, got {v}")
        if not self.quasiadiabatic.gamma_fraction <= 1:
            raise ConfigError("quasiadiabatic.gamma_fraction must not exceed 1 (filter gap above spectral gap)")
        if self.quasiadiabatic.filter_shape not in ("smooth", "cubic"):
            raise ConfigError("quasiadiabatic.filter_shape must be smooth or cubic")
        if self.transport.split not in ("current", "source"):
            raise ConfigError("transport.split must be current or source")
        if self.spectral.phi_points < 2 or self.evolution.parallel_steps < 4 or self.evolution.checkpoints < 2:
            raise ConfigError("grids too coarse")
        if self.lrdiag.L % 2 or self.lrdiag.L < 4 or self.lrdiag.t_points < 3 or self.lrdiag.n_vectors < 1:
            raise ConfigError("lrdiag grid invalid")
        if self.run.threads < 1:
            raise ConfigError("run.threads must be >= 1")
        if self.run.backend not in ("auto", "sector", "quasifree"):
            raise ConfigError("run.backend must be auto, sector or quasifree")
        bad = [s for s in self.run.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages {bad}")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _conv(raw: str, default, name: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(x) for x in items)
            return tuple(items)
        if default is None or isinstance(default, int):
            return None if raw == "" else int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for {name}") from exc


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    unknown = [s for s in cp.sections() if s not in _SECTIONS]
    if unknown:
        raise ConfigError(f"unknown sections {unknown}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        base = cls()
        vals = {}
        if cp.has_section(name):
            known = {f.name for f in fields(cls)}
            extra = [k for k in cp[name] if k not in known]
            if extra:
                raise ConfigError(f"unknown keys {extra} in [{name}]")
            for k, raw in cp[name].items():
                vals[k] = _conv(raw, getattr(base, k), f"{name}.{k}")
        kwargs[name] = cls(**{**asdict(base), **vals})
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
