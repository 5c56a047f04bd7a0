"""TOML run configuration with strict key checking.

Unknown keys are rejected rather than ignored: a misspelled ``eps`` that
silently falls back to a default is the worst failure a UQ tool can have.
"""

import hashlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import matops
from .errors import ConfigError, SniftleError


@dataclass
class ModelSection:
    builtin: str = None
    gridded: str = None
    params: dict = field(default_factory=dict)
    diffusion: object = "identity"
    out_of_domain: str = "error"


@dataclass
class ScalesSection:
    eps: float = 0.0
    delta: float = 0.0
    xi_cov: list = None


@dataclass
class IntegratorSection:
    step_size: float = 1e-3
    scheme: str = "rk4"
    jacobian_inverse_mode: str = "adjoint_ode"
    defect_threshold: float = 1e-6


@dataclass
class PointSection:
    xi0: list = None
    t: float = None


@dataclass
class ScanSection:
    grid: list = None
    times: list = None
    failure_policy: str = "record_nan"


@dataclass
class MonteCarloSection:
    samples: int = 10_000
    em_step: float = None
    on_exit: str = "abort"
    cov_tol: float = 0.1
    proj_tol: float = 0.1


@dataclass
class StudySection:
    axis: str = "eps_only"
    levels: list = None
    orders: list = field(default_factory=lambda: [1.0])


@dataclass
class OutputSection:
    path: str = None
    format: str = "csv"


@dataclass
class RunConfig:
    model: ModelSection
    scales: ScalesSection = field(default_factory=ScalesSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    seed: int = 0
    point: PointSection = None
    scan: ScanSection = None
    montecarlo: MonteCarloSection = None
    study: StudySection = None
    output: OutputSection = None

    def to_dict(self):
        out = {"seed": self.seed}
        for name in ("model", "scales", "integrator", "point", "scan", "montecarlo",
                     "study", "output"):
            section = getattr(self, name)
            if section is not None:
                out[name] = {k: v for k, v in asdict(section).items() if v is not None}
        return out

    def to_toml(self):
        return tomli_w.dumps(self.to_dict())

    def digest(self):
        """SHA-256 of the normalized config, excluding the output section."""
        d = self.to_dict()
        d.pop("output", None)
        return hashlib.sha256(tomli_w.dumps(d).encode()).hexdigest()

    def xi_cov(self, n):
        if self.scales.xi_cov is None:
            return np.eye(n)
        return np.asarray(self.scales.xi_cov, dtype=float)


_SECTIONS = {
    "model": ModelSection, "scales": ScalesSection, "integrator": IntegratorSection,
    "point": PointSection, "scan": ScanSection, "montecarlo": MonteCarloSection,
    "study": StudySection, "output": OutputSection,
}


def _real(value, where, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", where)
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError("must be finite", where)
    if positive and not value > 0:
        raise ConfigError("must be positive", where)
    if nonneg and value < 0:
        raise ConfigError("must be non-negative", where)
    return value


def _int(value, where, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", where)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}", where)
    return value


def _choice(value, where, options):
    if value not in options:
        raise ConfigError(f"must be one of {list(options)}, got {value!r}", where)
    return value


def _vector(value, where):
    if not isinstance(value, list) or not value:
        raise ConfigError("expected a non-empty array of numbers", where)
    return [_real(v, f"{where}[{i}]") for i, v in enumerate(value)]


def _matrix(value, where):
    if not isinstance(value, list) or not value:
        raise ConfigError("expected an array of rows", where)
    rows = [_vector(row, f"{where}[{i}]") for i, row in enumerate(value)]
    if any(len(r) != len(rows) for r in rows):
        raise ConfigError("matrix rows must form a square matrix", where)
    return rows


def _section(raw, name):
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError("expected a table", name)
    allowed = set(cls.__dataclass_fields__)
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown key (allowed: {sorted(allowed)})", f"{name}.{key}")
    return cls(**raw)


def parse_config(text):
    """Parse and validate TOML ``text`` into a normalized :class:`RunConfig`."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    allowed = set(_SECTIONS) | {"seed"}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown key (allowed: {sorted(allowed)})", key)
    if "model" not in raw:
        raise ConfigError("missing required section", "model")
    sections = {name: _section(raw[name], name) for name in _SECTIONS if name in raw}
    cfg = RunConfig(**sections)
    if "seed" in raw:
        cfg.seed = _int(raw["seed"], "seed", minimum=0)
        if cfg.seed >= 2 ** 64:
            raise ConfigError("must fit in 64 bits", "seed")
    _normalize(cfg)
    return cfg


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "--config") from None
    return parse_config(text)


def _normalize(cfg):
    m = cfg.model
    if (m.builtin is None) == (m.gridded is None):
        raise ConfigError("specify exactly one of 'builtin' or 'gridded'", "model")
    if not isinstance(m.params, dict):
        raise ConfigError("expected a table", "model.params")
    m.params = {k: _real(v, f"model.params.{k}") for k, v in sorted(m.params.items())}
    if isinstance(m.diffusion, str):
        _choice(m.diffusion, "model.diffusion", ["identity"])
    elif isinstance(m.diffusion, list):
        m.diffusion = _matrix(m.diffusion, "model.diffusion")
    else:
        m.diffusion = _real(m.diffusion, "model.diffusion")
    _choice(m.out_of_domain, "model.out_of_domain", ["error", "clamp"])

    s = cfg.scales
    s.eps = _real(s.eps, "scales.eps", nonneg=True)
    s.delta = _real(s.delta, "scales.delta", nonneg=True)
    if s.xi_cov is not None:
        s.xi_cov = _matrix(s.xi_cov, "scales.xi_cov")
        try:
            matops.cholesky(np.asarray(s.xi_cov))
        except SniftleError as exc:
            raise ConfigError(f"not a symmetric positive-definite matrix ({exc})",
                              "scales.xi_cov") from None

    g = cfg.integrator
    g.step_size = _real(g.step_size, "integrator.step_size", positive=True)
    _choice(g.scheme, "integrator.scheme", ["rk4"])
    _choice(g.jacobian_inverse_mode, "integrator.jacobian_inverse_mode",
            ["adjoint_ode", "direct_invert"])
    g.defect_threshold = _real(g.defect_threshold, "integrator.defect_threshold",
                               nonneg=True)

    if cfg.point is not None:
        p = cfg.point
        if p.xi0 is not None:
            p.xi0 = _vector(p.xi0, "point.xi0")
        if p.t is not None:
            p.t = _real(p.t, "point.t", positive=True)

    if cfg.scan is not None:
        sc = cfg.scan
        if sc.grid is None or sc.times is None:
            raise ConfigError("requires 'grid' and 'times'", "scan")
        if not isinstance(sc.grid, list) or not sc.grid:
            raise ConfigError("expected [[min, max, count], ...]", "scan.grid")
        grid = []
        for i, axis in enumerate(sc.grid):
            where = f"scan.grid[{i}]"
            if not isinstance(axis, list) or len(axis) != 3:
                raise ConfigError("expected [min, max, count]", where)
            lo, hi = _real(axis[0], where), _real(axis[1], where)
            count = _int(axis[2], where, minimum=1)
            if not lo < hi:
                raise ConfigError("min must be < max", where)
            grid.append([lo, hi, count])
        sc.grid = grid
        sc.times = [_real(t, f"scan.times[{i}]", positive=True)
                    for i, t in enumerate(_vector(sc.times, "scan.times"))]
        _choice(sc.failure_policy, "scan.failure_policy", ["record_nan", "abort"])

    if cfg.montecarlo is not None:
        mc = cfg.montecarlo
        mc.samples = _int(mc.samples, "montecarlo.samples", minimum=2)
        mc.em_step = _real(mc.em_step if mc.em_step is not None else g.step_size,
                           "montecarlo.em_step", positive=True)
        _choice(mc.on_exit, "montecarlo.on_exit", ["abort", "skip"])
        mc.cov_tol = _real(mc.cov_tol, "montecarlo.cov_tol", positive=True)
        mc.proj_tol = _real(mc.proj_tol, "montecarlo.proj_tol", positive=True)

    if cfg.study is not None:
        st = cfg.study
        _choice(st.axis, "study.axis", ["eps_only", "delta_only"])
        if st.levels is None:
            raise ConfigError("missing required key", "study.levels")
        st.levels = [_real(v, f"study.levels[{i}]", positive=True)
                     for i, v in enumerate(_vector(st.levels, "study.levels"))]
        st.orders = [_real(v, f"study.orders[{i}]")
                     for i, v in enumerate(_vector(st.orders, "study.orders"))]
        if min(st.orders) < 1:
            raise ConfigError("moment orders must be >= 1", "study.orders")

    if cfg.output is not None:
        _choice(cfg.output.format, "output.format", ["csv", "binary"])
