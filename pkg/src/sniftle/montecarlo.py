"""Monte Carlo simulation of the stochastic model and its linearization.

Each sample draws its initial condition and its Wiener increments from a
private Philox stream keyed by ``SeedSequence([seed, sample_index])``, so an
ensemble is reproducible bit for bit no matter how samples are split into
chunks or distributed over workers. The stream order per sample is: ``n``
standard normals for the initial condition, then ``n`` per time step for the
increments.

Both the full SDE and the linearized SDE are advanced by Euler-Maruyama
under the same realization. The linearization is taken around the noise-free
Euler path on the same time grid, so that for ``eps = delta = 0`` the two
ensembles coincide with the center path exactly.
"""

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import matops
from .errors import DomainError, EstimationError, InvalidInputError
from .flowmap import IntegratorConfig, solve_flow
from .uqcov import UncertaintyScales, gaussian_predictive

SAMPLE_CHUNK = 1024
TIME_BLOCK = 256


@dataclass(frozen=True)
class McConfig:
    samples: int = 10_000
    em_step: float = 1e-3
    seed: int = 0
    scales: UncertaintyScales = field(default_factory=UncertaintyScales)
    on_exit: str = "abort"
    workers: int = 1

    def __post_init__(self):
        if self.samples < 2:
            raise InvalidInputError("need at least 2 samples")
        if not self.em_step > 0:
            raise InvalidInputError("em_step must be positive")
        if self.on_exit not in ("abort", "skip"):
            raise InvalidInputError(f"unknown on_exit policy {self.on_exit!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidInputError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class Ensemble:
    """Final states of an ensemble with its sample mean and covariance."""
    final_states: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray
    skipped: int = 0

    @classmethod
    def from_states(cls, states, skipped=0):
        states = np.asarray(states, dtype=float)
        if states.shape[0] < 2:
            raise EstimationError("an ensemble needs at least 2 surviving samples")
        mean = states.mean(axis=0)
        dev = states - mean
        cov = matops.symmetrize(dev.T @ dev / (states.shape[0] - 1))
        return cls(states, mean, cov, skipped)

    @property
    def size(self):
        return self.final_states.shape[0]

    def moment_table(self, reference, orders):
        """``{r: mean(||state - reference||**r)}``; ``reference`` may be an
        array of per-sample references of the same shape as the states."""
        norms = np.linalg.norm(self.final_states - reference, axis=-1)
        return {r: float(np.mean(norms ** r)) for r in orders}


def sample_stream(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def _center_path(model, xi0, times, h):
    """Noise-free Euler path with the drift, gradient and diffusion along it."""
    n = model.n
    steps = len(times)
    c = np.empty((steps + 1, n))
    uc = np.empty((steps, n))
    G = np.empty((steps, n, n))
    S = np.empty((steps, n, n))
    c[0] = xi0
    for k, tk in enumerate(times):
        x = c[k][None]
        uc[k] = model.velocity(x, tk)[0]
        G[k] = model.gradient(x, tk)[0]
        S[k] = model.diffusion(x, tk)[0]
        c[k + 1] = c[k] + h * uc[k]
    return c, uc, G, S


def _simulate_chunk(model, xi0, psi, scales, seed, indices, times, h, path,
                    linear, on_exit):
    n = model.n
    m = len(indices)
    gens = [sample_stream(seed, i) for i in indices]
    z = np.stack([g.standard_normal(n) for g in gens])
    x = xi0 + scales.delta * (z @ psi.T)
    lin = x.copy() if linear else None
    alive = np.ones(m, dtype=bool)
    eps = scales.eps
    sqrt_h = math.sqrt(h)
    c, uc, G, S = path
    steps = len(times)
    for start in range(0, steps, TIME_BLOCK):
        stop = min(start + TIME_BLOCK, steps)
        if eps > 0:
            dW = np.stack([g.standard_normal((stop - start, n)) for g in gens], axis=1)
            dW *= sqrt_h
        for k in range(start, stop):
            tk = times[k]
            ok = model.in_domain(x, tk) & alive
            if not ok.all():
                if on_exit == "abort":
                    bad = int(np.argmin(ok | ~alive))
                    if alive[bad]:
                        raise DomainError(
                            f"sample {indices[bad]} left the domain at t={tk:.6g}",
                            coordinate=x[bad].copy(), time=tk)
                alive &= ok
            xa = x[alive]
            drift = model.velocity(xa, tk)
            xa = xa + h * drift
            if eps > 0:
                noise = np.einsum("mij,mj->mi", model.diffusion(x[alive], tk),
                                  dW[k - start][alive])
                xa = xa + eps * noise
            x[alive] = xa
            if linear:
                dev = lin - c[k]
                step = h * (uc[k] + dev @ G[k].T)
                if eps > 0:
                    step = step + eps * (dW[k - start] @ S[k].T)
                lin = lin + step
    return x, lin, alive


def simulate(model, xi0, t, cfg, linear=True):
    """Simulate ``cfg.samples`` realizations of the full (and linearized) SDE.

    Returns ``(x_states, l_states, alive)`` as raw arrays of shape
    ``(N, n)``; ``l_states`` is ``None`` when ``linear`` is false.
    """
    xi0 = np.asarray(xi0, dtype=float)
    if xi0.shape != (model.n,):
        raise InvalidInputError(f"xi0 must have shape ({model.n},)")
    if not 0 < t <= model.time_domain[1]:
        raise InvalidInputError(f"horizon {t} outside model time domain")
    steps = max(1, int(math.ceil(t / cfg.em_step - 1e-9)))
    h = t / steps
    times = [k * h for k in range(steps)]
    psi = matops.cholesky(cfg.scales.shape(model.n))
    path = _center_path(model, xi0, times, h) if linear else (None,) * 4

    chunks = [range(lo, min(lo + SAMPLE_CHUNK, cfg.samples))
              for lo in range(0, cfg.samples, SAMPLE_CHUNK)]

    def run(idx):
        return _simulate_chunk(model, xi0, psi, cfg.scales, cfg.seed, idx, times, h,
                               path, linear, cfg.on_exit)

    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(idx) for idx in chunks]
    x = np.concatenate([p[0] for p in parts])
    lin = np.concatenate([p[1] for p in parts]) if linear else None
    alive = np.concatenate([p[2] for p in parts])
    return x, lin, alive


def simulate_pair(model, xi0, t, cfg):
    """Ensembles of the full solution ``x_t`` and the linearized ``l_t``.

    Samples that leave the domain are dropped from both ensembles when
    ``cfg.on_exit == "skip"``; the count is reported in ``Ensemble.skipped``.
    """
    x, lin, alive = simulate(model, xi0, t, cfg, linear=True)
    skipped = int(np.count_nonzero(~alive))
    return (Ensemble.from_states(x[alive], skipped),
            Ensemble.from_states(lin[alive], skipped))


def projection_variance_sup(ens, center, scale):
    """Largest variance of ``p . (state - center) / scale`` over unit ``p``.

    This is the top eigenvalue of the empirical covariance of the scaled
    deviations.
    """
    if not scale > 0:
        raise InvalidInputError("scale must be positive")
    states = np.asarray(ens.final_states if isinstance(ens, Ensemble) else ens)
    if states.shape[0] < 2:
        raise EstimationError("need at least 2 samples")
    dev = (states - np.asarray(center, dtype=float)) / scale
    dev = dev - dev.mean(axis=0)
    cov = dev.T @ dev / (states.shape[0] - 1)
    vals, _ = matops.sym_eig(cov)
    return max(float(vals[0]), 0.0)


@dataclass
class ValidationReport:
    cov_rel_error: float
    mean_abs_error: float
    predicted_mean: np.ndarray
    predicted_cov: np.ndarray
    empirical_mean: np.ndarray
    empirical_cov: np.ndarray
    skipped: int = 0


def gaussian_validation(model, xi0, t, cfg, integrator=None):
    """Compare the simulated law of ``x_t`` with the linearized Gaussian.

    ``cov_rel_error`` is ``||C_emp - C_pred||_F / ||C_pred||_F`` and
    ``mean_abs_error`` the largest absolute component error of the mean.
    """
    sol = solve_flow(model, xi0, t, integrator or IntegratorConfig())
    mean, cov = gaussian_predictive(sol, cfg.scales)
    x, _, alive = simulate(model, xi0, t, cfg, linear=False)
    ens = Ensemble.from_states(x[alive], int(np.count_nonzero(~alive)))
    denom = np.linalg.norm(cov)
    diff = np.linalg.norm(ens.covariance - cov)
    rel = diff / denom if denom > 0 else (0.0 if diff == 0 else np.inf)
    return ValidationReport(float(rel), float(np.max(np.abs(ens.mean - mean))),
                            mean, cov, ens.mean, ens.covariance, ens.skipped)


# --- moment scaling study ----------------------------------------------------

MIN_LEVELS = 4
MIN_DECADES = 1.5
ZERO_MOMENT = 1e-12


@dataclass
class ScalingFit:
    order: float
    slope: float
    residual: float
    status: str    # "ok", "inconclusive" or "degenerate-zero"


@dataclass
class ScalingStudy:
    axis: str
    rows: list     # (scale, r, moment, stderr)
    fits: dict     # r -> ScalingFit

    def to_csv(self, header_lines=()):
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        for r, fit in self.fits.items():
            buf.write(f"# fit r={r:.17g} slope={fit.slope:.17g} "
                      f"residual={fit.residual:.17g} status={fit.status}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scale", "r", "moment", "stderr"])
        for row in self.rows:
            writer.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()


def _check_levels(levels):
    levels = sorted(float(v) for v in levels)
    if len(levels) < MIN_LEVELS or levels[0] <= 0:
        raise InvalidInputError(f"insufficient levels: need >= {MIN_LEVELS} positive scales")
    if math.log10(levels[-1] / levels[0]) < MIN_DECADES - 1e-9:
        raise InvalidInputError(
            f"insufficient levels: scales must span >= {MIN_DECADES} decades")
    return levels


def bound_scaling_study(model, xi0, t, axis, levels, r_orders, cfg):
    """Fit log-log slopes of ``E||x_t - l_t||^r`` against ``eps`` or ``delta``.

    ``axis="eps_only"`` sweeps ``eps`` with ``delta = 0``; ``"delta_only"``
    sweeps ``delta`` with ``eps = 0``. Every level reuses ``cfg.seed``
    (common random numbers), which keeps the fitted slope smooth.
    """
    if axis not in ("eps_only", "delta_only"):
        raise InvalidInputError(f"unknown axis {axis!r}")
    levels = _check_levels(levels)
    orders = [float(r) for r in r_orders]
    if not orders or min(orders) < 1:
        raise InvalidInputError("moment orders must be >= 1")

    rows, by_order = [], {r: [] for r in orders}
    for level in levels:
        if axis == "eps_only":
            scales = replace(cfg.scales, eps=level, delta=0.0)
        else:
            scales = replace(cfg.scales, eps=0.0, delta=level)
        x, lin, alive = simulate(model, xi0, t, replace(cfg, scales=scales))
        dist = np.linalg.norm(x[alive] - lin[alive], axis=1)
        for r in orders:
            vals = dist ** r
            moment = float(vals.mean())
            stderr = float(vals.std(ddof=1) / math.sqrt(vals.size))
            rows.append((level, r, moment, stderr))
            by_order[r].append(moment)

    fits = {}
    log_s = np.log(levels)
    for r, moments in by_order.items():
        moments = np.asarray(moments)
        if np.all(moments ** (1.0 / r) <= ZERO_MOMENT):
            fits[r] = ScalingFit(r, float("nan"), float("nan"), "degenerate-zero")
            continue
        if np.any(moments <= 0):
            fits[r] = ScalingFit(r, float("nan"), float("nan"), "inconclusive")
            continue
        coef, res, *_ = np.polyfit(log_s, np.log(moments), 1, full=True)
        residual = float(np.sqrt(res[0] / len(levels))) if res.size else 0.0
        status = "ok" if np.all(np.diff(moments) > 0) else "inconclusive"
        fits[r] = ScalingFit(r, float(coef[0]), residual, status)
    return ScalingStudy(axis, rows, fits)
