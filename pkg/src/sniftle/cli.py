"""Command-line front end: ``sniftle {point,scan,validate,bound-study}``.

Exit codes: 0 success, 1 validation tolerances not met, 2 configuration
error, 3 numerical failure, 4 I/O failure.
"""

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError, InvalidInputError, SniftleError
from .fieldscan import (ScanSpec, run_scan, summarize, write_field_binary,
                        write_field_csv)
from .flowfield import builtin_model, load_gridded, model_from_grid
from .flowmap import IntegratorConfig, solve_flow
from .measures import record_from_solution
from .montecarlo import (McConfig, _check_levels, bound_scaling_study,
                         gaussian_validation, projection_variance_sup, simulate)
from .uqcov import UncertaintyScales, covariance

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4


def fmt(value):
    # shortest string that round-trips to the same double
    return repr(float(value))


def fmt_array(a):
    a = np.asarray(a)
    if a.ndim == 1:
        return "[" + ", ".join(fmt(v) for v in a) + "]"
    return "[" + ", ".join(fmt_array(row) for row in a) + "]"


class Run:
    """Objects shared by every subcommand, built from the config file."""

    def __init__(self, args):
        self.args = args
        self.cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("must fit in an unsigned 64-bit integer", "--seed")
            self.cfg.seed = args.seed
        self.model = self._model()
        self.xi_cov = self.cfg.xi_cov(self.model.n)
        if self.xi_cov.shape != (self.model.n, self.model.n):
            raise ConfigError(f"must be {self.model.n}x{self.model.n}", "scales.xi_cov")
        s = self.cfg.scales
        self.scales = UncertaintyScales(s.eps, s.delta, self.xi_cov)
        g = self.cfg.integrator
        self.integrator = IntegratorConfig(g.step_size, g.scheme, g.jacobian_inverse_mode,
                                           g.defect_threshold)
        self.workers = resolve_workers(args.workers)

    def _model(self):
        m = self.cfg.model
        diffusion = m.diffusion
        if m.builtin is not None:
            return builtin_model(m.builtin, diffusion=diffusion, **m.params)
        if m.params:
            raise ConfigError("parameters apply to builtin models only", "model.params")
        try:
            data = load_gridded(m.gridded)
        except OSError as exc:
            raise ConfigError(f"cannot read gridded data: {exc}", "model.gridded") from None
        except InvalidInputError as exc:
            raise ConfigError(str(exc), "model.gridded") from None
        model = model_from_grid(data, m.out_of_domain)
        if diffusion != "identity":
            model = model.with_diffusion(diffusion)
        return model

    def provenance(self):
        return (f"sniftle {__version__} config_sha256={self.cfg.digest()} "
                f"seed={self.cfg.seed}")

    def point(self):
        p = self.cfg.point
        xi0 = self.args.xi0 if self.args.xi0 is not None else (p.xi0 if p else None)
        t = self.args.time if self.args.time is not None else (p.t if p else None)
        if xi0 is None:
            raise ConfigError("initial condition required (point.xi0 or --xi0)", "point.xi0")
        if t is None or not t > 0:
            raise ConfigError("positive horizon required (point.t or --time)", "point.t")
        if len(xi0) != self.model.n:
            raise ConfigError(f"expected {self.model.n} components", "point.xi0")
        return np.asarray(xi0, dtype=float), float(t)

    def output_path(self, required=True):
        out = self.cfg.output
        path = self.args.output or (out.path if out else None)
        if path is None and required:
            raise ConfigError("no output path (output.path or --output)", "output.path")
        return path

    def mc_config(self, scales=None):
        mc = self.cfg.montecarlo
        if mc is None:
            raise ConfigError("missing required section", "montecarlo")
        return McConfig(mc.samples, mc.em_step, self.cfg.seed, scales or self.scales,
                        mc.on_exit, self.workers)


def resolve_workers(flag):
    if flag is not None:
        if flag < 1:
            raise ConfigError("must be >= 1", "--workers")
        return flag
    env = os.environ.get("SNIFTLE_WORKERS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"not an integer: {env!r}", "SNIFTLE_WORKERS") from None
        if value < 1:
            raise ConfigError("must be >= 1", "SNIFTLE_WORKERS")
        return value
    return os.cpu_count() or 1


def cmd_point(run, out):
    xi0, t = run.point()
    sol = solve_flow(run.model, xi0, t, run.integrator)
    rec = record_from_solution(sol, run.xi_cov)
    cov = covariance(sol, run.scales)
    lines = [f"# {run.provenance()}",
             f"xi0 = {fmt_array(xi0)}", f"t = {fmt(t)}",
             f"position = {fmt_array(sol.position)}",
             f"ftle = {fmt(rec.ftle)}", f"sniftle = {fmt(rec.sniftle)}",
             f"s2 = {fmt(rec.s2)}", f"q2 = {fmt(rec.q2)}",
             f"consistency_defect = {fmt(sol.consistency_defect)}",
             f"eps = {fmt(run.scales.eps)}", f"delta = {fmt(run.scales.delta)}",
             f"ic_term = {fmt_array(cov.ic_term)}",
             f"noise_term = {fmt_array(cov.noise_term)}",
             f"total = {fmt_array(cov.total)}"]
    text = "\n".join(lines) + "\n"
    out.write(text)
    path = run.output_path(required=False)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_scan(run, out):
    sc = run.cfg.scan
    if sc is None:
        raise ConfigError("missing required section", "scan")
    path = run.output_path()
    spec = ScanSpec(run.model, sc.grid, sc.times, run.xi_cov, run.integrator,
                    sc.failure_policy)
    result = run_scan(spec, workers=run.workers)
    fmt_name = run.cfg.output.format if run.cfg.output else "csv"
    if fmt_name == "binary":
        write_field_binary(result, path, {"provenance": run.provenance()})
    else:
        write_field_csv(result, path, [run.provenance()])
    summary = summarize(result)
    out.write(f"# {run.provenance()}\n")
    out.write(f"records = {result.values.shape[0] * result.values.shape[1]}\n")
    for name in ("ftle", "sniftle", "s2", "q2"):
        lo, hi = summary[name]
        out.write(f"{name}: min = {fmt(lo)} max = {fmt(hi)}\n")
    ftle_field = np.where(result.status == 0, result.values[..., 0], -np.inf)
    if np.isfinite(ftle_field).any():
        p, k = np.unravel_index(np.argmax(ftle_field), ftle_field.shape)
        cell = np.unravel_index(p, spec.shape)
        out.write(f"max_ftle_cell = {list(map(int, cell))} t = {fmt(spec.times[k])}\n")
    out.write(f"failures = {summary['failures']}\n")
    return EXIT_OK


def cmd_validate(run, out):
    xi0, t = run.point()
    mc = run.cfg.montecarlo
    if mc is None:
        raise ConfigError("missing required section", "montecarlo")
    cfg = run.mc_config()
    sol = solve_flow(run.model, xi0, t, run.integrator)
    rec = record_from_solution(sol, run.xi_cov)
    report = gaussian_validation(run.model, xi0, t, cfg, run.integrator)
    lines = [f"# {run.provenance()}",
             f"samples = {cfg.samples}", f"skipped = {report.skipped}",
             f"cov_rel_error = {fmt(report.cov_rel_error)}",
             f"mean_abs_error = {fmt(report.mean_abs_error)}"]
    passed = report.cov_rel_error <= mc.cov_tol
    lines.append(f"gaussian_covariance: {'PASS' if passed else 'FAIL'} "
                 f"(tol {fmt(mc.cov_tol)})")

    checks = []
    if run.scales.eps > 0:
        checks.append(("s2", rec.s2, replace(run.scales, delta=0.0), run.scales.eps))
    if run.scales.delta > 0:
        checks.append(("q2", rec.q2, replace(run.scales, eps=0.0), run.scales.delta))
    for name, exact, scales, scale in checks:
        x, _, alive = simulate(run.model, xi0, t, replace(cfg, scales=scales),
                               linear=False)
        est = projection_variance_sup(x[alive], sol.position, scale)
        rel = abs(est - exact) / exact if exact > 0 else abs(est)
        ok = rel <= mc.proj_tol
        passed &= ok
        lines += [f"{name}_analytic = {fmt(exact)}", f"{name}_montecarlo = {fmt(est)}",
                  f"{name}_rel_error = {fmt(rel)}",
                  f"{name}_projection: {'PASS' if ok else 'FAIL'} (tol {fmt(mc.proj_tol)})"]
    lines.append(f"result = {'PASS' if passed else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    out.write(text)
    path = run.output_path(required=False)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_bound_study(run, out):
    st = run.cfg.study
    if st is None:
        raise ConfigError("missing required section", "study")
    try:
        _check_levels(st.levels)
    except InvalidInputError as exc:
        raise ConfigError(str(exc), "study.levels") from None
    xi0, t = run.point()
    path = run.output_path()
    study = bound_scaling_study(run.model, xi0, t, st.axis, st.levels, st.orders,
                                run.mc_config())
    text = study.to_csv([run.provenance(), f"axis={st.axis}"])
    with open(path, "w") as fh:
        fh.write(text)
    out.write(f"# {run.provenance()}\n")
    for r, fit in study.fits.items():
        out.write(f"r = {fmt(r)} slope = {fmt(fit.slope)} residual = {fmt(fit.residual)} "
                  f"status = {fit.status}\n")
    return EXIT_OK


COMMANDS = {"point": cmd_point, "scan": cmd_scan, "validate": cmd_validate,
            "bound-study": cmd_bound_study}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sniftle", description="FTLE, SNIFTLE, S^2 and Q^2 for uncertain flows.")
    parser.add_argument("--version", action="version", version=f"sniftle {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--output", help="output path (overrides output.path)")
        p.add_argument("--workers", type=int, help="worker threads "
                       "(default: $SNIFTLE_WORKERS or CPU count)")
        p.add_argument("--seed", type=int, help="random seed (overrides config)")
        if name in ("point", "validate", "bound-study"):
            p.add_argument("--xi0", type=float, nargs="+", help="initial condition")
            p.add_argument("--time", type=float, help="horizon t")
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    for attr in ("xi0", "time"):
        if not hasattr(args, attr):
            setattr(args, attr, None)
    try:
        run = Run(args)
        return COMMANDS[args.command](run, out)
    except (ConfigError, InvalidInputError) as exc:
        print(f"sniftle: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"sniftle: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SniftleError as exc:
        print(f"sniftle: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
