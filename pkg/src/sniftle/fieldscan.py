"""Measure fields over rectangular grids of initial conditions.

Grid points are integrated in fixed-size chunks (independent of the worker
count) so that results are bitwise identical however the chunks are
scheduled. Each chunk is integrated once to the largest horizon with the
intermediate horizons captured on the way.
"""

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import matops
from .errors import (ConditioningError, DomainError, InvalidInputError, NumericError,
                     ResumeError)
from .flowmap import IntegratorConfig, solve_flow_times
from .measures import MeasureRecord, record_from_solution

POINT_CHUNK = 1024
MEASURES = ("ftle", "sniftle", "s2", "q2")

PENDING, OK, DOMAIN_EXIT, NUMERIC_FAILURE = -1, 0, 1, 2
STATUS_NAMES = {PENDING: "pending", OK: "ok", DOMAIN_EXIT: "domain_exit",
                NUMERIC_FAILURE: "numeric_failure"}
BINARY_MAGIC = b"SNFK1"


class ScanAborted(NumericError):
    def __init__(self, message, point, cause):
        self.point = point
        self.cause = cause
        super().__init__(message)


@dataclass(frozen=True)
class ScanSpec:
    """Grid ``[(min, max, count), ...]`` per axis and the horizons to record."""
    model: object
    grid: tuple
    times: tuple
    xi_cov: np.ndarray = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    failure_policy: str = "record_nan"

    def __post_init__(self):
        grid = tuple((float(lo), float(hi), int(c)) for lo, hi, c in self.grid)
        if len(grid) != self.model.n:
            raise InvalidInputError(f"grid needs {self.model.n} axes, got {len(grid)}")
        for lo, hi, c in grid:
            if c < 1 or not lo < hi:
                raise InvalidInputError("each axis needs count >= 1 and min < max")
        times = tuple(float(t) for t in self.times)
        if not times or any(not 0 < t <= self.model.time_domain[1] for t in times):
            raise InvalidInputError("scan times must lie in (0, T]")
        xi = np.eye(self.model.n) if self.xi_cov is None else np.asarray(self.xi_cov, float)
        matops.cholesky(xi)
        if self.failure_policy not in ("record_nan", "abort"):
            raise InvalidInputError(f"unknown failure policy {self.failure_policy!r}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "xi_cov", xi)

    def axes(self):
        return [np.linspace(lo, hi, c) if c > 1 else np.array([lo]) for lo, hi, c in self.grid]

    def points(self):
        """Grid points in row-major order (last axis fastest)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.model.n)

    @property
    def shape(self):
        return tuple(c for _, _, c in self.grid)

    def describe(self):
        cfg = self.integrator
        return {"model": self.model.descriptor, "grid": [list(g) for g in self.grid],
                "times": list(self.times), "xi_cov": self.xi_cov.tolist(),
                "integrator": {"step_size": cfg.step_size, "scheme": cfg.scheme,
                               "jacobian_inverse_mode": cfg.jacobian_inverse_mode,
                               "defect_threshold": cfg.defect_threshold},
                "failure_policy": self.failure_policy}

    def digest(self):
        text = json.dumps(self.describe(), sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class FieldResult:
    """Measures per (grid point, time): ``values[p, k, j]`` holds measure
    ``MEASURES[j]`` at point ``p`` and time ``spec.times[k]``."""
    spec: ScanSpec
    spec_hash: str
    values: np.ndarray
    status: np.ndarray

    @classmethod
    def empty(cls, spec):
        npts = int(np.prod(spec.shape))
        shape = (npts, len(spec.times))
        return cls(spec, spec.digest(), np.full(shape + (len(MEASURES),), np.nan),
                   np.full(shape, PENDING, dtype=np.int8))

    @property
    def failure_mask(self):
        return (self.status != OK) & (self.status != PENDING)

    @property
    def complete(self):
        return not np.any(self.status == PENDING)

    def field(self, measure, time_index=0):
        """One measure at one horizon, reshaped to the grid."""
        j = MEASURES.index(measure)
        return self.values[:, time_index, j].reshape(self.spec.shape)

    @property
    def records(self):
        pts = self.spec.points()
        out = []
        for p, xi0 in enumerate(pts):
            for k, t in enumerate(self.spec.times):
                out.append(MeasureRecord(xi0, t, *self.values[p, k]))
        return out

    def save(self, path):
        np.savez(path, values=self.values, status=self.status,
                 spec_hash=np.array(self.spec_hash))

    @classmethod
    def load(cls, path, spec):
        with np.load(path) as z:
            result = cls(spec, str(z["spec_hash"]), z["values"].copy(), z["status"].copy())
        return result


def _chunk_ranges(npts):
    return [(lo, min(lo + POINT_CHUNK, npts)) for lo in range(0, npts, POINT_CHUNK)]


def _evaluate(spec, pts):
    """Values and status for a batch of points; raises on any failure."""
    sols = solve_flow_times(spec.model, pts, spec.times, spec.integrator)
    vals = np.empty((pts.shape[0], len(spec.times), len(MEASURES)))
    status = np.full((pts.shape[0], len(spec.times)), OK, dtype=np.int8)
    for k, sol in enumerate(sols):
        rec = record_from_solution(sol, spec.xi_cov)
        vals[:, k] = np.stack([np.asarray(getattr(rec, m)) for m in MEASURES], axis=-1)
        bad = np.asarray(sol.consistency_defect) > spec.integrator.defect_threshold
        status[bad, k] = NUMERIC_FAILURE
        vals[bad, k] = np.nan
    return vals, status


def _run_chunk(spec, pts):
    try:
        return _evaluate(spec, pts), None
    except (DomainError, NumericError):
        if pts.shape[0] == 1:
            raise
    # isolate failing points one by one
    vals = np.full((pts.shape[0], len(spec.times), len(MEASURES)), np.nan)
    status = np.empty((pts.shape[0], len(spec.times)), dtype=np.int8)
    first_error = None
    for i in range(pts.shape[0]):
        try:
            vals[i:i + 1], status[i:i + 1] = _evaluate(spec, pts[i:i + 1])
        except DomainError as exc:
            status[i] = DOMAIN_EXIT
            first_error = first_error or (i, exc)
        except NumericError as exc:
            status[i] = NUMERIC_FAILURE
            first_error = first_error or (i, exc)
    return (vals, status), first_error


def _fill(result, workers, limit=None):
    spec = result.spec
    pts = spec.points()
    todo = [(lo, hi) for lo, hi in _chunk_ranges(pts.shape[0])
            if np.any(result.status[lo:hi] == PENDING)]
    if limit is not None:
        todo = todo[:limit]

    def work(rng):
        lo, hi = rng
        try:
            (vals, status), err = _run_chunk(spec, pts[lo:hi])
        except (DomainError, NumericError) as exc:
            vals = np.full((hi - lo, len(spec.times), len(MEASURES)), np.nan)
            status = np.full((hi - lo, len(spec.times)),
                             DOMAIN_EXIT if isinstance(exc, DomainError) else NUMERIC_FAILURE,
                             dtype=np.int8)
            err = (0, exc)
        return lo, hi, vals, status, err

    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(workers) as pool:
            outputs = list(pool.map(work, todo))
    else:
        outputs = [work(rng) for rng in todo]

    failures = []
    for lo, hi, vals, status, err in outputs:
        result.values[lo:hi] = vals
        result.status[lo:hi] = status
        bad = np.flatnonzero(np.any((status != OK), axis=1))
        if bad.size:
            failures.append((lo + int(bad[0]), err[1] if err else None))
    if spec.failure_policy == "abort" and failures:
        p, cause = min(failures, key=lambda f: f[0])
        point = pts[p]
        reason = cause if cause is not None else ConditioningError(
            "consistency defect above threshold", defect=np.nan)
        raise ScanAborted(f"scan aborted at grid point {point.tolist()}: {reason}",
                          point, reason)
    return result


def run_scan(spec, workers=1, limit=None):
    """Evaluate every (grid point, time) of ``spec``.

    ``limit`` caps the number of point chunks processed, leaving the rest
    marked pending; :func:`checkpoint_and_resume` completes such a result.
    """
    return _fill(FieldResult.empty(spec), max(1, int(workers)), limit)


def checkpoint_and_resume(partial, spec, workers=1):
    """Complete the pending records of ``partial``; rejects a different spec."""
    if partial.spec_hash != spec.digest():
        raise ResumeError("partial result was produced by a different scan spec")
    result = FieldResult(spec, partial.spec_hash, partial.values.copy(),
                         partial.status.copy())
    return _fill(result, max(1, int(workers)))


# --- output formats ----------------------------------------------------------

def _columns(spec):
    return ([f"x{i + 1}" for i in range(spec.model.n)] + ["t"] + list(MEASURES)
            + ["status"])


def _rows(result):
    pts = result.spec.points()
    for p, xi0 in enumerate(pts):
        for k, t in enumerate(result.spec.times):
            yield xi0, t, result.values[p, k], int(result.status[p, k])


def write_field_csv(result, path, header_lines=()):
    """Delimited text: ``# ``-prefixed provenance lines, a header row, then
    one row per record ordered by grid point, then time."""
    fmt = "{:.17g}".format
    with open(path, "w", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(_columns(result.spec)) + "\n")
        for xi0, t, vals, st in _rows(result):
            cells = [fmt(v) for v in xi0] + [fmt(t)] + [fmt(v) for v in vals]
            fh.write(",".join(cells + [STATUS_NAMES[st]]) + "\n")


def write_field_binary(result, path, meta=None):
    """Binary dump: ``b"SNFK1"``, a little-endian uint64 byte length, a UTF-8
    JSON header, then the records as little-endian float64 rows with the
    columns listed in the header (status stored as its integer code)."""
    cols = _columns(result.spec)
    rows = [list(xi0) + [t] + list(vals) + [float(st)] for xi0, t, vals, st in _rows(result)]
    data = np.asarray(rows, dtype="<f8").reshape(-1, len(cols))
    header = json.dumps({"columns": cols, "rows": data.shape[0],
                         "status_codes": {str(k): v for k, v in STATUS_NAMES.items()},
                         "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(data.tobytes())


def read_field_binary(path):
    """Return ``(header_dict, array)`` from a file written by
    :func:`write_field_binary`."""
    with open(path, "rb") as fh:
        if fh.read(len(BINARY_MAGIC)) != BINARY_MAGIC:
            raise InvalidInputError(f"{path} is not a SNFK1 file")
        (size,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(size).decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    return header, data.reshape(header["rows"], len(header["columns"]))


def summarize(result):
    """Min and max of each measure over successful records plus failure count."""
    ok = result.status == OK
    summary = {}
    for j, name in enumerate(MEASURES):
        vals = result.values[..., j][ok]
        summary[name] = (float(vals.min()), float(vals.max())) if vals.size else (np.nan, np.nan)
    summary["failures"] = int(np.count_nonzero(result.failure_mask))
    return summary
