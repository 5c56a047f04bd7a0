"""System models ``dx = u(x, t) dt + eps * sigma(x, t) dW``.

A :class:`SystemModel` bundles the drift ``u``, its spatial gradient and
the diffusion matrix ``sigma``. All three callables are *batched*: they
take positions of shape ``(m, n)`` and a scalar time and return arrays of
shape ``(m, n)`` or ``(m, n, n)``.
"""

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, InvalidInputError


class SystemModel:
    """Drift, drift gradient and diffusion for an ``n``-dimensional system.

    Parameters
    ----------
    n : int
        State dimension.
    velocity, velocity_gradient : callable
        ``f(x, t)`` with ``x`` of shape ``(m, n)``; return ``(m, n)`` and
        ``(m, n, n)`` respectively. ``velocity_gradient[..., i, j]`` is
        ``d u_i / d x_j``.
    diffusion : callable, optional
        ``sigma(x, t)`` returning ``(m, n, n)``. Defaults to the identity.
    time_domain : (float, float)
        Times on which the model is defined.
    descriptor : dict
        JSON-serializable description, used for provenance and hashing.
    in_domain : callable, optional
        ``mask(x, t)`` returning a boolean array of shape ``(m,)``.
    """

    def __init__(self, n, velocity, velocity_gradient, diffusion=None,
                 time_domain=(0.0, np.inf), descriptor=None, in_domain=None):
        if int(n) < 1:
            raise InvalidInputError("dimension must be >= 1")
        self.n = int(n)
        self._velocity = velocity
        self._gradient = velocity_gradient
        self._diffusion = diffusion if diffusion is not None else _identity_diffusion(self.n)
        self.time_domain = (float(time_domain[0]), float(time_domain[1]))
        self.descriptor = dict(descriptor or {"name": "custom"})
        self._in_domain = in_domain

    def __repr__(self):
        return f"SystemModel(n={self.n}, descriptor={self.descriptor!r})"

    def _flat(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise InvalidInputError(
                f"expected points of dimension {self.n}, got shape {x.shape}")
        return x.reshape(-1, self.n), x.shape[:-1]

    def velocity(self, x, t):
        flat, lead = self._flat(x)
        return np.asarray(self._velocity(flat, float(t))).reshape(lead + (self.n,))

    def gradient(self, x, t):
        flat, lead = self._flat(x)
        g = np.asarray(self._gradient(flat, float(t)))
        return g.reshape(lead + (self.n, self.n))

    def diffusion(self, x, t):
        flat, lead = self._flat(x)
        s = np.asarray(self._diffusion(flat, float(t)), dtype=float)
        s = np.broadcast_to(s, (flat.shape[0], self.n, self.n))
        return s.reshape(lead + (self.n, self.n))

    def in_domain(self, x, t):
        flat, lead = self._flat(x)
        if self._in_domain is None:
            mask = np.all(np.isfinite(flat), axis=1)
        else:
            mask = np.asarray(self._in_domain(flat, float(t)), dtype=bool)
        return mask.reshape(lead)

    def with_diffusion(self, diffusion):
        """Copy of this model with a different diffusion specification."""
        sigma, desc = _diffusion_callable(diffusion, self.n)
        descriptor = dict(self.descriptor, diffusion=desc)
        return SystemModel(self.n, self._velocity, self._gradient, sigma,
                           self.time_domain, descriptor, self._in_domain)


def _identity_diffusion(n):
    eye = np.eye(n)

    def sigma(x, t):
        return np.broadcast_to(eye, (x.shape[0], n, n))
    return sigma


def _diffusion_callable(spec, n):
    if spec is None or (isinstance(spec, str) and spec == "identity"):
        return _identity_diffusion(n), "identity"
    if isinstance(spec, str):
        raise ConfigError(f"unknown diffusion specification {spec!r}", "diffusion")
    if callable(spec):
        return spec, "state_dependent"
    s0 = np.asarray(spec, dtype=float)
    if s0.ndim == 0:
        s0 = s0 * np.eye(n)
    if s0.shape != (n, n) or not np.all(np.isfinite(s0)):
        raise ConfigError(f"constant diffusion must be a scalar or {n}x{n} matrix",
                          "diffusion")

    def sigma(x, t):
        return np.broadcast_to(s0, (x.shape[0], n, n))
    return sigma, s0.tolist()


# --- analytic fixtures -------------------------------------------------------

def zero_model(n=2, diffusion="identity"):
    def u(x, t):
        return np.zeros_like(x)

    def grad(x, t):
        return np.zeros((x.shape[0], n, n))

    sigma, desc = _diffusion_callable(diffusion, n)
    return SystemModel(n, u, grad, sigma,
                       descriptor={"name": "zero", "n": n, "diffusion": desc})


def linear_saddle(a=1.0, diffusion="identity"):
    """``u(x) = (a x1, -a x2)``."""
    a = float(a)
    g0 = np.diag([a, -a])

    def u(x, t):
        return x * np.array([a, -a])

    def grad(x, t):
        return np.broadcast_to(g0, (x.shape[0], 2, 2)).copy()

    sigma, desc = _diffusion_callable(diffusion, 2)
    return SystemModel(2, u, grad, sigma,
                       descriptor={"name": "linear_saddle", "a": a, "diffusion": desc})


def rigid_rotation(omega=1.0, diffusion="identity"):
    """Counter-clockwise solid-body rotation ``u(x) = omega * (-x2, x1)``."""
    omega = float(omega)
    g0 = np.array([[0.0, -omega], [omega, 0.0]])

    def u(x, t):
        return omega * np.stack([-x[:, 1], x[:, 0]], axis=1)

    def grad(x, t):
        return np.broadcast_to(g0, (x.shape[0], 2, 2)).copy()

    sigma, desc = _diffusion_callable(diffusion, 2)
    return SystemModel(2, u, grad, sigma,
                       descriptor={"name": "rigid_rotation", "omega": omega,
                                   "diffusion": desc})


def double_gyre(A=0.1, eps=0.1, omega=np.pi / 5, diffusion="identity"):
    """Time-periodic double gyre on ``[0, 2] x [0, 1]``.

    Stream function ``psi = A sin(pi f(x, t)) sin(pi y)`` with
    ``f = a(t) x^2 + b(t) x``, ``a = eps sin(omega t)``, ``b = 1 - 2 a``.
    """
    A, eps, omega = float(A), float(eps), float(omega)

    def _f(x, t):
        a = eps * np.sin(omega * t)
        b = 1.0 - 2.0 * a
        X = x[:, 0]
        return a * X * X + b * X, 2.0 * a * X + b, 2.0 * a

    def u(x, t):
        f, fx, _ = _f(x, t)
        py = np.pi * x[:, 1]
        return np.stack([-np.pi * A * np.sin(np.pi * f) * np.cos(py),
                         np.pi * A * np.cos(np.pi * f) * np.sin(py) * fx], axis=1)

    def grad(x, t):
        f, fx, fxx = _f(x, t)
        py = np.pi * x[:, 1]
        sf, cf = np.sin(np.pi * f), np.cos(np.pi * f)
        sy, cy = np.sin(py), np.cos(py)
        k = np.pi * np.pi * A
        g = np.empty((x.shape[0], 2, 2))
        g[:, 0, 0] = -k * cf * fx * cy
        g[:, 0, 1] = k * sf * sy
        g[:, 1, 0] = np.pi * A * sy * (cf * fxx - np.pi * sf * fx * fx)
        g[:, 1, 1] = k * cf * fx * cy
        return g

    sigma, desc = _diffusion_callable(diffusion, 2)
    return SystemModel(2, u, grad, sigma,
                       descriptor={"name": "double_gyre", "A": A, "eps": eps,
                                   "omega": omega, "diffusion": desc})


_BUILTINS = {
    "zero": zero_model,
    "linear_saddle": linear_saddle,
    "rigid_rotation": rigid_rotation,
    "double_gyre": double_gyre,
}


def builtin_model(name, diffusion="identity", **params):
    """Look up an analytic model by name.

    >>> builtin_model("linear_saddle", a=2.0).gradient([0.0, 0.0], 0.0)
    array([[ 2.,  0.],
           [ 0., -2.]])
    """
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown builtin model {name!r}; "
                          f"choose from {sorted(_BUILTINS)}", "model.builtin") from None
    for key, value in params.items():
        if not np.all(np.isfinite(value)):
            raise ConfigError("parameter must be finite", f"model.params.{key}")
    try:
        return factory(diffusion=diffusion, **params)
    except TypeError as exc:
        raise ConfigError(str(exc), "model.params") from None


# --- gridded data ------------------------------------------------------------

@dataclass(frozen=True)
class GriddedField:
    """Velocity samples on a tensor-product space-time grid.

    ``velocity`` has shape ``(nt, n1, ..., nn, n)``; ``diffusion`` if given
    has shape ``(nt, n1, ..., nn, n, n)``.
    """
    axes: tuple
    times: np.ndarray
    velocity: np.ndarray
    diffusion: np.ndarray = None
    axis_names: tuple = field(default=None)

    def __post_init__(self):
        axes = tuple(np.asarray(ax, dtype=float) for ax in self.axes)
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        vel = np.asarray(self.velocity, dtype=float)
        n = len(axes)
        for i, ax in enumerate(axes):
            if ax.ndim != 1 or ax.size < 2 or np.any(np.diff(ax) <= 0):
                raise InvalidInputError(
                    f"axis {i} must be strictly increasing with >= 2 points")
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise InvalidInputError("time coordinates must be strictly increasing")
        expected = (times.size,) + tuple(ax.size for ax in axes) + (n,)
        if vel.shape != expected:
            raise InvalidInputError(
                f"velocity shape {vel.shape} does not match grid {expected}")
        if not np.all(np.isfinite(vel)):
            raise InvalidInputError("velocity samples must be finite")
        diff = self.diffusion
        if diff is not None:
            diff = np.asarray(diff, dtype=float)
            if diff.shape != expected + (n,):
                raise InvalidInputError(
                    f"diffusion shape {diff.shape} does not match grid")
        names = self.axis_names or tuple(f"x{i + 1}" for i in range(n))
        for name, value in (("axes", axes), ("times", times), ("velocity", vel),
                            ("diffusion", diff), ("axis_names", tuple(names))):
            object.__setattr__(self, name, value)
        vel.setflags(write=False)
        if diff is not None:
            diff.setflags(write=False)

    @property
    def n(self):
        return len(self.axes)


class _GridInterpolant:
    """Multilinear interpolation in space and linear interpolation in time."""

    def __init__(self, data, out_of_domain):
        self.data = data
        self.clamp = out_of_domain == "clamp"
        self.corners = list(itertools.product((0, 1), repeat=data.n))

    def _time_weights(self, t):
        times = self.data.times
        if times.size == 1:
            if not self.clamp and t != times[0]:
                raise DomainError(f"time {t} outside data times", coordinate=t, time=t)
            return [(0, 1.0)]
        if t < times[0] or t > times[-1]:
            if not self.clamp:
                raise DomainError(
                    f"time {t} outside data range [{times[0]}, {times[-1]}]",
                    coordinate=t, time=t)
            t = min(max(t, times[0]), times[-1])
        k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2))
        w = (t - times[k]) / (times[k + 1] - times[k])
        return [(k, 1.0 - w), (k + 1, w)]

    def _locate(self, x, t):
        idx, frac, inside = [], [], []
        for d, ax in enumerate(self.data.axes):
            xd = x[:, d]
            ok = (xd >= ax[0]) & (xd <= ax[-1])
            if not self.clamp and not ok.all():
                bad = x[np.argmin(ok)]
                raise DomainError(f"point {bad.tolist()} outside data grid",
                                  coordinate=bad, time=t)
            xd = np.clip(xd, ax[0], ax[-1])
            i = np.clip(np.searchsorted(ax, xd, side="right") - 1, 0, ax.size - 2)
            h = ax[i + 1] - ax[i]
            idx.append(i)
            frac.append((xd - ax[i]) / h)
            inside.append(ok)
        return idx, frac, inside

    def _combine(self, samples, x, t, derivative=None):
        """Interpolate ``samples`` (shape (nt, *grid, *tail)) at ``x``."""
        idx, frac, inside = self._locate(x, t)
        tail = samples.shape[1 + self.data.n:]
        out = np.zeros((x.shape[0],) + tail)
        for k, wt in self._time_weights(t):
            if wt == 0.0:
                continue
            slab = samples[k]
            for corner in self.corners:
                w = np.full(x.shape[0], wt)
                for d, c in enumerate(corner):
                    if d == derivative:
                        h = self.data.axes[d][idx[d] + 1] - self.data.axes[d][idx[d]]
                        w = w * ((1.0 if c else -1.0) / h)
                    else:
                        w = w * (frac[d] if c else 1.0 - frac[d])
                vals = slab[tuple(i + c for i, c in zip(idx, corner))]
                out += w.reshape((-1,) + (1,) * len(tail)) * vals
        if derivative is not None and self.clamp:
            out[~inside[derivative]] = 0.0
        return out

    def velocity(self, x, t):
        return self._combine(self.data.velocity, x, t)

    def gradient(self, x, t):
        cols = [self._combine(self.data.velocity, x, t, derivative=d)
                for d in range(self.data.n)]
        return np.stack(cols, axis=-1)

    def diffusion(self, x, t):
        return self._combine(self.data.diffusion, x, t)

    def in_domain(self, x, t):
        times = self.data.times
        t_ok = self.clamp or times[0] <= t <= times[-1]
        mask = np.all(np.isfinite(x), axis=1) & t_ok
        if not self.clamp:
            for d, ax in enumerate(self.data.axes):
                mask &= (x[:, d] >= ax[0]) & (x[:, d] <= ax[-1])
        return mask


def model_from_grid(data, out_of_domain="error"):
    """Build a :class:`SystemModel` that interpolates gridded samples.

    The drift gradient is the exact derivative of the interpolant, which is
    piecewise constant across cells in the differentiated direction. With
    ``out_of_domain="error"`` any query outside the grid raises
    :class:`DomainError`; ``"clamp"`` projects it onto the boundary.
    """
    if out_of_domain not in ("error", "clamp"):
        raise ConfigError(f"unknown out_of_domain policy {out_of_domain!r}",
                          "model.out_of_domain")
    interp = _GridInterpolant(data, out_of_domain)
    sigma = interp.diffusion if data.diffusion is not None else None
    t_end = data.times[-1] if out_of_domain == "error" else np.inf
    desc = {"name": "gridded", "axes": [ax.size for ax in data.axes],
            "times": data.times.size, "out_of_domain": out_of_domain,
            "diffusion": "gridded" if sigma else "identity"}
    return SystemModel(data.n, interp.velocity, interp.gradient, sigma,
                       time_domain=(0.0, float(t_end)), descriptor=desc,
                       in_domain=interp.in_domain)


def sample_model_on_grid(model, axes, times):
    """Tabulate an analytic model's velocity (and diffusion) on a grid."""
    axes = [np.asarray(ax, dtype=float) for ax in axes]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, len(axes))
    vel = np.stack([model.velocity(pts, t).reshape(mesh.shape) for t in times])
    return GriddedField(tuple(axes), np.asarray(times, dtype=float), vel)


def load_gridded(path):
    """Read a :class:`GriddedField` from disk.

    Delimited text (``.csv``, ``.tsv``, ``.txt``) needs one header line naming
    the columns ``t, x1..xn, u1..un`` and optionally ``s11..snn`` for the
    diffusion matrix; one row per space-time node, in any order. ``.npz``
    containers hold ``t``, ``x1..xn``, ``velocity`` with dimension order
    ``(time, x1, ..., xn, component)`` and optionally ``diffusion``.
    """
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as z:
            n = sum(1 for k in z.files if k.startswith("x") and k[1:].isdigit())
            axes = tuple(z[f"x{i + 1}"] for i in range(n))
            diff = z["diffusion"] if "diffusion" in z.files else None
            return GriddedField(axes, z["t"], z["velocity"], diff)

    delimiter = "\t" if path.suffix == ".tsv" else ","
    with open(path) as fh:
        header = [h.strip() for h in fh.readline().split(delimiter)]
        table = np.loadtxt(fh, delimiter=delimiter, ndmin=2)
    if table.shape[1] != len(header):
        raise InvalidInputError(f"{path}: header names {len(header)} columns, "
                                f"rows have {table.shape[1]}")
    col = {name: table[:, i] for i, name in enumerate(header)}
    n = sum(1 for h in header if h.startswith("x") and h[1:].isdigit())
    need = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(n)]
    missing = [c for c in need if c not in col]
    if n == 0 or missing:
        raise InvalidInputError(f"{path}: missing columns {missing or ['x1']}")

    coords = [col["t"]] + [col[f"x{i + 1}"] for i in range(n)]
    uniq, inv = zip(*(np.unique(c, return_inverse=True) for c in coords))
    shape = tuple(u.size for u in uniq)
    if int(np.prod(shape)) != table.shape[0]:
        raise InvalidInputError(f"{path}: rows do not form a complete tensor grid")
    flat = np.ravel_multi_index(inv, shape)
    if np.unique(flat).size != flat.size:
        raise InvalidInputError(f"{path}: duplicate grid nodes")
    vel = np.empty(shape + (n,))
    vel.reshape(-1, n)[flat] = np.stack([col[f"u{i + 1}"] for i in range(n)], axis=1)
    diff = None
    sig_cols = [f"s{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    if all(c in col for c in sig_cols):
        diff = np.empty(shape + (n, n))
        diff.reshape(-1, n * n)[flat] = np.stack([col[c] for c in sig_cols], axis=1)
    return GriddedField(tuple(uniq[1:]), uniq[0], vel, diff)


def save_gridded_csv(data, path):
    """Write ``data`` in the delimited-text layout read by :func:`load_gridded`."""
    n = data.n
    grids = np.meshgrid(data.times, *data.axes, indexing="ij")
    cols = [g.ravel() for g in grids]
    cols += [data.velocity[..., i].ravel() for i in range(n)]
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(n)]
    if data.diffusion is not None:
        cols += [data.diffusion[..., i, j].ravel() for i in range(n) for j in range(n)]
        header += [f"s{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    np.savetxt(path, np.stack(cols, axis=1), delimiter=",", header=",".join(header),
               comments="", fmt="%.17g")


def check_gradient_consistency(model, probes, h=1e-5):
    """Largest absolute entry of (central-difference gradient - model gradient).

    ``probes`` is a sequence of ``(x, t)`` pairs. For smooth fields the
    result scales like ``h**2``.
    """
    if h <= 0:
        raise InvalidInputError("step h must be positive")
    worst = 0.0
    eye = np.eye(model.n)
    for x, t in probes:
        x = np.asarray(x, dtype=float)
        pts = np.concatenate([x + h * eye, x - h * eye])
        vel = model.velocity(pts, t)
        fd = ((vel[:model.n] - vel[model.n:]) / (2 * h)).T
        worst = max(worst, float(np.max(np.abs(fd - model.gradient(x, t)))))
    return worst
