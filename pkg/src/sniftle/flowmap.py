"""Deterministic flow map, its Jacobian, and the noise quadrature.

The state ``x``, the Jacobian ``J = dF/dxi0``, its inverse and the matrix
integral ``K_t = int_0^t M M^T dtau`` with ``M = J^{-1} sigma`` are
advanced together as one augmented system by classical fixed-step RK4.
"""

from dataclasses import dataclass

import numpy as np

from . import matops
from .errors import ConditioningError, DomainError, InvalidInputError, NumericError

PSD_CLAMP = 1e-10


@dataclass(frozen=True)
class IntegratorConfig:
    step_size: float = 1e-3
    scheme: str = "rk4"
    jacobian_inverse_mode: str = "adjoint_ode"
    defect_threshold: float = 1e-6

    def __post_init__(self):
        if not self.step_size > 0:
            raise InvalidInputError("step_size must be positive")
        if self.scheme != "rk4":
            raise InvalidInputError(f"unsupported scheme {self.scheme!r}")
        if self.jacobian_inverse_mode not in ("adjoint_ode", "direct_invert"):
            raise InvalidInputError(
                f"unknown jacobian_inverse_mode {self.jacobian_inverse_mode!r}")
        if not self.defect_threshold >= 0:
            raise InvalidInputError("defect_threshold must be non-negative")


@dataclass(frozen=True)
class FlowSolution:
    """Flow-map data at time ``t`` for one or many initial conditions.

    Array fields carry an optional leading batch shape: ``position`` is
    ``(..., n)`` and the matrices are ``(..., n, n)``.
    """
    xi0: np.ndarray
    t: float
    position: np.ndarray
    jacobian: np.ndarray
    jacobian_inverse: np.ndarray
    quad: np.ndarray
    consistency_defect: np.ndarray

    @property
    def n(self):
        return self.position.shape[-1]

    def select(self, index):
        """The solution for one entry (or sub-batch) of a batched solution."""
        return FlowSolution(self.xi0[index], self.t, self.position[index],
                            self.jacobian[index], self.jacobian_inverse[index],
                            self.quad[index], np.asarray(self.consistency_defect)[index])


def time_grid(times, step):
    """Step sequence from 0 passing exactly through every time in ``times``.

    Each interval between consecutive requested times is split into equal
    steps no longer than ``step``.

    Returns ``(starts, sizes, capture)`` where ``capture[k]`` is the index in
    ``times`` reached after step ``k`` or -1.
    """
    starts, sizes, capture = [], [], []
    prev = 0.0
    for i, t in enumerate(times):
        span = t - prev
        if span <= 0:
            if span < 0:
                raise InvalidInputError("times must be non-decreasing and >= 0")
            continue
        count = max(1, int(np.ceil(span / step - 1e-9)))
        h = span / count
        for k in range(count):
            starts.append(prev + k * h)
            sizes.append(h)
            capture.append(-1)
        capture[-1] = i
        prev = t
    return starts, sizes, capture


def _check_times(model, times):
    t_end = model.time_domain[1]
    for t in times:
        if not 0 <= t <= t_end:
            raise InvalidInputError(f"time {t} outside model time domain [0, {t_end}]")


def _integrate(model, xi0, times, cfg, full=True):
    """Batched RK4 of the augmented system; yields one snapshot per time.

    ``xi0`` has shape ``(m, n)``. Returns a list (aligned with sorted
    ``times``) of tuples ``(x, J, Jinv, K)``; ``Jinv`` and ``K`` are ``None``
    when ``full`` is false.
    """
    m, n = xi0.shape
    direct = cfg.jacobian_inverse_mode == "direct_invert"
    eye = np.broadcast_to(np.eye(n), (m, n, n))

    def rhs(tau, x, J, Jinv):
        G = model.gradient(x, tau)
        dx = model.velocity(x, tau)
        dJ = G @ J
        if not full:
            return dx, dJ, None, None
        if direct:
            Jinv = np.linalg.inv(J)
            dJinv = None
        else:
            dJinv = -(Jinv @ G)
        M = Jinv @ model.diffusion(x, tau)
        return dx, dJ, dJinv, M @ np.swapaxes(M, -1, -2)

    x = xi0.copy()
    J = eye.copy()
    Jinv = eye.copy() if full else None
    K = np.zeros((m, n, n)) if full else None
    snaps = [None] * len(times)
    for i, t in enumerate(times):
        if t == 0:
            snaps[i] = (x.copy(), J.copy(), None if Jinv is None else Jinv.copy(),
                        None if K is None else K.copy())

    starts, sizes, capture = time_grid(times, cfg.step_size)
    for tau, h, cap in zip(starts, sizes, capture):
        try:
            k1 = rhs(tau, x, J, Jinv)
            s2 = _advance(x, J, Jinv, K, k1, 0.5 * h)
            k2 = rhs(tau + 0.5 * h, s2[0], s2[1], s2[2])
            s3 = _advance(x, J, Jinv, K, k2, 0.5 * h)
            k3 = rhs(tau + 0.5 * h, s3[0], s3[1], s3[2])
            s4 = _advance(x, J, Jinv, K, k3, h)
            k4 = rhs(tau + h, s4[0], s4[1], s4[2])
        except DomainError as exc:
            raise DomainError(f"trajectory left the domain near t={tau:.6g}: {exc}",
                              coordinate=exc.coordinate, time=tau) from exc
        x, J, Jinv, K = _combine(x, J, Jinv, K, k1, k2, k3, k4, h)
        if cap >= 0:
            snaps[cap] = (x.copy(), J.copy(),
                          None if Jinv is None else Jinv.copy(),
                          None if K is None else K.copy())
    if direct and full:
        snaps = [(x_, J_, np.linalg.inv(J_), K_) for x_, J_, _, K_ in snaps]
    return snaps


def _advance(x, J, Jinv, K, k, h):
    dx, dJ, dJinv, dK = k
    return (x + h * dx, J + h * dJ,
            None if dJinv is None else Jinv + h * dJinv,
            None if dK is None else K + h * dK)


def _combine(x, J, Jinv, K, k1, k2, k3, k4, h):
    def mix(y, i):
        if k1[i] is None:
            return y
        return y + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return mix(x, 0), mix(J, 1), mix(Jinv, 2), mix(K, 3)


def clamp_psd(K, clamp=PSD_CLAMP):
    """Zero out slightly negative eigenvalues of symmetric ``K``.

    Eigenvalues below ``-clamp * max(1, ||K||_F)`` raise :class:`NumericError`;
    matrices with no negative eigenvalue are returned untouched.
    """
    K = matops.symmetrize(K)
    vals, vecs = matops.sym_eig(K)
    scale = np.maximum(1.0, np.sqrt(np.sum(K * K, axis=(-1, -2))))
    low = vals[..., -1]
    if np.any(low < -clamp * scale):
        raise NumericError(f"quadrature lost positive semi-definiteness "
                           f"(eigenvalue {np.min(low):.3g})")
    neg = low < 0
    if np.any(neg):
        fixed = (vecs * np.maximum(vals, 0.0)[..., None, :]) @ np.swapaxes(vecs, -1, -2)
        K = np.where(neg[..., None, None], fixed, K)
    return K


def consistency_defect(J, Jinv):
    n = J.shape[-1]
    r = J @ Jinv - np.eye(n)
    return np.max(np.abs(r), axis=(-1, -2))


def _prepare(model, xi0, t):
    xi0 = np.asarray(xi0, dtype=float)
    if xi0.shape[-1] != model.n:
        raise InvalidInputError(
            f"initial condition has dimension {xi0.shape[-1]}, model has {model.n}")
    t = float(t)
    _check_times(model, [t])
    return xi0, xi0.reshape(-1, model.n), t


def solve_flow(model, xi0, t, cfg=None):
    """Integrate the flow, Jacobian, inverse Jacobian and quadrature to ``t``.

    ``xi0`` may be a single point ``(n,)`` or a batch ``(..., n)``.
    Raises :class:`ConditioningError` if ``||J J^-1 - I||`` (max entry)
    exceeds ``cfg.defect_threshold`` for any point.
    """
    cfg = cfg or IntegratorConfig()
    xi0, flat, t = _prepare(model, xi0, t)
    (snap,) = _integrate(model, flat, [t], cfg, full=True)
    sol = _solution(xi0, t, snap)
    worst = float(np.max(sol.consistency_defect))
    if worst > cfg.defect_threshold:
        raise ConditioningError(
            f"J*J^-1 defect {worst:.3g} exceeds {cfg.defect_threshold:.3g}; "
            f"use a smaller step_size or a shorter horizon", defect=worst)
    return sol


def _solution(xi0, t, snap):
    x, J, Jinv, K = snap
    lead = xi0.shape[:-1]
    n = xi0.shape[-1]
    K = clamp_psd(K)
    return FlowSolution(
        xi0=xi0, t=t,
        position=x.reshape(lead + (n,)),
        jacobian=J.reshape(lead + (n, n)),
        jacobian_inverse=Jinv.reshape(lead + (n, n)),
        quad=K.reshape(lead + (n, n)),
        consistency_defect=consistency_defect(J, Jinv).reshape(lead)
        if lead else float(consistency_defect(J, Jinv)[0]))


def solve_flow_times(model, xi0, times, cfg=None):
    """Like :func:`solve_flow` but captures every time in ``times`` from one pass.

    Returns a list of :class:`FlowSolution` in the order of ``times``. No
    defect check is applied; inspect ``consistency_defect`` yourself.
    """
    cfg = cfg or IntegratorConfig()
    times = [float(t) for t in times]
    xi0 = np.asarray(xi0, dtype=float)
    flat = xi0.reshape(-1, model.n)
    _check_times(model, times)
    order = sorted(range(len(times)), key=times.__getitem__)
    snaps = _integrate(model, flat, [times[i] for i in order], cfg, full=True)
    out = [None] * len(times)
    for slot, i in enumerate(order):
        out[i] = _solution(xi0, times[i], snaps[slot])
    return out


def flow_map_only(model, xi0, t, cfg=None):
    """Position and Jacobian only, skipping the inverse and quadrature."""
    cfg = cfg or IntegratorConfig()
    xi0, flat, t = _prepare(model, xi0, t)
    ((x, J, _, _),) = _integrate(model, flat, [t], cfg, full=False)
    lead = xi0.shape[:-1]
    return x.reshape(lead + (model.n,)), J.reshape(lead + (model.n, model.n))
