"""FTLE, SNIFTLE, stochastic sensitivity S^2 and the uncertainty measure Q^2.

All four are read off one :class:`~sniftle.flowmap.FlowSolution`:

* ``ftle    = ln ||J|| / t``
* ``sniftle = ln ||J Psi|| / t`` with ``Psi Psi^T = Xi`` (Cholesky)
* ``s2      = ||J K J^T||``
* ``q2      = ||J Xi J^T||``, so that ``q2 == exp(2 t sniftle)``

The noise and initial-condition scales cancel out of ``s2`` and ``q2``, so
neither function takes them.
"""

from dataclasses import dataclass

import numpy as np

from . import matops
from .errors import UndefinedMeasureError
from .flowmap import IntegratorConfig, solve_flow
from .uqcov import _congruence


@dataclass(frozen=True)
class MeasureRecord:
    xi0: np.ndarray
    t: float
    ftle: float
    sniftle: float
    s2: float
    q2: float


def _require_positive_time(sol):
    if not sol.t > 0:
        raise UndefinedMeasureError("exponents are undefined at t = 0")


def ftle(sol):
    _require_positive_time(sol)
    return np.log(matops.operator_norm(sol.jacobian)) / sol.t


def sniftle(sol, xi_cov):
    _require_positive_time(sol)
    psi = matops.cholesky(xi_cov)
    return np.log(matops.operator_norm(sol.jacobian @ psi)) / sol.t


def s2(sol):
    return matops.operator_norm(_congruence(sol.jacobian, sol.quad))


def q2(sol, xi_cov):
    xi = np.asarray(xi_cov, dtype=float)
    matops.cholesky(xi)
    return matops.operator_norm(_congruence(sol.jacobian, xi))


def measure_record(model, xi0, t, xi_cov=None, cfg=None):
    """Evaluate all four measures from a single :func:`solve_flow` call."""
    sol = solve_flow(model, xi0, t, cfg or IntegratorConfig())
    return record_from_solution(sol, xi_cov)


def record_from_solution(sol, xi_cov=None):
    xi = np.eye(sol.n) if xi_cov is None else np.asarray(xi_cov, dtype=float)
    return MeasureRecord(xi0=sol.xi0, t=sol.t, ftle=ftle(sol), sniftle=sniftle(sol, xi),
                         s2=s2(sol), q2=q2(sol, xi))
