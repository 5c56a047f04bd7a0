"""Covariance of the linearized solution around the deterministic flow."""

from dataclasses import dataclass

import numpy as np

from . import matops
from .errors import InvalidInputError


@dataclass(frozen=True)
class UncertaintyScales:
    """Model-noise scale ``eps``, initial-condition scale ``delta`` and the
    initial covariance shape ``xi_cov`` (initial law ``N(xi0, delta^2 xi_cov)``).
    """
    eps: float = 0.0
    delta: float = 0.0
    xi_cov: np.ndarray = None

    def __post_init__(self):
        if not (self.eps >= 0 and self.delta >= 0):
            raise InvalidInputError("eps and delta must be non-negative")
        if self.xi_cov is not None:
            xi = np.asarray(self.xi_cov, dtype=float)
            matops.cholesky(xi)
            object.__setattr__(self, "xi_cov", xi)

    def shape(self, n):
        return np.eye(n) if self.xi_cov is None else self.xi_cov


@dataclass(frozen=True)
class CovarianceDecomposition:
    ic_term: np.ndarray
    noise_term: np.ndarray
    total: np.ndarray


def _congruence(J, X):
    return matops.symmetrize(J @ X @ np.swapaxes(J, -1, -2))


def covariance(sol, scales):
    """Split the linearized covariance into its initial-condition part
    ``delta^2 J Xi J^T`` and its model-noise part ``eps^2 J K J^T``."""
    J = sol.jacobian
    ic = scales.delta ** 2 * _congruence(J, scales.shape(sol.n))
    noise = scales.eps ** 2 * _congruence(J, sol.quad)
    return CovarianceDecomposition(ic, noise, ic + noise)


def gaussian_predictive(sol, scales):
    """Mean and covariance of the Gaussian law of the linearized solution."""
    return sol.position, covariance(sol, scales).total
