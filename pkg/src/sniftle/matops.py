"""Dense operations on small square matrices.

Every function accepts either a single ``(n, n)`` matrix or a stack of
them with shape ``(..., n, n)``; stacked inputs are processed elementwise
so that batched and one-at-a-time evaluation agree bit for bit.
"""

import numpy as np

from .errors import (DecompositionError, InvalidInputError, NumericError,
                     SingularMatrixError)

SYMMETRY_RTOL = 1e-12
JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 100
MAX_CONDITION = 1e12


def _as_square(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInputError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return a


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def sym_eig(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigendecomposition of symmetric matrices by cyclic Jacobi rotations.

    Parameters
    ----------
    a : array_like, shape (..., n, n)
        Symmetric input. It is symmetrized before iterating.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm drops below
        ``tol * ||a||_F``.

    Returns
    -------
    eigenvalues : ndarray, shape (..., n)
        Sorted in descending order.
    eigenvectors : ndarray, shape (..., n, n)
        Orthonormal columns; column ``i`` belongs to ``eigenvalues[..., i]``.
    """
    a = symmetrize(_as_square(a))
    n = a.shape[-1]
    batch_shape = a.shape[:-2]
    A = a.reshape(-1, n, n).copy()
    V = np.broadcast_to(np.eye(n), A.shape).copy()
    fro = np.sqrt(np.sum(A * A, axis=(1, 2)))
    off_mask = ~np.eye(n, dtype=bool)

    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.where(off_mask, A * A, 0.0), axis=(1, 2)))
        active = off > tol * fro
        if not active.any():
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                rot = active & (apq != 0.0)
                if not rot.any():
                    continue
                safe_apq = np.where(rot, apq, 1.0)
                with np.errstate(over="ignore"):
                    # |theta| = inf gives t = 0, i.e. a negligible rotation
                    theta = (A[:, q, q] - A[:, p, p]) / (2.0 * safe_apq)
                sign = np.where(theta >= 0.0, 1.0, -1.0)
                t = sign / (np.abs(theta) + np.hypot(theta, 1.0))
                c = np.where(rot, 1.0 / np.hypot(t, 1.0), 1.0)
                s = np.where(rot, t * c, 0.0)

                cc, ss = c[:, None], s[:, None]
                col_p, col_q = A[:, :, p].copy(), A[:, :, q].copy()
                A[:, :, p] = cc * col_p - ss * col_q
                A[:, :, q] = ss * col_p + cc * col_q
                row_p, row_q = A[:, p, :].copy(), A[:, q, :].copy()
                A[:, p, :] = cc * row_p - ss * row_q
                A[:, q, :] = ss * row_p + cc * row_q
                # the rotation annihilates a_pq analytically
                A[rot, p, q] = 0.0
                A[rot, q, p] = 0.0

                vp, vq = V[:, :, p].copy(), V[:, :, q].copy()
                V[:, :, p] = cc * vp - ss * vq
                V[:, :, q] = ss * vp + cc * vq
    else:
        off = np.sqrt(np.sum(np.where(off_mask, A * A, 0.0), axis=(1, 2)))
        if np.any(off > tol * fro):
            raise NumericError(
                f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")

    vals = np.diagonal(A, axis1=1, axis2=2).copy()
    order = np.argsort(-vals, axis=1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    return vals.reshape(batch_shape + (n,)), V.reshape(batch_shape + (n, n))


def operator_norm(a):
    """Largest singular value, sqrt(lambda_max(a^T a))."""
    a = _as_square(a)
    # power-of-two rescaling is exact and keeps a^T a clear of under/overflow
    peak = np.max(np.abs(a), axis=(-1, -2))
    _, exponent = np.frexp(np.where(peak > 0, peak, 1.0))
    scale = np.ldexp(1.0, exponent)
    b = a / scale[..., None, None]
    vals, _ = sym_eig(np.swapaxes(b, -1, -2) @ b)
    top = np.sqrt(np.maximum(vals[..., 0], 0.0)) * scale
    return float(top) if top.ndim == 0 else top


def cholesky(xi, rtol=SYMMETRY_RTOL):
    """Lower-triangular factor ``L`` with ``L @ L.T == xi``.

    Raises :class:`DecompositionError` naming the first non-positive pivot.
    """
    xi = _as_square(xi, "covariance")
    if xi.ndim != 2:
        raise InvalidInputError("cholesky expects a single matrix")
    scale = max(np.max(np.abs(xi)), np.finfo(float).tiny)
    if np.max(np.abs(xi - xi.T)) > rtol * scale:
        raise InvalidInputError("matrix is not symmetric")
    a = symmetrize(xi)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= rtol * scale:
            raise DecompositionError(
                f"matrix is not positive definite (pivot {j} = {pivot:.3g})",
                pivot=j)
        L[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (a[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


def condition_number(a):
    """2-norm condition number from the SVD (``inf`` for singular input)."""
    a = _as_square(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.linalg.cond(a)


def invert(a, max_condition=MAX_CONDITION):
    """Matrix inverse guarded by a condition-number check."""
    a = _as_square(a)
    cond = condition_number(a)
    worst = float(np.max(cond))
    if not worst < max_condition:
        raise SingularMatrixError(
            f"matrix is singular or ill-conditioned (condition {worst:.3g})",
            condition=worst)
    return np.linalg.inv(a)
