"""Reference computations that share no code with the package under test."""

import math

import numpy as np


def brute_force_norm(a, resolution=200_000):
    """max ||a v|| over a dense sweep of unit vectors (2x2 only)."""
    theta = np.linspace(0.0, np.pi, resolution)
    v = np.stack([np.cos(theta), np.sin(theta)])
    return float(np.max(np.linalg.norm(np.asarray(a) @ v, axis=0)))


def saddle_closed_form(a, t, xi0=(1.0, 1.0)):
    """Flow map, Jacobian and noise quadrature of u = (a x1, -a x2), sigma = I."""
    ea = math.exp(a * t)
    pos = np.array([xi0[0] * ea, xi0[1] / ea])
    J = np.diag([ea, 1.0 / ea])
    K = np.diag([(1.0 - math.exp(-2 * a * t)) / (2 * a), (math.exp(2 * a * t) - 1.0) / (2 * a)])
    return pos, J, K


def double_gyre_velocity(x, y, t, A=0.1, eps=0.1, omega=math.pi / 5):
    a = eps * np.sin(omega * t)
    b = 1 - 2 * a
    f = a * x ** 2 + b * x
    dfdx = 2 * a * x + b
    u = -math.pi * A * np.sin(math.pi * f) * np.cos(math.pi * y)
    v = math.pi * A * np.cos(math.pi * f) * np.sin(math.pi * y) * dfdx
    return u, v


def rk4_positions(x, y, t_end, h, velocity=double_gyre_velocity):
    """Classical RK4 on arrays of positions, trajectories only."""
    steps = int(round(t_end / h))
    x = np.array(x, dtype=float)
    y = np.array(y, dtype=float)
    for k in range(steps):
        t = k * h
        k1 = velocity(x, y, t)
        k2 = velocity(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], t + 0.5 * h)
        k3 = velocity(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], t + 0.5 * h)
        k4 = velocity(x + h * k3[0], y + h * k3[1], t + h)
        x = x + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y = y + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return x, y


def fd_ftle(x0, y0, t_end, h=1e-3, offset=1e-6):
    """FTLE from central differences of neighbouring trajectories."""
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    xs = np.concatenate([x0 + offset, x0 - offset, x0, x0])
    ys = np.concatenate([y0, y0, y0 + offset, y0 - offset])
    X, Y = rk4_positions(xs, ys, t_end, h)
    m = x0.size
    J = np.empty((m, 2, 2))
    J[:, 0, 0] = (X[:m] - X[m:2 * m]) / (2 * offset)
    J[:, 1, 0] = (Y[:m] - Y[m:2 * m]) / (2 * offset)
    J[:, 0, 1] = (X[2 * m:3 * m] - X[3 * m:]) / (2 * offset)
    J[:, 1, 1] = (Y[2 * m:3 * m] - Y[3 * m:]) / (2 * offset)
    return np.log(np.linalg.svd(J, compute_uv=False)[:, 0]) / t_end
