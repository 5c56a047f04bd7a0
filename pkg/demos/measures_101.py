"""
Four stretching measures on a saddle
====================================

The linear saddle ``u = (x, -y)`` has a closed-form flow map, so every
number printed here can be checked by hand.
"""

import math

import numpy as np

from sniftle import linear_saddle, measure_record, solve_flow
from sniftle.uqcov import UncertaintyScales, covariance

model = linear_saddle(1.0)

# one trajectory to t = 1, carrying the Jacobian, its inverse and the noise quadrature
sol = solve_flow(model, [0.0, 0.0], 1.0)
print("J =\n", sol.jacobian)
print("K =\n", sol.quad)

# isotropic initial uncertainty: sniftle coincides with ftle
rec = measure_record(model, [0.0, 0.0], 1.0)
print(f"ftle    {rec.ftle:.10f}   (exact 1)")
print(f"sniftle {rec.sniftle:.10f}   (exact 1)")
print(f"s2      {rec.s2:.10f}   (exact {(math.e ** 2 - 1) / 2:.10f})")
print(f"q2      {rec.q2:.10f}   (exact {math.e ** 2:.10f})")

# stretch the initial covariance along the unstable axis: sniftle grows by ln 3
xi = np.diag([9.0, 1.0])
rec = measure_record(model, [0.0, 0.0], 1.0, xi)
print(f"sniftle with Xi0 = diag(9, 1): {rec.sniftle:.10f}  (1 + ln 3 = {1 + math.log(3):.10f})")

# the full linearized covariance splits into an initial-condition and a noise part
cov = covariance(sol, UncertaintyScales(eps=0.01, delta=0.02))
print("initial-condition term\n", cov.ic_term)
print("model-noise term\n", cov.noise_term)
