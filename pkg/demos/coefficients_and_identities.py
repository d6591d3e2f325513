"""
DLN coefficients and the two-step identities
============================================

The DLN family is a one-parameter set of two-step one-leg methods. This
script prints the coefficients for a few values of theta and checks the
G-stability identity on random vectors.
"""

import numpy as np

from dln_nse.dln_core import g_norm_sq, g_stability_residual, make_coefficients

for theta in (0.2, 0.5, 0.8):
    c = make_coefficients(theta)
    print(f"theta={theta}")
    print("  alpha  =", np.round(c.alpha, 6))
    print("  beta   =", np.round(c.beta, 6))
    print("  dissip =", np.round(c.dissip, 6))
    print("  G weights =", c.g_weights)

# The identity holds for any three vectors; its residual is pure roundoff.
rng = np.random.default_rng(0)
triple = [rng.standard_normal(1000) for _ in range(3)]
r, scale = g_stability_residual(triple, 0.5, with_scale=True)
print(f"\nG-stability residual / largest term: {abs(r) / scale:.2e}")

# The G-norm of a pair of states is a weighted sum of squared norms.
print("G-norm^2 of (e1, e2) at theta=0.5:", g_norm_sq(np.eye(2)[0], np.eye(2)[1], 0.5))
