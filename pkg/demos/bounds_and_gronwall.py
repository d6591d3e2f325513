"""
Long-time bound constants and discrete Gronwall lemmas
======================================================

The certificate feeds a chain of constants: a uniform L2 bound ``K2``, an
absorbing radius ``rho0`` reached after ``T*``, then the H1 constants.
The discrete Gronwall bounds are compared with an exact recursion.
"""

import numpy as np

from dln_nse.bounds import (
    GronwallInput,
    gronwall_bound,
    h1_constants,
    l2_constants,
    uniform_gronwall_bound,
    window_max_sum,
)
from dln_nse.certificate import certify, max_timestep

theta, nu, lam, f_inf = 0.5, 1.0, 1.0, 0.01
C_dt = max_timestep(theta, nu, lam)
dt = 0.004 * C_dt
cert = certify(theta, nu, lam, dt)

l2 = l2_constants(cert, norm_u0=0.05, norm_u1=0.05, f_inf=f_inf, nu=nu, lambda1=lam,
                  theta=theta)
print(f"K2 = {l2.K2:.4g}   rho0 = {l2.rho0:.4g}   T* = {l2.T_star:.4g}")

# Larger initial data only move T*, never rho0.
big = l2_constants(cert, 5.0, 5.0, f_inf, nu, lam, theta)
print(f"with 100x initial data: rho0 = {big.rho0:.4g}   T* = {big.T_star:.4g}")

h1 = h1_constants(theta, nu, lam, dt, cert, l2, None, (0.05, 0.05), f_inf, r=5.01 * C_dt)
print(f"rho2 = {h1.rho2:.4g}   K3 = {h1.K3:.4g}   uniform dt limit = {h1.dt_limit:.4g}")

# Finite-horizon lemma against the worst-case recursion.
rng = np.random.default_rng(1)
k, N = 0.1, 40
eta, zeta = rng.uniform(0, 1, N + 1), rng.uniform(0, 1, N + 1)
xi = np.empty(N + 1)
xi[0] = 1.0
for n in range(1, N + 1):
    xi[n] = xi[n - 1] * (1 + k * eta[n - 1]) + k * zeta[n]
inp = GronwallInput(k, xi[0], eta, zeta)
print(f"\nxi_N = {xi[N]:.4f}  <=  bound {gronwall_bound(inp, N):.4f}")

n1, n2 = 5, 10
a = [window_max_sum(s, k, n1, n2, N) for s in (eta, zeta, xi)]
print(f"uniform bound over [{n1 + n2 + 1}, {N}]: {uniform_gronwall_bound(inp, n1, n2, N, *a):.4f}"
      f"  (max xi there {xi[n1 + n2 + 1:].max():.4f})")
