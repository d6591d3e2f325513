"""
Second-order convergence on the Taylor-Green vortex
===================================================

The Taylor-Green vortex is an exact decaying solution with zero
nonlinear term, so the only error is the time discretization. Halving
the step should cut the error by four.
"""

from dln_nse.stepper import convergence_study

for theta in (0.2, 0.5, 0.8):
    print(f"theta = {theta}")
    for dt, err, order in convergence_study(theta, nu=0.5, t_final=1.0, dt0=0.02, halvings=3):
        print(f"  dt = {dt:.5f}   error = {err:.3e}   order = {order:.3f}")
