"""
The H(theta) stability certificate
==================================

For an admissible step ``dt < C_dt`` the certificate supplies a diagonal
matrix ``diag(h11, h22)``, a contraction rate ``epsilon`` and a mixing
vector ``(a, b, c)``. Above the limit the construction is refused.
"""

from dln_nse.certificate import (
    CertificateInput,
    bound_flags,
    build_certificate,
    max_timestep,
    system_residuals,
)
from dln_nse.errors import InadmissibleTimestep

theta, nu, lam = 0.5, 1.0, 1.0
limit = max_timestep(theta, nu, lam)
print(f"admissible steps: dt < {limit:.6f}")

inp = CertificateInput(theta, nu, lam, 0.2)
cert = build_certificate(inp)
for key in ("h11", "h22", "epsilon", "a", "b", "c", "mu"):
    print(f"  {key:8s} {getattr(cert, key): .12f}")
print("worst relative residual:", system_residuals(cert, inp).max_relative())
print("all bound checks pass:", bound_flags(cert, inp).all_pass)

# Contraction weakens as dt shrinks: epsilon tends to zero with dt.
for frac in (0.9, 0.5, 0.1, 0.01):
    c = build_certificate(CertificateInput(theta, nu, lam, frac * limit))
    print(f"dt = {frac:5.2f} C_dt  ->  epsilon = {c.epsilon:.3e}")

try:
    CertificateInput(theta, nu, lam, 0.5)
except InadmissibleTimestep as exc:
    print("\nrejected:", exc)
