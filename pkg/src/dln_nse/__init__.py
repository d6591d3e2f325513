"""DLN one-leg time stepping for 2D Navier-Stokes with stability certificates.

Modules
-------
dln_core
    Coefficients, G-norm and the two-step algebraic identities.
certificate
    H(theta) matrix construction and its admissibility checks.
bounds
    Long-time bound constants and discrete Gronwall lemmas.
spectral2d
    Periodic pseudo-spectral fields, Leray projection, trilinear form.
stepper
    Implicit DLN stepping with a per-step inequality ledger.
cli
    Batch command-line front end.
"""

from .errors import (
    BlowUp,
    DimensionMismatch,
    DLNError,
    DomainError,
    GridMismatch,
    InadmissibleTimestep,
    IndexWindowError,
    NegativeDiscriminant,
    NonConvergence,
    WindowTooShort,
)
from .dln_core import (
    DlnCoefficients,
    StateTriple,
    combine_beta,
    g_norm_sq,
    g_stability_residual,
    identity1_residual,
    identity2_residual,
    make_coefficients,
)
from .certificate import (
    CertificateInput,
    HCertificate,
    bound_flags,
    build_certificate,
    certify,
    max_timestep,
    system_residuals,
)
from .bounds import (
    GronwallInput,
    gronwall_bound,
    h1_constants,
    kappa_constants,
    l2_constants,
    uniform_gronwall_bound,
    uniform_timestep_limit,
)
from .spectral2d import (
    ForcingSpec,
    TorusGrid,
    VelocityField,
    leray_project,
    norms,
    stokes_lambda1,
    trilinear_b,
)
from .stepper import (
    LedgerRow,
    SimulationConfig,
    SolverPolicy,
    StepState,
    advance,
    bootstrap_first_step,
    run_simulation,
    stage_residual,
)

__version__ = "0.1.0"

__all__ = [
    "BlowUp",
    "DimensionMismatch",
    "DLNError",
    "DomainError",
    "GridMismatch",
    "InadmissibleTimestep",
    "IndexWindowError",
    "NegativeDiscriminant",
    "NonConvergence",
    "WindowTooShort",
    "DlnCoefficients",
    "StateTriple",
    "combine_beta",
    "g_norm_sq",
    "g_stability_residual",
    "identity1_residual",
    "identity2_residual",
    "make_coefficients",
    "CertificateInput",
    "HCertificate",
    "bound_flags",
    "build_certificate",
    "certify",
    "max_timestep",
    "system_residuals",
    "GronwallInput",
    "gronwall_bound",
    "h1_constants",
    "kappa_constants",
    "l2_constants",
    "uniform_gronwall_bound",
    "uniform_timestep_limit",
    "ForcingSpec",
    "TorusGrid",
    "VelocityField",
    "leray_project",
    "norms",
    "stokes_lambda1",
    "trilinear_b",
    "LedgerRow",
    "SimulationConfig",
    "SolverPolicy",
    "StepState",
    "advance",
    "bootstrap_first_step",
    "run_simulation",
    "stage_residual",
]
