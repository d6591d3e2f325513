"""Fully implicit DLN time stepping for 2D Navier-Stokes and its energy ledger.

One step solves for the averaged state ``w = u_{n,beta}`` in

    (1/dt) sum alpha_l u_{n-1+l} + nu A w + P (w . grad) w = P f(t_{n,beta})

and recovers ``u_{n+1} = (w - beta_1 u_n - beta_0 u_{n-1}) / beta_2``. The
Stokes operator is inverted exactly in Fourier space; the nonlinear term is
handled by fixed-point iteration or by Newton-Krylov.

Every step emits a :class:`LedgerRow` whose margins are ``RHS - LHS`` of
the tracked inequalities, so a nonnegative margin means the inequality held.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, List, Optional

import numpy as np

from .bounds import (
    RHO1_POWER_NOTE,
    H1Constants,
    L2Constants,
    h1_constants,
    kappa_constants,
    l2_constants,
)
from .certificate import CertificateInput, HCertificate, build_certificate, max_timestep
from .dln_core import DlnCoefficients, g_norm_sq_from_norms, make_coefficients
from .errors import BlowUp, DomainError, GridMismatch, NonConvergence
from .spectral2d import (
    ForcingSpec,
    TorusGrid,
    VelocityField,
    advection_hat,
    l2_sq,
    project_hat,
    random_field,
    stokes_lambda1,
    taylor_green,
)

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e6
# relative tolerances on per-step and summed margins
MARGIN_RTOL = 1e-10
CUMULATIVE_RTOL = 1e-9
# default window r as a multiple of C_dt (must exceed 5)
DEFAULT_WINDOW_FACTOR = 6.0
SOLVER_MODES = ("auto", "fixed-point", "newton")


@dataclass(frozen=True)
class SolverPolicy:
    """How the implicit stage equation is solved.

    Attributes
    ----------
    mode : {"auto", "fixed-point", "newton"}
        ``"auto"`` runs the fixed-point map and falls back to Newton-Krylov
        when it fails to contract.
    tol : float
        Relative tolerance on the stage update.
    max_iter : int
    """

    mode: str = "auto"
    tol: float = 1e-11
    max_iter: int = 100

    def __post_init__(self):
        if self.mode not in SOLVER_MODES:
            raise DomainError(f"solver mode must be one of {SOLVER_MODES}, got {self.mode!r}")
        if not self.tol > 0:
            raise DomainError(f"solver tol must be positive, got {self.tol!r}")
        if int(self.max_iter) < 1:
            raise DomainError(f"max_iter must be at least 1, got {self.max_iter!r}")


@dataclass(frozen=True)
class StepState:
    """Two consecutive states ``(u_{n-1}, u_n)`` with ``t_n`` and ``n``."""

    u_prev: VelocityField
    u_curr: VelocityField
    t_curr: float
    step_index: int

    def __post_init__(self):
        if self.u_prev.grid != self.u_curr.grid:
            raise GridMismatch("u_prev and u_curr live on different grids")

    @property
    def grid(self) -> TorusGrid:
        return self.u_curr.grid


@dataclass
class LedgerRow:
    """Per-step norms, dissipation and inequality margins.

    The first block of fields is the documented CSV column order; the
    trailing fields carry the per-step quantities needed by the cumulative
    checks and the scales used for relative tolerances.
    """

    step_index: int
    t: float
    l2_sq: float
    grad_sq: float
    g_norm_sq: float
    h_norm_sq: float
    dissipation_sq: float
    A_n: float
    stab_eq1_margin: float
    gstab_nse1_margin: float
    l2bound0_margin: float
    h1_ineq2_margin: float
    solver_iters: int
    solver_residual: float
    l2_beta_sq: float = math.nan
    grad_beta_sq: float = math.nan
    f_beta_sq: float = math.nan
    jump1_sq: float = math.nan
    jump2_sq: float = math.nan
    grad_jump1_sq: float = math.nan
    grad_jump2_sq: float = math.nan
    l2_scale: float = math.nan
    h1_scale: float = math.nan


LEDGER_COLUMNS = tuple(f.name for f in fields(LedgerRow))


@dataclass(frozen=True)
class LedgerContext:
    """Constants needed to evaluate margins: certificate, ``kappa2``, ``f_inf``."""

    nu: float
    lambda1: float
    f_inf: float
    cert: Optional[HCertificate] = None
    kappa2: float = math.nan


# --- kernels on raw coefficient arrays ------------------------------------

def _sq(grid: TorusGrid, a: np.ndarray) -> float:
    return grid.area * float(np.vdot(a, a).real)


def _grad_sq(grid: TorusGrid, a: np.ndarray) -> float:
    return grid.area * float(np.sum(grid.k2 * (a.real**2 + a.imag**2)))


def _rel_norm(diff: np.ndarray, ref: np.ndarray) -> float:
    d = math.sqrt(float(np.vdot(diff, diff).real))
    r = math.sqrt(float(np.vdot(ref, ref).real))
    if r == 0.0:
        return 0.0 if d == 0.0 else math.inf
    return d / r


def t_beta(coeffs: DlnCoefficients, t_curr: float, dt: float) -> float:
    """Forcing time ``sum beta_l t_{n-1+l}`` for a constant step."""
    b0, b1, b2 = coeffs.beta
    return b0 * (t_curr - dt) + b1 * t_curr + b2 * (t_curr + dt)


class _Stage:
    """Fixed pieces of one DLN stage equation on a grid."""

    def __init__(self, grid, coeffs, nu, dt, fh, up, uc):
        a0, a1, a2 = coeffs.alpha
        b0, b1, b2 = coeffs.beta
        self.grid = grid
        self.sigma = a2 / (b2 * dt)
        self.inv = 1.0 / (self.sigma + nu * grid.k2)
        self.rhs = fh + self.sigma * (b1 * uc + b0 * up) - (a1 * uc + a0 * up) / dt
        self.nu = nu

    def apply(self, w: np.ndarray) -> np.ndarray:
        return self.inv * (self.rhs - advection_hat(self.grid, w))

    def residual(self, w: np.ndarray) -> np.ndarray:
        """``(sigma + nu A) w + N(w) - rhs``, zero at the solution."""
        return (self.sigma + self.nu * self.grid.k2) * w + advection_hat(self.grid, w) - self.rhs


class _MidpointStage:
    """Midpoint ``m = (u_0 + u_1)/2`` of one implicit midpoint step."""

    def __init__(self, grid, nu, dt, fh, u0h):
        self.grid = grid
        self.inv = 1.0 / (1.0 + 0.5 * dt * nu * grid.k2)
        self.rhs = u0h + 0.5 * dt * fh
        self.half_dt = 0.5 * dt

    def apply(self, m: np.ndarray) -> np.ndarray:
        return self.inv * (self.rhs - self.half_dt * advection_hat(self.grid, m))


def _solve_fixed_point(stage, w0, policy, step_index):
    w = w0
    rel = math.inf
    for it in range(1, int(policy.max_iter) + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            w_new = stage.apply(w)
            rel = _rel_norm(w_new - w, w_new)
        w = w_new
        if not math.isfinite(rel):
            break
        if rel <= policy.tol:
            return w, it, rel
    raise NonConvergence(policy.max_iter, rel, step_index)


def _solve_newton(stage, w0, policy, step_index):
    from scipy.optimize import newton_krylov
    from scipy.optimize import NoConvergence as _ScipyNoConvergence

    shape = w0.shape
    size = w0.size

    def pack(z):
        return np.concatenate((z.real.ravel(), z.imag.ravel()))

    def unpack(v):
        return (v[:size] + 1j * v[size:]).reshape(shape)

    # size of the solution, judged from the guess and one map application
    w1 = stage.apply(w0)
    scale = max(math.sqrt(float(np.vdot(w0, w0).real)),
                math.sqrt(float(np.vdot(w1, w1).real)), 1e-300)
    calls = [0]

    def F(v):
        calls[0] += 1
        z = unpack(v)
        return pack(stage.apply(z) - z)

    try:
        v = newton_krylov(F, pack(w0), f_tol=policy.tol * scale * 1e-2,
                          maxiter=int(policy.max_iter), method="lgmres")
    except _ScipyNoConvergence as exc:
        z = unpack(np.asarray(exc.args[0])) if exc.args else w0
        raise NonConvergence(policy.max_iter, _rel_norm(stage.apply(z) - z, z), step_index) from exc
    w = unpack(v)
    # one polishing sweep, also measuring the final relative update
    w_new = stage.apply(w)
    return w_new, calls[0] + 1, _rel_norm(w_new - w, w_new)


def _solve(stage, w0, policy, step_index):
    if policy.mode == "newton":
        return _solve_newton(stage, w0, policy, step_index)
    if policy.mode == "fixed-point":
        return _solve_fixed_point(stage, w0, policy, step_index)
    try:
        return _solve_fixed_point(stage, w0, policy, step_index)
    except NonConvergence:
        w, iters, rel = _solve_newton(stage, w0, policy, step_index)
        return w, iters + int(policy.max_iter), rel


# --- public operations ----------------------------------------------------

def stage_residual(candidate: VelocityField, state: StepState, coeffs: DlnCoefficients,
                   nu: float, dt: float, forcing: ForcingSpec,
                   *, include_nonlinear: bool = True) -> VelocityField:
    """Leray-projected residual of the DLN stage equation at ``u_{n+1} = candidate``.

    Returns ``P[(1/dt) sum alpha u + nu A w + B(w, w) - f(t_beta)]`` with
    ``w = sum beta u``. ``include_nonlinear=False`` drops ``B`` (Stokes
    problem).
    """
    g = state.grid
    for f_ in (candidate, forcing.spatial):
        if f_.grid != g:
            raise GridMismatch("candidate, state and forcing must share a grid")
    a0, a1, a2 = coeffs.alpha
    b0, b1, b2 = coeffs.beta
    up, uc, un = state.u_prev.coeffs, state.u_curr.coeffs, candidate.coeffs
    w = b0 * up + b1 * uc + b2 * un
    r = (a0 * up + a1 * uc + a2 * un) / dt + nu * g.k2 * w
    if include_nonlinear:
        r = r + advection_hat(g, w)
    r = r - forcing.coeffs_at(t_beta(coeffs, state.t_curr, dt))
    return VelocityField(g, project_hat(g, r))


def advance(state: StepState, coeffs: DlnCoefficients, nu: float, dt: float,
            forcing: ForcingSpec, policy: SolverPolicy = SolverPolicy(),
            context: Optional[LedgerContext] = None,
            energy_ceiling: float = math.inf) -> tuple:
    """Advance one DLN step; returns ``(new_state, LedgerRow)``.

    Parameters
    ----------
    context : LedgerContext, optional
        Supplies the certificate and ``kappa2`` for the H-norm and H1
        margins; those margins are NaN without it.
    energy_ceiling : float
        :class:`BlowUp` is raised when ``|u_{n+1}|^2`` exceeds it.

    Raises
    ------
    NonConvergence, BlowUp
    """
    g = state.grid
    if forcing.grid != g:
        raise GridMismatch("forcing and state live on different grids")
    b0, b1, b2 = coeffs.beta
    up, uc = state.u_prev.coeffs, state.u_curr.coeffs
    n_new = state.step_index + 1
    tb = t_beta(coeffs, state.t_curr, dt)
    fh = forcing.coeffs_at(tb)
    stage = _Stage(g, coeffs, nu, dt, fh, up, uc)
    # second-order extrapolation of u_{n+1} gives the initial guess for w
    guess = b0 * up + b1 * uc + b2 * (2.0 * uc - up)
    w, iters, res = _solve(stage, guess, policy, n_new)
    un = (w - b1 * uc - b0 * up) / b2

    row = _ledger_row(g, coeffs, nu, dt, up, uc, un, w, fh, n_new, state.t_curr + dt,
                      iters, res, context)
    if not (row.l2_sq <= energy_ceiling):
        raise BlowUp(row.l2_sq, energy_ceiling, n_new)
    new_state = StepState(state.u_curr, VelocityField(g, un), state.t_curr + dt, n_new)
    return new_state, row


def _ledger_row(g, coeffs, nu, dt, up, uc, un, w, fh, n_new, t_new, iters, res, ctx):
    th = coeffs.theta
    a0, a1, a2 = coeffs.dissip
    l2_p, l2_c, l2_n = _sq(g, up), _sq(g, uc), _sq(g, un)
    gr_p, gr_c, gr_n = _grad_sq(g, up), _grad_sq(g, uc), _grad_sq(g, un)
    G_new = g_norm_sq_from_norms(l2_n, l2_c, th)
    G_old = g_norm_sq_from_norms(l2_c, l2_p, th)
    diss = _sq(g, a0 * up + a1 * uc + a2 * un)
    w_sq, gw_sq, f_sq = _sq(g, w), _grad_sq(g, w), _sq(g, fh)
    A_new = g_norm_sq_from_norms(gr_n, gr_c, th)
    A_old = g_norm_sq_from_norms(gr_c, gr_p, th)

    lam = ctx.lambda1 if ctx is not None else stokes_lambda1(g)
    f_inf = ctx.f_inf if ctx is not None else math.sqrt(f_sq)
    f_term = dt * f_inf**2 / (2.0 * nu * lam)
    lhs_common = G_new - G_old + diss
    stab = f_term - (lhs_common + nu * dt * lam / 2.0 * w_sq)
    gstab = dt * f_sq / (2.0 * nu * lam) - (lhs_common + nu * dt / 2.0 * gw_sq)
    scale = max(G_new, G_old, diss, f_term, nu * dt / 2.0 * gw_sq)

    H_new = H_old = l2b = math.nan
    h1m = h1_scale = math.nan
    if ctx is not None and ctx.cert is not None:
        c = ctx.cert
        H_new, H_old = c.h_norm_sq(l2_n, l2_c), c.h_norm_sq(l2_c, l2_p)
        l2b = (H_old + f_term) / (1.0 + c.epsilon) - H_new
        scale = max(scale, H_new, H_old)
    if ctx is not None and math.isfinite(ctx.kappa2):
        rhs = ctx.kappa2 * A_old + dt / nu * f_inf**2
        h1m = rhs - A_new
        h1_scale = max(rhs, A_new)

    return LedgerRow(
        step_index=n_new, t=t_new, l2_sq=l2_n, grad_sq=gr_n, g_norm_sq=G_new,
        h_norm_sq=H_new, dissipation_sq=diss, A_n=A_new,
        stab_eq1_margin=stab, gstab_nse1_margin=gstab, l2bound0_margin=l2b,
        h1_ineq2_margin=h1m, solver_iters=iters, solver_residual=res,
        l2_beta_sq=w_sq, grad_beta_sq=gw_sq, f_beta_sq=f_sq,
        jump1_sq=_sq(g, un - uc), jump2_sq=_sq(g, un - up),
        grad_jump1_sq=_grad_sq(g, un - uc), grad_jump2_sq=_grad_sq(g, un - up),
        l2_scale=scale, h1_scale=h1_scale,
    )


def bootstrap_first_step(u0: VelocityField, nu: float, dt: float, forcing: ForcingSpec,
                         policy: SolverPolicy = SolverPolicy(), t0: float = 0.0,
                         exact: Optional[Callable[[float], VelocityField]] = None) -> StepState:
    """Produce ``(u_0, u_1)`` for the two-step scheme.

    With ``exact`` given, ``u_1 = exact(t0 + dt)``. Otherwise one implicit
    midpoint step ``u_1 = u_0 + dt F((u_0 + u_1)/2, t0 + dt/2)`` is taken,
    which is energy-stable for the unforced problem.
    """
    g = u0.grid
    if exact is not None:
        return StepState(u0, exact(t0 + dt), t0 + dt, 1)
    u0h = u0.coeffs
    m, _, _ = _solve(_MidpointStage(g, nu, dt, forcing.coeffs_at(t0 + 0.5 * dt), u0h),
                     u0h, policy, 1)
    u1 = VelocityField(g, project_hat(g, 2.0 * m - u0h))
    return StepState(u0, u1, t0 + dt, 1)


# --- simulation driver ----------------------------------------------------

@dataclass
class SimulationConfig:
    """Everything needed to reproduce a run.

    ``ic`` is ``"taylor-green"`` or ``"random"``; ``ic_norm`` rescales the
    initial L2 norm (``None`` keeps the preset's own norm) and ``ic_seed``
    seeds the random preset. ``bootstrap`` is ``"midpoint"`` or ``"exact"``
    (the latter only for Taylor-Green with zero forcing).
    """

    theta: float = 0.5
    nu: float = 0.1
    dt: float = 0.01
    steps: int = 100
    n: int = 64
    length: float = 2.0 * math.pi
    forcing_modes: tuple = ()
    forcing_modulation: str = "constant"
    forcing_omega: float = 1.0
    ic: str = "random"
    ic_norm: Optional[float] = 1.0
    ic_seed: int = 0
    bootstrap: str = "midpoint"
    solver: SolverPolicy = field(default_factory=SolverPolicy)
    r: Optional[float] = None
    C_Omega: float = 1.0
    snapshot_every: int = 0
    allow_inadmissible: bool = False
    keep_states: bool = False

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.n, self.length)


def make_initial_condition(cfg: SimulationConfig) -> VelocityField:
    g = cfg.grid
    if cfg.ic == "taylor-green":
        u0 = taylor_green(g)
    elif cfg.ic == "random":
        u0 = random_field(g, cfg.ic_seed, 1.0)
    else:
        raise DomainError(f"unknown initial condition preset {cfg.ic!r}")
    if cfg.ic_norm is not None:
        nrm = math.sqrt(l2_sq(u0))
        u0 = u0 * (cfg.ic_norm / nrm) if nrm > 0 else u0
    return u0


@dataclass
class CumulativeTracker:
    """Running checks of the summed L2/H1 estimates over a trajectory.

    Both summed estimates are claimed for every starting index ``i``; the
    margin reported for a final index ``N`` is the minimum over
    ``1 <= i <= N - 1``, obtained with running minima of the ``i``-dependent
    parts.
    """

    coeffs: DlnCoefficients
    nu: float
    dt: float
    lambda1: float
    f_inf: float
    K2: float
    # per-index histories
    G: List[float] = field(default_factory=list)  # G(u_i, u_{i-1}), index i
    grad: List[float] = field(default_factory=list)  # |grad u_i|^2, index i
    S_beta: float = 0.0
    S_h1: float = 0.0
    best_a: float = math.inf
    best_b: float = math.inf
    worst_sum_beta: float = math.inf
    worst_sum_h1: float = math.inf
    worst_sum_beta_rel: float = math.inf
    worst_sum_h1_rel: float = math.inf

    def start(self, l2_0, l2_1, grad_0, grad_1):
        th = self.coeffs.theta
        self.G = [math.nan, g_norm_sq_from_norms(l2_1, l2_0, th)]
        self.grad = [grad_0, grad_1]

    def _consts(self):
        b0, b1, _ = self.coeffs.beta
        m = self.coeffs.stiff_margin
        q = self.K2**4 * (b0 * b0 + b1 * b1) ** 2
        f2 = self.f_inf**2
        cG = 1.0 + q / (self.nu**4 * m**3)
        cf = self.dt / (self.nu * m * self.lambda1) * (2.0 + q / (2.0 * self.nu**4 * m**2)) * f2
        wN, wN1 = 0.25, b0 / 2.0 + m / 8.0
        return cG, cf, wN, wN1

    def update(self, row: LedgerRow) -> None:
        """Fold in the step producing ``u_N``; ``row.step_index == N``."""
        th = self.coeffs.theta
        b0, b1, _ = self.coeffs.beta
        m = self.coeffs.stiff_margin
        N = row.step_index
        nu, dt = self.nu, self.dt
        f2 = self.f_inf**2
        i = N - 1  # newest admissible start index for this N

        # eq. beta-sum:  nu dt sum_{n=i}^{N-1} |grad w_n|^2 <= 2 G_i + (N-i) dt f^2/(nu lam)
        c = dt * f2 / (nu * self.lambda1)
        self.best_a = min(self.best_a, 2.0 * self.G[i] - i * c + self.S_beta)
        self.S_beta += nu * dt * row.grad_beta_sq
        margin = self.best_a + N * c - self.S_beta
        scale = max(self.S_beta, N * c, 2.0 * max(self.G[1:]))
        self.worst_sum_beta = min(self.worst_sum_beta, margin)
        self.worst_sum_beta_rel = min(self.worst_sum_beta_rel, margin / scale if scale > 0 else 0.0)

        # eq. L2(H1):  per-j summand P_j and the i-dependent right side
        cG, cf, wN, wN1 = self._consts()
        P = (dt * nu * m / 8.0 * row.grad_sq
             + th / 2.0 * row.jump1_sq + (1.0 - th) / 4.0 * row.jump2_sq
             + nu * dt * (b1 / 2.0 * row.grad_jump1_sq + b0 / 2.0 * row.grad_jump2_sq))
        rhs_i = cG * self.G[i] + dt * nu * (wN * self.grad[i] + wN1 * self.grad[i - 1]) - i * cf
        self.best_b = min(self.best_b, rhs_i + self.S_h1)
        self.S_h1 += P
        self.grad.append(row.grad_sq)
        self.G.append(row.g_norm_sq)
        tail = row.g_norm_sq + dt * nu * (wN * row.grad_sq + wN1 * self.grad[N - 1])
        margin_b = self.best_b + N * cf - self.S_h1 - tail
        scale_b = max(self.S_h1 + tail, N * cf, cG * max(self.G[1:]))
        self.worst_sum_h1 = min(self.worst_sum_h1, margin_b)
        self.worst_sum_h1_rel = min(self.worst_sum_h1_rel, margin_b / scale_b if scale_b > 0 else 0.0)


@dataclass
class SimulationResult:
    """Ledger rows, the resolved manifest and optional state history."""

    rows: List[LedgerRow]
    manifest: dict
    states: List[VelocityField] = field(default_factory=list)
    initial: Optional[StepState] = None
    final: Optional[StepState] = None
    error: Optional[BaseException] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)


def run_simulation(cfg: SimulationConfig, *, u0: Optional[VelocityField] = None,
                   snapshot_cb: Optional[Callable[[int, float, VelocityField], None]] = None,
                   raise_errors: bool = True) -> SimulationResult:
    """Run a DLN simulation and check every tracked inequality along it.

    Returns a :class:`SimulationResult` whose manifest holds the resolved
    configuration, every effective constant and the worst margin of each
    inequality. On a step failure the partial ledger is kept; the error is
    re-raised unless ``raise_errors`` is False.
    """
    g = cfg.grid
    lam = stokes_lambda1(g)
    coeffs = make_coefficients(cfg.theta)
    nu, dt = float(cfg.nu), float(cfg.dt)
    if not (nu > 0 and dt > 0):
        raise DomainError("nu and dt must be positive")
    if int(cfg.steps) < 0:
        raise DomainError("steps must be nonnegative")
    forcing = ForcingSpec(g, tuple(cfg.forcing_modes), cfg.forcing_modulation, cfg.forcing_omega)
    C_dt = max_timestep(cfg.theta, nu, lam)
    cert = None
    if dt < C_dt:
        cert = build_certificate(CertificateInput(cfg.theta, nu, lam, dt))
    elif not cfg.allow_inadmissible:
        build_certificate(CertificateInput(cfg.theta, nu, lam, dt))  # raises

    if u0 is None:
        u0 = make_initial_condition(cfg)
    exact = None
    if cfg.bootstrap == "exact":
        if cfg.ic != "taylor-green" or not forcing.is_zero:
            raise DomainError("exact bootstrap requires the taylor-green preset without forcing")
        amp = math.sqrt(sum(u0.norms()[:1]) / taylor_green(g).norms()[0])
        exact = lambda t: taylor_green(g, nu, t, amp)  # noqa: E731
    elif cfg.bootstrap != "midpoint":
        raise DomainError(f"unknown bootstrap {cfg.bootstrap!r}")
    try:
        state = bootstrap_first_step(u0, nu, dt, forcing, cfg.solver, exact=exact)
    except NonConvergence as exc:
        if raise_errors:
            raise
        manifest = {"theta": cfg.theta, "nu": nu, "dt": dt, "steps": int(cfg.steps),
                    "n": g.n, "failure": str(exc), "all_pass": False}
        return SimulationResult([], manifest, error=exc)

    l2_0, gr_0 = u0.norms()[:2]
    l2_1, gr_1 = state.u_curr.norms()[:2]
    f_inf = forcing.f_inf
    manifest = {
        "theta": cfg.theta, "nu": nu, "dt": dt, "steps": int(cfg.steps), "n": g.n,
        "length": g.length, "lambda1": lam, "C_dt": C_dt, "f_inf": f_inf,
        "forcing_modes": repr(tuple(forcing.modes)), "forcing_modulation": cfg.forcing_modulation,
        "forcing_omega": cfg.forcing_omega, "ic": cfg.ic, "ic_norm": cfg.ic_norm,
        "ic_seed": cfg.ic_seed, "bootstrap": cfg.bootstrap, "solver_mode": cfg.solver.mode,
        "solver_tol": cfg.solver.tol, "solver_max_iter": cfg.solver.max_iter,
        "C_Omega": cfg.C_Omega, "admissible": cert is not None,
        "norm_u0": math.sqrt(l2_0), "norm_u1": math.sqrt(l2_1),
        "grad_norm_u0": math.sqrt(gr_0), "grad_norm_u1": math.sqrt(gr_1),
    }
    l2c = h1c = None
    kappa2 = math.nan
    if cert is not None:
        manifest.update({f"cert_{k}": v for k, v in cert.as_dict().items()})
        l2c = l2_constants(cert, math.sqrt(l2_0), math.sqrt(l2_1), f_inf, nu, lam, cfg.theta)
        manifest.update({k: getattr(l2c, k) for k in ("K1", "K2", "rho0", "T_star", "C_h_eff",
                                                       "C_eps_eff", "hatC_h")})
        kappa = kappa_constants(cfg.theta, nu, cfg.C_Omega, l2c.K2, l2c.rho0)
        manifest.update(dict(zip(("kappa1", "kappa2", "kappa3", "kappa4"), kappa)))
        kappa2 = kappa[1]
        r = cfg.r if cfg.r is not None else DEFAULT_WINDOW_FACTOR * C_dt
        manifest["r"] = r
        h1c = h1_constants(cfg.theta, nu, lam, dt, cert, l2c, None,
                           (math.sqrt(gr_0), math.sqrt(gr_1)), f_inf, r, C_Omega=cfg.C_Omega)
        manifest.update({k: getattr(h1c, k) for k in ("K3", "K4", "K5", "K6", "rho1", "rho2",
                                                       "rho3", "A1")})
        manifest["K3_horizon"] = h1c.horizon
        manifest["dt_limit_uniform"] = h1c.dt_limit
        manifest["dt_within_uniform_limit"] = dt < h1c.dt_limit
        manifest["rho1_note"] = RHO1_POWER_NOTE

    ctx = LedgerContext(nu, lam, f_inf, cert, kappa2)
    e_scale = max(l2_0, l2_1, (f_inf / (nu * lam)) ** 2)
    ceiling = BLOWUP_FACTOR * e_scale if e_scale > 0 else math.inf

    tracker = None
    if l2c is not None:
        tracker = CumulativeTracker(coeffs, nu, dt, lam, f_inf, l2c.K2)
        tracker.start(l2_0, l2_1, gr_0, gr_1)

    worst = _WorstMargins(l2c, h1c, dt)
    rows: List[LedgerRow] = []
    states = [u0, state.u_curr] if cfg.keep_states else []
    result = SimulationResult(rows, manifest, states, initial=state)
    if snapshot_cb is not None:
        snapshot_cb(0, 0.0, u0)
        if cfg.snapshot_every and 1 % cfg.snapshot_every == 0:
            snapshot_cb(1, state.t_curr, state.u_curr)
    try:
        for _ in range(int(cfg.steps)):
            state, row = advance(state, coeffs, nu, dt, forcing, cfg.solver, ctx, ceiling)
            rows.append(row)
            worst.observe(row)
            if tracker is not None:
                tracker.update(row)
            if cfg.keep_states:
                states.append(state.u_curr)
            if snapshot_cb is not None and cfg.snapshot_every and row.step_index % cfg.snapshot_every == 0:
                snapshot_cb(row.step_index, row.t, state.u_curr)
    except (NonConvergence, BlowUp) as exc:
        result.error = exc
        manifest["failure"] = str(exc)
        log.warning("simulation stopped: %s", exc)
    result.final = state
    manifest.update(worst.summary())
    if tracker is not None:
        manifest["worst_sum_beta_margin"] = tracker.worst_sum_beta
        manifest["worst_sum_beta_rel"] = tracker.worst_sum_beta_rel
        manifest["worst_sum_h1_margin"] = tracker.worst_sum_h1
        manifest["worst_sum_h1_rel"] = tracker.worst_sum_h1_rel
    manifest["all_pass"] = all_pass(manifest)
    if result.error is not None and raise_errors:
        raise result.error
    return result


class _WorstMargins:
    """Tracks the worst relative margin of each per-step inequality."""

    def __init__(self, l2c: Optional[L2Constants], h1c: Optional[H1Constants], dt: float):
        self.l2c, self.h1c, self.dt = l2c, h1c, dt
        self.w = {k: math.inf for k in ("stab_eq1", "gstab_nse1", "l2bound0", "h1_ineq2",
                                        "K2_bound", "rho0_bound", "K3_bound", "rho2_bound")}
        self.prev_A = None

    def _put(self, key, margin, scale):
        if math.isnan(margin):
            return
        rel = margin / scale if scale > 0 else (0.0 if margin >= 0 else -math.inf)
        self.w[key] = min(self.w[key], rel)

    def observe(self, row: LedgerRow):
        self._put("stab_eq1", row.stab_eq1_margin, row.l2_scale)
        self._put("gstab_nse1", row.gstab_nse1_margin, row.l2_scale)
        self._put("l2bound0", row.l2bound0_margin, row.l2_scale)
        self._put("h1_ineq2", row.h1_ineq2_margin, row.h1_scale)
        N = row.step_index
        if self.l2c is None:
            return
        K2 = self.l2c.K2
        norm = math.sqrt(row.l2_sq)
        self._put("K2_bound", K2 - norm, K2)
        T = self.l2c.T_star
        if (N - 1) * self.dt > T:
            r0 = 2.0 * self.l2c.rho0
            self._put("rho0_bound", r0 - row.l2_sq, max(r0, row.l2_sq))
        if self.h1c is not None:
            K3 = self.h1c.K3_at((N - 1) * self.dt)
            if math.isfinite(K3):
                self._put("K3_bound", K3 - row.A_n, max(K3, row.A_n))
            if (N - 2) * self.dt > T + self.h1c.r:
                r2 = self.h1c.rho2
                self._put("rho2_bound", r2 - row.A_n, max(r2, row.A_n))

    def summary(self) -> dict:
        return {f"worst_{k}_rel": v for k, v in self.w.items()}


def all_pass(manifest: dict) -> bool:
    """True when no worst margin in ``manifest`` is below its tolerance."""
    ok = True
    for k, v in manifest.items():
        if not isinstance(v, float):
            continue
        if k.startswith("worst_") and k.endswith("_rel"):
            tol = CUMULATIVE_RTOL if k.startswith("worst_sum") else MARGIN_RTOL
            ok &= not (v < -tol)
    return ok and "failure" not in manifest


def taylor_green_error(theta: float, nu: float, dt: float, t_final: float, n: int = 32,
                       length: float = 2.0 * math.pi,
                       policy: SolverPolicy = SolverPolicy()) -> float:
    """Relative L2 error at ``t_final`` of a DLN run from exact Taylor-Green data.

    ``u_0`` and ``u_1`` are taken from the exact solution; ``t_final`` must be
    a multiple of ``dt`` up to roundoff.
    """
    g = TorusGrid(n, length)
    steps = int(round(t_final / dt))
    if steps < 2 or abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise DomainError(f"t_final={t_final} must be an integer multiple (>= 2) of dt={dt}")
    coeffs = make_coefficients(theta)
    forcing = ForcingSpec.none(g)
    state = bootstrap_first_step(taylor_green(g), nu, dt, forcing, policy,
                                 exact=lambda t: taylor_green(g, nu, t))
    for _ in range(steps - 1):
        state, _row = advance(state, coeffs, nu, dt, forcing, policy)
    exact = taylor_green(g, nu, steps * dt)
    err = state.u_curr - exact
    return math.sqrt(err.dot(err) / exact.dot(exact))


def observed_orders(dts: Iterable[float], errors: Iterable[float]) -> List[float]:
    """Slopes ``log(e_i / e_{i+1}) / log(dt_i / dt_{i+1})``; NaN for the first entry."""
    dts, errors = list(dts), list(errors)
    out = [math.nan]
    for i in range(1, len(dts)):
        out.append(math.log(errors[i - 1] / errors[i]) / math.log(dts[i - 1] / dts[i]))
    return out


def convergence_study(theta: float, nu: float = 0.5, t_final: float = 1.0, dt0: float = 0.02,
                      halvings: int = 4, n: int = 32,
                      policy: SolverPolicy = SolverPolicy()) -> List[tuple]:
    """Taylor-Green temporal convergence table ``[(dt, error, order), ...]``."""
    dts = [dt0 / 2**i for i in range(halvings + 1)]
    errs = [taylor_green_error(theta, nu, d, t_final, n, policy=policy) for d in dts]
    return list(zip(dts, errs, observed_orders(dts, errs)))
