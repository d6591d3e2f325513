"""Long-time bound constants and the two discrete Gronwall lemmas.

All constants are computed from the effective certificate constants
``C_h_eff = max(h11, h22)`` and ``C_eps_eff = nu lambda1 dt / eps``. Bounds
whose logarithm argument degenerates (zero forcing) are reported as
``math.inf`` rather than raising, so unforced runs still yield a ledger.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .certificate import HCertificate, h11_floor, max_timestep
from .dln_core import check_theta, g_norm_sq_from_norms, make_coefficients
from .errors import DomainError, IndexWindowError, WindowTooShort
from .spectral2d import C_OMEGA_TORUS

# The first bracket of rho1 carries rho0^4 while the second carries rho0^2,
# and the finite-horizon L2(H1) estimate uses K2^4 in both. Each formula is
# transcribed as stated; this note is copied into run manifests.
RHO1_POWER_NOTE = (
    "rho1 first bracket uses 4*rho0^4*(b0^2+b1^2)^2, second uses rho0^2; "
    "transcribed literally, not normalized"
)


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _ratio_exp(num: float, den: float, x: float) -> float:
    """``num / den * exp(x)`` with infinite ``den`` or ``x`` handled."""
    if den == 0.0:
        return math.inf
    if math.isinf(den) or x == -math.inf:
        return 0.0
    if math.isnan(x):
        return 0.0
    return num / den * _exp(x)


def _nonneg(name, v) -> float:
    v = float(v)
    if not v >= 0.0:
        raise DomainError(f"{name} must be nonnegative, got {v!r}")
    return v


def _pos(name, v) -> float:
    v = float(v)
    if not v > 0.0:
        raise DomainError(f"{name} must be positive, got {v!r}")
    return v


@dataclass(frozen=True)
class L2Constants:
    """Uniform L2 bound constants.

    ``T_star`` is ``inf`` for zero forcing and clamped at 0 when the
    logarithm is negative (the initial data already lie in the ball).
    """

    K1: float
    K2: float
    rho0: float
    T_star: float
    C_h_eff: float
    C_eps_eff: float
    hatC_h: float
    theta: float
    nu: float
    lambda1: float
    f_inf: float
    norm_u0: float
    norm_u1: float

    @property
    def G_initial(self) -> float:
        """``|(u_1, u_0)|_G^2``."""
        return g_norm_sq_from_norms(self.norm_u1**2, self.norm_u0**2, self.theta)

    def as_dict(self) -> dict:
        return asdict(self)


def l2_constants(cert: HCertificate, norm_u0: float, norm_u1: float, f_inf: float,
                 nu: float, lambda1: float, theta: float) -> L2Constants:
    """Compute ``K1, K2, rho0, T*`` and ``hat C_h`` with effective constants."""
    th = check_theta(theta)
    nu, lambda1 = _pos("nu", nu), _pos("lambda1", lambda1)
    n0, n1, f = _nonneg("norm_u0", norm_u0), _nonneg("norm_u1", norm_u1), _nonneg("f_inf", f_inf)
    ch, ce = cert.C_h_eff, cert.C_eps_eff
    floor = h11_floor(th)
    ic = n1 * n1 + n0 * n0
    K1 = ch * ic + ce / (2.0 * nu**2 * lambda1**2) * f * f
    K2 = math.sqrt(K1 / floor)
    hat = ch / floor
    rho0 = ce * f * f / (nu**2 * lambda1**2 * th**3 * (1.0 - th * (1.0 - th) / 2.0))
    if rho0 == 0.0:
        T = math.inf
    elif ic == 0.0:
        T = 0.0
    else:
        T = max(0.0, 4.0 * ce / (nu * lambda1) * math.log(hat * ic / rho0))
    return L2Constants(K1, K2, rho0, T, ch, ce, hat, th, nu, lambda1, f, n0, n1)


def kappa_constants(theta: float, nu: float, C_Omega: float, K2: float, rho0: float) -> tuple:
    """Return ``(kappa1, kappa2, kappa3, kappa4)``."""
    th = check_theta(theta)
    nu = _pos("nu", nu)
    co = _pos("C_Omega", C_Omega)
    K2, rho0 = _nonneg("K2", K2), _nonneg("rho0", rho0)
    q = 2.0 - th * th
    den = nu**2 * (2.0 - th) ** 2 * (1.0 + th)
    k1 = 27.0 * q * co**2 * K2**2 / (16.0 * nu**3)
    k2 = 3.0 + 8.0 * q * K2**2 / den
    k3 = 27.0 * q * co**2 * rho0 / (8.0 * nu**3)
    k4 = 3.0 + 16.0 * q * rho0 / den
    return k1, k2, k3, k4


def k3_bound(theta, nu, C_dt, kappa1, kappa2, A1, G_initial, f_inf, elapsed) -> float:
    """Finite-horizon H1 bound ``K3`` at model time ``elapsed = (n-1) dt``."""
    f2 = f_inf * f_inf
    inner = 2.0 * G_initial + elapsed / nu * f2
    pre = A1 + kappa1 * C_dt * f2 / nu**2 * inner + elapsed / (2.0 * nu) * f2
    e = _exp(kappa1 * (kappa2 + 1.0) / nu * inner)
    return pre * e if pre > 0 else 0.0


@dataclass(frozen=True)
class H1Constants:
    """Constants of the H1 bounds; ``K3`` is evaluated at ``horizon``."""

    kappa1: float
    kappa2: float
    kappa3: float
    kappa4: float
    K3: float
    K4: float
    K5: float
    K6: float
    rho1: float
    rho2: float
    rho3: float
    r: float
    C_Omega: float
    C_dt: float
    A1: float
    horizon: float
    G_initial: float
    theta: float
    nu: float
    f_inf: float

    def K3_at(self, elapsed: float) -> float:
        """``K3`` at model time ``elapsed = (n - 1) dt``."""
        return k3_bound(self.theta, self.nu, self.C_dt, self.kappa1, self.kappa2,
                        self.A1, self.G_initial, self.f_inf, elapsed)

    @property
    def dt_limit(self) -> float:
        return min(self.C_dt, self.K6, self.rho3)

    def as_dict(self) -> dict:
        return asdict(self)


def h1_constants(theta: float, nu: float, lambda1: float, dt: float, cert: HCertificate,
                 l2: L2Constants, A1: Optional[float], grad_norms: Sequence[float],
                 f_inf: float, r: float, *, C_Omega: float = C_OMEGA_TORUS,
                 horizon: Optional[float] = None) -> H1Constants:
    """Compute ``kappa1..4``, ``K3..K6`` and ``rho1..rho3``.

    Parameters
    ----------
    A1 : float or None
        ``|(grad u_1, grad u_0)|_G^2``; computed from ``grad_norms`` if None.
    grad_norms : (float, float)
        ``(|grad u_0|, |grad u_1|)``.
    r : float
        Window length; must exceed ``5 C_dt``.
    horizon : float, optional
        Model time at which ``K3`` is reported, default ``T* + r`` (or ``r``
        when ``T*`` is infinite).

    Raises
    ------
    WindowTooShort
        If ``r <= 5 C_dt``.
    """
    th = check_theta(theta)
    nu, lambda1 = _pos("nu", nu), _pos("lambda1", lambda1)
    _pos("dt", dt)
    f = _nonneg("f_inf", f_inf)
    C_dt = max_timestep(th, nu, lambda1)
    r = float(r)
    if not r > 5.0 * C_dt:
        raise WindowTooShort(f"window r={r:.6g} must exceed 5*C_dt={5.0 * C_dt:.6g}")
    g0, g1 = (float(v) for v in grad_norms)
    if A1 is None:
        A1 = g_norm_sq_from_norms(g1 * g1, g0 * g0, th)
    A1 = _nonneg("A1", A1)

    c = make_coefficients(th)
    b0, b1, _ = c.beta
    m = c.stiff_margin
    bsq = (b0 * b0 + b1 * b1) ** 2
    f2 = f * f
    rho0, T, hat, ce = l2.rho0, l2.T_star, l2.hatC_h, l2.C_eps_eff
    k1, k2, k3, k4 = kappa_constants(th, nu, C_Omega, l2.K2, rho0)
    G0 = l2.G_initial

    if horizon is None:
        horizon = T + r if math.isfinite(T) else r
    K3 = k3_bound(th, nu, C_dt, k1, k2, A1, G0, f, horizon)

    K4 = ((1.0 + th) * rho0 / (2.0 * hat) * _exp(nu * lambda1 * T / (4.0 * ce))
          + (T + 2.0 * C_dt) / nu * f2) if math.isfinite(T) else math.inf
    # K5, K6, rho1 and rho3 are products of a prefactor and an exponential.
    # Quotients are formed from exponents so that large arguments do not
    # produce inf/inf.
    if math.isfinite(K4):
        pre5 = A1 + k1 * C_dt * f2 * K4 / nu**2 + (T + 2.0 * C_dt) / (2.0 * nu) * f2
        x5 = k1 * (k2 + 1.0) * K4 / nu
    else:
        pre5, x5 = math.inf, math.inf
    K5 = pre5 * _exp(x5)
    win = 2.0 * rho0 + r / (nu * lambda1) * f2
    xw = k3 * (k4 + 1.0) / nu * win
    lead = m * r / (4.0 * (4.0 + 3.0 * th))
    K6 = _ratio_exp(lead, pre5, xw - x5)

    pre1 = (
        1.0
        + 16.0 * rho0 / (nu * m * r) * (1.0 + 4.0 * rho0**4 * bsq / (nu**4 * m**3))
        + 32.0 / (nu**2 * m**2 * lambda1) * (1.0 + rho0**2 * bsq / (nu**4 * m**2)) * f2
        + k3 * C_dt / nu**2 * f2 * win
        + r * f2 / (2.0 * nu)
    )
    rho1 = pre1 * _exp(2.0 * xw)
    win2 = 2.0 * (1.0 + th) * rho0 + r / nu * f2
    rho2 = (rho1 + k3 * C_dt * f2 / nu**2 * win2 + r / (2.0 * nu) * f2) \
        * _exp(2.0 * k3 * (k4 + 1.0) / nu * win2)
    rho3 = _ratio_exp(lead, pre1, xw - 2.0 * xw)

    return H1Constants(k1, k2, k3, k4, K3, K4, K5, K6, rho1, rho2, rho3, r,
                       float(C_Omega), C_dt, A1, float(horizon), G0, th, nu, f)


def uniform_timestep_limit(C_dt: float, K6: float, rho3: float) -> float:
    """Step limit ``min{C_dt, K6, rho3}`` for the uniform H1 bound."""
    for name, v in (("C_dt", C_dt), ("K6", K6), ("rho3", rho3)):
        _pos(name, v)
    return min(C_dt, K6, rho3)


# --- discrete Gronwall lemmas -------------------------------------------

@dataclass(frozen=True)
class GronwallInput:
    """Data of ``xi_n <= xi_{n-1}(1 + k eta_{n-1}) + k zeta_n``.

    ``eta[i]`` and ``zeta[i]`` hold ``eta_i`` and ``zeta_i`` from index 0;
    ``zeta[0]`` never enters the recursion.
    """

    k: float
    xi0: float
    eta: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        _pos("k", self.k)
        _nonneg("xi0", self.xi0)
        eta = np.asarray(self.eta, dtype=float)
        zeta = np.asarray(self.zeta, dtype=float)
        if eta.ndim != 1 or zeta.ndim != 1:
            raise DomainError("eta and zeta must be one-dimensional")
        if np.any(eta < 0) or np.any(zeta < 0):
            raise DomainError("eta and zeta must be nonnegative")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "zeta", zeta)


def gronwall_bound(inp: GronwallInput, n: int) -> float:
    """Finite-horizon discrete Gronwall bound on ``xi_n``.

    ``xi0 exp(sum_{i<n} k eta_i) + sum_{i=1}^{n} k zeta_i exp(sum_{j=i}^{n-1} k eta_j) + k zeta_n``.

    Examples
    --------
    >>> gronwall_bound(GronwallInput(1.0, 0.0, [0.0] * 5, [1.0] * 6), 5)
    6.0
    """
    n = int(n)
    if n < 2:
        raise IndexWindowError(f"n must be at least 2, got {n}")
    if inp.eta.size < n or inp.zeta.size < n + 1:
        raise IndexWindowError(
            f"need len(eta) >= {n} and len(zeta) >= {n + 1}, got {inp.eta.size} and {inp.zeta.size}"
        )
    k = inp.k
    keta = k * inp.eta[:n]
    # tail[i] = sum_{j=i}^{n-1} k eta_j for i = 0..n, computed right to left
    tail = np.concatenate((np.cumsum(keta[::-1])[::-1], [0.0]))
    kz = k * inp.zeta[1:n + 1]
    total = inp.xi0 * math.exp(tail[0]) + math.fsum(kz * np.exp(tail[1:n + 1])) + kz[-1]
    return float(total)


def window_max_sum(seq: Sequence[float], k: float, n1: int, n2: int, n_star: int) -> float:
    """``max_{n1 <= n' <= n_star - n2} sum_{n=n'}^{n'+n2} k seq_n``."""
    s = np.asarray(seq, dtype=float)
    if s.size < n_star + 1:
        raise IndexWindowError(f"sequence needs at least {n_star + 1} entries")
    return max(k * math.fsum(s[p:p + n2 + 1]) for p in range(n1, n_star - n2 + 1))


def uniform_gronwall_bound(inp: Optional[GronwallInput], n1: int, n2: int, n_star: int,
                           a1: float, a2: float, a3: float, k: Optional[float] = None) -> float:
    """Uniform discrete Gronwall bound ``(a3/(k n2) + a2) exp(a1)``.

    Valid for every ``n`` with ``n1 + n2 + 1 <= n <= n_star`` when ``a1``,
    ``a2``, ``a3`` bound the sliding-window sums of ``k eta``, ``k zeta``
    and ``k xi`` over windows of ``n2 + 1`` indices starting in
    ``[n1, n_star - n2]``. ``k`` defaults to ``inp.k``.
    """
    n1, n2, n_star = int(n1), int(n2), int(n_star)
    if k is None:
        if inp is None:
            raise DomainError("k must be given when inp is None")
        k = inp.k
    k = _pos("k", k)
    if n2 < 1:
        raise IndexWindowError(f"n2 must be positive, got {n2}")
    if not (0 <= n1 < n_star and n1 + n2 + 1 <= n_star):
        raise IndexWindowError(
            f"need n1 < n_star and n1 + n2 + 1 <= n_star, got n1={n1}, n2={n2}, n_star={n_star}"
        )
    a1, a2, a3 = _nonneg("a1", a1), _nonneg("a2", a2), _nonneg("a3", a3)
    return (a3 / (k * n2) + a2) * _exp(a1)
