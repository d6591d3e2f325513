"""H(theta)-matrix stability certificate for the DLN scheme.

Given ``(theta, nu, lambda1, dt)`` below the admissible step limit, the
pipeline constructs ``eps > 0``, reals ``a, b, c`` and a diagonal matrix
``H = diag(h11, h22)`` such that for any three consecutive states

    (sum alpha y, y_beta) + (nu dt lambda1 / 2) |y_beta|^2
        = (1 + eps) H(y_{n+1}, y_n) - H(y_n, y_{n-1}) + |a y_{n+1} + b y_n + c y_{n-1}|^2

where ``H(u, v) = h11 |u|^2 + h22 |v|^2``. Matching the six quadratic
monomials gives the coefficient system evaluated by :func:`system_residuals`.

Every quantity depends on ``nu``, ``lambda1`` and ``dt`` only through
``s = nu * dt * lambda1``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import mpmath

from .dln_core import check_theta, make_coefficients
from .errors import DomainError, InadmissibleTimestep, NegativeDiscriminant

# Relative distance to the step limit below which discriminants are
# re-evaluated in extended precision.
NEAR_LIMIT_FRACTION = 1e-6
_MP_DPS = 50


def _positive(name: str, value) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{name} must be a positive real, got {value!r}") from exc
    if not (v > 0.0 and math.isfinite(v)):
        raise DomainError(f"{name} must be a positive finite real, got {v!r}")
    return v


def max_timestep_factor(theta: float) -> float:
    """Dimensionless step limit ``min{8θ(1-θ²)/(8-6θ²+3θ⁴), 2(1-θ)}``."""
    th = check_theta(theta)
    first = 8.0 * th * (1.0 - th * th) / (8.0 - 6.0 * th * th + 3.0 * th**4)
    return min(first, 2.0 * (1.0 - th))


def max_timestep(theta: float, nu: float, lambda1: float) -> float:
    """Largest admissible time step ``C_dt`` (exclusive).

    Examples
    --------
    >>> round(max_timestep(0.5, 1.0, 1.0), 6)
    0.448598
    """
    nu = _positive("nu", nu)
    lambda1 = _positive("lambda1", lambda1)
    return max_timestep_factor(theta) / (nu * lambda1)


@dataclass(frozen=True)
class CertificateInput:
    """Parameters of a certificate request.

    Construction fails with :class:`InadmissibleTimestep` when ``dt`` is not
    strictly below :func:`max_timestep`.
    """

    theta: float
    nu: float
    lambda1: float
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "theta", check_theta(self.theta))
        object.__setattr__(self, "nu", _positive("nu", self.nu))
        object.__setattr__(self, "lambda1", _positive("lambda1", self.lambda1))
        object.__setattr__(self, "dt", _positive("dt", self.dt))
        limit = max_timestep(self.theta, self.nu, self.lambda1)
        if not self.dt < limit:
            raise InadmissibleTimestep(self.dt, limit)

    @property
    def s(self) -> float:
        """The dimensionless product ``nu * dt * lambda1``."""
        return self.nu * self.dt * self.lambda1

    @property
    def dt_limit(self) -> float:
        return max_timestep(self.theta, self.nu, self.lambda1)


@dataclass(frozen=True)
class HCertificate:
    """All intermediate and final quantities of the certificate pipeline."""

    theta: float
    s: float
    E: float
    F: float
    x: float
    disc_outer: float
    disc_inner: float
    a: float
    b: float
    c: float
    h11: float
    h22: float
    epsilon: float
    B: float
    C: float
    extended_precision: bool = field(default=False, compare=False)

    @property
    def C_h_eff(self) -> float:
        """Effective ``C_h``: the larger diagonal entry of H."""
        return max(self.h11, self.h22)

    @property
    def C_eps_eff(self) -> float:
        """Effective ``C_eps`` so that ``1/eps = C_eps / (nu lambda1 dt)``."""
        return self.s / self.epsilon

    @property
    def mu(self) -> float:
        """Share of ``s/2`` absorbed by ``eps (h11 + h22)``."""
        return 1.0 - 2.0 * self.x / self.s

    def h_norm_sq(self, u_sq: float, v_sq: float) -> float:
        """``h11 u_sq + h22 v_sq`` for squared norms of a state pair."""
        return self.h11 * u_sq + self.h22 * v_sq

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("extended_precision")
        d.update(C_h_eff=self.C_h_eff, C_eps_eff=self.C_eps_eff)
        return d


def _pipeline(th, s, sqrt):
    """Run the construction with the number type implied by ``th`` and ``s``.

    Returns the tuple of raw quantities, or ``("outer"|"inner", value)`` if a
    discriminant is not positive.
    """
    one = th / th
    b2 = (2 * one + th - th * th) / 4
    b1 = th * th / 2
    b0 = (2 * one - th - th * th) / 4
    a1sq = th * (one - th * th) / 2

    E = s * b1 * (b2 + b0) / 2 - a1sq
    F = s * b1 * (b2 + b0) / 2 + 2 * s * b2 * b0
    G = s * b1 * (b2 - b0)
    x = (4 * F * E - G * G) ** 2 / (4 * (E - F) * (G * G - 4 * E * E))
    D = x - 4 * E
    if not D > 0:
        return ("outer", D)
    rx, rD = sqrt(x), sqrt(D)
    # b takes the minus root and a+c the plus root of Z^2 - sqrt(x) Z + E.
    # b is written as E / (a+c) to avoid cancellation.
    apc = (rx + rD) / 2
    b = E / apc
    # a and c are the roots of Y^2 - (a+c) Y + P, with c the larger one.
    # (a+c)^2 - 4ac rewritten so the O(1) terms a1^2 cancel symbolically.
    P = s * b2 * b0 / 2 + a1sq / 4
    Dscr = x / 2 + rx * rD / 2 - F
    if not Dscr > 0:
        return ("inner", Dscr)
    rDs = sqrt(Dscr)
    c = (apc + rDs) / 2
    a = 2 * P / (apc + rDs)

    h22 = c * c - ((one - th) * (th * th + th - 2) / 8 + s * b0 * b0 / 2)
    B = s * b1 * b1 / 2 - th**3 / 2 - b * b
    C = s * b2 * b2 / 2 + (one + th) * (2 + th - th * th) / 8 - a * a
    root = sqrt(B * B + 4 * C * h22)
    h11 = (root - B) / 2
    # eps (h11 + h22) = s/2 - (a+b+c)^2 and (a+b+c)^2 = x, so
    # eps = (s/2 - x) / (h11 + h22) without the subtractive form.
    eps = 2 * (s / 2 - x) / (root + 2 * h22 - B)
    return (E, F, x, D, Dscr, a, b, c, h11, h22, eps, B, C)


def build_certificate(inp: CertificateInput) -> HCertificate:
    """Construct the H(theta) certificate for an admissible input.

    Root branches are fixed: ``a + b + c = +sqrt(x)``, ``b`` is the smaller
    root of its quadratic, ``c`` the larger and ``a`` the smaller root of
    the split of ``a + c``, and ``h11`` the positive root of its quadratic.

    Raises
    ------
    InadmissibleTimestep
        When ``dt`` is not below the limit.
    NegativeDiscriminant
        When a discriminant is not positive even in extended precision.
    """
    if not isinstance(inp, CertificateInput):
        inp = CertificateInput(*inp)
    th, s = inp.theta, inp.s
    limit = max_timestep_factor(th)
    if not s < limit:
        raise InadmissibleTimestep(inp.dt, inp.dt_limit)

    near = (limit - s) < NEAR_LIMIT_FRACTION * limit
    out = _pipeline(th, s, math.sqrt)
    extended = False
    if near or isinstance(out[0], str):
        with mpmath.workdps(_MP_DPS):
            out = _pipeline(mpmath.mpf(th), mpmath.mpf(s), mpmath.sqrt)
            extended = True
            if not isinstance(out[0], str):
                out = tuple(float(v) for v in out)
    if isinstance(out[0], str):
        raise NegativeDiscriminant(out[0], float(out[1]))
    return HCertificate(th, s, *out, extended_precision=extended)


def certify(theta: float, nu: float, lambda1: float, dt: float) -> HCertificate:
    """Shorthand for ``build_certificate(CertificateInput(...))``."""
    return build_certificate(CertificateInput(theta, nu, lambda1, dt))


class SystemResiduals(NamedTuple):
    """LHS minus RHS of the six coefficient-matching equations.

    Rows are the coefficients of ``|y_{n+1}|^2``, ``|y_n|^2``,
    ``|y_{n-1}|^2``, ``(y_{n+1}, y_n)``, ``(y_{n+1}, y_{n-1})`` and
    ``(y_n, y_{n-1})``. ``scale`` is the largest absolute term involved.
    """

    next_sq: float
    curr_sq: float
    prev_sq: float
    next_curr: float
    next_prev: float
    curr_prev: float
    scale: float

    def rows(self) -> tuple:
        return tuple(self[:6])

    def max_relative(self) -> float:
        return max(abs(r) for r in self.rows()) / self.scale


def system_residuals(cert: HCertificate, inp: CertificateInput) -> SystemResiduals:
    """Evaluate the six coefficient equations from certificate fields only."""
    c = make_coefficients(inp.theta)
    th = c.theta
    b0, b1, b2 = c.beta
    a1sq = c.dissip[1] ** 2
    s = inp.s
    e, h11, h22 = cert.epsilon, cert.h11, cert.h22
    a, b, cc = cert.a, cert.b, cert.c

    pairs = [
        ((1 + e) * h11 + a * a, (1 + th) * (2 + th - th * th) / 8 + s * b2 * b2 / 2),
        ((1 + e) * h22 - h11 + b * b, s * b1 * b1 / 2 - th**3 / 2),
        (cc * cc - h22, (1 - th) * (th * th + th - 2) / 8 + s * b0 * b0 / 2),
        (2 * a * b, s * b2 * b1 - a1sq),
        (2 * a * cc, s * b2 * b0 + a1sq / 2),
        (2 * b * cc, s * b1 * b0 - a1sq),
    ]
    terms = [abs(h11), abs(h22), abs(e * h11), abs(e * h22), a * a, b * b, cc * cc]
    terms += [abs(r) for _, r in pairs]
    return SystemResiduals(*(lhs - rhs for lhs, rhs in pairs), scale=max(terms))


def h11_floor(theta: float) -> float:
    """Lower bound ``(θ³/2)[1 - θ(1-θ)/2]`` on ``h11``."""
    th = check_theta(theta)
    return th**3 / 2.0 * (1.0 - th * (1.0 - th) / 2.0)


def h22_floor(theta: float) -> float:
    """Lower bound ``θ(1-θ)²(1+θ)(2+θ)/16`` on ``h22``."""
    th = check_theta(theta)
    return th * (1.0 - th) ** 2 * (1.0 + th) * (2.0 + th) / 16.0


@dataclass(frozen=True)
class BoundFlags:
    """Pass/fail result of every admissibility inequality."""

    h11_lower: bool
    h22_lower: bool
    eps_below_4: bool
    inv_eps_above_quarter: bool
    inv_eps_below_C_eps: bool
    x_below_quarter_s: bool
    E_negative: bool
    F_positive: bool
    discriminants_positive: bool

    @property
    def all_pass(self) -> bool:
        return all(asdict(self).values())

    def failed(self) -> list:
        return [k for k, v in asdict(self).items() if not v]

    def as_dict(self) -> dict:
        return asdict(self)


def bound_flags(cert: HCertificate, inp: CertificateInput) -> BoundFlags:
    """Check the certificate against its admissibility inequalities.

    ``1/eps < C_eps/(nu lambda1 dt)`` holds with equality for the effective
    constant, so that flag tests ``<=`` with a relative slack of 1e-12.
    """
    th = inp.theta
    s = inp.s
    eps = cert.epsilon
    inv = 1.0 / eps if eps > 0 else math.inf
    return BoundFlags(
        h11_lower=cert.h11 > h11_floor(th),
        h22_lower=cert.h22 > h22_floor(th),
        eps_below_4=0.0 < eps < 4.0,
        inv_eps_above_quarter=inv > 0.25,
        inv_eps_below_C_eps=inv <= cert.C_eps_eff / s * (1.0 + 1e-12),
        x_below_quarter_s=0.0 <= cert.x < s / 4.0,
        E_negative=cert.E < 0.0,
        F_positive=cert.F > 0.0,
        discriminants_positive=cert.disc_outer > 0.0 and cert.disc_inner > 0.0,
    )


def debug_report(cert: HCertificate, inp: CertificateInput) -> dict:
    """Flat dictionary with every certificate field, residual and flag."""
    res = system_residuals(cert, inp)
    out = {"theta": inp.theta, "nu": inp.nu, "lambda1": inp.lambda1, "dt": inp.dt,
           "s": inp.s, "C_dt": inp.dt_limit}
    out.update(cert.as_dict())
    out["mu"] = cert.mu
    out["h11_plus_B"] = cert.h11 + cert.B
    out["abc_sum"] = cert.a + cert.b + cert.c
    out["extended_precision"] = cert.extended_precision
    for name, val in zip(SystemResiduals._fields[:6], res.rows()):
        out[f"residual_{name}"] = val
    out["residual_max_relative"] = res.max_relative()
    for k, v in bound_flags(cert, inp).as_dict().items():
        out[f"flag_{k}"] = v
    return out
