"""DLN coefficient family, the G(theta)-norm and the two-step identities.

Every routine here works on an abstract inner-product space. Elements may be
NumPy arrays (the Euclidean dot product is used) or any object exposing a
``dot`` method together with ``+``, ``-`` and scalar ``*``, such as
:class:`dln_nse.spectral2d.VelocityField`. A custom inner product can also be
passed explicitly through the ``dot`` keyword.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple, Optional

import numpy as np

from .errors import DimensionMismatch, DomainError

DotFn = Callable[[Any, Any], float]


def check_theta(theta: float) -> float:
    """Validate the DLN parameter and return it as a float.

    Raises
    ------
    DomainError
        If ``theta`` is not a finite number in the open interval (0, 1).
    """
    try:
        th = float(theta)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"theta must be a real number, got {theta!r}") from exc
    if not (0.0 < th < 1.0):
        raise DomainError(f"theta must lie in the open interval (0, 1), got {th!r}")
    return th


@dataclass(frozen=True)
class DlnCoefficients:
    """Coefficients of the DLN one-leg method for one value of theta.

    Tuples are ordered by time level, index 0 multiplying ``y_{n-1}``,
    index 1 multiplying ``y_n`` and index 2 multiplying ``y_{n+1}``.

    Attributes
    ----------
    theta : float
        Method parameter in (0, 1).
    alpha : tuple of float
        Difference coefficients (alpha_0, alpha_1, alpha_2).
    beta : tuple of float
        Averaging coefficients (beta_0, beta_1, beta_2).
    dissip : tuple of float
        Numerical dissipation coefficients (a_0, a_1, a_2).
    """

    theta: float
    alpha: tuple
    beta: tuple
    dissip: tuple

    @property
    def stiff_margin(self) -> float:
        """``2 beta_2 - 1``, which equals ``theta (1 - theta) / 2``."""
        return 2.0 * self.beta[2] - 1.0

    @property
    def g_weights(self) -> tuple:
        """Diagonal entries ((1+theta)/4, (1-theta)/4) of the G matrix."""
        return ((1.0 + self.theta) / 4.0, (1.0 - self.theta) / 4.0)


def make_coefficients(theta: float) -> DlnCoefficients:
    """Build the DLN coefficients for ``theta``.

    Parameters
    ----------
    theta : float
        Method parameter, strictly between 0 and 1.

    Returns
    -------
    DlnCoefficients

    Examples
    --------
    >>> c = make_coefficients(0.5)
    >>> c.alpha, c.beta
    ((-0.25, -0.5, 0.75), (0.3125, 0.125, 0.5625))
    """
    th = check_theta(theta)
    alpha = ((th - 1.0) / 2.0, -th, (th + 1.0) / 2.0)
    beta = ((2.0 - th - th * th) / 4.0, th * th / 2.0, (2.0 + th - th * th) / 4.0)
    a1 = -math.sqrt(th * (1.0 - th * th)) / math.sqrt(2.0)
    dissip = (-a1 / 2.0, a1, -a1 / 2.0)
    return DlnCoefficients(theta=th, alpha=alpha, beta=beta, dissip=dissip)


def _coeffs(theta) -> DlnCoefficients:
    if isinstance(theta, DlnCoefficients):
        return theta
    return make_coefficients(theta)


class StateTriple(NamedTuple):
    """Three consecutive states ``(y_{n-1}, y_n, y_{n+1})``."""

    y_prev: Any
    y_curr: Any
    y_next: Any


def _resolve_dot(triple: StateTriple, dot: Optional[DotFn]) -> DotFn:
    if dot is not None:
        return dot
    first = triple[0]
    if hasattr(first, "dot") and not isinstance(first, np.ndarray):
        return lambda x, y: float(x.dot(y))
    return lambda x, y: float(np.vdot(x, y).real)


def _check_triple(triple) -> StateTriple:
    triple = StateTriple(*triple)
    shapes = []
    for y in triple:
        if isinstance(y, np.ndarray) or np.isscalar(y):
            shapes.append(np.shape(y))
        else:
            shapes.append(getattr(y, "shape", None))
    if any(s != shapes[0] for s in shapes[1:]):
        raise DimensionMismatch(f"triple elements have different shapes: {shapes}")
    grids = [getattr(y, "grid", None) for y in triple]
    if any(g != grids[0] for g in grids[1:]):
        raise DimensionMismatch("triple elements live on different grids")
    return triple


def _combine(weights, triple: StateTriple):
    w0, w1, w2 = weights
    return triple.y_prev * w0 + triple.y_curr * w1 + triple.y_next * w2


def combine_beta(triple, coeffs) -> Any:
    """Return ``beta_0 y_prev + beta_1 y_curr + beta_2 y_next``.

    ``coeffs`` may be a :class:`DlnCoefficients` or a bare theta.
    """
    triple = _check_triple(triple)
    return _combine(_coeffs(coeffs).beta, triple)


def combine_alpha(triple, coeffs) -> Any:
    """Return ``alpha_0 y_prev + alpha_1 y_curr + alpha_2 y_next``."""
    triple = _check_triple(triple)
    return _combine(_coeffs(coeffs).alpha, triple)


def combine_dissipation(triple, coeffs) -> Any:
    """Return ``a_0 y_prev + a_1 y_curr + a_2 y_next``."""
    triple = _check_triple(triple)
    return _combine(_coeffs(coeffs).dissip, triple)


def g_norm_sq(u, v, theta, *, dot: Optional[DotFn] = None) -> float:
    """Squared G(theta)-norm of the pair ``(u, v)``.

    Equal to ``(1+theta)/4 |u|^2 + (1-theta)/4 |v|^2``.
    """
    c = _coeffs(theta)
    _check_triple((u, u, v))
    d = _resolve_dot(StateTriple(u, u, v), dot)
    gu, gv = c.g_weights
    return gu * d(u, u) + gv * d(v, v)


def g_norm_sq_from_norms(u_sq: float, v_sq: float, theta) -> float:
    """G-norm of a pair given the squared norms of its two entries."""
    gu, gv = _coeffs(theta).g_weights
    return gu * u_sq + gv * v_sq


def _residual(lhs: float, rhs_terms, with_scale: bool):
    res = lhs - math.fsum(rhs_terms)
    if with_scale:
        scale = max([abs(lhs)] + [abs(t) for t in rhs_terms])
        return res, scale
    return res


def g_stability_residual(triple, theta, *, dot: Optional[DotFn] = None, with_scale: bool = False):
    """Residual of the G-stability identity for three consecutive states.

    Evaluates ``(sum alpha y, y_beta) - [G(y_{n+1}, y_n) - G(y_n, y_{n-1})
    + |sum a y|^2]``, which vanishes identically in exact arithmetic.

    Parameters
    ----------
    triple : StateTriple or tuple
        ``(y_{n-1}, y_n, y_{n+1})``.
    theta : float or DlnCoefficients
    dot : callable, optional
        Inner product; inferred from the element type when omitted.
    with_scale : bool
        Also return the largest absolute term, for relative tolerances.

    Returns
    -------
    float or (float, float)
    """
    triple = _check_triple(triple)
    c = _coeffs(theta)
    d = _resolve_dot(triple, dot)
    lhs = d(_combine(c.alpha, triple), _combine(c.beta, triple))
    diss = _combine(c.dissip, triple)
    gu, gv = c.g_weights
    yp, yc, yn = triple
    n_next, n_curr, n_prev = d(yn, yn), d(yc, yc), d(yp, yp)
    rhs = [gu * n_next, gv * n_curr, -gu * n_curr, -gv * n_prev, d(diss, diss)]
    return _residual(lhs, rhs, with_scale)


def identity1_residual(triple, theta, *, dot: Optional[DotFn] = None, with_scale: bool = False):
    """Residual of the identity for ``(sum alpha y, y_{n+1})``.

    The right side is the G-norm difference plus
    ``theta/2 |y_{n+1} - y_n|^2 + (1-theta)/4 |y_{n+1} - y_{n-1}|^2``.
    """
    triple = _check_triple(triple)
    c = _coeffs(theta)
    th = c.theta
    d = _resolve_dot(triple, dot)
    yp, yc, yn = triple
    lhs = d(_combine(c.alpha, triple), yn)
    gu, gv = c.g_weights
    n_next, n_curr, n_prev = d(yn, yn), d(yc, yc), d(yp, yp)
    j1 = yn - yc
    j2 = yn - yp
    rhs = [
        gu * n_next, gv * n_curr, -gu * n_curr, -gv * n_prev,
        th / 2.0 * d(j1, j1),
        (1.0 - th) / 4.0 * d(j2, j2),
    ]
    return _residual(lhs, rhs, with_scale)


def identity2_residual(triple, theta, *, dot: Optional[DotFn] = None, with_scale: bool = False):
    """Residual of the identity for ``(y_beta, y_{n+1})``.

    The right side is ``(2 beta_2 - 1)|y_{n+1}|^2 + beta_1/2 |y_{n+1}+y_n|^2
    + beta_0/2 |y_{n+1}+y_{n-1}|^2`` plus a telescoping pair.
    """
    triple = _check_triple(triple)
    c = _coeffs(theta)
    b0, b1, b2 = c.beta
    d = _resolve_dot(triple, dot)
    yp, yc, yn = triple
    lhs = d(_combine(c.beta, triple), yn)
    n_next, n_curr, n_prev = d(yn, yn), d(yc, yc), d(yp, yp)
    s1 = yn + yc
    s2 = yn + yp
    rhs = [
        (2.0 * b2 - 1.0) * n_next,
        b1 / 2.0 * d(s1, s1),
        b0 / 2.0 * d(s2, s2),
        (b0 + b1) / 2.0 * n_next, b0 / 2.0 * n_curr,
        -(b0 + b1) / 2.0 * n_curr, -b0 / 2.0 * n_prev,
    ]
    return _residual(lhs, rhs, with_scale)
