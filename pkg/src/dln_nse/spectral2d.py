"""Fourier pseudo-spectral discretization on the periodic square torus.

Velocity fields are stored as full 2D FFT coefficients normalized by the
number of grid points, ``uh = fft2(u) / n**2``, so that ``uh[(0, 0)]`` is the
spatial mean. With this convention

    |u|^2 = L^2 sum |uh|^2,    |grad u|^2 = L^2 sum |k|^2 |uh|^2.

Quadratic products are dealiased with the 2/3 rule. When all fields are
supported on the dealiased band, the discrete trilinear form is exact and
``b(u, v, v)`` vanishes up to roundoff.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .errors import DomainError, GridMismatch

TWO_PI = 2.0 * math.pi
C_OMEGA_TORUS = 1.0


@dataclass(frozen=True)
class TorusGrid:
    """Uniform ``n x n`` grid on the torus ``[0, L)^2``.

    Parameters
    ----------
    n : int
        Points per direction; a power of two, at least 8.
    length : float
        Period ``L``.
    """

    n: int
    length: float = TWO_PI

    def __post_init__(self):
        n = int(self.n)
        if n != self.n or n < 8 or n & (n - 1):
            raise DomainError(f"grid size must be a power of two >= 8, got {self.n!r}")
        if not (float(self.length) > 0.0 and math.isfinite(self.length)):
            raise DomainError(f"period must be positive, got {self.length!r}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def k0(self) -> float:
        """Fundamental wavenumber ``2 pi / L``."""
        return TWO_PI / self.length

    @property
    def cutoff(self) -> int:
        """Largest integer wavenumber kept by the 2/3 rule."""
        return (self.n - 1) // 3

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer wavenumbers in FFT order."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).round().astype(int)

    @cached_property
    def kx(self) -> np.ndarray:
        return (self.k0 * self.modes)[:, None] * np.ones(self.n)[None, :]

    @cached_property
    def ky(self) -> np.ndarray:
        return np.ones(self.n)[:, None] * (self.k0 * self.modes)[None, :]

    @cached_property
    def k2(self) -> np.ndarray:
        return self.kx**2 + self.ky**2

    @cached_property
    def k2_safe(self) -> np.ndarray:
        """``|k|^2`` with the mean mode set to 1 to allow division."""
        k2 = self.k2.copy()
        k2[0, 0] = 1.0
        return k2

    @cached_property
    def dealias(self) -> np.ndarray:
        """Boolean mask of modes kept by the 2/3 rule (mean excluded)."""
        m = np.abs(self.modes)
        mask = (m[:, None] <= self.cutoff) & (m[None, :] <= self.cutoff)
        mask[0, 0] = False
        return mask

    @cached_property
    def coords(self) -> tuple:
        """Physical coordinates ``(X, Y)`` with ``X`` varying along axis 0."""
        x = np.arange(self.n) * (self.length / self.n)
        return np.meshgrid(x, x, indexing="ij")

    @property
    def area(self) -> float:
        return self.length**2

    def __hash__(self):
        return hash((self.n, self.length))


def stokes_lambda1(grid: TorusGrid) -> float:
    """Smallest Stokes eigenvalue ``(2 pi / L)^2`` on zero-mean fields."""
    return grid.k0**2


def to_spectral(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    return np.fft.fft2(values, axes=(-2, -1)) / (n * n)


def to_physical(coeffs: np.ndarray) -> np.ndarray:
    n = coeffs.shape[-1]
    return np.fft.ifft2(coeffs * (n * n), axes=(-2, -1)).real


def project_hat(grid: TorusGrid, uh: np.ndarray) -> np.ndarray:
    """Leray projection of spectral coefficients; also removes the mean."""
    kx, ky = grid.kx, grid.ky
    kdotu = (kx * uh[0] + ky * uh[1]) / grid.k2_safe
    out = np.empty_like(uh)
    out[0] = uh[0] - kx * kdotu
    out[1] = uh[1] - ky * kdotu
    out[:, 0, 0] = 0.0
    return out


def advection_hat(grid: TorusGrid, uh: np.ndarray) -> np.ndarray:
    """Dealiased, projected ``P (u . grad) u`` for a band-limited field.

    Uses the divergence form ``div(u u^T)``, which agrees with the
    convective form on divergence-free band-limited fields.
    """
    u = to_physical(uh)
    prod = np.stack((u[0] * u[0], u[0] * u[1], u[1] * u[1]))
    ph = to_spectral(prod)
    ph *= grid.dealias
    ikx, iky = 1j * grid.kx, 1j * grid.ky
    nh = np.stack((ikx * ph[0] + iky * ph[1], ikx * ph[1] + iky * ph[2]))
    return project_hat(grid, nh)


class VelocityField:
    """Spectral velocity field ``(u_1, u_2)`` on a :class:`TorusGrid`.

    Instances support ``+``, ``-``, scalar ``*`` and ``/`` and the L2 inner
    product :meth:`dot`, so they can be used directly with
    :mod:`dln_nse.dln_core`. Construction does not project; use
    :func:`leray_project` to obtain a divergence-free zero-mean field.
    """

    __slots__ = ("grid", "coeffs")
    __array_priority__ = 1000

    def __init__(self, grid: TorusGrid, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (2, grid.n, grid.n):
            raise GridMismatch(
                f"coefficient array shape {coeffs.shape} does not match grid n={grid.n}"
            )
        self.grid = grid
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "VelocityField":
        return cls(grid, np.zeros((2, grid.n, grid.n), dtype=complex))

    @classmethod
    def from_physical(cls, grid: TorusGrid, u1: np.ndarray, u2: np.ndarray) -> "VelocityField":
        return cls(grid, to_spectral(np.stack((np.asarray(u1, float), np.asarray(u2, float)))))

    def physical(self) -> np.ndarray:
        """Grid values, shape ``(2, n, n)``."""
        return to_physical(self.coeffs)

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape

    def _other(self, other) -> np.ndarray:
        if not isinstance(other, VelocityField):
            return NotImplemented
        if other.grid != self.grid:
            raise GridMismatch(f"grids differ: {self.grid} vs {other.grid}")
        return other.coeffs

    def __add__(self, other):
        oc = self._other(other)
        if oc is NotImplemented:
            return NotImplemented
        return VelocityField(self.grid, self.coeffs + oc)

    def __sub__(self, other):
        oc = self._other(other)
        if oc is NotImplemented:
            return NotImplemented
        return VelocityField(self.grid, self.coeffs - oc)

    def __mul__(self, scalar):
        if isinstance(scalar, VelocityField):
            return NotImplemented
        return VelocityField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return VelocityField(self.grid, self.coeffs / float(scalar))

    def __neg__(self):
        return VelocityField(self.grid, -self.coeffs)

    def dot(self, other: "VelocityField") -> float:
        """L2 inner product over the torus."""
        oc = self._other(other)
        return self.grid.area * float(np.vdot(self.coeffs, oc).real)

    def norms(self) -> tuple:
        return norms(self)

    def divergence_hat(self) -> np.ndarray:
        return 1j * (self.grid.kx * self.coeffs[0] + self.grid.ky * self.coeffs[1])

    def is_valid(self, rtol: float = 1e-12) -> bool:
        """Divergence-free, zero-mean and real-valued up to ``rtol``."""
        g = self.grid
        scale = math.sqrt(float(np.sum(g.k2 * np.abs(self.coeffs) ** 2))) + 1e-300
        div = math.sqrt(float(np.sum(np.abs(self.divergence_hat()) ** 2)))
        mean = float(np.max(np.abs(self.coeffs[:, 0, 0])))
        flipped = np.roll(self.coeffs[:, ::-1, ::-1], 1, axis=(1, 2))
        asym = float(np.max(np.abs(self.coeffs - flipped.conj())))
        amp = float(np.max(np.abs(self.coeffs))) + 1e-300
        return div <= rtol * scale and mean <= rtol * amp and asym <= rtol * amp

    def __repr__(self):
        l2, _, _ = norms(self)
        return f"VelocityField(n={self.grid.n}, L={self.grid.length:.6g}, |u|={math.sqrt(l2):.6g})"


def _as_field(grid_or_field, coeffs=None) -> VelocityField:
    if isinstance(grid_or_field, VelocityField):
        return grid_or_field
    return VelocityField(grid_or_field, coeffs)


def leray_project(field: VelocityField) -> VelocityField:
    """Orthogonal projection onto divergence-free, zero-mean fields."""
    return VelocityField(field.grid, project_hat(field.grid, field.coeffs))


def dealias(field: VelocityField) -> VelocityField:
    """Truncate a field to the 2/3-rule band."""
    return VelocityField(field.grid, field.coeffs * field.grid.dealias)


def _same_grid(*fields: VelocityField) -> TorusGrid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatch(f"grids differ: {g} vs {f.grid}")
    return g


def convective_hat(u: VelocityField, v: VelocityField) -> np.ndarray:
    """Dealiased coefficients of ``(u . grad) v`` (not projected)."""
    g = _same_grid(u, v)
    up = u.physical()
    ikx, iky = 1j * g.kx, 1j * g.ky
    dv = to_physical(np.stack((ikx * v.coeffs[0], iky * v.coeffs[0],
                               ikx * v.coeffs[1], iky * v.coeffs[1])))
    conv = np.stack((up[0] * dv[0] + up[1] * dv[1], up[0] * dv[2] + up[1] * dv[3]))
    return to_spectral(conv) * g.dealias


def trilinear_b(u: VelocityField, v: VelocityField, w: VelocityField) -> float:
    """Discrete trilinear form ``b(u, v, w) = ((u . grad) v, w)``."""
    g = _same_grid(u, v, w)
    return g.area * float(np.vdot(w.coeffs, convective_hat(u, v)).real)


def norms(u: VelocityField) -> tuple:
    """Return ``(|u|^2, |grad u|^2, |lap u|^2)`` by Parseval."""
    g = u.grid
    e = np.sum(np.abs(u.coeffs) ** 2, axis=0)
    return (g.area * float(np.sum(e)),
            g.area * float(np.sum(g.k2 * e)),
            g.area * float(np.sum(g.k2 * g.k2 * e)))


def l2_sq(u: VelocityField) -> float:
    return u.grid.area * float(np.sum(np.abs(u.coeffs) ** 2))


def grad_sq(u: VelocityField) -> float:
    g = u.grid
    return g.area * float(np.sum(g.k2 * np.abs(u.coeffs) ** 2))


def l4_norm_sq(u: VelocityField) -> float:
    """``|u|_{L^4}^2`` evaluated on a twice-refined grid."""
    g = u.grid
    n2 = 2 * g.n
    big = np.zeros((2, n2, n2), dtype=complex)
    m = g.modes
    ix = np.where(m < 0, m + n2, m)
    big[:, ix[:, None], ix[None, :]] = u.coeffs
    up = to_physical(big)
    q = (up[0] ** 2 + up[1] ** 2) ** 2
    return math.sqrt(float(np.mean(q)) * g.area)


def ladyzhenskaya_ratio(u: VelocityField) -> float:
    """``|u|_{L^4}^2 / (|u| |grad u|)``, the empirical 2D Ladyzhenskaya constant."""
    l2, gr, _ = norms(u)
    return l4_norm_sq(u) / math.sqrt(l2 * gr)


# --- initial conditions -------------------------------------------------

def taylor_green(grid: TorusGrid, nu: float = 0.0, t: float = 0.0, amplitude: float = 1.0) -> VelocityField:
    """Decaying Taylor-Green vortex, an exact unforced solution.

    ``u = A e^{-2 nu k0^2 t} (sin k0x cos k0y, -cos k0x sin k0y)``.
    """
    X, Y = grid.coords
    k0 = grid.k0
    decay = amplitude * math.exp(-2.0 * nu * k0 * k0 * t)
    return VelocityField.from_physical(
        grid,
        decay * np.sin(k0 * X) * np.cos(k0 * Y),
        -decay * np.cos(k0 * X) * np.sin(k0 * Y),
    )


def random_field(grid: TorusGrid, seed: int, l2_norm: float = 1.0, kmax: Optional[int] = None) -> VelocityField:
    """Seeded random divergence-free field with mode energy ``~ |k|^-4``.

    Coefficients are complex Gaussians from ``numpy.random.default_rng(seed)``
    scaled by ``|k|^-2`` on integer wavenumbers ``|k| <= kmax`` (default
    ``n // 4``), symmetrized to a real field, projected and rescaled to the
    requested L2 norm.
    """
    rng = np.random.default_rng(seed)
    kmax = grid.n // 4 if kmax is None else int(kmax)
    m = grid.modes
    kint2 = (m[:, None] ** 2 + m[None, :] ** 2).astype(float)
    band = (kint2 <= kmax * kmax) & (kint2 > 0)
    env = np.where(band, 1.0 / np.where(kint2 > 0, kint2, 1.0), 0.0)
    raw = (rng.standard_normal((2, grid.n, grid.n))
           + 1j * rng.standard_normal((2, grid.n, grid.n))) * env
    phys = to_physical(raw)
    field = leray_project(VelocityField(grid, to_spectral(phys) * band))
    norm = math.sqrt(l2_sq(field))
    if norm == 0.0:
        return field
    return field * (l2_norm / norm)


# --- forcing ------------------------------------------------------------

def _modulation(name: str, omega: float) -> Callable[[float], float]:
    if name == "constant":
        return lambda t: 1.0
    if name == "cos":
        return lambda t: math.cos(omega * t)
    if name == "sin":
        return lambda t: math.sin(omega * t)
    raise DomainError(f"unknown modulation {name!r}; expected constant, cos or sin")


@dataclass(frozen=True)
class ForcingSpec:
    """Divergence-free body force ``f(x, t) = g(t) F(x)``.

    ``F`` is a sum of shear modes ``A (k_perp / |k|) cos(k . x + phase)`` with
    integer wavenumber ``k = (kx, ky)`` and ``k_perp = (-ky, kx)``. The time
    modulation ``g`` is ``constant``, ``cos`` or ``sin`` in ``omega t``, so
    ``|g| <= 1`` and ``f_inf = |F|``.

    Parameters
    ----------
    grid : TorusGrid
    modes : sequence of (kx, ky, amplitude, phase)
    modulation : str
    omega : float
    """

    grid: TorusGrid
    modes: tuple = ()
    modulation: str = "constant"
    omega: float = 1.0
    _spatial: VelocityField = field(init=False, repr=False, compare=False)
    f_inf: float = field(init=False)

    def __post_init__(self):
        modes = tuple((int(kx), int(ky), float(a), float(ph)) for kx, ky, a, ph in self.modes)
        object.__setattr__(self, "modes", modes)
        _modulation(self.modulation, self.omega)
        g = self.grid
        X, Y = g.coords
        u1 = np.zeros((g.n, g.n))
        u2 = np.zeros((g.n, g.n))
        for kx, ky, amp, ph in modes:
            if kx == 0 and ky == 0:
                raise DomainError("forcing mode (0, 0) would give a nonzero mean")
            if max(abs(kx), abs(ky)) > g.cutoff:
                raise DomainError(
                    f"forcing mode ({kx}, {ky}) lies outside the dealiased band |k| <= {g.cutoff}"
                )
            kn = math.hypot(kx, ky)
            arg = g.k0 * (kx * X + ky * Y) + ph
            u1 += amp * (-ky / kn) * np.cos(arg)
            u2 += amp * (kx / kn) * np.cos(arg)
        spatial = VelocityField.from_physical(g, u1, u2)
        object.__setattr__(self, "_spatial", spatial)
        object.__setattr__(self, "f_inf", math.sqrt(l2_sq(spatial)))

    @classmethod
    def none(cls, grid: TorusGrid) -> "ForcingSpec":
        return cls(grid, ())

    @property
    def is_zero(self) -> bool:
        return self.f_inf == 0.0

    @property
    def spatial(self) -> VelocityField:
        return self._spatial

    def analytic_norm(self) -> float:
        """``sqrt(sum A^2 L^2 / 2)``, exact when no two modes share ``+-k``."""
        return math.sqrt(sum(a * a for _, _, a, _ in self.modes) * self.grid.area / 2.0)

    def amplitude(self, t: float) -> float:
        return _modulation(self.modulation, self.omega)(t)

    def at(self, t: float) -> VelocityField:
        return self._spatial * self.amplitude(t)

    def coeffs_at(self, t: float) -> np.ndarray:
        return self._spatial.coeffs * self.amplitude(t)

    def scaled_to(self, f_inf: float) -> "ForcingSpec":
        """Copy with amplitudes rescaled so that ``f_inf`` matches."""
        if self.f_inf == 0.0:
            raise DomainError("cannot rescale a zero forcing")
        r = f_inf / self.f_inf
        return ForcingSpec(self.grid, tuple((kx, ky, a * r, ph) for kx, ky, a, ph in self.modes),
                           self.modulation, self.omega)


# --- I/O ----------------------------------------------------------------

SNAPSHOT_MAGIC = b"DLNF"
_HEADER = struct.Struct("<4sIdd")


def write_snapshot(path: Union[str, Path], u: VelocityField, t: float = 0.0) -> None:
    """Write a binary snapshot.

    Layout (little endian): magic ``b"DLNF"``, ``uint32 n``, ``float64 L``,
    ``float64 t``, then ``2 n n`` complex128 coefficients in row-major FFT
    wavenumber order (component, kx index, ky index).
    """
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, u.grid.n, u.grid.length, float(t)))
        fh.write(np.ascontiguousarray(u.coeffs, dtype="<c16").tobytes())


def read_snapshot(path: Union[str, Path]) -> tuple:
    """Read a snapshot written by :func:`write_snapshot`; returns ``(field, t)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DomainError(f"{path}: truncated snapshot header")
    magic, n, length, t = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise DomainError(f"{path}: not a field snapshot")
    if len(data) != _HEADER.size + 2 * n * n * 16:
        raise DomainError(f"{path}: payload size does not match n={n}")
    coeffs = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape(2, n, n)
    return VelocityField(TorusGrid(n, length), coeffs.copy()), t


def energy_spectrum(u: VelocityField) -> tuple:
    """Shell-summed kinetic energy ``E(k)`` over integer shells ``k``.

    ``sum(E) == |u|^2 / 2``.
    """
    g = u.grid
    m = g.modes
    shell = np.rint(np.sqrt(m[:, None] ** 2 + m[None, :] ** 2)).astype(int)
    e = 0.5 * g.area * np.sum(np.abs(u.coeffs) ** 2, axis=0)
    spec = np.bincount(shell.ravel(), weights=e.ravel())
    return np.arange(spec.size) * g.k0, spec


def write_spectrum_csv(path: Union[str, Path], u: VelocityField) -> None:
    k, e = energy_spectrum(u)
    with open(path, "w") as fh:
        fh.write("k,energy\n")
        for ki, ei in zip(k, e):
            fh.write(f"{ki:.17g},{ei:.17g}\n")
