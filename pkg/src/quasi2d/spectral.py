"""Discrete function spaces on an anisotropic periodic box.

Fields are stored as half-spectrum Fourier coefficients (``rfftn`` layout,
the vertical axis ``x3`` is the halved one) with the normalisation

    f(x) = sum_k  c(k) exp(i k.x),      c = rfftn(f) / N,

so that a single mode ``cos(k.x)`` has coefficient 1/2 at ``+k``. The full
complex coefficient array is recovered with :meth:`Field.full_coeffs`;
every spectral multiplier used here is even in ``k`` or odd with an
``i``-factor, so all operations act identically on either layout.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
import scipy.fft as sfft

FFT_WORKERS = int(os.environ.get("QUASI2D_FFT_WORKERS", "1"))
AXES3 = (-3, -2, -1)


def _is_5_smooth(n: int) -> bool:
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class Grid:
    """Periodic box ``[0, len_h)^2 x [0, len_v)`` sampled on ``n_h^2 x n_v`` points."""

    n_h: int
    n_v: int
    len_h: float
    len_v: float

    def __post_init__(self):
        for name in ("n_h", "n_v"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2 or not _is_5_smooth(int(n)):
                raise ValueError(f"{name}={n} must be an even integer >= 8 with prime factors 2, 3, 5")
        for name in ("len_h", "len_v"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    # geometry ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_h, self.n_h, self.n_v)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n_h, self.n_h, self.n_v // 2 + 1)

    @property
    def size(self) -> int:
        return self.n_h * self.n_h * self.n_v

    @property
    def volume(self) -> float:
        return self.len_h * self.len_h * self.len_v

    @property
    def area(self) -> float:
        return self.len_h * self.len_h

    @property
    def dx_h(self) -> float:
        return self.len_h / self.n_h

    @property
    def dx_v(self) -> float:
        return self.len_v / self.n_v

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.arange(self.n_h) * self.dx_h
        z = np.arange(self.n_v) * self.dx_v
        return x[:, None, None], x[None, :, None], z[None, None, :]

    def centered_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sawtooth coordinates mapped into ``(-L/2, L/2]``."""
        x1, x2, x3 = self.coords()
        return (wrap_centered(x1, self.len_h), wrap_centered(x2, self.len_h), wrap_centered(x3, self.len_v))

    def stretched(self, eps: float, n_v: int | None = None) -> "Grid":
        """Grid of vertical period ``len_v / eps`` (the support of ``f(x_h, eps x3)``)."""
        return Grid(self.n_h, self.n_v if n_v is None else n_v, self.len_h, self.len_v / eps)

    # wavenumbers ------------------------------------------------------
    @cached_property
    def index_h(self) -> np.ndarray:
        return np.fft.fftfreq(self.n_h, 1.0 / self.n_h).round().astype(int)

    @cached_property
    def index_v(self) -> np.ndarray:
        return np.arange(self.n_v // 2 + 1)

    @cached_property
    def _k(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        kh = 2 * np.pi * self.index_h / self.len_h
        kv = 2 * np.pi * self.index_v / self.len_v
        return kh[:, None, None], kh[None, :, None], kv[None, None, :]

    @property
    def k1(self) -> np.ndarray:
        return self._k[0]

    @property
    def k2(self) -> np.ndarray:
        return self._k[1]

    @property
    def k3(self) -> np.ndarray:
        return self._k[2]

    @cached_property
    def kd(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers for odd derivatives; the Nyquist entries are zeroed."""
        out = []
        for k, n, idx in ((self.k1, self.n_h, self.index_h[:, None, None]),
                          (self.k2, self.n_h, self.index_h[None, :, None]),
                          (self.k3, self.n_v, self.index_v[None, None, :])):
            out.append(np.where(np.abs(idx) == n // 2, 0.0, k))
        return tuple(out)

    @cached_property
    def kh_sq(self) -> np.ndarray:
        return self.k1**2 + self.k2**2

    @cached_property
    def ksq(self) -> np.ndarray:
        return self.kh_sq + self.k3**2

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.ksq)

    @cached_property
    def mode_weights(self) -> np.ndarray:
        """Multiplicity of each stored mode in the full spectrum."""
        w = np.full(self.n_v // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return np.broadcast_to(w[None, None, :], self.spectral_shape)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        i1 = 3 * np.abs(self.index_h) < self.n_h
        i3 = 3 * self.index_v < self.n_v
        return i1[:, None, None] & i1[None, :, None] & i3[None, None, :]

    @cached_property
    def dealias_mask_h(self) -> np.ndarray:
        i1 = 3 * np.abs(self.index_h) < self.n_h
        return np.broadcast_to(i1[:, None, None] & i1[None, :, None], self.spectral_shape)


def wrap_centered(x: np.ndarray, length: float) -> np.ndarray:
    y = np.mod(x + length / 2, length) - length / 2
    return np.where(y <= -length / 2, y + length, y)


# transforms ------------------------------------------------------------


def fwd(samples: np.ndarray) -> np.ndarray:
    """Physical samples (last three axes) to half-spectrum coefficients."""
    return sfft.rfftn(samples, axes=AXES3, norm="forward", workers=FFT_WORKERS)


def inv(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return sfft.irfftn(coeffs, s=grid.shape, axes=AXES3, norm="forward", workers=FFT_WORKERS)


@dataclass(frozen=True, eq=False)
class Field:
    """Real scalar field held as half-spectrum Fourier coefficients."""

    grid: Grid
    coeffs: np.ndarray
    meanfree: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != self.grid.spectral_shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.spectral_shape}")
        if self.meanfree and c[0, 0, 0] != 0:
            raise ValueError("meanfree field has a nonzero k=0 coefficient")
        c = c.view()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.spectral_shape, complex), meanfree=True)

    def to_physical(self) -> np.ndarray:
        return inv(self.coeffs, self.grid)

    def full_coeffs(self) -> np.ndarray:
        """Full complex coefficient array indexed by ``(k1, k2, k3)``."""
        return np.fft.fftn(self.to_physical()) / self.grid.size

    def mean_removed(self) -> "Field":
        c = self.coeffs.copy()
        c[0, 0, 0] = 0
        return Field(self.grid, c, meanfree=True)

    def _combine(self, other, op):
        if isinstance(other, Field):
            _same_grid(self, other)
            return Field(self.grid, op(self.coeffs, other.coeffs), self.meanfree and other.meanfree)
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return Field(self.grid, self.coeffs * scalar, self.meanfree)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


@dataclass(frozen=True, eq=False)
class VectorField:
    """Three real components on one grid; ``coeffs`` has shape ``(3, *spectral_shape)``."""

    grid: Grid
    coeffs: np.ndarray
    divfree: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != (3, *self.grid.spectral_shape):
            raise ValueError(f"vector coefficient shape {c.shape} does not match grid")
        c = c.view()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        if self.divfree:
            norm = spectral_l2(c, self.grid)
            res = spectral_l2(divergence_coeffs(c, self.grid), self.grid)
            if res > 1e-12 * max(norm, 1e-300) and res > 1e-300:
                raise ValueError(f"divfree flag set but spectral divergence is {res:.3e} (norm {norm:.3e})")

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((3, *grid.spectral_shape), complex), divfree=True)

    @classmethod
    def from_components(cls, comps: Sequence[Field], divfree: bool = False) -> "VectorField":
        if len(comps) != 3:
            raise ValueError("a vector field has three components")
        grid = comps[0].grid
        for c in comps[1:]:
            _same_grid(comps[0], c)
        return cls(grid, np.stack([c.coeffs for c in comps]), divfree=divfree)

    @property
    def components(self) -> tuple[Field, Field, Field]:
        return tuple(Field(self.grid, self.coeffs[i], meanfree=self.coeffs[i, 0, 0, 0] == 0)
                     for i in range(3))

    @property
    def meanfree(self) -> bool:
        return bool(np.all(self.coeffs[:, 0, 0, 0] == 0))

    def to_physical(self) -> np.ndarray:
        return inv(self.coeffs, self.grid)

    def _combine(self, other, op):
        if isinstance(other, VectorField):
            _same_grid(self, other)
            return VectorField(self.grid, op(self.coeffs, other.coeffs))
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return VectorField(self.grid, self.coeffs * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


AnyField = Union[Field, VectorField]


def _same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def _rewrap(f: AnyField, coeffs: np.ndarray, **flags) -> AnyField:
    if isinstance(f, VectorField):
        return VectorField(f.grid, coeffs, divfree=flags.get("divfree", False))
    return Field(f.grid, coeffs, meanfree=flags.get("meanfree", f.meanfree and coeffs[0, 0, 0] == 0))


# spectral sums ------------------------------------------------------------


def spectral_sum(weights_times_abs2: np.ndarray, grid: Grid) -> float:
    """Sum over the full spectrum of a symmetric quantity stored on the half spectrum."""
    return float(np.sum(grid.mode_weights * weights_times_abs2))


def spectral_l2(coeffs: np.ndarray, grid: Grid) -> float:
    """L2 norm over the box of the field(s) with these coefficients."""
    a2 = np.abs(coeffs) ** 2
    if a2.ndim == 4:
        a2 = a2.sum(axis=0)
    return float(np.sqrt(grid.volume * spectral_sum(a2, grid)))


def spectral_inner(a: AnyField, b: AnyField) -> float:
    """Real L2 inner product computed from coefficients."""
    _same_grid(a, b)
    prod = np.real(a.coeffs * np.conj(b.coeffs))
    if prod.ndim == 4:
        prod = prod.sum(axis=0)
    return a.grid.volume * spectral_sum(prod, a.grid)


def physical_l2(samples: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(np.sum(samples**2) * grid.volume / grid.size))


# operations ----------------------------------------------------------------


def to_physical(f: AnyField) -> np.ndarray:
    return f.to_physical()


def to_spectral(grid: Grid, samples: np.ndarray, meanfree: bool = False) -> AnyField:
    """Samples of shape ``grid.shape`` (scalar) or ``(3, *grid.shape)`` (vector)."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape == grid.shape:
        c = fwd(samples)
        if meanfree:
            c[0, 0, 0] = 0
        return Field(grid, c, meanfree=meanfree)
    if samples.shape == (3, *grid.shape):
        return VectorField(grid, fwd(samples))
    raise ValueError(f"samples of shape {samples.shape} do not match grid {grid.shape}")


def derivative(f: AnyField, multi_index: Sequence[int]) -> AnyField:
    """Spectral derivative d1^a1 d2^a2 d3^a3."""
    if len(multi_index) != 3 or any(int(a) != a or a < 0 for a in multi_index):
        raise ValueError(f"multi-index must be three non-negative integers, got {multi_index}")
    g = f.grid
    mult = np.ones(g.spectral_shape, complex)
    for a, k, kd in zip(multi_index, (g.k1, g.k2, g.k3), g.kd):
        if a:
            mult = mult * (1j * (k if a % 2 == 0 else kd)) ** int(a)
    coeffs = f.coeffs * mult
    if isinstance(f, VectorField):
        return VectorField(g, coeffs)
    if any(multi_index):
        coeffs[0, 0, 0] = 0
        return Field(g, coeffs, meanfree=True)
    return Field(g, coeffs, meanfree=f.meanfree)


HEAT_MODES = ("full", "horizontal", "aniso")


def heat_symbol(grid: Grid, mode: str = "full", eps: float = 1.0) -> np.ndarray:
    if mode == "full":
        return grid.ksq
    if mode == "horizontal":
        return np.broadcast_to(grid.kh_sq, grid.spectral_shape)
    if mode == "aniso":
        return grid.kh_sq + eps**2 * grid.k3**2
    raise ValueError(f"unknown heat mode {mode!r}; expected one of {HEAT_MODES}")


def heat_propagate(f: AnyField, t: float, mode: str = "full", eps: float = 1.0) -> AnyField:
    """exp(t L) with L = Laplacian, horizontal Laplacian, or Delta_h + eps^2 d3^2."""
    if t < 0:
        raise ValueError("heat propagation time must be non-negative")
    mult = np.exp(-t * heat_symbol(f.grid, mode, eps))
    if isinstance(f, VectorField):
        return VectorField(f.grid, f.coeffs * mult, divfree=f.divfree)
    return Field(f.grid, f.coeffs * mult, meanfree=f.meanfree)


def divergence_coeffs(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    k1, k2, k3 = grid.kd
    return 1j * (k1 * coeffs[0] + k2 * coeffs[1] + k3 * coeffs[2])


def divergence(v: VectorField) -> Field:
    return Field(v.grid, divergence_coeffs(v.coeffs, v.grid), meanfree=True)


def divergence_h(v: VectorField) -> Field:
    k1, k2, _ = v.grid.kd
    return Field(v.grid, 1j * (k1 * v.coeffs[0] + k2 * v.coeffs[1]), meanfree=True)


def gradient(f: Field) -> VectorField:
    g = f.grid
    return VectorField(g, np.stack([1j * k * f.coeffs for k in g.kd]))


def curl_coeffs(c: np.ndarray, grid: Grid) -> np.ndarray:
    k1, k2, k3 = grid.kd
    return 1j * np.stack([k2 * c[2] - k3 * c[1], k3 * c[0] - k1 * c[2], k1 * c[1] - k2 * c[0]])


def curl(v: VectorField) -> VectorField:
    return VectorField(v.grid, curl_coeffs(v.coeffs, v.grid))


def leray_coeffs(c: np.ndarray, grid: Grid) -> np.ndarray:
    k = grid.kd
    k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    inv_k2 = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    kdotc = k[0] * c[0] + k[1] * c[1] + k[2] * c[2]
    return np.stack([c[i] - k[i] * kdotc * inv_k2 for i in range(3)])


def _projected(grid: Grid, out: np.ndarray, source: np.ndarray) -> VectorField:
    """Flag a projection output divergence-free, judging the residual against the input's size.

    A near-zero output (the projection of a gradient) is pure roundoff, so its
    own norm is no scale for the check.
    """
    res = spectral_l2(divergence_coeffs(out, grid), grid)
    scale = max(spectral_l2(source, grid), spectral_l2(out, grid))
    if res > 1e-12 * scale and res > 1e-300:
        raise ValueError(f"projection left divergence {res:.3e} (input norm {scale:.3e})")
    v = VectorField(grid, out)
    object.__setattr__(v, "divfree", True)
    return v


def leray_project(v: VectorField) -> VectorField:
    """Orthogonal projection onto divergence-free fields, per mode c - k (k.c)/|k|^2."""
    return _projected(v.grid, leray_coeffs(v.coeffs, v.grid), v.coeffs)


def aniso_pressure_coeffs(c: np.ndarray, grid: Grid, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (projected coefficients, pressure coefficients) for the eps-anisotropic projector."""
    k1, k2, k3 = grid.kd
    sigma = k1**2 + k2**2 + eps**2 * k3**2
    div = 1j * (k1 * c[0] + k2 * c[1] + k3 * c[2])
    # (Delta_h + eps^2 d3^2) p = div v   <=>   -sigma p = div
    p = -np.divide(div, sigma, out=np.zeros_like(div), where=sigma > 0)
    out = np.stack([c[0] - 1j * k1 * p, c[1] - 1j * k2 * p, c[2] - eps**2 * 1j * k3 * p])
    return out, p


def aniso_pressure_project(v: VectorField, eps: float) -> tuple[VectorField, Field]:
    """Remove (grad_h p, eps^2 d3 p) where (Delta_h + eps^2 d3^2) p = div v."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if np.any(np.abs(v.coeffs[:, 0, 0, 0]) > 1e-14 * max(spectral_l2(v.coeffs, v.grid), 1.0)):
        raise ValueError("anisotropic projection needs a mean-free input (k=0 mode must vanish)")
    out, p = aniso_pressure_coeffs(v.coeffs, v.grid, eps)
    return _projected(v.grid, out, v.coeffs), Field(v.grid, p, meanfree=True)


def dealias(f: AnyField) -> AnyField:
    """Two-thirds rule: keep modes with 3|m_i| < n_i on every axis."""
    coeffs = f.coeffs * f.grid.dealias_mask
    if isinstance(f, VectorField):
        return VectorField(f.grid, coeffs, divfree=f.divfree)
    return Field(f.grid, coeffs, meanfree=f.meanfree)


# resampling ------------------------------------------------------------------


def _flip_h(c: np.ndarray) -> np.ndarray:
    """Coefficients at (-m1, -m2) for every horizontal index pair."""
    return np.roll(c[..., ::-1, ::-1, :], 1, axis=(-3, -2))


def _map_full_axis(c: np.ndarray, axis: int, n_old: int, n_new: int) -> np.ndarray:
    """Move coefficients of an fftfreq-ordered axis to a new length, keeping the index."""
    shape = list(c.shape)
    shape[axis] = n_new
    out = np.zeros(shape, complex)
    sl = [slice(None)] * c.ndim
    for pos, m in enumerate(np.fft.fftfreq(n_old, 1.0 / n_old).round().astype(int)):
        val = np.take(c, pos, axis=axis)
        if abs(m) == n_old // 2 and n_new > n_old:
            # the stored Nyquist entry carries both +-m; split it
            targets, share = (m, -m), 0.5
        else:
            targets, share = (m,), 1.0
        for t in targets:
            if abs(t) > n_new // 2:
                continue
            sl[axis] = t % n_new
            out[tuple(sl)] += share * val
    return out


def _map_half_axis(c: np.ndarray, n_old: int, n_new: int, stride: int = 1) -> np.ndarray:
    """Move the halved vertical axis to a new length; index m goes to stride * m."""
    shape = list(c.shape)
    shape[-1] = n_new // 2 + 1
    out = np.zeros(shape, complex)
    for m in range(n_old // 2 + 1):
        t = stride * m
        if t > n_new // 2:
            break
        val = c[..., m]
        if m == n_old // 2 and 0 < t < n_new // 2:
            val = 0.5 * val
        elif t == n_new // 2 and 0 < m < n_old // 2:
            # +t and -t alias onto the new Nyquist plane
            val = val + np.conj(_flip_h(c[..., m:m + 1])[..., 0])
        out[..., t] += val
    return out


def resample_coeffs(c: np.ndarray, old: Grid, new: Grid, vertical_stride: int = 1) -> np.ndarray:
    """Spectral zero-padding / truncation onto another grid.

    Horizontal indices are preserved; vertical index ``m`` moves to
    ``vertical_stride * m``. The physical lengths of ``new`` are not checked
    here; see :func:`quasi2d.profiles.slow_scale` for the length bookkeeping.
    """
    out = c
    if new.n_h != old.n_h:
        out = _map_full_axis(out, -3, old.n_h, new.n_h)
        out = _map_full_axis(out, -2, old.n_h, new.n_h)
    if new.n_v != old.n_v or vertical_stride != 1:
        out = _map_half_axis(out, old.n_v, new.n_v, vertical_stride)
    elif out is c:
        out = c.copy()
    return out


def resample(f: AnyField, new: Grid) -> AnyField:
    """Band-limited interpolation of ``f`` onto a grid of the same box with other sizes."""
    if (new.len_h, new.len_v) != (f.grid.len_h, f.grid.len_v):
        raise ValueError("resample keeps the box fixed; use slow_scale to change lengths")
    c = resample_coeffs(f.coeffs, f.grid, new)
    if isinstance(f, VectorField):
        return VectorField(new, c)
    return Field(new, c, meanfree=f.meanfree)


def upsampled_physical(coeffs: np.ndarray, grid: Grid, factor: int = 2) -> np.ndarray:
    """Physical samples on a ``factor``-times finer grid (spectral zero-padding)."""
    fine = Grid(grid.n_h * factor, grid.n_v * factor, grid.len_h, grid.len_v)
    return inv(resample_coeffs(coeffs, grid, fine), fine)


# random fields -----------------------------------------------------------


def band_limited_random(grid: Grid, rng: np.random.Generator, kmax: int = 4,
                        decay: float = 0.0, ncomp: int | None = None) -> np.ndarray:
    """Half-spectrum coefficients of a real random field with |m_i| <= kmax.

    The draw depends only on ``rng``, ``kmax`` and ``decay``, never on the grid,
    so the same seed produces the same function on every sufficiently fine grid.
    """
    shape = (2 * kmax + 1,) * 3
    reps = 1 if ncomp is None else ncomp
    out = []
    m = np.arange(-kmax, kmax + 1)
    msq = m[:, None, None] ** 2 + m[None, :, None] ** 2 + m[None, None, :] ** 2
    for _ in range(reps):
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        z = 0.5 * (z + np.conj(z[::-1, ::-1, ::-1]))  # Hermitian: c(-m) = conj c(m)
        z *= np.exp(-decay * msq)
        z[kmax, kmax, kmax] = 0.0
        c = np.zeros(grid.spectral_shape, complex)
        for a, m1 in enumerate(m):
            for b, m2 in enumerate(m):
                c[m1 % grid.n_h, m2 % grid.n_h, : kmax + 1] = z[a, b, kmax:]
        if 2 * kmax >= min(grid.n_h, grid.n_v):
            raise ValueError(f"kmax={kmax} not resolvable on {grid}")
        out.append(c)
    return out[0] if ncomp is None else np.stack(out)


def random_field(grid: Grid, rng: np.random.Generator, kmax: int = 4, decay: float = 0.0) -> Field:
    return Field(grid, band_limited_random(grid, rng, kmax, decay), meanfree=True)


def random_vector(grid: Grid, rng: np.random.Generator, kmax: int = 4, decay: float = 0.0) -> VectorField:
    return VectorField(grid, band_limited_random(grid, rng, kmax, decay, ncomp=3))
