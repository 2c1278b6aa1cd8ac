"""Isotropic and anisotropic norms on the periodic box, and time aggregation.

Normalisation: every norm is the box integral of the corresponding density,
so a single mode ``A cos(k.x)`` has ``hs_norm = A |k|^s sqrt(V/2)`` with
``V`` the box volume. Homogeneous norms drop the modes where the weight is
undefined (``k = 0`` for isotropic norms, ``k_h = 0`` or ``k_3 = 0`` for
the partial ones; see :func:`slice_hs_sq`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .spectral import (FFT_WORKERS, AnyField, Field, Grid, inv,
                       resample_coeffs, spectral_l2, upsampled_physical)

S_RANGE = (-1.5, 1.5)
KINDS = ("Hs", "L2vHsh", "LinfvL2h", "LinfvHsh", "Linf", "L2h_Hsv", "L2", "weighted_x3_L2")

# slice means below this fraction of the L2 norm count as zero
KH0_TOL = 1e-10


def _stack(f: AnyField) -> np.ndarray:
    """Coefficients with a leading component axis."""
    return f.coeffs[None] if isinstance(f, Field) else f.coeffs


def _check_s(s: float):
    if not S_RANGE[0] < s < S_RANGE[1]:
        raise ValueError(f"s={s} outside the supported range {S_RANGE}")


def _powered(base_sq: np.ndarray, s: float) -> np.ndarray:
    """|k|^(2s) with the zero modes mapped to 0 (to 1 when ``s = 0``, so the L^2 case keeps them)."""
    if s == 0:
        return np.ones_like(base_sq)
    out = np.zeros_like(base_sq)
    np.power(base_sq, s, out=out, where=base_sq > 0)
    return out


def hs_norm_sq_coeffs(c: np.ndarray, grid: Grid, s: float, eps: float = 1.0, volume: float | None = None) -> float:
    """Squared homogeneous H^s norm from stacked coefficients.

    With ``eps != 1`` the coefficients are read as those of ``f`` and the
    result is the norm of ``f(x_h, eps x3)`` on the box of height
    ``len_v / eps`` (wavenumbers ``(k_h, eps k3)``).
    """
    ksq = grid.kh_sq + (eps * grid.k3) ** 2
    vol = grid.volume / eps if volume is None else volume
    a2 = np.sum(np.abs(c) ** 2, axis=0)
    return float(vol * np.sum(grid.mode_weights * _powered(ksq, s) * a2))


def hs_norm(f: AnyField, s: float, d: int = 3) -> float:
    """Homogeneous Sobolev norm of order ``s``.

    ``d = 3`` is the norm on the box. ``d = 2`` is the horizontal norm of
    a field that does not depend on ``x3``, integrated over the horizontal
    torus only.
    """
    _check_s(s)
    g = f.grid
    c = _stack(f)
    if d == 3:
        if np.any(np.abs(c[:, 0, 0, 0]) > KH0_TOL * max(spectral_l2(c, g), 1e-300)):
            raise ValueError("hs_norm needs a mean-free field")
        return float(np.sqrt(hs_norm_sq_coeffs(c, g, s)))
    if d == 2:
        if np.any(np.abs(c[..., 1:]) > KH0_TOL * max(spectral_l2(c, g), 1e-300)):
            raise ValueError("d=2 norm needs a field independent of x3")
        a2 = np.sum(np.abs(c[..., 0]) ** 2, axis=0)
        return float(np.sqrt(g.area * np.sum(_powered(g.kh_sq[..., 0], s) * a2)))
    raise ValueError("d must be 2 or 3")


# slice-wise quantities -------------------------------------------------------


def horizontal_slices(c: np.ndarray, grid: Grid, upsample_v: int = 1) -> np.ndarray:
    """Horizontal coefficients on each x3 plane, shape ``(ncomp, n_h, n_h, n_planes)``.

    Full (not halved) horizontal spectrum; ``upsample_v`` interpolates
    spectrally to a finer set of planes.
    """
    if upsample_v > 1:
        fine = Grid(grid.n_h, grid.n_v * upsample_v, grid.len_h, grid.len_v)
        c = resample_coeffs(c, grid, fine)
        grid = fine
    vals = inv(c, grid)
    return sfft.fft2(vals, axes=(-3, -2), norm="forward", workers=FFT_WORKERS)


def slice_hs_sq(f: AnyField, s: float, upsample_v: int = 1) -> np.ndarray:
    """Squared horizontal H^s norm of every x3 plane (area-integrated).

    The ``k_h = 0`` modes are dropped. For ``s < 0`` a plane with a nonzero
    horizontal mean has an infinite homogeneous norm, and ``inf`` is returned.
    """
    g = f.grid
    planes = horizontal_slices(_stack(f), g, upsample_v)
    a2 = np.sum(np.abs(planes) ** 2, axis=0)
    weight = _powered(g.kh_sq[..., :1], s)
    out = g.area * np.sum(weight * a2, axis=(0, 1))
    if s < 0:
        scale = np.sqrt(g.area * np.sum(a2, axis=(0, 1)).max())
        means = np.sqrt(g.area * a2[0, 0])
        out = np.where(means > KH0_TOL * max(scale, 1e-300), np.inf, out)
    return out


def slice_l2_sq(f: AnyField, upsample_v: int = 1) -> np.ndarray:
    g = f.grid
    planes = horizontal_slices(_stack(f), g, upsample_v)
    return g.area * np.sum(np.abs(planes) ** 2, axis=(0, 1, 2))


def plane_at_zero(f: AnyField) -> np.ndarray:
    """Physical samples on the plane x3 = 0, shape ``(ncomp, n_h, n_h)``."""
    g = f.grid
    # horizontal inverse first; then conj symmetry holds in m for each x_h
    partial = sfft.ifft2(_stack(f), axes=(-3, -2), norm="forward", workers=FFT_WORKERS)
    return np.einsum("...m,m->...", partial.real, g.mode_weights[0, 0])


def plane_norm_l2(samples: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(np.sum(samples**2) * grid.area / grid.n_h**2))


def plane_hs(samples: np.ndarray, grid: Grid, s: float) -> float:
    """Horizontal homogeneous norm of physical plane samples ``(ncomp, n_h, n_h)``."""
    c = sfft.fft2(samples, norm="forward", workers=FFT_WORKERS)
    w = _powered(grid.kh_sq[..., 0], s)
    return float(np.sqrt(grid.area * np.sum(w * np.abs(c) ** 2)))


# the catalogue ---------------------------------------------------------------


@dataclass(frozen=True)
class NormSpec:
    """A named norm; ``s`` is used by the Sobolev-type kinds."""

    kind: str
    s: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("Hs", "L2vHsh", "L2h_Hsv", "LinfvHsh"):
            _check_s(self.s)

    def label(self) -> str:
        return f"{self.kind}({self.s:g})" if self.kind in ("Hs", "L2vHsh", "L2h_Hsv", "LinfvHsh") else self.kind


def sup_norm(f: AnyField, upsample: int = 2) -> float:
    """Max of the pointwise Euclidean magnitude on a refined collocation grid."""
    vals = upsampled_physical(_stack(f), f.grid, upsample)
    return float(np.sqrt(np.max(np.sum(vals**2, axis=0))))


def lp_norm(f: AnyField, p: float, upsample: int = 1) -> float:
    """L^p norm of the pointwise magnitude by collocation quadrature."""
    if np.isinf(p):
        return sup_norm(f, max(upsample, 2))
    vals = upsampled_physical(_stack(f), f.grid, upsample)
    mag = np.sqrt(np.sum(vals**2, axis=0))
    cell = f.grid.volume / mag.size
    return float((np.sum(mag**p) * cell) ** (1.0 / p))


def x3_tail_fraction(f: AnyField) -> float:
    """Fraction of the squared L2 mass sitting at |x3| > len_v / 4."""
    g = f.grid
    vals = f.to_physical()
    mag2 = vals**2 if isinstance(f, Field) else np.sum(vals**2, axis=0)
    z = g.centered_coords()[2]
    total = mag2.sum()
    if total == 0:
        return 0.0
    return float(np.sum(mag2 * (np.abs(z) > g.len_v / 4)) / total)


def aniso_norm(f: AnyField, spec: NormSpec) -> float:
    """Evaluate one catalogue norm; vector fields combine components in l2."""
    g = f.grid
    c = _stack(f)
    kind, s = spec.kind, spec.s
    if kind == "Hs":
        return float(np.sqrt(hs_norm_sq_coeffs(c, g, s)))
    if kind == "L2":
        return spectral_l2(c, g)
    if kind == "L2vHsh":
        vals = slice_hs_sq(f, s)
        return float(np.sqrt(np.sum(vals) * g.dx_v))
    if kind == "LinfvHsh":
        return float(np.sqrt(np.max(slice_hs_sq(f, s, upsample_v=2))))
    if kind == "LinfvL2h":
        return float(np.sqrt(np.max(slice_l2_sq(f, upsample_v=2))))
    if kind == "L2h_Hsv":
        w = _powered(np.broadcast_to(g.k3**2, g.spectral_shape), s)
        a2 = np.sum(np.abs(c) ** 2, axis=0)
        return float(np.sqrt(g.volume * np.sum(g.mode_weights * w * a2)))
    if kind == "Linf":
        return sup_norm(f)
    if kind == "weighted_x3_L2":
        z = g.centered_coords()[2]
        vals = f.to_physical()
        mag2 = vals**2 if isinstance(f, Field) else np.sum(vals**2, axis=0)
        return float(np.sqrt(np.sum(z**2 * mag2) * g.volume / g.size))
    raise AssertionError(kind)


def gradient_tensor(f: AnyField) -> np.ndarray:
    """All first derivatives as a stacked coefficient array ``(3 * ncomp, ...)``."""
    c = _stack(f)
    g = f.grid
    return np.concatenate([1j * k * c for k in g.kd], axis=0)


def grad_linfv_l2h(f: AnyField) -> float:
    """||grad f||_{L^inf_v L^2_h} with all derivative components combined."""
    g = f.grid
    planes = horizontal_slices(gradient_tensor(f), g, upsample_v=2)
    return float(np.sqrt(g.area * np.max(np.sum(np.abs(planes) ** 2, axis=(0, 1, 2)))))


@dataclass(frozen=True)
class EmbeddingResult:
    holds: bool
    margin: float
    lhs: float
    rhs: float


def embedding_check(f: AnyField, s: float, tol: float = 1e-12) -> EmbeddingResult:
    """Compare ``||f||_{H^s}`` with ``||f||_{L^2_v H^s_h}``.

    For ``s <= 0`` the anisotropic norm dominates, for ``s >= 0`` the isotropic
    one does; ``margin = larger - smaller`` and must be non-negative.
    """
    _check_s(s)
    iso = aniso_norm(f, NormSpec("Hs", s))
    an = aniso_norm(f, NormSpec("L2vHsh", s))
    big, small = (an, iso) if s <= 0 else (iso, an)
    margin = big - small if np.isfinite(big) else np.inf
    scale = max(abs(big) if np.isfinite(big) else 0.0, abs(small), 1e-300)
    return EmbeddingResult(margin >= -tol * scale, float(margin), small, big)


# time aggregation -------------------------------------------------------------


@dataclass(frozen=True)
class TimeSeriesNorm:
    """Norm values at increasing sample times, with L^rho-in-time aggregation."""

    times: np.ndarray
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, float)
        v = np.asarray(self.values, float)
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def aggregate(self, rho: float) -> float:
        """L^rho norm over [times[0], times[-1]] by the trapezoid rule."""
        if np.isinf(rho):
            return float(np.max(np.abs(self.values)))
        if rho <= 0:
            raise ValueError("rho must be positive")
        if self.times.size < 2:
            return 0.0
        return float(np.trapezoid(np.abs(self.values) ** rho, self.times) ** (1.0 / rho))

    def tail_estimate(self, rho: float) -> float:
        """Estimated L^rho mass beyond the horizon, extrapolating the last decade's decay.

        The decay rate is fitted on the final tenth of the samples; a
        non-decaying tail yields ``inf``.
        """
        if np.isinf(rho):
            return 0.0
        n = max(3, self.times.size // 10)
        t, v = self.times[-n:], np.abs(self.values[-n:])
        if np.any(v <= 0):
            return 0.0
        rate = -np.polyfit(t, np.log(v), 1)[0]
        if rate <= 0:
            return float("inf")
        return float((v[-1] ** rho / (rho * rate)) ** (1.0 / rho))

    def to_rows(self, kind: str, s: float | str = "") -> list[tuple]:
        return [(float(t), kind, s, float(v)) for t, v in zip(self.times, self.values)]
