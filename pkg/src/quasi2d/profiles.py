"""Initial data: divergence-free profiles, slow vertical scaling, quasi-2D data."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import littlewood_paley as lp
from . import norms as nm
from .spectral import (AnyField, Field, Grid, VectorField, curl_coeffs, divergence_coeffs,
                       fwd, resample_coeffs, spectral_l2, wrap_centered)

DIV_TOL = 1e-10
TRACE_TOL = 1e-10


def dyadic_exponent(eps: float) -> int:
    """``m`` with ``eps = 2^-m``; anything else is rejected."""
    if not 0 < eps <= 1:
        raise ValueError(f"eps={eps} must lie in (0, 1]")
    m = -np.log2(eps)
    if abs(m - round(m)) > 1e-12:
        raise ValueError(f"eps={eps} is not an inverse power of two")
    return int(round(m))


def stretched_grid(base: Grid, eps: float, n_v: int | None = None, height_factor: int = 1) -> Grid:
    """Box of vertical period ``height_factor * len_v / eps`` carrying ``[f]_eps``."""
    dyadic_exponent(eps)
    return Grid(base.n_h, base.n_v if n_v is None else n_v, base.len_h, height_factor * base.len_v / eps)


def slow_scale(f: AnyField, eps: float, grid: Grid | None = None) -> AnyField:
    """``[f]_eps(x_h, x3) = f(x_h, eps x3)`` as a relabelling of vertical modes.

    The target box has vertical period ``q * len_v / eps`` for a positive
    integer ``q`` (default ``q = 1`` and the source ``n_v``); vertical index
    ``m`` of ``f`` becomes index ``q * m``. Horizontal sizes may differ and are
    zero-padded or truncated spectrally.
    """
    dyadic_exponent(eps)
    src = f.grid
    target = grid or stretched_grid(src, eps)
    if not np.isclose(target.len_h, src.len_h, rtol=1e-13, atol=0):
        raise ValueError("slow_scale keeps the horizontal period")
    q = target.len_v * eps / src.len_v
    if q < 1 - 1e-12 or abs(q - round(q)) > 1e-9:
        raise ValueError(f"target height {target.len_v} is not a multiple of len_v/eps = {src.len_v / eps}")
    c = resample_coeffs(f.coeffs if isinstance(f, Field) else f.coeffs, src, target, vertical_stride=int(round(q)))
    if isinstance(f, VectorField):
        return VectorField(target, c)
    return Field(target, c, meanfree=f.meanfree)


# divergence-free constructors ------------------------------------------------------


def make_divfree_2d(stream: Field) -> VectorField:
    """Horizontal field ``(-d2 psi, d1 psi, 0)``, divergence-free in every plane."""
    g = stream.grid
    c = stream.coeffs
    slice_means = c[0, 0, :]
    if np.any(np.abs(slice_means) > DIV_TOL * max(spectral_l2(c, g), 1e-300)):
        raise ValueError("stream function must be mean-free on every plane")
    k1, k2, _ = g.kd
    v = np.stack([-1j * k2 * c, 1j * k1 * c, np.zeros_like(c)])
    return VectorField(g, v, divfree=True)


def make_divfree_3d(potential: VectorField) -> VectorField:
    if np.any(potential.coeffs[:, 0, 0, 0] != 0):
        raise ValueError("vector potential must be mean-free")
    return VectorField(potential.grid, curl_coeffs(potential.coeffs, potential.grid), divfree=True)


def horizontal_divergence(v: VectorField) -> np.ndarray:
    k1, k2, _ = v.grid.kd
    return 1j * (k1 * v.coeffs[0] + k2 * v.coeffs[1])


def relative_divergence(v: VectorField) -> float:
    norm = spectral_l2(v.coeffs, v.grid)
    if norm == 0:
        return 0.0
    return spectral_l2(divergence_coeffs(v.coeffs, v.grid), v.grid) / norm


def zero_plane_max(f: AnyField) -> float:
    return float(np.abs(nm.plane_at_zero(f)).max())


# quasi-2D data ------------------------------------------------------------------


def _check_meanfree(name: str, v: VectorField):
    if np.any(np.abs(v.coeffs[:, 0, 0, 0]) > 0):
        raise ValueError(f"invariant violated: {name} must be mean-free")


@dataclass(frozen=True, eq=False)
class QuasiTwoDTerm:
    """One slowly varying summand ``(v0h + eps w0h, w0^3)(x_h, eps x3)``."""

    v0h: VectorField
    w0: VectorField
    eps: float

    def __post_init__(self):
        dyadic_exponent(self.eps)
        if self.v0h.grid != self.w0.grid:
            raise ValueError("v0h and w0 must share the unscaled grid")
        v, w = self.v0h, self.w0
        scale = max(spectral_l2(v.coeffs, v.grid), 1e-300)
        if np.any(np.abs(v.coeffs[2]) > 0):
            raise ValueError("invariant violated: v0h must have zero third component")
        if spectral_l2(horizontal_divergence(v), v.grid) > DIV_TOL * scale:
            raise ValueError("invariant violated: div_h v0h = 0")
        if relative_divergence(w) > DIV_TOL:
            raise ValueError("invariant violated: div w0 = 0")
        _check_meanfree("v0h", v)
        _check_meanfree("w0", w)
        if zero_plane_max(v) > TRACE_TOL * max(1.0, nm.sup_norm(v)):
            raise ValueError("invariant violated: v0h(x_h, 0) = 0")
        w3 = Field(w.grid, w.coeffs[2])
        if zero_plane_max(w3) > TRACE_TOL * max(1.0, nm.sup_norm(w3)):
            raise ValueError("invariant violated: w0^3(x_h, 0) = 0")

    def unscaled(self) -> VectorField:
        """``v0h + (eps w0h, w0^3)`` before the vertical dilation."""
        c = self.v0h.coeffs + self.w0.coeffs * np.array([self.eps, self.eps, 1.0])[:, None, None, None]
        return VectorField(self.v0h.grid, c)


@dataclass(frozen=True, eq=False)
class QuasiTwoDData:
    """``u0`` on the tall box plus one or more slowly varying terms."""

    u0: VectorField
    v0h: VectorField
    w0: VectorField
    eps: float
    extra_terms: tuple[QuasiTwoDTerm, ...] = ()

    def __post_init__(self):
        if relative_divergence(self.u0) > DIV_TOL:
            raise ValueError("invariant violated: div u0 = 0")
        _check_meanfree("u0", self.u0)
        # validates the leading term
        object.__setattr__(self, "_lead", QuasiTwoDTerm(self.v0h, self.w0, self.eps))

    @property
    def terms(self) -> tuple[QuasiTwoDTerm, ...]:
        return (self._lead,) + tuple(self.extra_terms)


def build_quasi2d_datum(d: QuasiTwoDData) -> VectorField:
    """``u0 + sum_j [(v0h + eps_j w0h, w0^3)]_{eps_j}`` on the grid of ``u0``."""
    out = d.u0.coeffs.copy()
    for term in d.terms:
        out += slow_scale(term.unscaled(), term.eps, d.u0.grid).coeffs
    v = VectorField(d.u0.grid, out)
    rel = relative_divergence(v)
    if rel > DIV_TOL:
        raise ValueError(f"assembled datum has relative divergence {rel:.2e}")
    return VectorField(d.u0.grid, out, divfree=True)


# profile building blocks ----------------------------------------------------------


def periodized_odd_gaussian(y: np.ndarray, period: float, width: float = 1.0, images: int = 6) -> np.ndarray:
    """Periodic sum of ``(y / width) exp(-(y / width)^2)``; odd, vanishes at 0."""
    out = np.zeros_like(y, dtype=float)
    for n in range(-images, images + 1):
        z = (y + n * period) / width
        out += z * np.exp(-(z**2))
    return out


def periodized_gaussian(y: np.ndarray, period: float, width: float, images: int = 6) -> np.ndarray:
    out = np.zeros_like(y, dtype=float)
    for n in range(-images, images + 1):
        z = (y + n * period) / width
        out += np.exp(-0.5 * z**2)
    return out


VERTICAL_PROFILES: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "odd_gaussian": lambda y, L: periodized_odd_gaussian(y, L),
    "constant": lambda y, L: np.ones_like(y),
}


def _dealiased_field(grid: Grid, samples: np.ndarray, meanfree: bool = True) -> Field:
    c = fwd(samples) * grid.dealias_mask
    if meanfree:
        c[0, 0, 0] = 0
    return Field(grid, c, meanfree=meanfree)


@dataclass(frozen=True)
class ProfileSpec:
    """Peak speeds and widths of the default data family.

    Each ``*_amplitude`` is the sup norm of the corresponding field.
    """

    vh_amplitude: float = 1.0
    w_amplitude: float = 0.3
    sigma_h: float = 3.0
    vertical: str = "odd_gaussian"
    u0_amplitude: float = 0.05
    u0_sigma_h: float = 3.0
    u0_sigma_v: float = 2.5

    def __post_init__(self):
        if self.vertical not in VERTICAL_PROFILES:
            raise ValueError(f"unknown vertical profile {self.vertical!r}")
        for name in ("sigma_h", "u0_sigma_h", "u0_sigma_v"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def vertical_profile(grid: Grid, spec: ProfileSpec) -> np.ndarray:
    z = grid.centered_coords()[2]
    return VERTICAL_PROFILES[spec.vertical](z, grid.len_v)


def default_vh(grid: Grid, spec: ProfileSpec) -> VectorField:
    """Curl of ``A x1 x2 exp(-r^2 / 2 sigma^2) g(x3)``: odd in x1 and x2, zero at x3 = 0."""
    x1, x2, _ = grid.centered_coords()
    sig = spec.sigma_h
    bump = np.exp(-(x1**2 + x2**2) / (2 * sig**2))
    psi = spec.vh_amplitude * (x1 / sig) * (x2 / sig) * bump * sig * vertical_profile(grid, spec)
    stream = _dealiased_field(grid, psi)
    # plane means carry no velocity; drop the sampling residue of the odd symmetry
    c = stream.coeffs.copy()
    c[0, 0, :] = 0
    return _normalised(make_divfree_2d(Field(grid, c)), spec.vh_amplitude)


def default_w0(grid: Grid, spec: ProfileSpec) -> VectorField:
    """Curl of ``A g(x3) (x2, x1, 0) exp(-r^2 / 2 sigma^2) / sigma``, in the symmetry class of ``default_vh``."""
    x1, x2, _ = grid.centered_coords()
    sig = spec.sigma_h
    bump = np.exp(-(x1**2 + x2**2) / (2 * sig**2))
    g3 = vertical_profile(grid, spec)
    a1 = spec.w_amplitude * (x2 / sig) * bump * g3 * sig
    a2 = spec.w_amplitude * (x1 / sig) * bump * g3 * sig
    pot = np.stack([a1, a2, np.zeros_like(a1)])
    c = fwd(pot) * grid.dealias_mask
    c[:, 0, 0, 0] = 0
    return _normalised(make_divfree_3d(VectorField(grid, c)), spec.w_amplitude)


def _u0_unscaled(grid: Grid, spec: ProfileSpec) -> VectorField:
    x1, x2, x3 = grid.centered_coords()
    sh, sv = spec.u0_sigma_h, spec.u0_sigma_v
    pot = np.zeros((3,) + grid.shape)
    blobs = (((1.5, -1.0, 0.8), (0.6, 0.8, 0.0)), ((-1.2, 1.4, -0.6), (0.0, 0.6, 0.8)))
    for centre, direction in blobs:
        z1 = wrap_centered(x1 - centre[0], grid.len_h)
        z2 = wrap_centered(x2 - centre[1], grid.len_h)
        z3 = wrap_centered(x3 - centre[2], grid.len_v)
        env = np.exp(-(z1**2 + z2**2) / (2 * sh**2) - z3**2 / (2 * sv**2))
        for i in range(3):
            pot[i] += sh * direction[i] * env
    c = fwd(pot) * grid.dealias_mask
    c[:, 0, 0, 0] = 0
    return make_divfree_3d(VectorField(grid, c))


def default_u0(grid: Grid, spec: ProfileSpec) -> VectorField:
    """Small divergence-free field: curl of two localised blobs with fixed directions.

    The peak speed is measured once on a fixed reference box so that the same
    function is produced on every vertical period.
    """
    ref = Grid(grid.n_h, 64, grid.len_h, 16 * spec.u0_sigma_v)
    scale = spec.u0_amplitude / nm.sup_norm(_u0_unscaled(ref, spec))
    v = _u0_unscaled(grid, spec)
    return VectorField(grid, v.coeffs * scale, divfree=True)


def _normalised(v: VectorField, peak: float) -> VectorField:
    sup = nm.sup_norm(v)
    if sup == 0:
        return v
    return VectorField(v.grid, v.coeffs * (peak / sup), divfree=True)


def default_data(base: Grid, tall: Grid, eps: float, spec: ProfileSpec = ProfileSpec()) -> QuasiTwoDData:
    return QuasiTwoDData(default_u0(tall, spec), default_vh(base, spec), default_w0(base, spec), eps)


# tensor profiles and largeness -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TensorProfile:
    """``h_eps(x_h, x3) = f(x_h) g(eps x3)`` with ``f`` sampled on the horizontal
    grid and ``g`` on one vertical period of ``grid``."""

    grid: Grid
    f: np.ndarray
    g: np.ndarray
    eps: float

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if self.f.shape != (self.grid.n_h, self.grid.n_h) or self.g.shape != (self.grid.n_v,):
            raise ValueError("profile sample shapes do not match the grid")

    def f_field(self) -> Field:
        """Mean-free, band-limited ``f`` as an x3-independent field."""
        samples = np.broadcast_to(self.f[:, :, None], self.grid.shape)
        return _dealiased_field(self.grid, np.array(samples))

    def g_sup(self) -> float:
        c = np.fft.rfft(self.g) / self.grid.n_v
        fine = 8 * self.grid.n_v
        pad = np.zeros(fine // 2 + 1, complex)
        pad[: c.size] = c
        return float(np.abs(np.fft.irfft(pad, fine) * fine).max())

    def h_field(self) -> Field:
        """``f(x_h) g(x3)`` on the unscaled grid; the dilation is applied by the evaluators."""
        fc = self.f_field().coeffs[:, :, 0]
        gc = np.fft.rfft(self.g) / self.grid.n_v
        c = fc[:, :, None] * gc[None, None, :]
        c[0, 0, 0] = 0
        return Field(self.grid, c, meanfree=True)


def default_tensor_profile(grid: Grid, eps: float, spec: ProfileSpec = ProfileSpec(),
                           vertical: str | None = None) -> TensorProfile:
    x1, x2, z = grid.centered_coords()
    f = np.exp(-(x1[:, :, 0] ** 2 + x2[:, :, 0] ** 2) / (2 * spec.sigma_h**2))
    g = VERTICAL_PROFILES[vertical or spec.vertical](z[0, 0, :], grid.len_v)
    return TensorProfile(grid, f, g, eps)


def sizedata_ratio(tp: TensorProfile, times: np.ndarray | None = None) -> float:
    """``||h_eps||_{B^-1_inf,inf}(3D) / (||f||_{B^-1_inf,inf}(2D) ||g||_inf)`` by the heat flow."""
    f = tp.f_field()
    g_sup = tp.g_sup()
    t = lp.default_heat_times(tp.grid, eps=tp.eps) if times is None else times
    den = lp.besov_heatflow_norm(f, 1.0, np.inf, np.inf, times=t, d=2) * g_sup
    if den == 0:
        raise ValueError("degenerate profile: zero denominator")
    num = lp.besov_heatflow_norm(tp.h_field(), 1.0, np.inf, np.inf, times=t, d=3, eps=tp.eps)
    return num / den


def parse_eps(text: str) -> float:
    return float(Fraction(text.strip()))
