"""Dyadic frequency calculus: blocks, paraproducts, Besov norms and product-law ratios."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from . import norms as nm
from .spectral import (AnyField, Field, Grid, VectorField, fwd, heat_symbol, inv,
                       resample_coeffs, spectral_l2, upsampled_physical)


def _psi(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=float)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_cutoff(r: np.ndarray, r_outer: float = 1.5) -> np.ndarray:
    """C-infinity radial profile: 1 on [0, 1], 0 beyond ``r_outer``, monotone between."""
    r = np.asarray(r, float)
    a = _psi(r_outer - r)
    b = _psi(r - 1.0)
    with np.errstate(invalid="ignore"):
        out = np.where(a + b > 0, a / np.where(a + b > 0, a + b, 1.0), 0.0)
    return np.where(r <= 1.0, 1.0, out)


@dataclass(frozen=True)
class DyadicCutoff:
    """Smooth dyadic partition adapted to one grid.

    ``phi_hat(r) = 1`` for ``r <= 1`` and vanishes for ``r >= r_outer``
    (``r_outer <= 2``). With the default ``r_outer = 1.5`` the multiplier of
    block ``l`` equals 1 on the annulus ``[1.5 * 2^(l-1), 2^(l+1)]``.
    """

    grid: Grid
    r_outer: float = 1.5
    profile: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not 1.0 < self.r_outer <= 2.0:
            raise ValueError("r_outer must lie in (1, 2]")

    def phi_hat(self, r: np.ndarray) -> np.ndarray:
        if self.profile is not None:
            return self.profile(np.asarray(r, float))
        return smooth_cutoff(r, self.r_outer)

    @cached_property
    def ell_min(self) -> int:
        kmin = 2 * np.pi / max(self.grid.len_h, self.grid.len_v)
        return int(np.floor(np.log2(kmin / self.r_outer))) - 1

    @cached_property
    def ell_max(self) -> int:
        return int(np.ceil(np.log2(self.grid.kmag.max())))

    @property
    def levels(self) -> range:
        return range(self.ell_min, self.ell_max + 1)

    def low_symbol(self, ell: int) -> np.ndarray:
        """Multiplier of S_ell."""
        return self.phi_hat(self.grid.kmag / 2.0**ell)

    def block_symbol(self, ell: int) -> np.ndarray:
        """Multiplier of Delta_ell; ``ell = ell_min - 1`` is the low-pass block S_ell_min."""
        if not self.ell_min - 1 <= ell <= self.ell_max + 1:
            raise ValueError(f"level {ell} outside [{self.ell_min - 1}, {self.ell_max + 1}]")
        if ell == self.ell_min - 1:
            return self.low_symbol(self.ell_min)
        return self.low_symbol(ell + 1) - self.low_symbol(ell)

    def partition_error(self) -> float:
        """Max deviation of the summed block multipliers from 1 over all nonzero modes."""
        total = np.zeros(self.grid.spectral_shape)
        for ell in self.levels:
            total += self.block_symbol(ell)
        mask = self.grid.kmag > 0
        return float(np.max(np.abs(total[mask] - 1.0)))


def _apply(f: AnyField, mult: np.ndarray) -> AnyField:
    if isinstance(f, VectorField):
        return VectorField(f.grid, f.coeffs * mult)
    c = f.coeffs * mult
    return Field(f.grid, c, meanfree=c[0, 0, 0] == 0)


def delta_block(f: AnyField, ell: int, cutoff: DyadicCutoff | None = None) -> AnyField:
    cut = cutoff or DyadicCutoff(f.grid)
    return _apply(f, cut.block_symbol(ell))


def low_block(f: AnyField, ell: int, cutoff: DyadicCutoff | None = None) -> AnyField:
    cut = cutoff or DyadicCutoff(f.grid)
    return _apply(f, cut.low_symbol(ell))


# Besov norms -------------------------------------------------------------------


@dataclass(frozen=True)
class BesovIndex:
    s: float
    p: float = 2.0
    q: float = 2.0
    rho: float | None = None

    def __post_init__(self):
        if not (1 <= self.p <= np.inf and 1 <= self.q <= np.inf):
            raise ValueError("p and q must lie in [1, inf]")
        if self.rho is not None and not 1 <= self.rho <= np.inf:
            raise ValueError("rho must lie in [1, inf]")

    def below_critical(self, d: int) -> bool:
        return self.s < d / self.p


@dataclass(frozen=True)
class BesovReport:
    value: float
    levels: tuple[int, ...]
    weighted_blocks: tuple[float, ...]
    unresolved: float


def _block_lp(c: np.ndarray, grid: Grid, p: float) -> float:
    if p == 2:
        return spectral_l2(c, grid)
    vals = upsampled_physical(c, grid, 2)
    mag = np.sqrt(np.sum(vals**2, axis=0))
    if np.isinf(p):
        return float(mag.max())
    return float((np.sum(mag**p) * grid.volume / mag.size) ** (1.0 / p))


def _lq(values: np.ndarray, q: float) -> float:
    if values.size == 0:
        return 0.0
    if np.isinf(q):
        return float(values.max())
    return float(np.sum(values**q) ** (1.0 / q))


def besov_report(f: AnyField, idx: BesovIndex, cutoff: DyadicCutoff | None = None,
                 levels: Iterable[int] | None = None) -> BesovReport:
    """l^q over levels of ``2^(l s) ||Delta_l f||_{L^p}``, with the L2 mass left outside."""
    cut = cutoff or DyadicCutoff(f.grid)
    lv = tuple(levels) if levels is not None else tuple(cut.levels)
    c = nm._stack(f)
    if np.any(np.abs(c[:, 0, 0, 0]) > nm.KH0_TOL * max(spectral_l2(c, f.grid), 1e-300)):
        raise ValueError("Besov norms need a mean-free field")
    weighted = []
    covered = np.zeros(f.grid.spectral_shape)
    for ell in lv:
        mult = cut.block_symbol(ell)
        covered += mult
        weighted.append(2.0 ** (ell * idx.s) * _block_lp(c * mult, f.grid, idx.p))
    weighted = np.asarray(weighted)
    unresolved = spectral_l2(c * (1.0 - covered), f.grid)
    return BesovReport(_lq(weighted, idx.q), lv, tuple(weighted.tolist()), unresolved)


def besov_norm(f: AnyField, idx: BesovIndex, cutoff: DyadicCutoff | None = None,
               levels: Iterable[int] | None = None) -> float:
    return besov_report(f, idx, cutoff, levels).value


def tilde_besov_norm(blocks_in_time: Callable[[int], np.ndarray], times: np.ndarray, idx: BesovIndex,
                     levels: Sequence[int]) -> float:
    """Time-first Besov norm: l^q over levels of ``2^(l s) ||Delta_l u||_{L^rho_t L^p}``.

    ``blocks_in_time(ell)`` returns the L^p norms of ``Delta_ell u`` at ``times``.
    """
    rho = idx.rho if idx.rho is not None else 2.0
    vals = []
    for ell in levels:
        series = nm.TimeSeriesNorm(times, blocks_in_time(ell))
        vals.append(2.0 ** (ell * idx.s) * series.aggregate(rho))
    return _lq(np.asarray(vals), idx.q)


def geometric_times(t_min: float, t_max: float, n: int = 64) -> np.ndarray:
    if not 0 < t_min < t_max or n < 2:
        raise ValueError("time grid needs 0 < t_min < t_max and at least two points")
    return np.geomspace(t_min, t_max, n)


def default_heat_times(grid: Grid, n: int = 64, eps: float = 1.0) -> np.ndarray:
    dx = min(grid.dx_h, grid.dx_v / eps)
    span = max(grid.len_h, grid.len_v / eps)
    return geometric_times((dx / np.pi) ** 2, span**2, n)


def _validate_times(times: np.ndarray) -> np.ndarray:
    t = np.asarray(times, float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("heat-flow time grid is empty")
    if np.any(t <= 0):
        raise ValueError("heat-flow times must be positive")
    ratios = t[1:] / t[:-1]
    if np.any(ratios <= 1) or np.ptp(ratios) > 1e-9 * ratios.mean():
        raise ValueError("heat-flow time grid must be geometric and increasing")
    return t


def heatflow_profile(f: AnyField, s: float, p: float, times: np.ndarray, d: int = 3,
                     eps: float = 1.0) -> np.ndarray:
    """``t^(s/2) ||e^{t L} f||_{L^p}`` at each time.

    ``L`` is the Laplacian (``d = 3``), the horizontal Laplacian applied to an
    x3-independent field (``d = 2``), or, with ``eps != 1``, the symbol of the
    Laplacian of ``f(x_h, eps x3)`` read on the unscaled grid. ``L^inf`` is
    unchanged by the vertical relabelling; for finite ``p`` the norm is taken
    on the stretched box.
    """
    g = f.grid
    c = nm._stack(f)
    if d == 2:
        if np.any(np.abs(c[..., 1:]) > nm.KH0_TOL * max(spectral_l2(c, g), 1e-300)):
            raise ValueError("d=2 heat flow needs a field independent of x3")
        sym = heat_symbol(g, "horizontal")
        measure = g.area
    elif d == 3:
        sym = heat_symbol(g, "aniso", eps)
        measure = g.volume / eps
    else:
        raise ValueError("d must be 2 or 3")
    out = np.empty(times.size)
    for i, t in enumerate(times):
        ct = c * np.exp(-t * sym)
        if np.isinf(p):
            vals = upsampled_physical(ct, g, 2)
            norm = np.sqrt(np.max(np.sum(vals**2, axis=0)))
        elif p == 2 and d == 3:
            norm = np.sqrt(measure / g.volume) * spectral_l2(ct, g)
        else:
            vals = inv(ct, g)
            mag = np.sqrt(np.sum(vals**2, axis=0))
            if d == 2:
                mag = mag[..., 0]
            norm = (np.sum(mag**p) * measure / mag.size) ** (1.0 / p)
        out[i] = t ** (s / 2) * norm
    return out


def besov_heatflow_norm(f: AnyField, s: float, p: float = np.inf, r: float = np.inf,
                        times: np.ndarray | None = None, d: int = 3, eps: float = 1.0) -> float:
    """Heat-flow characterisation of the negative-order Besov norm with index ``-s``.

    ``r = inf`` takes the max over the time grid; finite ``r`` integrates
    against ``dt / t`` (trapezoid in ``log t``).
    """
    if not s > 0:
        raise ValueError("heat-flow Besov norm needs s > 0")
    t = _validate_times(default_heat_times(f.grid, eps=eps) if times is None else times)
    prof = heatflow_profile(f, s, p, t, d, eps)
    if np.isinf(r):
        return float(prof.max())
    return float(np.trapezoid(prof**r, np.log(t)) ** (1.0 / r))


# Bony decomposition ---------------------------------------------------------


@dataclass(frozen=True)
class BonySplit:
    paraproduct_ab: Field  # T_a b
    paraproduct_ba: Field  # T_b a
    remainder: Field       # R(a, b)

    def total(self) -> Field:
        return self.paraproduct_ab + self.paraproduct_ba + self.remainder


def bony_split(a: Field, b: Field, cutoff: DyadicCutoff | None = None) -> BonySplit:
    """Split the dealiased product ``a b`` into ``T_a b``, ``T_b a`` and ``R(a, b)``.

    Blocks run from the low-pass block ``ell_min - 1`` (which carries the mean)
    up to ``ell_max``; ``S_{j-1} = sum_{j' <= j-2} Delta_j'`` and the remainder
    collects the pairs with ``|j - j'| <= 1``.
    """
    if a.grid != b.grid:
        raise ValueError("bony_split needs a shared grid")
    g = a.grid
    cut = cutoff or DyadicCutoff(g)
    lv = list(range(cut.ell_min - 1, cut.ell_max + 1))
    ablk = {j: inv(a.coeffs * cut.block_symbol(j), g) for j in lv}
    bblk = {j: inv(b.coeffs * cut.block_symbol(j), g) for j in lv}
    zero = np.zeros(g.shape)
    t_ab, t_ba, rem = zero.copy(), zero.copy(), zero.copy()
    low_a, low_b = zero.copy(), zero.copy()
    for idx, j in enumerate(lv):
        if idx >= 2:
            low_a += ablk[lv[idx - 2]]
            low_b += bblk[lv[idx - 2]]
        t_ab += low_a * bblk[j]
        t_ba += low_b * ablk[j]
        for jp in (j - 1, j, j + 1):
            if jp in bblk:
                rem += ablk[j] * bblk[jp]
    mask = g.dealias_mask
    parts = [Field(g, fwd(x) * mask) for x in (t_ab, t_ba, rem)]
    return BonySplit(*parts)


def dealiased_product(a: Field, b: Field) -> Field:
    return Field(a.grid, fwd(a.to_physical() * b.to_physical()) * a.grid.dealias_mask)


# product-law ratios -------------------------------------------------------------

LAWS = ("pdtlaws", "pdtlaw", "lemma_aniso_12", "lemma_slowvar", "lemma_trilinear")


def exact_product(a: AnyField, b: AnyField, factor: int = 2) -> tuple[np.ndarray, Grid]:
    """Coefficients of ``a * b`` (componentwise broadcast) on a ``factor``-refined grid.

    For band-limited inputs the refinement removes aliasing, so the product is
    exact; the result is returned on the refined grid.
    """
    g = a.grid
    fine = Grid(g.n_h * factor, g.n_v * factor, g.len_h, g.len_v)
    pa = inv(resample_coeffs(nm._stack(a), g, fine), fine)
    pb = inv(resample_coeffs(nm._stack(b), g, fine), fine)
    return fwd(pa * pb), fine


@dataclass(frozen=True)
class LawParams:
    """Exponents for the laws that have them; ``d`` is the ambient dimension."""

    s: float = 0.5
    s1: float = 0.5
    s2: float = 0.5
    d: int = 3

    def validate(self, law: str):
        if law not in LAWS:
            raise ValueError(f"unknown law {law!r}; expected one of {LAWS}")
        if self.d != 3:
            raise ValueError("only d = 3 is implemented for product laws")
        if law == "pdtlaws":
            if not self.s > 0:
                raise ValueError("pdtlaws needs s > 0")
            if not self.s + 0.5 < 1.5:
                raise ValueError("pdtlaws needs s + 1/2 < 3/2 (working Sobolev range)")
        if law == "pdtlaw":
            if not self.s1 + self.s2 > 0:
                raise ValueError("pdtlaw needs s1 + s2 > 0")
            if not (self.s1 < self.d / 2 and self.s2 < self.d / 2):
                raise ValueError("pdtlaw needs s1 < d/2 and s2 < d/2")
            if not (abs(self.s1) < 1.5 and abs(self.s2) < 1.5):
                raise ValueError("pdtlaw needs |s1|, |s2| < 3/2 (working Sobolev range)")


@dataclass(frozen=True)
class LawRatio:
    law: str
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else np.inf
        return self.lhs / self.rhs


def _hs_on(c: np.ndarray, grid: Grid, s: float) -> float:
    return float(np.sqrt(nm.hs_norm_sq_coeffs(c, grid, s)))


def _meanfree(c: np.ndarray) -> np.ndarray:
    c = c.copy()
    c[:, 0, 0, 0] = 0
    return c


def product_law_ratio(a: AnyField, b: AnyField, law: str, params: LawParams = LawParams()) -> LawRatio:
    """LHS / RHS of one product inequality with every norm evaluated numerically.

    pdtlaws:        ||ab||_{H^s} vs ||a||_{H^1} ||b||_{H^(s+1/2)} + ||a||_{H^s} ||b||_inf
    pdtlaw:         ||ab||_{B^(s1+s2-3/2)_{2,1}} vs ||a||_{H^s1} ||b||_{H^s2}
    lemma_aniso_12: ||ab||_{H^1/2} vs ||a||_{H^1/2} (||grad_h b||_{L^inf_v L^2_h}
                    + ||b||_inf + ||d3 b||_{L^2_v H^1/2_h})
    lemma_slowvar:  ||ab||_{H^-1/2} vs ||a||_{L^2_v H^1/2_h} ||b(., 0)||_{L^2_h}
                    + ||x3 a||_{L^2} ||d3 b||_{L^inf_v H^1/2_h}
    lemma_trilinear (vector a, b): |(b.grad a + a.grad b | b)_{H^1/2}|
                    vs (||a||_inf + ||grad a||_{L^inf_v L^2_h}) ||b||_{H^1/2} ||grad b||_{H^1/2}

    Products are formed on a doubled grid so that band-limited inputs are
    multiplied without aliasing. The mean of a product is dropped before any
    homogeneous norm.
    """
    params.validate(law)
    g = a.grid
    if b.grid != g:
        raise ValueError("a and b must share a grid")
    if law == "lemma_trilinear":
        return _trilinear_ratio(a, b)
    if not (isinstance(a, Field) and isinstance(b, Field)):
        raise ValueError(f"{law} takes scalar fields")
    prod, fine = exact_product(a, b)
    prod = _meanfree(prod)
    if law == "pdtlaws":
        s = params.s
        lhs = _hs_on(prod, fine, s)
        bsup = nm.sup_norm(b)
        bm = _meanfree(b.coeffs[None])
        rhs = _hs_on(a.coeffs[None], g, 1.0) * _hs_on(bm, g, s + 0.5) + _hs_on(a.coeffs[None], g, s) * bsup
        return LawRatio(law, lhs, rhs)
    if law == "pdtlaw":
        s1, s2 = params.s1, params.s2
        fab = Field(fine, prod[0], meanfree=True)
        lhs = besov_norm(fab, BesovIndex(s1 + s2 - params.d / 2, 2, 1))
        rhs = _hs_on(a.coeffs[None], g, s1) * _hs_on(b.coeffs[None], g, s2)
        return LawRatio(law, lhs, rhs)
    if law == "lemma_aniso_12":
        lhs = _hs_on(prod, fine, 0.5)
        gh = VectorField(g, np.stack([1j * g.kd[0] * b.coeffs, 1j * g.kd[1] * b.coeffs,
                                      np.zeros_like(b.coeffs)]))
        d3b = Field(g, 1j * g.kd[2] * b.coeffs)
        rhs = _hs_on(a.coeffs[None], g, 0.5) * (
            nm.aniso_norm(gh, nm.NormSpec("LinfvL2h")) + nm.sup_norm(b)
            + nm.aniso_norm(d3b, nm.NormSpec("L2vHsh", 0.5)))
        return LawRatio(law, lhs, rhs)
    if law == "lemma_slowvar":
        lhs = _hs_on(prod, fine, -0.5)
        trace = nm.plane_at_zero(b)
        d3b = Field(g, 1j * g.kd[2] * b.coeffs)
        rhs = (nm.aniso_norm(a, nm.NormSpec("L2vHsh", 0.5)) * nm.plane_norm_l2(trace, g)
               + nm.aniso_norm(a, nm.NormSpec("weighted_x3_L2"))
               * nm.aniso_norm(d3b, nm.NormSpec("LinfvHsh", 0.5)))
        return LawRatio(law, lhs, rhs)
    raise AssertionError(law)


def _trilinear_ratio(a: AnyField, b: AnyField) -> LawRatio:
    if not (isinstance(a, VectorField) and isinstance(b, VectorField)):
        raise ValueError("lemma_trilinear takes vector fields")
    g = a.grid
    fine = Grid(g.n_h * 2, g.n_v * 2, g.len_h, g.len_v)
    ac = resample_coeffs(a.coeffs, g, fine)
    bc = resample_coeffs(b.coeffs, g, fine)
    pa, pb = inv(ac, fine), inv(bc, fine)
    kd = fine.kd
    # b.grad a + a.grad b, component i
    conv = np.zeros((3,) + fine.shape)
    for j in range(3):
        da = inv(1j * kd[j] * ac, fine)
        db = inv(1j * kd[j] * bc, fine)
        conv += pb[j] * da + pa[j] * db
    cc = fwd(conv)
    w = fine.mode_weights * nm._powered(fine.ksq, 0.5)
    pairing = fine.volume * np.sum(w * np.real(cc * np.conj(bc)))
    gl = nm.grad_linfv_l2h(a)
    gb = np.concatenate([1j * k * b.coeffs for k in g.kd])
    rhs = (nm.sup_norm(a) + gl) * _hs_on(b.coeffs, g, 0.5) * _hs_on(gb, g, 0.5)
    return LawRatio("lemma_trilinear", abs(float(pairing)), rhs)


# corpus harness ----------------------------------------------------------------


@dataclass(frozen=True)
class CorpusRow:
    law: str
    params: str
    grid: str
    sample_id: int
    ratio: float


def corpus_rows_to_csv(rows: Sequence[CorpusRow], header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["law", "params", "grid", "sample_id", "ratio"])
    for r in rows:
        w.writerow([r.law, r.params, r.grid, r.sample_id, repr(float(r.ratio))])
    return buf.getvalue()
