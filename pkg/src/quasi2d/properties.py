"""Seeded invariant suites over random band-limited fields.

Each suite evaluates a fixed list of named invariants on ``n`` random samples
and reports the worst observed value against its tolerance. An empty corpus
passes vacuously.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import littlewood_paley as lp
from . import norms as nm
from .spectral import (Field, Grid, VectorField, aniso_pressure_coeffs, dealias, gradient, heat_propagate, leray_coeffs, physical_l2, random_field, random_vector,
                       spectral_inner, spectral_l2, to_spectral)

SUITES = ("spectral", "lp", "norms", "products")
FAULTS = ("broken-cutoff",)


@dataclass
class PropertyResult:
    """Worst value of one invariant over the corpus; ``kind`` is ``max`` (value <= tol) or ``min`` (value >= tol)."""

    name: str
    tol: float
    kind: str = "max"
    worst: float | None = None
    detail: str = ""

    def update(self, value: float):
        value = float(value)
        if self.worst is None or np.isnan(value):
            self.worst = value
        elif self.kind == "max":
            self.worst = max(self.worst, value)
        else:
            self.worst = min(self.worst, value)

    @property
    def passed(self) -> bool:
        if self.worst is None:
            return True
        if np.isnan(self.worst):
            return False
        return self.worst <= self.tol if self.kind == "max" else self.worst >= self.tol


@dataclass
class SuiteReport:
    suite: str
    n_samples: int
    seed: int
    results: list[PropertyResult] = field(default_factory=list)
    constants: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def violations(self) -> list[str]:
        return [r.name for r in self.results if not r.passed]

    def table(self) -> str:
        lines = [f"suite {self.suite}: seed {self.seed}, {self.n_samples} samples"]
        for r in self.results:
            shown = "n/a" if r.worst is None else f"{r.worst:.3e}"
            rel = "<=" if r.kind == "max" else ">="
            lines.append(f"  {'PASS' if r.passed else 'FAIL'}  {r.name}: observed {shown} (required {rel} {r.tol:g})"
                         + (f"  {r.detail}" if r.detail else ""))
        for k, v in self.constants.items():
            lines.append(f"  constant {k}: {v:.6g}")
        return "\n".join(lines)


def _rel(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    scale = max(spectral_l2(b, grid), 1e-300)
    return spectral_l2(a - b, grid) / scale


CORPUS_GRID = Grid(16, 16, 2 * np.pi, 2 * np.pi)


# suites ---------------------------------------------------------------------


def _spectral_suite(rng: np.random.Generator, n: int, rep: SuiteReport, fault: str | None):
    g = CORPUS_GRID
    checks = {name: PropertyResult(name, tol) for name, tol in (
        ("parseval", 1e-12), ("round trip", 1e-12), ("leray idempotent", 1e-12),
        ("leray self-adjoint", 1e-10), ("leray annihilates gradients", 1e-12),
        ("heat semigroup", 1e-12), ("heat contraction", 1e-15),
        ("aniso projection at eps=1 equals leray", 1e-12), ("dealias idempotent", 0.0))}
    for _ in range(n):
        f = random_field(g, rng)
        u, v = random_vector(g, rng), random_vector(g, rng)
        phys = f.to_physical()
        checks["parseval"].update(abs(physical_l2(phys, g) - spectral_l2(f.coeffs, g)) / spectral_l2(f.coeffs, g))
        checks["round trip"].update(_rel(to_spectral(g, phys).coeffs, f.coeffs, g))
        pu = leray_coeffs(u.coeffs, g)
        checks["leray idempotent"].update(_rel(leray_coeffs(pu, g), pu, g))
        a = spectral_inner(VectorField(g, pu), v)
        b = spectral_inner(u, VectorField(g, leray_coeffs(v.coeffs, g)))
        checks["leray self-adjoint"].update(abs(a - b) / max(abs(a), abs(b), 1e-300))
        grad = gradient(f).coeffs
        checks["leray annihilates gradients"].update(
            spectral_l2(leray_coeffs(grad, g), g) / spectral_l2(grad, g))
        for mode in ("full", "horizontal", "aniso"):
            h12 = heat_propagate(heat_propagate(f, 0.1, mode, 0.25), 0.2, mode, 0.25)
            h3 = heat_propagate(f, 0.3, mode, 0.25)
            checks["heat semigroup"].update(_rel(h12.coeffs, h3.coeffs, g))
            grow = spectral_l2(h3.coeffs, g) / spectral_l2(f.coeffs, g) - 1
            checks["heat contraction"].update(max(grow, 0.0))
        checks["aniso projection at eps=1 equals leray"].update(_rel(aniso_pressure_coeffs(u.coeffs, g, 1.0)[0], leray_coeffs(u.coeffs, g), g))
        d1 = dealias(f)
        checks["dealias idempotent"].update(np.max(np.abs(dealias(d1).coeffs - d1.coeffs)))
    rep.results.extend(checks.values())


def broken_cutoff(grid: Grid) -> lp.DyadicCutoff:
    """Negative control: a profile whose blocks no longer sum to one."""
    return lp.DyadicCutoff(grid, profile=lambda r: 0.9 * lp.smooth_cutoff(r))


def _lp_suite(rng: np.random.Generator, n: int, rep: SuiteReport, fault: str | None):
    g = CORPUS_GRID
    cut = broken_cutoff(g) if fault == "broken-cutoff" else lp.DyadicCutoff(g)
    checks = {name: PropertyResult(name, tol) for name, tol in (
        ("partition of unity", 1e-10), ("telescoping block sum", 1e-10),
        ("block orthogonality", 1e-12), ("bony sum identity", 1e-10))}
    bern = PropertyResult("bernstein constant < 10", 10.0)
    if n > 0:
        checks["partition of unity"].update(cut.partition_error())
    levels = list(range(cut.ell_min - 1, cut.ell_max + 1))
    for _ in range(n):
        f = random_field(g, rng)
        b = random_field(g, rng)
        blocks = {ell: f.coeffs * cut.block_symbol(ell) for ell in levels}
        total = sum(blocks.values())
        checks["telescoping block sum"].update(_rel(total, f.coeffs, g))
        scale = spectral_l2(f.coeffs, g) ** 2
        worst = 0.0
        for i, l1 in enumerate(levels):
            for l2 in levels[i + 2:]:
                ip = g.volume * np.sum(g.mode_weights * np.real(blocks[l1] * np.conj(blocks[l2])))
                worst = max(worst, abs(ip) / scale)
        checks["block orthogonality"].update(worst)
        split = lp.bony_split(f, b, cut)
        prod = lp.dealiased_product(f, b)
        checks["bony sum identity"].update(_rel(split.total().coeffs, prod.coeffs, g))
        for ell in cut.levels:
            blk = blocks[ell]
            l2 = spectral_l2(blk, g)
            if l2 > 1e-12 * np.sqrt(scale):
                bern.update(nm.sup_norm(Field(g, blk)) / (2.0 ** (1.5 * ell) * l2))
    rep.results.extend(checks.values())
    rep.results.append(bern)


def _norms_suite(rng: np.random.Generator, n: int, rep: SuiteReport, fault: str | None):
    g = CORPUS_GRID
    checks = {name: PropertyResult(name, tol) for name, tol in (
        ("absolute homogeneity", 1e-12), ("triangle inequality", 1e-12),
        ("embedding s=1/2 margin", 1e-12), ("embedding s=-1/2 margin", 1e-12),
        ("embedding s=0 equality", 1e-12), ("plancherel split H^1/2", 1e-12),
        ("Hs at s=0 equals L2", 1e-12))}
    specs = [nm.NormSpec("Hs", 0.5), nm.NormSpec("L2vHsh", 0.5), nm.NormSpec("LinfvL2h"),
             nm.NormSpec("L2h_Hsv", 0.5), nm.NormSpec("L2"), nm.NormSpec("weighted_x3_L2")]
    for _ in range(n):
        f, h = random_field(g, rng), random_field(g, rng)
        lam = float(rng.uniform(-3, 3))
        for spec in specs:
            a = nm.aniso_norm(f, spec)
            checks["absolute homogeneity"].update(abs(nm.aniso_norm(f * lam, spec) - abs(lam) * a) / max(abs(lam) * a, 1e-300))
            tri = nm.aniso_norm(f + h, spec) - a - nm.aniso_norm(h, spec)
            checks["triangle inequality"].update(max(tri, 0.0) / max(a, 1e-300))
        # the margins are "required nonnegative"; record the violation size
        checks["embedding s=1/2 margin"].update(max(-nm.embedding_check(f, 0.5).margin, 0.0))
        checks["embedding s=-1/2 margin"].update(max(-nm.embedding_check(f, -0.5).margin, 0.0))
        checks["embedding s=0 equality"].update(abs(nm.embedding_check(f, 0.0).margin) / spectral_l2(f.coeffs, g))
        lhs = nm.hs_norm(f, 0.5)
        rhs = nm.aniso_norm(f, nm.NormSpec("L2h_Hsv", 0.5)) + nm.aniso_norm(f, nm.NormSpec("L2vHsh", 0.5))
        checks["plancherel split H^1/2"].update(max(lhs - rhs, 0.0) / lhs)
        checks["Hs at s=0 equals L2"].update(abs(nm.hs_norm(f, 0.0) - spectral_l2(f.coeffs, g)) / spectral_l2(f.coeffs, g))
    rep.results.extend(checks.values())


PRODUCT_GRIDS = (Grid(16, 16, 2 * np.pi, 2 * np.pi), Grid(32, 32, 2 * np.pi, 2 * np.pi))


def product_corpus(seed: int, n: int, law: str, grid: Grid) -> list[float]:
    """Ratios of one law over ``n`` seeded pairs; the same seed gives the same functions on every grid."""
    rng = np.random.default_rng([seed, lp.LAWS.index(law)])
    out = []
    for _ in range(n):
        if law == "lemma_trilinear":
            a = _divfree(random_vector(grid, rng, decay=0.05))
            b = _divfree(random_vector(grid, rng, decay=0.05))
        else:
            a = random_field(grid, rng, decay=0.05)
            b = random_field(grid, rng, decay=0.05)
        out.append(lp.product_law_ratio(a, b, law).ratio)
    return out


def _divfree(v: VectorField) -> VectorField:
    return VectorField(v.grid, leray_coeffs(v.coeffs, v.grid), divfree=True)


def _products_suite(rng: np.random.Generator, n: int, rep: SuiteReport, fault: str | None):
    seed = int(rng.integers(2**31))
    for law in lp.LAWS:
        finite = PropertyResult(f"{law}: max ratio finite", 0.0)
        stable = PropertyResult(f"{law}: refinement change < 20%", 0.20)
        if n > 0:
            coarse = product_corpus(seed, n, law, PRODUCT_GRIDS[0])
            fine = product_corpus(seed, n, law, PRODUCT_GRIDS[1])
            m0, m1 = max(coarse), max(fine)
            finite.update(0.0 if np.isfinite(m0) and np.isfinite(m1) else np.nan)
            stable.update(abs(m1 - m0) / m0 if m0 > 0 else np.nan)
            rep.constants[f"{law} max ratio 16^3"] = m0
            rep.constants[f"{law} max ratio 32^3"] = m1
        rep.results.extend([finite, stable])
    # degenerate case: constant second factor makes the law an identity
    deg = PropertyResult("pdtlaws with b = 1: ratio <= 1", 1.0 + 1e-12)
    g = PRODUCT_GRIDS[0]
    for _ in range(min(n, 10)):
        a = random_field(g, rng, decay=0.05)
        one = Field(g, np.where(np.indices(g.spectral_shape).sum(0) == 0, 1.0 + 0j, 0j), meanfree=False)
        deg.update(lp.product_law_ratio(a, one, "pdtlaws").ratio)
    rep.results.append(deg)


_SUITES: dict[str, Callable] = {"spectral": _spectral_suite, "lp": _lp_suite, "norms": _norms_suite,
                                "products": _products_suite}


def run_suite(suite: str, seed: int = 0, n_samples: int = 100, fault: str | None = None) -> SuiteReport:
    if suite not in _SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; expected one of {FAULTS}")
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    rep = SuiteReport(suite, n_samples, seed)
    _SUITES[suite](np.random.default_rng(seed), n_samples, rep, fault)
    return rep
