import numpy as np
import pytest

from quasi2d import littlewood_paley as lp
from quasi2d.norms import sup_norm
from quasi2d.profiles import slow_scale
from quasi2d.properties import product_corpus
from quasi2d.spectral import Field, Grid, random_field, spectral_l2, to_spectral

G = Grid(16, 16, 2 * np.pi, 2 * np.pi)


def _mode(grid, k, amp=1.0):
    x1, _, x3 = grid.coords()
    return to_spectral(grid, np.broadcast_to(amp * np.cos(k[0] * x1 + k[2] * x3), grid.shape), meanfree=True)


class TestCutoff:
    def test_profile_bounds_and_monotone(self):
        r = np.linspace(0, 3, 3001)
        phi = lp.smooth_cutoff(r)
        assert phi.min() >= 0 and phi.max() <= 1
        assert np.all(np.diff(phi) <= 0)
        assert np.all(phi[r <= 1] == 1) and np.all(phi[r >= 2] == 0)

    def test_partition_of_unity(self):
        for g in (G, Grid(32, 16, 2 * np.pi * 4, 2 * np.pi)):
            assert lp.DyadicCutoff(g).partition_error() < 1e-10

    def test_out_of_range_level_rejected(self):
        cut = lp.DyadicCutoff(G)
        with pytest.raises(ValueError):
            cut.block_symbol(cut.ell_max + 2)


class TestBlocks:
    def test_annulus_mode_unchanged(self):
        # |k| = 6 = 1.5 * 2^2 sits where block 2 has multiplier one
        f = _mode(G, (6, 0, 0))
        out = lp.delta_block(f, 2)
        np.testing.assert_allclose(out.coeffs, f.coeffs, atol=1e-15)

    def test_telescoping(self):
        f = random_field(G, np.random.default_rng(0))
        cut = lp.DyadicCutoff(G)
        total = sum(lp.delta_block(f, ell, cut).coeffs for ell in range(cut.ell_min - 1, cut.ell_max + 1))
        assert spectral_l2(total - f.coeffs, G) < 1e-10 * spectral_l2(f.coeffs, G)

    def test_low_block_recursion(self):
        f = random_field(G, np.random.default_rng(1))
        cut = lp.DyadicCutoff(G)
        for ell in range(cut.ell_min, cut.ell_max):
            lhs = lp.low_block(f, ell + 1, cut).coeffs
            rhs = lp.low_block(f, ell, cut).coeffs + lp.delta_block(f, ell, cut).coeffs
            np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-15)

    def test_separated_blocks_disjoint(self):
        cut = lp.DyadicCutoff(G)
        for ell in cut.levels:
            for m in range(ell + 2, cut.ell_max + 1):
                assert np.all(cut.block_symbol(ell) * cut.block_symbol(m) == 0)

    def test_bernstein_constant(self):
        rng = np.random.default_rng(2)
        cut = lp.DyadicCutoff(G)
        worst = 0.0
        for _ in range(100):
            f = random_field(G, rng)
            for ell in cut.levels:
                blk = lp.delta_block(f, ell, cut)
                l2 = spectral_l2(blk.coeffs, G)
                if l2 > 1e-12:
                    worst = max(worst, sup_norm(blk) / (2.0 ** (1.5 * ell) * l2))
        assert 0 < worst < 10


class TestBesov:
    def test_zero(self):
        assert lp.besov_norm(Field.zeros(G), lp.BesovIndex(0.5, 2, 2)) == 0.0

    @pytest.mark.parametrize("s", [-1.0, 0.5, 1.0])
    def test_single_annulus_mode(self, s):
        f = _mode(G, (6, 0, 0))
        f = f * (1.0 / spectral_l2(f.coeffs, G))
        assert lp.besov_norm(f, lp.BesovIndex(s, 2, 2)) == pytest.approx(2.0 ** (2 * s), rel=1e-12)

    def test_b0_22_equivalent_to_l2(self):
        rng = np.random.default_rng(3)
        ratios = []
        for _ in range(20):
            f = random_field(Grid(32, 32, 2 * np.pi, 2 * np.pi), rng)
            ratios.append(lp.besov_norm(f, lp.BesovIndex(0, 2, 2)) / spectral_l2(f.coeffs, f.grid))
        assert 0.9 < min(ratios) <= max(ratios) <= 1.0 + 1e-12

    def test_block_truncation_monotone(self):
        f = random_field(G, np.random.default_rng(4))
        cut = lp.DyadicCutoff(G)
        full = lp.besov_norm(f, lp.BesovIndex(0.5, np.inf, 1), cut)
        part = lp.besov_norm(f, lp.BesovIndex(0.5, np.inf, 1), cut, levels=list(cut.levels)[:-2])
        assert part <= full

    def test_mean_rejected(self):
        c = np.zeros(G.spectral_shape, complex)
        c[0, 0, 0] = 1
        with pytest.raises(ValueError):
            lp.besov_norm(Field(G, c), lp.BesovIndex(0))

    def test_invalid_index(self):
        with pytest.raises(ValueError):
            lp.BesovIndex(0, p=0.5)


class TestHeatflow:
    g = Grid(32, 32, 2 * np.pi, 2 * np.pi)

    def test_zero(self):
        assert lp.besov_heatflow_norm(Field.zeros(self.g), 1.0) == 0.0

    @pytest.mark.parametrize("kappa", [1, 3, 5])
    def test_single_mode_closed_form(self, kappa):
        # sup_t t^(1/2) A exp(-kappa^2 t) = A / (kappa sqrt(2e))
        amp = 2.0
        f = _mode(self.g, (kappa, 0, 0), amp)
        want = amp / (kappa * np.sqrt(2 * np.e))
        assert lp.besov_heatflow_norm(f, 1.0) == pytest.approx(want, rel=0.01)

    def test_comparable_to_block_norm(self):
        rng = np.random.default_rng(5)
        ratios = []
        for _ in range(5):
            f = random_field(G, rng)
            ratios.append(lp.besov_heatflow_norm(f, 1.0) / lp.besov_norm(f, lp.BesovIndex(-1, np.inf, np.inf)))
        assert 0.05 < min(ratios) and max(ratios) < 20

    def test_bad_time_grids_rejected(self):
        f = _mode(G, (1, 0, 0))
        with pytest.raises(ValueError):
            lp.besov_heatflow_norm(f, 1.0, times=np.array([]))
        with pytest.raises(ValueError):
            lp.besov_heatflow_norm(f, 1.0, times=np.array([0.1, 0.2, 0.5]))
        with pytest.raises(ValueError):
            lp.besov_heatflow_norm(f, -1.0)


class TestBony:
    def test_constant_factor(self):
        c = np.zeros(G.spectral_shape, complex)
        c[0, 0, 0] = 2.0
        a = Field(G, c)
        b = random_field(G, np.random.default_rng(6))
        split = lp.bony_split(a, b)
        prod = lp.dealiased_product(a, b)
        assert spectral_l2(split.total().coeffs - prod.coeffs, G) < 1e-10 * spectral_l2(prod.coeffs, G)

    def test_separated_levels_land_in_paraproduct(self):
        g = Grid(8, 8192, 2 * np.pi, 2 * np.pi)
        a, b = _mode(g, (0, 0, 1)), _mode(g, (0, 0, 1536))
        split = lp.bony_split(a, b)
        prod = lp.dealiased_product(a, b)
        scale = spectral_l2(prod.coeffs, g)
        assert spectral_l2(split.paraproduct_ab.coeffs - prod.coeffs, g) < 1e-10 * scale
        assert spectral_l2(split.paraproduct_ba.coeffs, g) < 1e-10 * scale
        assert spectral_l2(split.remainder.coeffs, g) < 1e-10 * scale

    def test_random_sum_identity(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            a, b = random_field(G, rng), random_field(G, rng)
            split = lp.bony_split(a, b)
            prod = lp.dealiased_product(a, b)
            assert spectral_l2(split.total().coeffs - prod.coeffs, G) < 1e-10 * spectral_l2(prod.coeffs, G)


class TestProductLaws:
    def test_constant_second_factor(self):
        one = np.zeros(G.spectral_shape, complex)
        one[0, 0, 0] = 1.0
        for seed in range(5):
            a = random_field(G, np.random.default_rng(seed), decay=0.05)
            assert lp.product_law_ratio(a, Field(G, one), "pdtlaws").ratio <= 1 + 1e-12

    def test_zero_factor_annihilates(self):
        a = random_field(G, np.random.default_rng(8))
        for law in ("pdtlaws", "pdtlaw", "lemma_aniso_12", "lemma_slowvar"):
            r = lp.product_law_ratio(a, Field.zeros(G), law)
            assert r.lhs == 0.0

    @pytest.mark.parametrize("params, match", [
        (lp.LawParams(s=-0.1), "s > 0"),
        (lp.LawParams(s1=-0.5, s2=0.25), "s1 \\+ s2 > 0"),
        (lp.LawParams(s1=1.6), "s1 < d/2"),
    ])
    def test_exponents_out_of_range(self, params, match):
        a = random_field(G, np.random.default_rng(9))
        law = "pdtlaws" if params.s != 0.5 else "pdtlaw"
        with pytest.raises(ValueError, match=match):
            lp.product_law_ratio(a, a, law, params)

    def test_unknown_law(self):
        a = random_field(G, np.random.default_rng(10))
        with pytest.raises(ValueError):
            lp.product_law_ratio(a, a, "nope")

    def test_pdtlaw_refinement_stable(self):
        coarse = product_corpus(0, 10, "pdtlaw", Grid(32, 32, 2 * np.pi, 2 * np.pi))
        fine = product_corpus(0, 10, "pdtlaw", Grid(64, 64, 2 * np.pi, 2 * np.pi))
        assert np.all(np.isfinite(coarse)) and np.all(np.isfinite(fine))
        assert abs(max(fine) - max(coarse)) / max(coarse) < 0.2

    def test_slowvar_uniform_in_eps(self):
        base = Grid(16, 16, 2 * np.pi, 2 * np.pi)
        b0 = random_field(base, np.random.default_rng(11), kmax=3, decay=0.1)
        ratios = []
        for m in range(1, 4):
            eps = 2.0**-m
            tall = Grid(16, 16 * 2**m, 2 * np.pi, 2 * np.pi / eps)
            x1, x2, x3 = tall.centered_coords()
            a = to_spectral(tall, np.broadcast_to(np.sin(x1) * np.cos(2 * x2) * np.exp(-x3**2), tall.shape),
                            meanfree=True)
            b = slow_scale(b0, eps, tall)
            ratios.append(lp.product_law_ratio(a, b, "lemma_slowvar").ratio)
        assert np.all(np.isfinite(ratios))
        assert max(ratios) <= 2 * ratios[0]
