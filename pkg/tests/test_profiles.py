import numpy as np
import pytest

from quasi2d import norms as nm
from quasi2d.profiles import (ProfileSpec, QuasiTwoDData, QuasiTwoDTerm, TensorProfile, build_quasi2d_datum,
                              default_data, default_tensor_profile, default_u0, default_vh, default_w0,
                              dyadic_exponent, make_divfree_2d, make_divfree_3d, parse_eps, relative_divergence,
                              sizedata_ratio, slow_scale, stretched_grid, zero_plane_max)
from quasi2d.spectral import (Field, Grid, VectorField, derivative, gradient, random_field, random_vector,
                              spectral_l2, to_spectral)

BASE = Grid(24, 16, 2 * np.pi * 2, 2 * np.pi)
SPEC = ProfileSpec(sigma_h=1.5)


def _samples(grid, fn):
    return np.broadcast_to(fn(*grid.coords()), grid.shape)


class TestSlowScale:
    g = Grid(8, 16, 2 * np.pi, 3.0)

    def test_identity_at_one(self):
        f = random_field(self.g, np.random.default_rng(0), kmax=3)
        np.testing.assert_array_equal(slow_scale(f, 1.0).coeffs, f.coeffs)

    def test_single_mode(self):
        f = to_spectral(self.g, _samples(self.g, lambda x1, x2, x3: np.sin(2 * np.pi * x3 / 3.0)))
        out = slow_scale(f, 0.5)
        assert out.grid.len_v == pytest.approx(6.0)
        want = _samples(out.grid, lambda x1, x2, x3: np.sin(np.pi * x3 / 3.0))
        np.testing.assert_allclose(out.to_physical(), want, atol=1e-14)

    def test_sup_preserved(self):
        f = random_field(self.g, np.random.default_rng(1), kmax=3)
        for eps in (0.5, 0.25, 0.125):
            assert nm.sup_norm(slow_scale(f, eps), upsample=4) == pytest.approx(nm.sup_norm(f, upsample=4),
                                                                               rel=1e-10)

    def test_chain_rule(self):
        f = random_field(self.g, np.random.default_rng(2), kmax=3)
        eps = 0.25
        lhs = spectral_l2(derivative(slow_scale(f, eps), (0, 0, 1)).coeffs, stretched_grid(self.g, eps))
        rhs = eps * spectral_l2(slow_scale(derivative(f, (0, 0, 1)), eps).coeffs, stretched_grid(self.g, eps))
        assert lhs == pytest.approx(rhs, rel=1e-12)
        # vertical dilation stretches the box: L2^2 scales by 1/eps
        l2 = spectral_l2(slow_scale(f, eps).coeffs, stretched_grid(self.g, eps))
        assert l2 == pytest.approx(spectral_l2(f.coeffs, self.g) / np.sqrt(eps), rel=1e-12)

    def test_horizontal_spectrum_unchanged(self):
        f = random_field(self.g, np.random.default_rng(3), kmax=3)
        out = slow_scale(f, 0.5)
        np.testing.assert_array_equal(out.coeffs[..., 0], f.coeffs[..., 0])

    @pytest.mark.parametrize("eps", [0.3, 0.0, 1.5])
    def test_non_dyadic_rejected(self, eps):
        with pytest.raises(ValueError):
            slow_scale(Field.zeros(self.g), eps)

    def test_dyadic_exponent(self):
        assert dyadic_exponent(1 / 16) == 4
        assert parse_eps("1/32") == 1 / 32


class TestDivfree:
    g = Grid(16, 8, 2 * np.pi * 2, 2 * np.pi)

    def test_zero_stream(self):
        assert np.all(make_divfree_2d(Field.zeros(self.g)).coeffs == 0)

    def test_analytic_curl(self):
        L = self.g.len_h
        psi = to_spectral(self.g, _samples(self.g, lambda x1, x2, x3: np.cos(2 * np.pi * x1 / L)), meanfree=True)
        v = make_divfree_2d(psi).to_physical()
        want = _samples(self.g, lambda x1, x2, x3: -(2 * np.pi / L) * np.sin(2 * np.pi * x1 / L))
        np.testing.assert_allclose(v[0], 0, atol=1e-14)
        np.testing.assert_allclose(v[1], want, atol=1e-14)
        np.testing.assert_allclose(v[2], 0, atol=0)

    def test_random_stream(self):
        c = random_field(self.g, np.random.default_rng(4), kmax=3).coeffs.copy()
        c[0, 0, :] = 0
        v = make_divfree_2d(Field(self.g, c))
        k1, k2, _ = self.g.kd
        div = 1j * (k1 * v.coeffs[0] + k2 * v.coeffs[1])
        assert spectral_l2(div, self.g) < 1e-12 * spectral_l2(v.coeffs, self.g)
        assert np.isfinite(nm.aniso_norm(v, nm.NormSpec("L2vHsh", -1.0)))

    def test_plane_mean_rejected(self):
        c = np.zeros(self.g.spectral_shape, complex)
        c[0, 0, 1] = 1.0
        with pytest.raises(ValueError):
            make_divfree_2d(Field(self.g, c))

    def test_3d(self):
        assert np.all(make_divfree_3d(VectorField.zeros(self.g)).coeffs == 0)
        phi = random_field(self.g, np.random.default_rng(5), kmax=3)
        out = make_divfree_3d(gradient(phi))
        assert spectral_l2(out.coeffs, self.g) < 1e-12 * spectral_l2(gradient(phi).coeffs, self.g)
        pot = random_vector(self.g, np.random.default_rng(6), kmax=3)
        assert relative_divergence(make_divfree_3d(pot)) < 1e-12


class TestDefaults:
    def test_invariants(self):
        vh, w0 = default_vh(BASE, SPEC), default_w0(BASE, SPEC)
        assert nm.sup_norm(vh) == pytest.approx(SPEC.vh_amplitude, rel=1e-12)
        assert np.all(vh.coeffs[2] == 0)
        assert zero_plane_max(vh) < 1e-10
        assert zero_plane_max(Field(BASE, w0.coeffs[2])) < 1e-10
        assert relative_divergence(w0) < 1e-10
        assert np.all(vh.coeffs[:, 0, 0, 0] == 0) and np.all(w0.coeffs[:, 0, 0, 0] == 0)

    def test_u0_independent_of_box_height(self):
        a = default_u0(Grid(24, 64, BASE.len_h, 2 * np.pi * 4), SPEC)
        b = default_u0(Grid(24, 128, BASE.len_h, 2 * np.pi * 8), SPEC)
        assert nm.sup_norm(a) == pytest.approx(nm.sup_norm(b), rel=1e-6)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ProfileSpec(vertical="nope")
        with pytest.raises(ValueError):
            ProfileSpec(sigma_h=0)


class TestDatum:
    eps = 0.25

    def _tall(self):
        return stretched_grid(BASE, self.eps, n_v=64)

    def test_degenerate_is_scaled_vh(self):
        tall = self._tall()
        vh = default_vh(BASE, SPEC)
        d = QuasiTwoDData(VectorField.zeros(tall), vh, VectorField.zeros(BASE), self.eps)
        out = build_quasi2d_datum(d)
        np.testing.assert_allclose(out.coeffs, slow_scale(vh, self.eps, tall).coeffs, atol=0)
        assert np.all(out.coeffs[2] == 0)

    def test_full_datum_divergence(self):
        d = default_data(BASE, self._tall(), self.eps, SPEC)
        out = build_quasi2d_datum(d)
        assert out.divfree and relative_divergence(out) < 1e-10

    def test_linear_in_profiles(self):
        tall = self._tall()
        vh, w0 = default_vh(BASE, SPEC), default_w0(BASE, SPEC)
        zero = VectorField.zeros(tall)
        one = build_quasi2d_datum(QuasiTwoDData(zero, vh, w0, self.eps))
        three = build_quasi2d_datum(QuasiTwoDData(zero, vh * 3.0, w0 * 3.0, self.eps))
        np.testing.assert_allclose(three.coeffs, 3 * one.coeffs, atol=1e-15)

    def test_superposition(self):
        tall = self._tall()
        vh, w0 = default_vh(BASE, SPEC), default_w0(BASE, SPEC)
        extra = QuasiTwoDTerm(vh * 0.5, w0 * 0.5, 0.5)
        zero = VectorField.zeros(tall)
        both = build_quasi2d_datum(QuasiTwoDData(zero, vh, w0, self.eps, (extra,)))
        lead = build_quasi2d_datum(QuasiTwoDData(zero, vh, w0, self.eps))
        np.testing.assert_allclose(both.coeffs - lead.coeffs,
                                   slow_scale(extra.unscaled(), 0.5, tall).coeffs, atol=1e-15)

    def test_nonzero_trace_rejected(self):
        c = np.zeros(BASE.spectral_shape, complex)
        c[1, 0, 0] = 0.5  # psi = cos(k x1) is x3-independent, so v0h(x_h, 0) != 0
        bad = make_divfree_2d(Field(BASE, c))
        with pytest.raises(ValueError, match="v0h\\(x_h, 0\\) = 0"):
            QuasiTwoDData(VectorField.zeros(self._tall()), bad, VectorField.zeros(BASE), self.eps)

    def test_divergent_w0_rejected(self):
        c = np.zeros((3, *BASE.spectral_shape), complex)
        c[0, 1, 0, 1] = 0.5
        with pytest.raises(ValueError, match="div w0"):
            QuasiTwoDData(VectorField.zeros(self._tall()), default_vh(BASE, SPEC), VectorField(BASE, c), self.eps)


class TestSizedata:
    grid = Grid(32, 32, 2 * np.pi * 4, 2 * np.pi)

    def test_constant_vertical_profile(self):
        ratios = [sizedata_ratio(default_tensor_profile(self.grid, e, SPEC, vertical="constant"))
                  for e in (1 / 4, 1 / 16)]
        for r in ratios:
            assert r == pytest.approx(1.0, abs=0.02)

    def test_quarter_bound_at_one_sixteenth(self):
        assert sizedata_ratio(default_tensor_profile(self.grid, 1 / 16, SPEC)) >= 0.25

    def test_stabilization(self):
        r = [sizedata_ratio(default_tensor_profile(self.grid, e, SPEC)) for e in (1 / 16, 1 / 32, 1 / 64)]
        assert abs(r[1] - r[0]) < 0.05 and abs(r[2] - r[1]) < 0.05

    def test_zero_profile_rejected(self):
        tp = TensorProfile(self.grid, np.zeros((32, 32)), np.ones(32), 0.5)
        with pytest.raises(ValueError, match="degenerate"):
            sizedata_ratio(tp)
