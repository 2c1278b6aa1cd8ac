import numpy as np
import pytest

from quasi2d import checkpoint
from quasi2d.solvers import SolverConfig, solve_ns3d
from quasi2d.spectral import Grid, VectorField, leray_project, random_field, random_vector

G = Grid(16, 16, 2 * np.pi, 3.0)


class TestRoundTrip:
    def test_scalar(self, tmp_path):
        f = random_field(G, np.random.default_rng(0))
        p = checkpoint.save_field(tmp_path / "f.q2d", f, eps=0.25, seed=4)
        g = checkpoint.load(p)
        assert g.grid == G and g.meanfree
        np.testing.assert_array_equal(g.coeffs, f.coeffs)

    def test_vector(self, tmp_path):
        v = random_vector(G, np.random.default_rng(1))
        out = checkpoint.load(checkpoint.save_field(tmp_path / "v.q2d", v))
        assert isinstance(out, VectorField)
        np.testing.assert_array_equal(out.coeffs, v.coeffs)

    def test_trajectory(self, tmp_path):
        u0 = leray_project(random_vector(G, np.random.default_rng(2), kmax=2, decay=0.2))
        tr = solve_ns3d(u0, SolverConfig(dt=0.025, horizon=0.1, sample_every=0.05))
        out = checkpoint.load(checkpoint.save_trajectory(tmp_path / "t.q2d", tr, config="abc"))
        np.testing.assert_array_equal(out.states, tr.states)
        np.testing.assert_array_equal(out.pressures, tr.pressures)
        np.testing.assert_array_equal(out.times, tr.times)
        np.testing.assert_array_equal(out.diagnostics["energy"], tr.diagnostics["energy"])

    def test_manifest(self, tmp_path):
        p = checkpoint.save_field(tmp_path / "f.q2d", random_field(G, np.random.default_rng(3)), eps=0.5, seed=9)
        text = (tmp_path / "f.q2d.manifest.txt").read_text()
        for line in ("format_version: 1", "endianness: little", "eps: 0.5", "seed: 9", "array coeffs: 16 x 16 x 9"):
            assert line in text
        assert p.read_bytes()[:8] == checkpoint.MAGIC


class TestErrors:
    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.q2d"
        p.write_bytes(b"not a checkpoint at all")
        with pytest.raises(checkpoint.CheckpointError, match="magic"):
            checkpoint.load(p)

    def test_truncated(self, tmp_path):
        p = checkpoint.save_field(tmp_path / "f.q2d", random_field(G, np.random.default_rng(4)))
        p.write_bytes(p.read_bytes()[:-16])
        with pytest.raises(checkpoint.CheckpointError, match="truncated"):
            checkpoint.load(p)
