import math

import pytest

from quasi2d.config import ConfigError, ExperimentConfig, load_config, parse_config, parse_length, with_overrides


class TestParse:
    def test_empty_is_default(self):
        cfg = parse_config("")
        assert cfg.sweep == ExperimentConfig().sweep
        assert cfg.out == "out" and cfg.seed == 0

    def test_values(self):
        cfg = parse_config("""
[run]
seed = 7
out = results
[grid]
n_h = 32
len_h = 2*pi*4
[sweep]
eps_list = 1/4, 1/8, 1/16, 1/32
box_check = yes
[solver]
horizon = 2
""")
        assert cfg.seed == 7 and cfg.out == "results"
        assert cfg.sweep.n_h == 32 and cfg.sweep.len_h == pytest.approx(8 * math.pi)
        assert cfg.sweep.eps_list == (0.25, 0.125, 0.0625, 0.03125)
        assert cfg.sweep.box_check and cfg.sweep.solver.horizon == 2.0

    def test_lengths(self):
        assert parse_length("2*pi") == pytest.approx(2 * math.pi)
        assert parse_length("-3/2") == -1.5
        with pytest.raises(ValueError):
            parse_length("__import__('os')")

    @pytest.mark.parametrize("text, field", [
        ("[grid]\nn_h = abc", "[grid] n_h"),
        ("[grid]\nn_h = 14", "[sweep]"),
        ("[sweep]\neps_list = 1/8, 1/4", "[sweep] eps_list"),
        ("[sweep]\neps_list = 1/3", "[sweep] eps_list"),
        ("[solver]\ndt = 0", "[solver]"),
        ("[profiles]\nvertical = wavy", "[profiles]"),
        ("[grid]\nnh = 32", "[grid] nh"),
        ("[colour]\nx = 1", "[colour]"),
        ("[run]\nschema = 2", "[run] schema"),
        ("[sweep]\nbox_check = maybe", "[sweep] box_check"),
        ("no section here", "malformed"),
    ])
    def test_errors_name_the_field(self, text, field):
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert field in str(exc.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.ini")


class TestOverrides:
    def test_seed_workers_out(self):
        cfg = with_overrides(ExperimentConfig(), seed=3, workers=2, out="elsewhere")
        assert cfg.seed == 3 and cfg.sweep.workers == 2 and cfg.out == "elsewhere"
        assert cfg.sweep.digest() == with_overrides(ExperimentConfig(), seed=3).sweep.digest()

    def test_bad_workers(self):
        with pytest.raises(ConfigError, match="--workers"):
            with_overrides(ExperimentConfig(), workers=0)


def test_shipped_configs_parse():
    from pathlib import Path
    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.ini"))
    assert paths
    for p in paths:
        load_config(p)
