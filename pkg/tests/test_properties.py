import numpy as np
import pytest

from quasi2d import littlewood_paley as lp
from quasi2d.properties import FAULTS, SUITES, broken_cutoff, product_corpus, run_suite
from quasi2d.spectral import Grid


@pytest.mark.parametrize("suite", ["spectral", "lp", "norms"])
def test_suites_pass(suite):
    rep = run_suite(suite, seed=0, n_samples=20)
    assert rep.passed, rep.table()


def test_products_suite_small():
    rep = run_suite("products", seed=0, n_samples=10)
    assert rep.passed, rep.table()
    assert all(np.isfinite(v) for v in rep.constants.values())


@pytest.mark.parametrize("suite", SUITES)
def test_empty_corpus_is_vacuous(suite):
    rep = run_suite(suite, seed=0, n_samples=0)
    assert rep.passed
    assert all(r.worst is None for r in rep.results if not r.name.startswith("pdtlaws with"))


def test_broken_cutoff_fails_by_name():
    rep = run_suite("lp", seed=0, n_samples=5, fault=FAULTS[0])
    assert not rep.passed
    assert "partition of unity" in rep.violations
    assert "telescoping block sum" in rep.violations
    assert "FAIL  partition of unity" in rep.table()


def test_broken_cutoff_partition_error():
    g = Grid(16, 16, 2 * np.pi, 2 * np.pi)
    assert broken_cutoff(g).partition_error() > 0.05
    assert lp.DyadicCutoff(g).partition_error() < 1e-12


def test_deterministic():
    assert run_suite("norms", seed=3, n_samples=5).table() == run_suite("norms", seed=3, n_samples=5).table()


def test_product_corpus_matches_functions_across_grids():
    g = Grid(16, 16, 2 * np.pi, 2 * np.pi)
    assert product_corpus(1, 3, "pdtlaws", g) == product_corpus(1, 3, "pdtlaws", g)


@pytest.mark.parametrize("kwargs", [dict(suite="nope"), dict(suite="lp", fault="nope"),
                                    dict(suite="lp", n_samples=-1)])
def test_invalid_arguments(kwargs):
    with pytest.raises(ValueError):
        run_suite(**kwargs)
