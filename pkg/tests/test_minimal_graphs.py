import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from solcmc.minimal_graphs import Family, GraphFn, entire_family, residual, residual_sweep

coord = st.floats(-2, 2, allow_nan=False)


def test_affine_random():
    rng = np.random.default_rng(0)
    x2, x3, a, b = rng.uniform(-2, 2, (4, 1000))
    g = GraphFn(lambda p, q: (a * p + b, a + 0 * p, 0 * p, 0 * p, 0 * p, 0 * p))
    assert np.abs(residual(g, x2, x3)).max() <= 1e-12


@pytest.mark.parametrize("fam", list(Family))
def test_entire_families(fam):
    rng = np.random.default_rng(1)
    x2, x3 = rng.uniform(-2, 2, (2, 1000))
    g = entire_family(fam, a=1.3, b=-0.4)
    assert np.abs(residual(g, x2, x3)).max() <= 1e-10
    assert g.consistency_error(x2, x3, h=1e-4) < 1e-5


def test_examples():
    g = entire_family("Exp", a=1.0)
    f, f2, f3, *_ = g.jet(np.array(0.0), np.array(0.0))
    assert (f, f3) == (1.0, -1.0)
    assert np.all(residual(entire_family("Affine", 0, 0), [0.0, 1.0], [2.0, -1.0]) == 0)
    sq = GraphFn(lambda p, q: (p ** 2, 2 * p, 0 * p, 2 + 0 * p, 0 * p, 0 * p))
    x = np.linspace(-2, 2, 11)
    assert np.all(residual(sq, x, x[::-1]) == 2)
    with pytest.raises(ValueError):
        entire_family("Bogus")


def test_finite_difference_fallback():
    fd = GraphFn.from_function(lambda p, q: p * np.exp(-2 * q), h=1e-4)
    assert np.abs(residual(fd, np.array([0.3, -0.5]), np.array([0.2, 0.1]))).max() < 1e-5


@given(coord, coord, coord, coord)
def test_translation_and_constant_invariance(x2, x3, dx, c):
    g = entire_family("MixedExp", a=0.8)
    s = g.shifted(dx2=dx, c=c)
    r1 = residual(g, x2 - dx, x3)
    r2 = residual(s, x2, x3)
    assert abs(r1 - r2) <= 1e-10 * max(1, abs(r1))
    assert residual(g.shifted(c=c), x2, x3) == residual(g, x2, x3)


def test_sweep_csv(tmp_path):
    rows = residual_sweep(entire_family("Exp2"), n=5, path=str(tmp_path / "s.csv"))
    assert rows.shape == (25, 3)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "x2,x3,residual" and len(lines) == 26
