import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import i1

from solcmc.cylinders import (
    ProfileCurve,
    cylinder_gauss,
    embedding_defect,
    embedding_defect_bessel,
    gauss_of_cylinder,
    parametric_mean_curvature,
    parametrize,
    profile,
    profile_x1,
    u_period,
)


def quad_defect(H):
    val, _ = quad(lambda t: np.exp(-np.cos(t) / (2 * H)) * np.cos(t), -np.pi / 2, 3 * np.pi / 2,
                  epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


@pytest.mark.parametrize("H", [0.1, 0.5, 1.0, 2.0, 5.0, 10.0])
def test_defect_matches_adaptive_quadrature(H):
    assert abs(embedding_defect(H) - quad_defect(H)) <= 1e-9 * max(1, abs(quad_defect(H)))
    assert embedding_defect(H) < 0
    assert np.isclose(embedding_defect_bessel(H), -2 * np.pi * i1(1 / (2 * H)), rtol=1e-14)


def test_defect_values():
    assert abs(embedding_defect(1.0) - (-1.6203977104373)) < 1e-10
    assert abs(embedding_defect(5.0) / (-np.pi / 10) - 1) < 0.01
    assert f"{embedding_defect(10.0):.3g}" == f"{-np.pi / 20:.3g}"


@settings(max_examples=25)
@given(st.floats(0.05, 50.0))
def test_defect_always_negative(H):
    assert embedding_defect(H) < 0


def test_profile_examples():
    p = profile(1.0, 513)  # t = 0 and t = pi are grid points
    assert p.x3.max() == pytest.approx(0.5, abs=1e-12) and p.x3.min() == pytest.approx(-0.5, abs=1e-12)
    t = np.linspace(0, 3, 40)
    assert np.abs(profile_x1(1.0, t) + profile_x1(1.0, -t)).max() <= 1e-12
    assert p.loop_gap == pytest.approx(-0.5 * embedding_defect(1.0), abs=1e-12)
    assert p.x1[-1] - p.x1[0] == pytest.approx(p.loop_gap, abs=1e-12)
    assert abs(profile(1.0, 1024).x1[-1] - profile(1.0, 512).x1[-1]) < 1e-10
    with pytest.raises(ValueError):
        profile(1.0, 8)
    with pytest.raises(ValueError):
        profile(0.0)


def test_profile_csv(tmp_path):
    p = profile(5.0, 64)
    p.to_csv(tmp_path / "p.csv")
    q = ProfileCurve.from_csv(tmp_path / "p.csv")
    assert q.H == 5.0 and np.array_equal(q.t, p.t) and np.array_equal(q.x1, p.x1)
    assert (tmp_path / "p.csv").read_text().splitlines()[1] == "t,x1,x3"


def test_parametrize_examples():
    assert parametrize(1.0, np.pi / 2, 0.7)[2] == pytest.approx(0, abs=1e-16)
    assert np.allclose(parametrize(1.0, 0.0, 0.0), [0, 0, 0.5])
    assert parametrize(2.0, 0.0, 1.0)[1] == pytest.approx(-np.exp(0.25) / 2)


@pytest.mark.parametrize("H", [0.5, 1.0, 3.0])
def test_parametrization_is_cmc(H):
    rng = np.random.default_rng(7)
    t = rng.uniform(-np.pi / 2, 3 * np.pi / 2, 50)
    v = rng.uniform(-1, 1, 50)
    Hfd = parametric_mean_curvature(lambda a, b: parametrize(H, a, b), t, v, h=1e-3)
    assert np.abs(np.abs(Hfd) - H).max() <= 1e-4 * max(1, H)


def test_gauss_of_cylinder_structure():
    cg = cylinder_gauss(1.0)
    assert 0 < cg.u_switch < cg.period < np.inf
    assert cg.period == pytest.approx(u_period(1.0), rel=1e-9)
    f = gauss_of_cylinder(1.0, 200)
    for chart in (False, True):
        sel = f.dual[:-1, 0] == chart  # the last sample wraps to u = 0
        vals = f.g[:-1, 0][sel]
        vals = vals.imag if chart else vals.real
        # 1/g decreases where g increases
        d = np.diff(vals)
        assert np.all(d < 0) if chart else np.all(d > 0)
    assert np.array_equal(f.g[:, 0], f.g[:, -1])
    assert np.array_equal(f.g_z, f.g_zbar)


def test_gauss_grid_too_small_for_the_stencil():
    with pytest.raises(ValueError):
        gauss_of_cylinder(1.0, 16, nv=2)
