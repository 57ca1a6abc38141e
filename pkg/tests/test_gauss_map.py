import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from solcmc.cylinders import cylinder_gauss, gauss_of_cylinder, parametrize
from solcmc.gauss_map import (
    INF,
    DegenerateInputError,
    ExtendedComplex,
    GaussField,
    IntegrabilityError,
    M_of,
    SingularCoefficientError,
    coefficients,
    conformal_factor,
    dual_field,
    dual_value,
    frame_velocity,
    hopf_P,
    integrate_representation,
    max_residual,
    mean_curvature_from_gauss,
    minimal_Qstar,
    orientation_reversed,
    pde_residual,
    translation_between,
    umbilicity,
)
from solcmc.sol3_core import group_mul

finite = st.floats(-3, 3, allow_nan=False)
cplx = st.builds(complex, finite, finite)
Hs = st.floats(0.2, 5.0)


@pytest.fixture(scope="module")
def cyl():
    return gauss_of_cylinder(1.0, 256)


def test_coefficient_examples():
    c = coefficients(0, 2.0)
    assert (c.R, c.M, c.A, c.B) == (2.0, 0.5, 0, 0)
    c = coefficients(1, 1.0)
    assert np.isclose(c.R, 4) and np.isclose(c.A, 1.5) and np.isclose(c.B, -1)
    assert np.isclose(coefficients(1j, 0.7).R, 4 * 0.7)
    c = coefficients(INF, 1.0)
    assert (c.A, c.B, c.M) == (0, 0, 0)
    with pytest.raises(SingularCoefficientError):
        coefficients(0, 0.0)


def test_dual_value():
    assert dual_value(1j) == 1
    assert dual_value(INF) == 0
    assert np.isinf(dual_value(0).real)
    assert ExtendedComplex.infinity().dual().value == 0


@given(cplx, Hs)
def test_M_dual_identity(q, H):
    assume(abs(q) > 1e-3)
    assert abs(abs(q) ** 4 * M_of(q, H) - M_of(1j / q, H)) <= 1e-12 * max(1, abs(M_of(1j / q, H)))


@given(cplx, cplx, Hs)
def test_frame_velocity_relations(g, gz, H):
    assume(abs(g) > 1e-2 and abs(gz) > 1e-2)
    fv = frame_velocity(g, gz, H)
    s = abs(fv.A1) ** 2 + abs(fv.A2) ** 2 + abs(fv.A3) ** 2
    assert abs(s - fv.lam / 2) <= 1e-12 * max(1, fv.lam)
    assert abs(fv.A1 ** 2 + fv.A2 ** 2 + fv.A3 ** 2) <= 1e-12 * max(1, fv.lam)
    assert np.isclose(fv.lam, conformal_factor(g, gz, H), rtol=1e-12)
    # substituting A3 = eta/2 gives back H
    mc = mean_curvature_from_gauss(g, gz, fv.A3)
    assert abs(mc.value - H) <= 1e-12 * max(1, H) * max(1, abs(g) ** 2)
    assert abs(mc.imag_residual) <= 1e-12 * max(1, abs(g) ** 2)


def test_frame_velocity_example():
    fv = frame_velocity(1.0, 2.0, 1.0)  # eta = 4 g_z / R(1) = 2
    assert np.allclose([fv.A1, fv.A2, fv.A3, fv.lam], [0, 1j, 1, 4])
    with pytest.raises(DegenerateInputError):
        frame_velocity(0.0, 1.0, 1.0)
    with pytest.raises(DegenerateInputError):
        frame_velocity(0.5, 0.0, 1.0)


def test_hopf_examples():
    assert np.isclose(hopf_P(0, 1, 0, 1.0), -2)
    assert hopf_P(0.3 + 0.1j, 0, 0.4, 1.0) == 0


@given(cplx, cplx, cplx, Hs)
def test_umbilicity_matches_hopf(g, gz, gbz, H):
    assume(abs(gz) > 1e-2)
    lam = conformal_factor(g, gz, H)
    assert np.isclose(umbilicity(g, gz, gbz, H), abs(hopf_P(g, gz, gbz, H)) / lam, rtol=1e-9, atol=1e-12)


def test_minimal_Qstar():
    assert minimal_Qstar(0.5 + 0.3j, 1.0, 0.0) == 0
    assert np.isclose(minimal_Qstar(1 + 1j, 1, 1), -0.25j)
    with pytest.raises(SingularCoefficientError):
        minimal_Qstar(0.7, 1, 1)


def test_constant_field_has_zero_residual():
    u, v = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 1, 9), indexing="ij")
    f = GaussField(u, v, np.full(u.shape, 0.3 + 0.2j), np.zeros(u.shape), np.zeros(u.shape), 1.0)
    assert max_residual(pde_residual(f)) == 0
    assert not f.admissible().any()


def test_cylinder_residual_second_order():
    r = [max_residual(pde_residual(gauss_of_cylinder(1.0, n))) for n in (128, 256, 512)]
    assert r[0] / r[1] >= 3.5 and r[1] / r[2] >= 3.5


def test_duality_preserves_solutions(cyl):
    r = max_residual(pde_residual(cyl))
    assert max_residual(pde_residual(dual_field(cyl))) <= 2 * r
    assert max_residual(pde_residual(cyl.normalized())) <= 2 * r
    assert max_residual(pde_residual(orientation_reversed(cyl))) <= 2 * r


def test_mean_curvature_from_cylinder_samples(cyl):
    cg = cylinder_gauss(1.0)
    t = cg.t_of_u(cyl.u)
    # x3 = cos t / 2 does not depend on v, so (x3)_z = x3_u / 2
    dudt = -0.5 * np.exp(-(1 - np.cos(t)) / 2)
    A3 = 0.5 * (-np.sin(t) / 2) / dudt
    p = ~cyl.dual & (np.abs(np.sin(t)) > 1e-3)
    mc = mean_curvature_from_gauss(cyl.g[p], cyl.g_z[p], A3[p])
    assert np.abs(mc.value - 1).max() <= 1e-10
    assert np.abs(mc.imag_residual).max() <= 1e-12


def test_integration_seed_is_a_left_translation(cyl):
    a = integrate_representation(cyl).points
    seed = np.array([0.4, -1.1, 0.25])
    b = integrate_representation(cyl, seed).points
    T = translation_between(a[0, 0], b[0, 0])
    assert np.abs(group_mul(T, a) - b).max() <= 1e-10


def test_roundtrip_against_parametrization():
    f = gauss_of_cylinder(1.0, 512, nv=8)
    P = integrate_representation(f).points
    X = parametrize(1.0, cylinder_gauss(1.0).t_of_u(f.u), f.v)
    Y = group_mul(translation_between(X[0, 0], P[0, 0]), X)
    assert np.abs(Y - P).max() <= 1e-5


def test_perturbed_field_fails_integrability(cyl):
    rng = np.random.default_rng(0)
    noisy = GaussField(cyl.u, cyl.v, cyl.g + 1e-2 * rng.standard_normal(cyl.g.shape),
                       cyl.g_z, cyl.g_zbar, cyl.H, cyl.dual)
    with pytest.raises(IntegrabilityError) as err:
        integrate_representation(noisy)
    assert err.value.residual > 1e-2


def test_integration_rejects_bad_input(cyl):
    with pytest.raises(DegenerateInputError):
        integrate_representation(GaussField(cyl.u, cyl.v, cyl.g, cyl.g_z, cyl.g_zbar, 0.0, cyl.dual))
    flat = GaussField(cyl.u[:, 0], cyl.v[:, 0], cyl.g[:, 0], cyl.g_z[:, 0], cyl.g_zbar[:, 0], 1.0)
    with pytest.raises(ValueError):
        integrate_representation(flat)


def test_csv_roundtrip(cyl, tmp_path):
    p = tmp_path / "g.csv"
    cyl.to_csv(p)
    back = GaussField.from_csv(p)
    assert back.H == cyl.H and back.g.shape == cyl.g.shape
    for name in ("u", "v", "g", "g_z", "g_zbar", "dual"):
        assert np.array_equal(getattr(back, name), getattr(cyl, name))
    assert p.read_text() == (cyl.to_csv(tmp_path / "h.csv") or (tmp_path / "h.csv").read_text())
