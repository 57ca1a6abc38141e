import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solcmc import mesh as msh
from solcmc.cylinders import parametrize
from solcmc.sol3_core import Isometry, group_mul


@pytest.fixture(scope="module")
def ellipsoid():
    U, F = msh.geodesic_sphere(8)
    return U * np.array([1.0, 0.6, 0.8]) + np.array([0.3, -0.2, 0.4]), F


def _interior(F, n):
    return np.setdiff1d(np.arange(n), msh.boundary_vertices(F))


def test_geodesic_sphere_counts():
    for nu in (1, 4, 8):
        X, F = msh.geodesic_sphere(nu)
        assert len(X) == 10 * nu * nu + 2
        assert msh.euler_characteristic(F) == 2
        assert np.allclose(np.linalg.norm(X, axis=1), 1)
        assert msh.volume(X, F) > 0


@settings(max_examples=20, deadline=None)
@given(st.tuples(*[st.floats(-1.5, 1.5)] * 3))
def test_area_is_exactly_invariant(a):
    X, F = msh.geodesic_sphere(4)
    X = 0.5 * X
    A0 = msh.area(X, F)
    for iso in (Isometry.translation(a), Isometry.sigma(), Isometry.tau()):
        assert msh.area(iso.apply(X), F) == pytest.approx(A0, rel=1e-12)
    assert msh.volume(group_mul(np.asarray(a), X), F) == pytest.approx(msh.volume(X, F), rel=1e-12)


def test_gradients_match_finite_differences(ellipsoid):
    X, F = ellipsoid
    rng = np.random.default_rng(0)
    ga, gv = msh.area_gradient(X, F), msh.volume_gradient(X, F)
    h = 1e-6
    for v in rng.choice(len(X), 5, replace=False):
        for k in range(3):
            Xp, Xm = X.copy(), X.copy()
            Xp[v, k] += h
            Xm[v, k] -= h
            assert (msh.area(Xp, F) - msh.area(Xm, F)) / (2 * h) == pytest.approx(ga[v, k], abs=1e-7)
            assert (msh.volume(Xp, F) - msh.volume(Xm, F)) / (2 * h) == pytest.approx(gv[v, k], abs=1e-7)


@pytest.mark.parametrize(
    "patch",
    [
        lambda U, V: np.stack([U, V, 0.3 + 0 * U], -1),  # leaf x3 = const
        lambda U, V: np.stack([0.2 + 0 * U, U, V], -1),  # leaf x1 = const
        lambda U, V: np.stack([U, 0.5 + 0 * U, V], -1),  # leaf x2 = const
    ],
)
def test_leaves_are_minimal(patch):
    u = np.linspace(-1, 1, 21)
    X, F = msh.grid_mesh(patch(*np.meshgrid(u, u, indexing="ij")))
    H = msh.mean_curvature_field(X, F)[_interior(F, len(X))]
    assert np.abs(H).max() <= 1e-12


def test_refined_cylinder_mesh_has_H_one():
    t = np.linspace(0.3, 1.3, 60)
    v = np.linspace(-0.3, 0.3, 60)
    X, F = msh.grid_mesh(parametrize(1.0, *np.meshgrid(t, v, indexing="ij")))
    H = msh.mean_curvature_field(X, F)[_interior(F, len(X))]
    assert np.abs(np.abs(H) - 1).max() <= 0.01


def test_round_sphere_mean_curvature():
    X, F = msh.geodesic_sphere(16)
    r = 1e-2  # nearly Euclidean at this scale
    H = msh.mean_curvature_field(r * X, F)
    assert np.abs(H * r - 1).max() < 1e-2
    assert np.abs(msh.stationarity_residual(r * X, F, 1 / r)).max() < 1e-5


def test_degenerate_star_rejected():
    X = np.zeros((3, 3))
    with pytest.raises(ValueError):
        msh.mean_curvature_field(X, np.array([[0, 1, 2]]))


def test_obj_roundtrip(tmp_path, ellipsoid):
    X, F = ellipsoid
    N = msh.vertex_normals(X, F)
    msh.write_obj(tmp_path / "e.obj", X, F, N, {"H": 0.7})
    X2, F2, N2, head = msh.read_obj(tmp_path / "e.obj")
    assert np.array_equal(X, X2) and np.array_equal(F, F2) and np.array_equal(N, N2)
    assert head == {"H": 0.7}


def test_trimesh_edges(ellipsoid):
    X, F = ellipsoid
    m = msh.TriMesh(X, F)
    assert len(m.edges) == 3 * len(F) // 2
    assert m.adjacency.nnz == 2 * len(m.edges)
    assert m.mean_edge_length() > 0
