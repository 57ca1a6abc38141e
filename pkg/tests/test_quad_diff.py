import numpy as np
import pytest

from solcmc.cylinders import gauss_of_cylinder
from solcmc.gauss_map import GaussField, M_of, umbilicity
from solcmc.quad_diff import (
    LTable,
    Q_eval,
    build_L,
    fitted_normals,
    sphere_self_check,
    verify_L,
    vertex_gauss_field,
)
from solcmc.sol3_core import christoffel, group_inverse, group_mul


@pytest.fixture(scope="module")
def table(sphere_h1_coarse):
    return build_L(sphere_h1_coarse)


def quadric_umbilic_gap(m):
    """``H^2 - det B`` per vertex from a quadric height fit over the 2-ring."""
    N = fitted_normals(m)
    A = (m.adjacency + m.adjacency @ m.adjacency).tocsr()
    G0 = christoffel(np.zeros(3))
    out = np.empty(m.n_vertices)
    for v in range(m.n_vertices):
        nb = A.indices[A.indptr[v]:A.indptr[v + 1]]
        Y = group_mul(group_inverse(m.X[v]), m.X[nb[nb != v]])
        n = N[v]
        e1 = np.cross(n, [1.0, 0, 0] if abs(n[0]) < 0.9 else [0, 1.0, 0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        s, t = Y @ e1, Y @ e2
        c = np.linalg.lstsq(np.column_stack([s, t, 0.5 * s * s, s * t, 0.5 * t * t]), Y @ n, rcond=None)[0]
        II = np.array([[c[2], c[3]], [c[3], c[4]]])
        E = (e1, e2)
        II += [[np.einsum("kab,a,b,k->", G0, E[i], E[j], n) for j in range(2)] for i in range(2)]
        out[v] = (np.trace(II) / 2) ** 2 - np.linalg.det(II)
    return out


def hopf_gap(m):
    """``4 |P|^2 / lam^2`` from the vertex Gauss field."""
    f = vertex_gauss_field(m).normalized()
    return 4 * umbilicity(f.g, f.g_z, f.gbar_z, m.H) ** 2


def test_hopf_matches_shape_operator(sphere_h1_coarse, sphere_h1):
    errs = []
    for m in (sphere_h1_coarse, sphere_h1):
        ref = quadric_umbilic_gap(m)
        e = np.abs(hopf_gap(m) - ref) / ref.max()
        errs.append(e.max())
        assert np.median(e) <= 0.02
    assert errs[1] < errs[0] / 2


def test_L_bounds(table, sphere_h1_coarse):
    m = sphere_h1_coarse
    assert verify_L(table, m)["ratio_max"] < 1
    z = np.argmax(m.normals[:, 2])  # G = 0 here
    assert abs(table.q[z]) < 1e-8 and not table.dual[z]
    assert abs(table.L[z]) < 1 / m.H
    f = vertex_gauss_field(m)
    assert abs(table.L[z]) == pytest.approx(abs(M_of(0, m.H) * f.gbar_z[z] / f.g_z[z]))


def test_charts_agree_on_the_overlap(table):
    q = np.exp(1j * np.linspace(0, 2 * np.pi, 17))
    inside, outside = table(q * (1 - 1e-9)), table(q * (1 + 1e-9))
    assert np.abs(inside - outside).max() < 1e-2 * np.abs(inside).max()
    assert table(np.array([np.inf]))[0] == 0


def test_json_roundtrip(table, tmp_path):
    table.to_json(tmp_path / "L.json")
    back = LTable.from_json(tmp_path / "L.json")
    assert back.H == table.H
    assert np.array_equal(back.q, table.q) and np.array_equal(back.L, table.L)
    assert np.array_equal(back.dual, table.dual) and np.array_equal(back.faces, table.faces)
    q = np.array([0.2 + 0.1j, -0.7j, 3.0])
    assert np.array_equal(back(q), table(q))


def test_Q_structure(table):
    zero = LTable(table.H, table.q, np.zeros_like(table.L), table.dual, table.faces)
    u, v = np.meshgrid(np.linspace(0.1, 0.5, 6), np.linspace(0, 0.3, 4), indexing="ij")
    g = 0.3 * (u + 1j * v)  # holomorphic: conj(g)_z = 0
    f = GaussField(u, v, g, np.full(u.shape, 0.3), np.zeros(u.shape), table.H)
    assert np.abs(Q_eval(f, zero)["Q"]).max() == 0
    with pytest.raises(ValueError):
        Q_eval(GaussField(u, v, g, np.full(u.shape, 0.3), np.zeros(u.shape), 2.0), table)


def test_sphere_vs_cylinder(table, sphere_h1_coarse):
    own = sphere_self_check(sphere_h1_coarse, table)
    cyl = Q_eval(gauss_of_cylinder(1.0), table)
    assert cyl["vanish_max"] >= 100 * own["vanish_max"]
    assert cyl["cr_ratio_max"] is not None and np.isfinite(cyl["cr_ratio_max"])
    assert own["cr_ratio_max"] is None


def test_corrupted_table_breaks_the_equation(table, sphere_h1_coarse):
    honest = verify_L(table, sphere_h1_coarse)
    bad = verify_L(table.scaled(2.0), sphere_h1_coarse)
    assert bad["eqL_residual"] > 3 * honest["eqL_residual"]
    assert bad["ratio_max"] == pytest.approx(2 * honest["ratio_max"])


def test_decay_at_infinity(table, sphere_h1_coarse):
    assert verify_L(table, sphere_h1_coarse)["decay_ratio"] <= 3


def test_build_L_refuses_orientation_reversing_maps(sphere_small, monkeypatch):
    from solcmc import quad_diff

    f = vertex_gauss_field(sphere_small)
    swapped = GaussField(f.u, f.v, f.g, f.g_zbar, f.g_z, f.H, f.dual)
    monkeypatch.setattr(quad_diff, "vertex_gauss_field", lambda *_a, **_k: swapped)
    with pytest.raises(ValueError):
        build_L(sphere_small)
