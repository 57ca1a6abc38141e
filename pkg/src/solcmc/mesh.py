"""Triangle meshes in Sol3: discrete area, enclosed volume and their gradients.

Faces of closed meshes are oriented so that the Euclidean right-hand normal in model
coordinates points out of the enclosed region.

Triangle areas use the induced metric with the triangle split once into four
sub-triangles, each evaluated at its own centroid.  Because left translations, sigma
and tau act affinely on model coordinates, this discrete area is exactly invariant
under them.  The Haar density ``dx1 dx2 dx3`` is the Riemannian volume form, so the
enclosed volume is the Euclidean one.
"""

from __future__ import annotations

from functools import cached_property
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy import sparse

# barycentric weights of the four sub-triangle centroids
_SUB_W = np.array(
    [
        [4.0, 1.0, 1.0],
        [1.0, 4.0, 1.0],
        [1.0, 1.0, 4.0],
        [2.0, 2.0, 2.0],
    ]
) / 6.0


def icosphere(level: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unit icosphere with ``10 * 4**level + 2`` vertices, outward-oriented faces."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    V = np.array(verts, dtype=float)
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    F = np.array(faces, dtype=np.int64)
    for _ in range(level):
        V, F = _subdivide(V, F)
        V /= np.linalg.norm(V, axis=1, keepdims=True)
    return V, F


def geodesic_sphere(nu: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unit geodesic sphere: each icosahedron face carries a ``nu``-frequency triangular
    lattice which is then projected radially.  ``10 * nu**2 + 2`` vertices, all of valence
    six except the twelve icosahedron corners.
    """
    if nu < 1:
        raise ValueError("nu must be >= 1")
    V0, F0 = icosphere(0)
    key_to_id: dict = {}
    pts = []

    def vid(p: np.ndarray) -> int:
        key = tuple(np.round(p, 10))
        i = key_to_id.get(key)
        if i is None:
            i = key_to_id[key] = len(pts)
            pts.append(p)
        return i

    faces = []
    for a, b, c in F0:
        A, B, C = V0[a], V0[b], V0[c]
        idx = {}
        for i in range(nu + 1):
            for j in range(nu + 1 - i):
                idx[i, j] = vid(A + (B - A) * (i / nu) + (C - A) * (j / nu))
        for i in range(nu):
            for j in range(nu - i):
                faces.append((idx[i, j], idx[i + 1, j], idx[i, j + 1]))
                if i + j < nu - 1:
                    faces.append((idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]))
    X = np.array(pts)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X, np.array(faces, dtype=np.int64)


def _subdivide(V: np.ndarray, F: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    edges = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (V[uniq[:, 0]] + V[uniq[:, 1]])
    m = len(F)
    e01 = inv[:m] + len(V)
    e12 = inv[m : 2 * m] + len(V)
    e20 = inv[2 * m :] + len(V)
    a, b, c = F[:, 0], F[:, 1], F[:, 2]
    newF = np.concatenate(
        [
            np.stack([a, e01, e20], 1),
            np.stack([b, e12, e01], 1),
            np.stack([c, e20, e12], 1),
            np.stack([e01, e12, e20], 1),
        ]
    )
    return np.vstack([V, mids]), newF


def edges_of(F: np.ndarray) -> np.ndarray:
    e = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1)
    return np.unique(e, axis=0)


def adjacency(F: np.ndarray, n: int) -> sparse.csr_matrix:
    e = edges_of(F)
    A = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    return (A + A.T).tocsr()


def euler_characteristic(F: np.ndarray, n_vertices: Optional[int] = None) -> int:
    n = int(F.max()) + 1 if n_vertices is None else n_vertices
    return n - len(edges_of(F)) + len(F)


# ---------------------------------------------------------------------------
# discrete functionals
# ---------------------------------------------------------------------------


def _face_cross(X: np.ndarray, F: np.ndarray):
    a, b, c = X[F[:, 0]], X[F[:, 1]], X[F[:, 2]]
    return a, b, c, np.cross(b - a, c - a)


def face_areas(X: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Sol3 area of every (flat, in model coordinates) triangle."""
    a, b, c, cr = _face_cross(X, F)
    z = np.stack([a[:, 2], b[:, 2], c[:, 2]], axis=1) @ _SUB_W.T  # (m, 4)
    w1 = np.exp(-z) * cr[:, 0:1]
    w2 = np.exp(z) * cr[:, 1:2]
    w3 = np.broadcast_to(cr[:, 2:3], z.shape)
    return np.sqrt(w1 ** 2 + w2 ** 2 + w3 ** 2).sum(axis=1) / 8.0


def area(X: np.ndarray, F: np.ndarray) -> float:
    return float(face_areas(X, F).sum())


def area_gradient(X: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Coordinate gradient (a covector per vertex) of the total discrete area."""
    a, b, c, cr = _face_cross(X, F)
    z = np.stack([a[:, 2], b[:, 2], c[:, 2]], axis=1) @ _SUB_W.T
    em, ep = np.exp(-z), np.exp(z)
    w1 = em * cr[:, 0:1]
    w2 = ep * cr[:, 1:2]
    w3 = np.broadcast_to(cr[:, 2:3], z.shape)
    nrm = np.sqrt(w1 ** 2 + w2 ** 2 + w3 ** 2)
    nrm = np.where(nrm > 0, nrm, 1.0)
    # d|w| = s . dcr + q dz
    s = np.stack(
        [
            (em * w1 / nrm).sum(1),
            (ep * w2 / nrm).sum(1),
            (w3 / nrm).sum(1),
        ],
        axis=1,
    ) / 8.0
    q = (-w1 ** 2 + w2 ** 2) / nrm / 8.0  # (m, 4)
    dz = q @ _SUB_W  # (m, 3): derivative w.r.t. x3 of each corner
    ga = np.cross(b - c, s)
    gb = np.cross(c - a, s)
    gc = np.cross(a - b, s)
    ga[:, 2] += dz[:, 0]
    gb[:, 2] += dz[:, 1]
    gc[:, 2] += dz[:, 2]
    G = np.zeros_like(X)
    np.add.at(G, F[:, 0], ga)
    np.add.at(G, F[:, 1], gb)
    np.add.at(G, F[:, 2], gc)
    return G


def volume(X: np.ndarray, F: np.ndarray) -> float:
    """Enclosed volume (Haar measure) of a closed outward-oriented mesh."""
    a, b, c = X[F[:, 0]], X[F[:, 1]], X[F[:, 2]]
    return float(np.einsum("ij,ij->", a, np.cross(b, c)) / 6.0)


def volume_gradient(X: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Coordinate gradient of the enclosed volume.

    At interior vertices of open meshes this is one third of the summed Euclidean
    face area vectors, so it is also meaningful there.
    """
    a, b, c = X[F[:, 0]], X[F[:, 1]], X[F[:, 2]]
    G = np.zeros_like(X)
    np.add.at(G, F[:, 0], np.cross(b, c))
    np.add.at(G, F[:, 1], np.cross(c, a))
    np.add.at(G, F[:, 2], np.cross(a, b))
    return G / 6.0


def _raise_norm2(X: np.ndarray, covec: np.ndarray) -> np.ndarray:
    z = X[:, 2]
    return np.exp(-2 * z) * covec[:, 0] ** 2 + np.exp(2 * z) * covec[:, 1] ** 2 + covec[:, 2] ** 2


def _raise_dot(X: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = X[:, 2]
    return np.exp(-2 * z) * a[:, 0] * b[:, 0] + np.exp(2 * z) * a[:, 1] * b[:, 1] + a[:, 2] * b[:, 2]


def vertex_areas(X: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Metric norm of the volume gradient: the area a vertex sweeps per unit normal motion.

    This is the barycentric (one third of each incident face) vertex area.
    """
    return np.sqrt(_raise_norm2(X, volume_gradient(X, F)))


def mixed_vertex_areas(X: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Mixed Voronoi vertex areas in the induced metric.

    Each face is split among its corners by the circumcentric (Voronoi) rule, with the
    usual half/quarter split for obtuse faces.  Angles are measured with the metric at
    the face centroid; the split fractions are then applied to the Sol3 face area, so
    the areas sum to the total area.
    """
    ea, eb, ec = _frame_edges(X, F)
    la2, lb2, lc2 = (np.einsum("ij,ij->i", e, e) for e in (ea, eb, ec))
    twice = np.linalg.norm(np.cross(ec, eb), axis=1)
    twice = np.where(twice > 0, twice, np.inf)

    def cot(u, v):
        return np.einsum("ij,ij->i", u, v) / twice

    cA, cB, cC = cot(-ec, eb), cot(-ea, ec), cot(-eb, ea)
    frac = np.stack(
        [lc2 * cC + lb2 * cB, la2 * cA + lc2 * cC, lb2 * cB + la2 * cA], axis=1
    ) / (4.0 * twice[:, None])
    obtuse = np.stack([cA < 0, cB < 0, cC < 0], axis=1)
    bad = obtuse.any(axis=1)
    frac[bad] = np.where(obtuse[bad], 0.5, 0.25)
    Af = face_areas(X, F)
    Av = np.zeros(len(X))
    for k in range(3):
        np.add.at(Av, F[:, k], frac[:, k] * Af)
    return Av


def vertex_normals(X: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Unit normals in frame components, pointing into the enclosed region."""
    gv = volume_gradient(X, F)
    z = X[:, 2]
    nf = np.stack([np.exp(-z) * gv[:, 0], np.exp(z) * gv[:, 1], gv[:, 2]], axis=1)
    nf /= np.linalg.norm(nf, axis=1, keepdims=True)
    return -nf


def _frame_edges(X: np.ndarray, F: np.ndarray):
    """Frame components (metric at the face centroid) of the edges opposite each corner."""
    a, b, c = X[F[:, 0]], X[F[:, 1]], X[F[:, 2]]
    z = (a[:, 2] + b[:, 2] + c[:, 2]) / 3.0
    D = np.stack([np.exp(z), np.exp(-z), np.ones_like(z)], axis=1)
    return (c - b) * D, (a - c) * D, (b - a) * D


def cotan_weights(X: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Cotangents of the three corner angles of every face, in the induced metric."""
    ea, eb, ec = _frame_edges(X, F)
    twice = np.linalg.norm(np.cross(ec, eb), axis=1)
    cot = lambda u, v: np.einsum("ij,ij->i", u, v) / twice
    return np.stack([cot(-ec, eb), cot(-ea, ec), cot(-eb, ea)], axis=1)


def cotan_stiffness(X: np.ndarray, F: np.ndarray) -> sparse.csr_matrix:
    """Positive semi-definite stiffness matrix ``K`` of the induced Dirichlet energy."""
    n = len(X)
    cot = cotan_weights(X, F)
    i = np.concatenate([F[:, 1], F[:, 2], F[:, 0]])
    j = np.concatenate([F[:, 2], F[:, 0], F[:, 1]])
    w = 0.5 * np.concatenate([cot[:, 0], cot[:, 1], cot[:, 2]])
    W = sparse.coo_matrix((w, (i, j)), shape=(n, n)).tocsr()
    W = W + W.T
    return (sparse.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsr()


def min_corner_angle(X: np.ndarray, F: np.ndarray) -> float:
    """Smallest corner angle (radians, induced metric) over all faces."""
    cot = cotan_weights(X, F)
    return float(np.arctan2(1.0, cot).min())


_GL4_X, _GL4_W = np.polynomial.legendre.leggauss(4)


def segment_lengths(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Sol3 length of the straight coordinate segments ``P -> Q``."""
    d = Q - P
    tot = np.zeros(len(P))
    for x, w in zip(_GL4_X, _GL4_W):
        z = P[:, 2] + 0.5 * (x + 1) * d[:, 2]
        tot += 0.5 * w * np.sqrt(np.exp(2 * z) * d[:, 0] ** 2 + np.exp(-2 * z) * d[:, 1] ** 2 + d[:, 2] ** 2)
    return tot


def mean_curvature_field(X: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Per-vertex mean curvature from the first variation of the discrete area.

    ``H_v = <dA_v, n_v> / (2 A_v)``: the area gradient paired with the unit outward
    normal ``n_v`` (direction of the volume gradient), divided by twice the mixed
    Voronoi vertex area.  Positive for the normal pointing into the enclosed region.
    Meaningful at interior vertices of open meshes as well.
    """
    ga = area_gradient(X, F)
    gv = volume_gradient(X, F)
    nv = np.sqrt(_raise_norm2(X, gv))
    Av = mixed_vertex_areas(X, F)
    if np.any(nv <= 0) or np.any(Av <= 0):
        raise ValueError("degenerate vertex star (zero vertex area)")
    return _raise_dot(X, ga, gv) / (2.0 * nv * Av)


def stationarity_residual(X: np.ndarray, F: np.ndarray, H: float) -> np.ndarray:
    """``2 A_v (H_v - H)``: the normal force of the functional area - 2H volume."""
    ga = area_gradient(X, F)
    gv = volume_gradient(X, F)
    nv = np.sqrt(_raise_norm2(X, gv))
    return _raise_dot(X, ga - 2.0 * H * gv, gv) / nv


def boundary_vertices(F: np.ndarray) -> np.ndarray:
    e = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    es = np.sort(e, axis=1)
    uniq, counts = np.unique(es, axis=0, return_counts=True)
    return np.unique(uniq[counts == 1].ravel())


def grid_mesh(P: np.ndarray, periodic_u: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Triangulate an ``(nu, nv, 3)`` grid of points."""
    nu, nv = P.shape[:2]
    idx = np.arange(nu * nv).reshape(nu, nv)
    iu = np.arange(nu if periodic_u else nu - 1)
    i0 = idx[iu][:, :-1]
    i1 = idx[(iu + 1) % nu][:, :-1]
    j0 = idx[iu][:, 1:]
    j1 = idx[(iu + 1) % nu][:, 1:]
    F = np.concatenate(
        [
            np.stack([i0.ravel(), i1.ravel(), j1.ravel()], 1),
            np.stack([i0.ravel(), j1.ravel(), j0.ravel()], 1),
        ]
    )
    return P.reshape(-1, 3).copy(), F


# ---------------------------------------------------------------------------
# OBJ
# ---------------------------------------------------------------------------


def write_obj(
    path: Union[str, Path],
    X: np.ndarray,
    F: np.ndarray,
    normals: Optional[np.ndarray] = None,
    header: Optional[dict] = None,
) -> None:
    """OBJ with model-coordinate positions; frame-component normals go in ``#vnf`` lines."""
    import json

    lines = []
    if header:
        lines.append("# solcmc " + json.dumps(header, sort_keys=True))
    for p in X:
        lines.append("v %.17g %.17g %.17g" % tuple(p))
    if normals is not None:
        for n in normals:
            lines.append("#vnf %.17g %.17g %.17g" % tuple(n))
    for f in F:
        lines.append("f %d %d %d" % tuple(f + 1))
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path: Union[str, Path]):
    """Return ``(X, F, normals_or_None, header_dict)``."""
    import json

    X, F, N = [], [], []
    header: dict = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("v "):
            X.append([float(x) for x in line.split()[1:4]])
        elif line.startswith("f "):
            F.append([int(tok.split("/")[0]) - 1 for tok in line.split()[1:4]])
        elif line.startswith("#vnf "):
            N.append([float(x) for x in line.split()[1:4]])
        elif line.startswith("# solcmc "):
            header = json.loads(line[len("# solcmc ") :])
    normals = np.array(N) if N else None
    return np.array(X, dtype=float), np.array(F, dtype=np.int64), normals, header


class TriMesh:
    """Thin container with cached connectivity."""

    def __init__(self, X: np.ndarray, F: np.ndarray):
        self.X = np.asarray(X, dtype=float)
        self.F = np.asarray(F, dtype=np.int64)

    @property
    def n_vertices(self) -> int:
        return len(self.X)

    @cached_property
    def edges(self) -> np.ndarray:
        return edges_of(self.F)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        return adjacency(self.F, len(self.X))

    def mean_edge_length(self) -> float:
        from .sol3_core import metric_norm

        e = self.edges
        return float(segment_lengths(self.X[e[:, 0]], self.X[e[:, 1]]).mean())
