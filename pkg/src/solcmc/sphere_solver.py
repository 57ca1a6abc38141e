"""Discrete CMC spheres in Sol3 and their verification.

A sphere is a closed triangle mesh whose vertices move along fixed rays
``X_v = o + r_v u_v`` of a geodesic sphere.  The solver runs Newton's method on
``H_v(r) = H``, where ``H_v`` is the discrete mean curvature of :mod:`solcmc.mesh`.
Left translations are an exact symmetry of the discrete area and volume but not of
the ray parametrization, so the three translation directions are handled by a
bordered system.  Small spheres are almost round, so a solve starts from a round
sphere at large ``H`` and follows ``H`` down to the target.

The unit normal ``N`` points into the enclosed region (``H > 0``) and is stored in
frame components; the Gauss map is ``g = (N1 + i N2)/(1 + N3)``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.optimize import minimize
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.sparse.linalg import eigsh, splu
from scipy.spatial import cKDTree

from . import mesh as msh
from .sol3_core import (
    CONNECTION,
    group_inverse,
    group_mul,
    isotropy_group,
    killing_fields,
)

log = logging.getLogger(__name__)

STABILITY_THRESHOLD = 1 / math.sqrt(3)


class NonConvergenceError(RuntimeError):
    pass


class DegenerateMeshError(RuntimeError):
    pass


class ConjectureRegimeWarning(UserWarning):
    pass


def b2_bound(H: float) -> float:
    return 4 * H * H + 4 * abs(H) + 2


def diameter_bound(H: float) -> Optional[float]:
    """``8 pi / sqrt(3 (3H^2 - 1))`` for ``H > 1/sqrt(3)``; ``None`` otherwise."""
    if H <= STABILITY_THRESHOLD:
        return None
    return 8 * math.pi / math.sqrt(3 * (3 * H * H - 1))


@dataclass
class SolverConfig:
    resolution: int = 10242  # target vertex count
    tol: float = 1e-3  # max |H_v - H| at convergence
    max_iters: int = 30  # Newton iterations per continuation stage
    zero_cluster_C: float = 1.0  # zero-cluster half width is C * mean edge length
    fd_step: float = 1e-6
    start_H: float = 2.0  # first continuation stage when coming from a round sphere
    step_ratio: float = 0.8  # ratio between consecutive continuation values of H
    min_angle_deg: float = 5.0  # degenerate-triangle gate
    chart: str = "split"  # ray map, see RadialState
    n_eigs: int = 8

    @property
    def frequency(self) -> int:
        return max(1, int(round(math.sqrt(max(self.resolution - 2, 10) / 10))))

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "SolverConfig":
        raw = json.loads(Path(path).read_text())
        alias = {"maxIters": "max_iters", "zeroClusterC": "zero_cluster_C"}
        return cls(**{alias.get(k, k): v for k, v in raw.items()})


def split_exponential(y: np.ndarray) -> np.ndarray:
    """``y -> (0, 0, y3) . (y1, y2, 0) = (e^{-y3} y1, e^{y3} y2, y3)``.

    Its differential is the identity on the horizontal directions measured in the
    frame, so a round triangulation in ``y`` stays well shaped near horizontal
    tangent planes.  It commutes with sigma and tau.
    """
    y = np.asarray(y, dtype=float)
    return np.stack([np.exp(-y[..., 2]) * y[..., 0], np.exp(y[..., 2]) * y[..., 1], y[..., 2]], axis=-1)


@dataclass
class RadialState:
    """Ray parametrization ``X = shift . psi(origin + r u)`` of a sphere mesh.

    ``psi`` is :func:`split_exponential` when ``chart == "split"`` and the identity
    when ``chart == "linear"``.
    """

    U: np.ndarray
    origin: np.ndarray
    r: np.ndarray
    shift: np.ndarray = field(default_factory=lambda: np.zeros(3))
    chart: str = "split"

    def raw_points(self, r: Optional[np.ndarray] = None) -> np.ndarray:
        r = self.r if r is None else r
        y = self.origin + r[:, None] * self.U
        return split_exponential(y) if self.chart == "split" else y

    def ray_tangents(self, r: Optional[np.ndarray] = None) -> np.ndarray:
        """``dX_v / dr_v``."""
        r = self.r if r is None else r
        if self.chart != "split":
            return self.U.copy()
        y = self.origin + r[:, None] * self.U
        e = np.exp(-y[:, 2])
        U = self.U
        return np.stack([e * (U[:, 0] - y[:, 0] * U[:, 2]), (U[:, 1] + y[:, 1] * U[:, 2]) / e, U[:, 2]], axis=1)

    def points(self) -> np.ndarray:
        return group_mul(self.shift, self.raw_points())


class CmcSphereMesh:
    """A closed triangulated surface with per-vertex normal, mean curvature and Gauss map."""

    def __init__(self, X: np.ndarray, F: np.ndarray, H: float, state: Optional[RadialState] = None,
                 meta: Optional[dict] = None):
        self.X = np.asarray(X, dtype=float)
        self.F = np.asarray(F, dtype=np.int64)
        self.H = float(H)
        self.state = state
        self.meta = dict(meta or {})

    # basic geometry ---------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.X)

    @cached_property
    def euler_characteristic(self) -> int:
        return msh.euler_characteristic(self.F, len(self.X))

    @cached_property
    def normals(self) -> np.ndarray:
        return msh.vertex_normals(self.X, self.F)

    @cached_property
    def mean_curvature(self) -> np.ndarray:
        return msh.mean_curvature_field(self.X, self.F)

    @cached_property
    def areas(self) -> np.ndarray:
        return msh.mixed_vertex_areas(self.X, self.F)

    @cached_property
    def area(self) -> float:
        return msh.area(self.X, self.F)

    @cached_property
    def volume(self) -> float:
        return msh.volume(self.X, self.F)

    @cached_property
    def edges(self) -> np.ndarray:
        return msh.edges_of(self.F)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return msh.segment_lengths(self.X[e[:, 0]], self.X[e[:, 1]])

    @property
    def mean_edge_length(self) -> float:
        return float(self.edge_lengths.mean())

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        return msh.adjacency(self.F, len(self.X))

    @cached_property
    def gauss(self) -> np.ndarray:
        """Per-vertex Gauss map (``inf`` where ``N = -E3``)."""
        N = self.normals
        den = 1 + N[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            g = (N[:, 0] + 1j * N[:, 1]) / den
        return np.where(den == 0, complex(np.inf, 0), g)

    def translated(self, a) -> "CmcSphereMesh":
        """Left translation by ``a`` (an exact symmetry of every discrete quantity)."""
        a = np.asarray(a, dtype=float)
        st = None
        if self.state is not None:
            st = RadialState(self.state.U, self.state.origin, self.state.r, group_mul(a, self.state.shift),
                             self.state.chart)
        return CmcSphereMesh(group_mul(a, self.X), self.F, self.H, st, self.meta)

    def scaled(self, s: float) -> "CmcSphereMesh":
        """Euclidean scaling of the coordinates about the origin (not an isometry)."""
        return CmcSphereMesh(self.X * s, self.F, self.H, None, {**self.meta, "scaled": s})

    # I/O ------------------------------------------------------------------

    def to_obj(self, path: Union[str, Path]) -> None:
        header = {"H": self.H, **{k: v for k, v in self.meta.items() if _jsonable(v)}}
        msh.write_obj(path, self.X, self.F, self.normals, header)

    @classmethod
    def from_obj(cls, path: Union[str, Path], H: Optional[float] = None) -> "CmcSphereMesh":
        X, F, _, header = msh.read_obj(path)
        if H is None:
            if "H" not in header:
                raise ValueError("mesh file carries no H; pass it explicitly")
            H = header["H"]
        meta = {k: v for k, v in header.items() if k != "H"}
        return cls(X, F, H, None, meta)


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def _distance2_coloring(F: np.ndarray, n: int) -> np.ndarray:
    """Greedy colouring in which vertices sharing a neighbour get different colours."""
    A1 = (msh.adjacency(F, n) + sparse.identity(n, format="csr")).tocsr()
    A2 = (A1 @ A1).tocsr()
    col = -np.ones(n, dtype=np.int64)
    for v in range(n):
        nb = col[A2.indices[A2.indptr[v]:A2.indptr[v + 1]]]
        used = set(nb[nb >= 0].tolist())
        c = 0
        while c in used:
            c += 1
        col[v] = c
    return col


class _RadialProblem:
    def __init__(self, state: RadialState, F: np.ndarray, fd_step: float):
        self.state = state
        self.F = F
        self.n = len(state.U)
        self.eps = fd_step
        self.color = _distance2_coloring(F, self.n)
        A1 = (msh.adjacency(F, self.n) + sparse.identity(self.n, format="csr")).tocoo()
        self.rows, self.cols = A1.row, A1.col

    def H_of(self, r: np.ndarray) -> np.ndarray:
        return msh.mean_curvature_field(self.state.raw_points(r), self.F)

    def jacobian(self, r: np.ndarray) -> sparse.csr_matrix:
        vals = np.empty(len(self.rows))
        for c in range(self.color.max() + 1):
            d = np.where(self.color == c, self.eps * r, 0.0)
            D = (self.H_of(r + d) - self.H_of(r - d)) / 2.0
            m = self.color[self.cols] == c
            vals[m] = D[self.rows[m]] / d[self.cols[m]]
        return sparse.csr_matrix((vals, (self.rows, self.cols)), shape=(self.n, self.n))

    def newton(self, r: np.ndarray, H: float, tol: float, max_iters: int, min_angle: float):
        res = self.H_of(r) - H
        err = float(np.abs(res).max())
        weak = 0
        for it in range(max_iters):
            if err <= tol:
                return r, err, it
            J = self.jacobian(r)
            T = self.state.ray_tangents(r)
            border = sparse.csr_matrix(T)
            w = msh.mixed_vertex_areas(self.state.raw_points(r), self.F)
            C = sparse.csr_matrix((w[:, None] * T).T)
            K = sparse.bmat([[J, border], [C, None]], format="csc")
            step = splu(K).solve(np.concatenate([-res, np.zeros(3)]))[: self.n]
            s = 1.0
            while True:
                rn = r + s * step
                if rn.min() > 0:
                    resn = self.H_of(rn) - H
                    errn = float(np.abs(resn).max())
                    if errn < err:
                        break
                s *= 0.5
                if s < 1e-4:
                    return r, err, it
            weak = weak + 1 if errn > 0.9 * err else 0
            r, res, err = rn, resn, errn
            if weak >= 3 and err > tol:
                # stagnation at the discretization floor of the bordered system
                return r, err, it + 1
            ang = msh.min_corner_angle(self.state.raw_points(r), self.F)
            if math.degrees(ang) < min_angle:
                raise DegenerateMeshError(f"min corner angle {math.degrees(ang):.2f} deg at H={H}")
            log.debug("H=%.4f newton %d: max|H_v-H| = %.3e (step %.3g)", H, it, err, s)
        return r, err, max_iters


def _schedule(H_from: float, H_to: float, ratio: float) -> List[float]:
    out = []
    h = H_from
    lo, hi = min(ratio, 1 / ratio), max(ratio, 1 / ratio)
    while True:
        q = H_to / h
        if lo <= q <= hi:
            out.append(H_to)
            return out
        h = h * (lo if q < 1 else hi)
        out.append(h)


def solve(
    H: float,
    config: Optional[SolverConfig] = None,
    init: Optional[CmcSphereMesh] = None,
    center: bool = True,
) -> CmcSphereMesh:
    """Discrete CMC ``H`` sphere.

    Warm-starts from ``init`` when given (it must carry a ray parametrization),
    otherwise from a round sphere of radius ``1/max(H, start_H)``.
    """
    cfg = config or SolverConfig()
    if H <= 0:
        raise ValueError("H must be positive")
    if H <= STABILITY_THRESHOLD:
        warnings.warn(
            f"H={H} <= 1/sqrt(3): conjecture regime, existence of the index-one sphere is not guaranteed",
            ConjectureRegimeWarning,
        )
    if init is not None and init.state is not None:
        st0 = init.state
        state = RadialState(st0.U, st0.origin, st0.r.copy(), chart=st0.chart)
        F = init.F
        stages = _schedule(init.H, H, cfg.step_ratio)
    else:
        U, F = msh.geodesic_sphere(cfg.frequency)
        H0 = max(H, cfg.start_H)
        state = RadialState(U, np.zeros(3), np.full(len(U), 1.0 / H0), chart=cfg.chart)
        stages = [H0] + (_schedule(H0, H, cfg.step_ratio) if H0 != H else [])
    prob = _RadialProblem(state, F, cfg.fd_step)
    r = state.r
    history = []
    for k, Hs in enumerate(stages):
        final = k == len(stages) - 1
        stage_tol = cfg.tol if final else max(cfg.tol, 1e-3)
        r, err, its = prob.newton(r, Hs, stage_tol, cfg.max_iters, cfg.min_angle_deg)
        history.append({"H": Hs, "maxHdev": err, "iterations": its})
        log.info("stage H=%.4f: max|H_v-H|=%.3e after %d Newton steps", Hs, err, its)
        if err > stage_tol:
            raise NonConvergenceError(f"no convergence at H={Hs}: max|H_v-H|={err:.3e} > {stage_tol:.1e}")
    state.r = r
    m = CmcSphereMesh(state.points(), F, H, state, {"frequency": cfg.frequency, "stages": history})
    if center:
        c = find_center(m)
        m = m.translated(group_inverse(c))
        m.meta["center_shift"] = list(map(float, group_inverse(c)))
    return m


def continue_family(
    m0: CmcSphereMesh, H_targets: Sequence[float], config: Optional[SolverConfig] = None,
    verify_each: bool = True,
) -> Tuple[List[CmcSphereMesh], List["VerificationReport"], dict]:
    """Warm-started solves along ``H_targets``.

    Returns the meshes, their reports and a summary table with area and volume.  A
    failed solve ends the run; the summary records the last good ``H``.
    """
    cfg = config or SolverConfig()
    meshes, reports = [], []
    table = {"H": [], "area": [], "volume": [], "index": [], "passed": []}
    prev = m0
    summary = {"table": table, "break": None}
    for Ht in H_targets:
        try:
            m = solve(Ht, cfg, init=prev)
        except (NonConvergenceError, DegenerateMeshError) as exc:
            summary["break"] = {"H": Ht, "last_good_H": prev.H, "error": str(exc)}
            break
        rep = verify(m, cfg) if verify_each else None
        meshes.append(m)
        reports.append(rep)
        table["H"].append(Ht)
        table["area"].append(m.area)
        table["volume"].append(m.volume)
        table["index"].append(rep.index if rep else None)
        table["passed"].append(rep.passed if rep else None)
        prev = m
    order = np.argsort(table["H"])
    vols = np.asarray(table["volume"])[order]
    summary["volume_decreasing_in_H"] = bool(np.all(np.diff(vols) < 0)) if len(vols) > 1 else None
    return meshes, reports, summary


# ---------------------------------------------------------------------------
# per-face differential quantities
# ---------------------------------------------------------------------------


@dataclass
class FaceFrames:
    """Per-face orthonormal tangent frames and local coordinates of the corners.

    ``e1, e2, n`` are frame-component vectors with ``e1 x e2 = n`` and ``n`` the
    inward normal.  ``st`` holds the ``(s, t)`` coordinates of corners ``b`` and ``c``
    relative to ``a``.
    """

    e1: np.ndarray
    e2: np.ndarray
    n: np.ndarray
    st: np.ndarray  # (m, 2, 2): rows b, c
    T: np.ndarray  # (m, 2, 3): frame edge vectors a->b, a->c
    area: np.ndarray


def face_frames(X: np.ndarray, F: np.ndarray) -> FaceFrames:
    a, b, c = X[F[:, 0]], X[F[:, 1]], X[F[:, 2]]
    z = (a[:, 2] + b[:, 2] + c[:, 2]) / 3.0
    D = np.stack([np.exp(z), np.exp(-z), np.ones_like(z)], axis=1)
    T1, T2 = (b - a) * D, (c - a) * D
    out = np.cross(T1, T2)
    area = 0.5 * np.linalg.norm(out, axis=1)
    n = -out / (2 * area[:, None])
    e1 = T1 / np.linalg.norm(T1, axis=1, keepdims=True)
    e2 = np.cross(n, e1)
    st = np.stack(
        [
            np.stack([np.einsum("ij,ij->i", T1, e1), np.einsum("ij,ij->i", T1, e2)], axis=1),
            np.stack([np.einsum("ij,ij->i", T2, e1), np.einsum("ij,ij->i", T2, e2)], axis=1),
        ],
        axis=1,
    )
    return FaceFrames(e1, e2, n, st, np.stack([T1, T2], axis=1), area)


def _face_gradient(st: np.ndarray, fa, fb, fc) -> Tuple[np.ndarray, np.ndarray]:
    """``(f_s, f_t)`` of the linear interpolant on each face (complex values allowed)."""
    det = st[:, 0, 0] * st[:, 1, 1] - st[:, 0, 1] * st[:, 1, 0]
    db, dc = fb - fa, fc - fa
    fs = (st[:, 1, 1] * db - st[:, 0, 1] * dc) / det
    ft = (-st[:, 1, 0] * db + st[:, 0, 0] * dc) / det
    return fs, ft


@dataclass
class FaceGauss:
    """Gauss map on faces, in the chart chosen per face (``dual``: values of ``i/g``)."""

    g: np.ndarray  # centroid value in the face chart
    g_z: np.ndarray
    g_zbar: np.ndarray
    dual: np.ndarray
    area: np.ndarray

    @property
    def jacobian(self) -> np.ndarray:
        """``|g_z|^2 - |g_zbar|^2``; same sign in both charts."""
        return np.abs(self.g_z) ** 2 - np.abs(self.g_zbar) ** 2

    @property
    def beltrami(self) -> np.ndarray:
        """``conj(g)_z / g_z``, independent of the rotation of the conformal frame."""
        return self.g_zbar.conj() / self.g_z


def _vertex_values_in_chart(gv: np.ndarray, dual: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(dual, 1j / gv, gv)


def face_gauss(m: CmcSphereMesh, frames: Optional[FaceFrames] = None) -> FaceGauss:
    fr = frames or face_frames(m.X, m.F)
    gv = m.gauss
    G = gv[m.F]
    big = (~np.isfinite(G)) | (np.abs(G) > 1)
    dual = big.any(axis=1)
    Gc = np.where(dual[:, None], _vertex_values_in_chart(G, np.ones_like(G, dtype=bool)), G)
    fs, ft = _face_gradient(fr.st, Gc[:, 0], Gc[:, 1], Gc[:, 2])
    return FaceGauss(Gc.mean(axis=1), (fs - 1j * ft) / 2, (fs + 1j * ft) / 2, dual, fr.area)


@dataclass
class ShapeOperator:
    """Per-face shape operator ``S = -dN`` in the frame ``(e1, e2)``."""

    S: np.ndarray  # (m, 2, 2) symmetrized
    asym: np.ndarray  # |S12 - S21| before symmetrization

    @property
    def mean(self) -> np.ndarray:
        return 0.5 * (self.S[:, 0, 0] + self.S[:, 1, 1])

    @property
    def det(self) -> np.ndarray:
        return self.S[:, 0, 0] * self.S[:, 1, 1] - self.S[:, 0, 1] * self.S[:, 1, 0]

    @property
    def norm2(self) -> np.ndarray:
        return np.einsum("mij,mij->m", self.S, self.S)


def shape_operator(m: CmcSphereMesh, frames: Optional[FaceFrames] = None) -> ShapeOperator:
    """Covariant derivative of the interpolated vertex normals along each face."""
    fr = frames or face_frames(m.X, m.F)
    N = m.normals[m.F]  # (m, 3, 3) frame components
    Nf = N.mean(axis=1)
    Nf /= np.linalg.norm(Nf, axis=1, keepdims=True)
    W = []
    for k in range(2):
        dN = N[:, k + 1] - N[:, 0]
        # + sum_ij T^j N^i nabla_{E_j} E_i
        conn = np.einsum("mj,mi,jik->mk", fr.T[:, k], Nf, CONNECTION)
        W.append(-(dN + conn))
    W = np.stack(W, axis=1)  # (m, 2, 3)
    Wst = np.stack([np.einsum("mkj,mj->mk", W, fr.e1), np.einsum("mkj,mj->mk", W, fr.e2)], axis=2)
    # S @ st_k = Wst_k  ->  S = Wst^T (st^T)^{-1}
    Sm = np.linalg.solve(fr.st, Wst).transpose(0, 2, 1)
    asym = np.abs(Sm[:, 0, 1] - Sm[:, 1, 0])
    S = 0.5 * (Sm + Sm.transpose(0, 2, 1))
    return ShapeOperator(S, asym)


def face_to_vertex(m: CmcSphereMesh, values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    num = np.zeros(m.n_vertices, dtype=values.dtype)
    den = np.zeros(m.n_vertices)
    for k in range(3):
        np.add.at(num, m.F[:, k], values * weights)
        np.add.at(den, m.F[:, k], weights)
    return num / den


def vertex_B2(m: CmcSphereMesh, frames: Optional[FaceFrames] = None) -> np.ndarray:
    fr = frames or face_frames(m.X, m.F)
    return face_to_vertex(m, shape_operator(m, fr).norm2, fr.area)


# ---------------------------------------------------------------------------
# individual checks
# ---------------------------------------------------------------------------


def mean_curvature_field(m: CmcSphereMesh) -> np.ndarray:
    return m.mean_curvature


def persistent_minima(adjacency: sparse.spmatrix, f: np.ndarray, eps: float) -> np.ndarray:
    """Local minima of a vertex function whose 0-dim persistence exceeds ``eps``.

    Union-find over vertices sorted by ``f``; when two basins meet, the one born
    higher dies.  The global minimum never dies and is always returned.
    """
    A = adjacency.tocsr()
    order = np.argsort(f, kind="stable")
    parent = np.full(len(f), -1)

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    keep = []
    for v in order:
        parent[v] = v
        roots = {root(w) for w in A.indices[A.indptr[v]:A.indptr[v + 1]] if parent[w] >= 0}
        if not roots:
            continue
        elder = min(roots, key=lambda r: f[r])
        for r in roots - {elder}:
            if f[v] - f[r] > eps:
                keep.append(r)
            parent[r] = elder
        parent[v] = elder
    survivors = {root(i) for i in range(len(f))}
    keep.extend(survivors)
    return np.array(sorted(keep), dtype=int)


def _noise_scale(m: CmcSphereMesh) -> float:
    # one-edge second-order Taylor term of a function whose Hessian is bounded by |B|^2 + |B|
    k = float(np.sqrt(vertex_B2(m).max()))
    return (k * k + k) * m.mean_edge_length ** 2


def gauss_poles(m: CmcSphereMesh, eps: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Persistent extrema of ``N3``: ``g ~ 0`` where ``N3`` peaks, ``g ~ inf`` at its trough."""
    N3 = m.normals[:, 2]
    eps = _noise_scale(m) if eps is None else eps
    return persistent_minima(m.adjacency, -N3, eps), persistent_minima(m.adjacency, N3, eps)


def height_extrema(m: CmcSphereMesh, eps: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Persistent minima and maxima of ``x3`` over the vertices."""
    x3 = m.X[:, 2]
    eps = _noise_scale(m) if eps is None else eps
    return persistent_minima(m.adjacency, x3, eps), persistent_minima(m.adjacency, -x3, eps)


def symmetry_objective(m: CmcSphereMesh, tree: cKDTree, c: np.ndarray, stride: int = 1) -> float:
    X = m.X[::stride]
    tot = 0.0
    for w in isotropy_group(c)[1:]:
        d, _ = tree.query(w.apply(X))
        tot += float(np.mean(d ** 2))
    return tot


def initial_center(m: CmcSphereMesh) -> np.ndarray:
    zeros, infs = gauss_poles(m)
    N3 = m.normals[:, 2]
    p0 = m.X[np.argmax(N3)] if len(zeros) == 0 else m.X[zeros[np.argmax(N3[zeros])]]
    p1 = m.X[np.argmin(N3)] if len(infs) == 0 else m.X[infs[np.argmin(N3[infs])]]
    x3 = 0.5 * (m.X[:, 2].max() + m.X[:, 2].min())
    return np.array([0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1]), x3])


def find_center(m: CmcSphereMesh) -> np.ndarray:
    """Point whose isotropy group best preserves the vertex set."""
    tree = cKDTree(m.X)
    c0 = initial_center(m)
    stride = max(1, m.n_vertices // 3000)
    h = m.mean_edge_length
    res = minimize(
        lambda c: symmetry_objective(m, tree, c, stride),
        c0,
        method="Nelder-Mead",
        options={"xatol": 1e-4 * h, "fatol": 1e-14, "maxiter": 600,
                 "initial_simplex": c0 + np.vstack([np.zeros(3), 0.5 * h * np.eye(3)])},
    )
    return res.x


def _closest_point_on_triangles(p, a, b, c):
    """Vectorized closest point of ``p`` on triangles ``abc`` (all shape (k, 3))."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    denom = np.where(denom == 0, 1e-300, denom)
    v = vb / denom
    w = vc / denom
    out = a + ab * v[:, None] + ac * w[:, None]

    def setw(mask, val):
        out[mask] = val[mask]

    # edge regions
    with np.errstate(divide="ignore", invalid="ignore"):
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
    m_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    setw(m_bc, b + (c - b) * t_bc[:, None])
    m_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    setw(m_ac, a + ac * t_ac[:, None])
    m_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    setw(m_ab, a + ab * t_ab[:, None])
    # vertex regions
    setw((d6 >= 0) & (d5 <= d6), c)
    setw((d3 >= 0) & (d4 <= d3), b)
    setw((d1 <= 0) & (d2 <= 0), a)
    return out


def _vertex_faces(F: np.ndarray, n: int) -> sparse.csr_matrix:
    rows = F.ravel()
    cols = np.repeat(np.arange(len(F)), 3)
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, len(F)))


def distance_to_mesh(P: np.ndarray, X: np.ndarray, F: np.ndarray, tree: Optional[cKDTree] = None,
                     k: int = 6) -> np.ndarray:
    """Approximate Sol3 distance from points to a mesh surface.

    Candidates are the faces around the ``k`` nearest vertices; distances use the
    metric frozen at the query point, accurate when the surfaces are close.
    """
    tree = tree or cKDTree(X)
    _, nn = tree.query(P, k=k)
    VF = _vertex_faces(F, len(X)).tolil().rows
    best = np.full(len(P), np.inf)
    cand = [np.unique(np.concatenate([VF[j] for j in row])) for row in nn]
    lens = np.array([len(c) for c in cand])
    qi = np.repeat(np.arange(len(P)), lens)
    fi = np.concatenate(cand)
    z = P[qi, 2]
    D = np.stack([np.exp(z), np.exp(-z), np.ones_like(z)], axis=1)
    p = np.zeros((len(qi), 3))
    a = (X[F[fi, 0]] - P[qi]) * D
    b = (X[F[fi, 1]] - P[qi]) * D
    c = (X[F[fi, 2]] - P[qi]) * D
    q = _closest_point_on_triangles(p, a, b, c)
    d = np.linalg.norm(q, axis=1)
    np.minimum.at(best, qi, d)
    return best


def symmetry_defect(m: CmcSphereMesh, center=None) -> Tuple[float, np.ndarray]:
    """Largest distance between the mesh and its images under the isotropy of ``center``."""
    c = find_center(m) if center is None else np.asarray(center, float)
    tree = cKDTree(m.X)
    worst = 0.0
    for w in isotropy_group(c)[1:]:
        d = distance_to_mesh(w.apply(m.X), m.X, m.F, tree)
        worst = max(worst, float(d.max()))
    return worst, c


# embeddedness ---------------------------------------------------------------


def _segment_hits_triangle(p0, p1, a, b, c, eps=1e-12) -> np.ndarray:
    d = p1 - p0
    e1, e2 = b - a, c - a
    h = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > eps
    inv = 1.0 / np.where(ok, det, 1.0)
    s = p0 - a
    u = np.einsum("ij,ij->i", s, h) * inv
    q = np.cross(s, e1)
    v = np.einsum("ij,ij->i", d, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    return ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)


def self_intersections(X: np.ndarray, F: np.ndarray, cell: Optional[float] = None) -> int:
    """Number of intersecting pairs of faces that share no vertex."""
    lo = X[F].min(axis=1)
    hi = X[F].max(axis=1)
    if cell is None:
        cell = 2.0 * float(np.median((hi - lo).max(axis=1)))
    ilo = np.floor(lo / cell).astype(np.int64)
    ihi = np.floor(hi / cell).astype(np.int64)
    keys, tris = [], []
    span = ihi - ilo + 1
    for dx in range(span[:, 0].max()):
        for dy in range(span[:, 1].max()):
            for dz in range(span[:, 2].max()):
                off = np.array([dx, dy, dz])
                ok = np.all(off < span, axis=1)
                idx = ilo[ok] + off
                keys.append(idx)
                tris.append(np.flatnonzero(ok))
    keys = np.concatenate(keys)
    tris = np.concatenate(tris)
    _, cell_id = np.unique(keys, axis=0, return_inverse=True)
    cell_id = cell_id.ravel()
    order = np.argsort(cell_id, kind="stable")
    cell_id, tris = cell_id[order], tris[order]
    bounds = np.flatnonzero(np.diff(cell_id)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(cell_id)]])
    pa, pb = [], []
    for s0, e0 in zip(starts, ends):
        k = e0 - s0
        if k < 2:
            continue
        ii, jj = np.triu_indices(k, 1)
        pa.append(tris[s0 + ii])
        pb.append(tris[s0 + jj])
    if not pa:
        return 0
    pairs = np.unique(np.sort(np.stack([np.concatenate(pa), np.concatenate(pb)], 1), axis=1), axis=0)
    A, B = F[pairs[:, 0]], F[pairs[:, 1]]
    share = (A[:, :, None] == B[:, None, :]).any(axis=(1, 2))
    pairs, A, B = pairs[~share], A[~share], B[~share]
    overlap = np.all((lo[pairs[:, 0]] <= hi[pairs[:, 1]]) & (lo[pairs[:, 1]] <= hi[pairs[:, 0]]), axis=1)
    A, B = A[overlap], B[overlap]
    hit = np.zeros(len(A), dtype=bool)
    for P, Q in ((A, B), (B, A)):
        for i, j in ((0, 1), (1, 2), (2, 0)):
            hit |= _segment_hits_triangle(X[P[:, i]], X[P[:, j]], X[Q[:, 0]], X[Q[:, 1]], X[Q[:, 2]])
    return int(hit.sum())


# bigraph ----------------------------------------------------------------------


def bigraph_check(m: CmcSphereMesh) -> dict:
    """Splitting along ``{N1 = 0}`` and graph property of the halves over the ``x1`` leaves.

    Each half must be connected and project to the ``(x2, x3)`` plane with a single
    orientation (locally injective).  The projection folds along ``{N1 = 0}``, so
    faces touching a vertex with a neighbour in the other half are left out of the
    orientation test and counted as ``fold_band_faces``; so are faces with a vertex
    where ``|N1|`` is below the normal's discretization scale ``|B|_max h``.
    """
    N1 = m.normals[:, 0]
    A = m.adjacency.tocoo()
    band = np.abs(N1) < np.sqrt(vertex_B2(m).max()) * m.mean_edge_length
    cross = (N1[A.row] > 0) != (N1[A.col] > 0)
    band[A.row[cross]] = True
    out = {}
    ok = True
    for name, mask in (("positive", N1 > 0), ("negative", N1 <= 0)):
        idx = np.flatnonzero(mask)
        sub = m.adjacency[idx][:, idx]
        ncomp, _ = connected_components(sub, directed=False)
        faces = m.F[mask[m.F].all(axis=1)]
        in_band = band[faces].any(axis=1)
        P = m.X[:, 1:]
        inner = faces[~in_band]
        a, b, c = P[inner[:, 0]], P[inner[:, 1]], P[inner[:, 2]]
        sa = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        consistent = bool(np.all(sa > 0) or np.all(sa < 0))
        out[name] = {"components": int(ncomp), "orientation_consistent": consistent,
                     "faces": int(len(faces)), "fold_band_faces": int(in_band.sum())}
        ok &= ncomp == 1 and consistent
    out["is_bigraph"] = bool(ok)
    return out


# diameter -----------------------------------------------------------------------


def intrinsic_diameter(m: CmcSphereMesh, sweeps: int = 4) -> Tuple[float, float]:
    """Edge-graph diameter with exact Sol3 edge lengths: ``(lower, upper)`` bounds.

    Repeated double sweeps give the lower bound; twice the smallest eccentricity
    seen gives the upper bound.
    """
    e = m.edges
    w = m.edge_lengths
    G = sparse.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(m.n_vertices,) * 2).tocsr()
    src = 0
    lower, upper = 0.0, np.inf
    for _ in range(sweeps):
        d = dijkstra(G, directed=False, indices=src)
        ecc = float(d.max())
        lower = max(lower, ecc)
        upper = min(upper, 2 * ecc)
        src = int(np.argmax(d))
    d = dijkstra(G, directed=False, indices=src)
    lower = max(lower, float(d.max()))
    # a middle vertex of the longest path has small eccentricity
    mid = int(np.argmin(np.abs(d - d.max() / 2)))
    dm = dijkstra(G, directed=False, indices=mid)
    upper = min(upper, 2 * float(dm.max()))
    return lower, upper


# spectrum -----------------------------------------------------------------------


@dataclass
class JacobiSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    zero_tol: float
    potential: np.ndarray

    @property
    def index(self) -> int:
        return int(np.sum(self.eigenvalues < -self.zero_tol))

    @property
    def zero_cluster(self) -> np.ndarray:
        return self.eigenvalues[np.abs(self.eigenvalues) <= self.zero_tol]


def jacobi_operator(m: CmcSphereMesh, B2: Optional[np.ndarray] = None):
    """``(K, Mass, P)``: ``-L f = Mass^{-1} (K f) - P f`` with ``P = |B|^2 + Ric(N)``."""
    K = msh.cotan_stiffness(m.X, m.F)
    Mass = m.areas
    B2 = vertex_B2(m) if B2 is None else B2
    P = B2 - 2 * m.normals[:, 2] ** 2
    return K, Mass, P


def jacobi_spectrum(m: CmcSphereMesh, k: int = 8, C: float = 1.0, B2: Optional[np.ndarray] = None) -> JacobiSpectrum:
    K, Mass, P = jacobi_operator(m, B2)
    A = (K - sparse.diags(Mass * P)).tocsc()
    Md = sparse.diags(Mass).tocsc()
    sigma = -float(P.max()) - 1.0
    vals, vecs = eigsh(A, k=k, M=Md, sigma=sigma, which="LM")
    order = np.argsort(vals)
    return JacobiSpectrum(vals[order], vecs[:, order], C * m.mean_edge_length, P)


def killing_normals(m: CmcSphereMesh) -> np.ndarray:
    """``<F_k, N>`` at every vertex, shape ``(n, 3)``."""
    Fk = killing_fields(m.X)  # (n, 3 fields, 3 coords)
    z = m.X[:, 2]
    D = np.stack([np.exp(z), np.exp(-z), np.ones_like(z)], axis=1)
    return np.einsum("nkc,nc->nk", Fk * D[:, None, :], m.normals)


@dataclass
class KillingChecks:
    jacobi_residuals: np.ndarray  # resolved part, see killing_checks
    pointwise_residuals: np.ndarray
    stokes_flux: np.ndarray
    stokes_H_flux: np.ndarray
    exact_flux: np.ndarray
    area: float


def killing_checks(m: CmcSphereMesh, B2: Optional[np.ndarray] = None,
                   spectrum: Optional[JacobiSpectrum] = None) -> KillingChecks:
    """Killing Jacobi residuals and the two Stokes integrals.

    The cotangent Laplacian is only weakly consistent on irregular meshes, so the
    pointwise ``|L f|`` keeps an O(1) part at obtuse corners.  ``jacobi_residuals``
    measures ``L f`` on the span of the computed low eigenmodes instead:
    ``|sum_i lambda_i <phi_i, f> phi_i| / |f|`` in the mass norm.

    ``exact_flux`` is ``sum_v dV_v . F_k(X_v)``, the derivative of the discrete volume
    along the Killing flow; it vanishes to rounding since the flows preserve the
    Euclidean volume of model coordinates.
    """
    f = killing_normals(m)
    K, Mass, P = jacobi_operator(m, B2)
    spectrum = spectrum or jacobi_spectrum(m, B2=B2)
    raw, res = [], []
    for k in range(3):
        nf = math.sqrt(np.sum(Mass * f[:, k] ** 2))
        Lf = -(K @ f[:, k]) / Mass + P * f[:, k]
        raw.append(math.sqrt(np.sum(Mass * Lf ** 2)) / nf)
        c = spectrum.eigenvectors.T @ (Mass * f[:, k])
        res.append(float(np.linalg.norm(spectrum.eigenvalues * c)) / nf)
    A = m.areas
    flux = (A[:, None] * f).sum(axis=0)
    hflux = (A[:, None] * m.mean_curvature[:, None] * f).sum(axis=0)
    gv = msh.volume_gradient(m.X, m.F)
    exact = np.einsum("nc,nkc->k", gv, killing_fields(m.X))
    return KillingChecks(np.array(res), np.array(raw), flux, hflux, exact, m.area)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class VerificationReport:
    H: float
    maxHdev: float
    B2max: float
    B2bound: float
    diameter: float
    diameterBound: Optional[float]
    index: int
    zeroCluster: List[float]
    stokes: dict
    symmetryDefect: float
    embedded: bool
    checks: Dict[str, bool] = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> List[str]:
        return [k for k, v in self.checks.items() if not v]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return _plain(d)

    def to_json(self, path: Union[str, Path, None] = None) -> str:
        s = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(s + "\n")
        return s


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def geometry_report(m: CmcSphereMesh, center=None) -> dict:
    """Gauss-map diffeomorphism certificate, height critical points, symmetry,
    embeddedness and bigraph structure."""
    fr = face_frames(m.X, m.F)
    fg = face_gauss(m, fr)
    jac_face = fg.jacobian
    # vertex estimate: area-weighted mean of the per-face linearizations
    jac_vertex = face_to_vertex(m, jac_face, fg.area)
    zeros, infs = gauss_poles(m)
    x3min, x3max = height_extrema(m)
    defect, c = symmetry_defect(m, center)
    h = m.mean_edge_length
    n_int = self_intersections(m.X, m.F)
    big = bigraph_check(m)
    # the x3 extrema must sit at the Gauss poles (within one ring)
    A = m.adjacency + sparse.identity(m.n_vertices, format="csr")
    near = lambda a, b: bool(len(a) == 1 and len(b) == 1 and A[a[0], b[0]] != 0)
    return {
        "gauss_jacobian_min_face": float(jac_face.min()),
        "gauss_jacobian_positive_faces": int(np.sum(jac_face > 0)),
        "gauss_jacobian_min_vertex_relative": float(jac_vertex.min() / np.median(jac_vertex)),
        "gauss_jacobian_positive_all_vertices": bool(np.all(jac_vertex > 0)),
        "gauss_zero_vertices": zeros.tolist(),
        "gauss_infinity_vertices": infs.tolist(),
        "x3_min_vertices": x3min.tolist(),
        "x3_max_vertices": x3max.tolist(),
        "x3_extrema_at_gauss_poles": near(x3min, zeros) and near(x3max, infs),
        "symmetry_defect": defect,
        "symmetry_defect_edges": defect / h,
        "center": c.tolist(),
        "self_intersections": n_int,
        "embedded": n_int == 0,
        "bigraph": big,
        "mean_edge_length": h,
    }


def verify(m: CmcSphereMesh, config: Optional[SolverConfig] = None) -> VerificationReport:
    """Run every check on a closed mesh and collect pass/fail flags."""
    cfg = config or SolverConfig()
    H = m.H
    Hv = m.mean_curvature
    maxdev = float(np.abs(Hv - H).max())
    fr = face_frames(m.X, m.F)
    so = shape_operator(m, fr)
    B2 = face_to_vertex(m, so.norm2, fr.area)
    geo = geometry_report(m)
    spectrum = jacobi_spectrum(m, cfg.n_eigs, cfg.zero_cluster_C, B2)
    kc = killing_checks(m, B2, spectrum)
    lo, hi = intrinsic_diameter(m)
    dbound = diameter_bound(H)
    A = m.area
    ev = spectrum.eigenvalues
    tol0 = spectrum.zero_tol
    zc = ev[1:4]
    checks = {
        "euler_characteristic": m.euler_characteristic == 2,
        "maxHdev": maxdev <= cfg.tol,
        "B2_bound": bool(B2.max() < b2_bound(H)),
        "embedded": geo["embedded"],
        "gauss_jacobian": geo["gauss_jacobian_positive_all_vertices"],
        "gauss_poles": len(geo["gauss_zero_vertices"]) == 1 and len(geo["gauss_infinity_vertices"]) == 1,
        "x3_critical_points": len(geo["x3_min_vertices"]) == 1 and len(geo["x3_max_vertices"]) == 1,
        "stokes": bool(np.all(np.abs(kc.stokes_flux) <= 1e-3 * A)
                       and np.all(np.abs(kc.stokes_H_flux) <= 1e-3 * abs(H) * A)),
        "index_one": spectrum.index == 1 and ev[0] < 0,
        "zero_cluster": bool(np.all(np.abs(zc) <= tol0) and ev[4] > tol0),
        "killing_jacobi": bool(np.all(kc.jacobi_residuals <= 10 * np.abs(zc).max())),
        "symmetry": geo["symmetry_defect"] <= 2 * geo["mean_edge_length"],
        "bigraph": geo["bigraph"]["is_bigraph"],
    }
    if dbound is not None:
        checks["diameter"] = hi <= dbound
    details = {
        "n_vertices": m.n_vertices,
        "area": A,
        "volume": m.volume,
        "eigenvalues": ev,
        "zero_tol": tol0,
        "diameter_upper": hi,
        "killing_jacobi_residuals": kc.jacobi_residuals,
        "killing_pointwise_residuals": kc.pointwise_residuals,
        "stokes_exact_volume_derivative": kc.exact_flux,
        "face_mean_curvature_range": [float(so.mean.min()), float(so.mean.max())],
        "geometry": geo,
        "regime": "guaranteed" if H > STABILITY_THRESHOLD else "conjecture",
    }
    if dbound is None:
        details["diameter_advisory"] = "H <= 1/sqrt(3): diameter bound not asserted"
    return VerificationReport(
        H=H,
        maxHdev=maxdev,
        B2max=float(B2.max()),
        B2bound=b2_bound(H),
        diameter=lo,
        diameterBound=dbound,
        index=spectrum.index,
        zeroCluster=[float(x) for x in zc],
        stokes={"flux": kc.stokes_flux, "H_flux": kc.stokes_H_flux, "area": A},
        symmetryDefect=geo["symmetry_defect"],
        embedded=geo["embedded"],
        checks={k: bool(v) for k, v in checks.items()},
        details=details,
    )
