"""The function ``L`` on the Riemann sphere and the quadratic differential ``Q``.

For a CMC sphere with diffeomorphic Gauss map ``G`` the function ``L`` is defined by
``L(G) = -M(G) conj(G)_z / G_z``, and then

    Q(g) = L(g) g_z^2 + M(g) g_z conj(g)_z

vanishes on ``G``.  With ``Gamma = i/q`` one has ``M(q) = |Gamma|^4 M(Gamma)``, so ``Q``
keeps its shape in the dual chart once ``L`` is replaced by ``Lt(Gamma) = -q^4 L(q)``.

A table stores one sample per sphere vertex, in the vertex's own chart (``|q| <= 1``
primary, otherwise dual), together with the sphere's triangulation.  Since ``G`` is a
diffeomorphism the Gauss images of the faces triangulate the Riemann sphere; ``L`` at
a point is a weighted quadratic least-squares fit over the vertex rings of the image
face containing it.  Near the Gauss poles the images are strongly anisotropic, and
these stencils still surround the query point where nearest-neighbour sets do not.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from . import mesh as msh
from .gauss_map import GaussField, M_of, coefficients, conformal_factor
from .sol3_core import group_inverse, group_mul
from .sphere_solver import CmcSphereMesh, face_gauss

# samples with |chart value| up to this radius are used in a chart
CHART_OVERLAP = 2.0


def _padded_rows(A: sparse.csr_matrix) -> np.ndarray:
    """Column indices of each row of a sparse pattern, padded with -1."""
    A = A.tocsr()
    deg = np.diff(A.indptr)
    out = np.full((A.shape[0], deg.max()), -1, dtype=int)
    for i in range(A.shape[0]):
        out[i, : deg[i]] = A.indices[A.indptr[i]: A.indptr[i + 1]]
    return out


def _rings(F: np.ndarray, n: int, depth: int) -> np.ndarray:
    A1 = (msh.adjacency(F, n) + sparse.identity(n, format="csr")).tocsr()
    A = A1
    for _ in range(depth - 1):
        A = (A @ A1).tocsr()
    return _padded_rows(A)


def _design(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1)


def _weighted_quadratic(x, y, vals, w):
    """Row-wise weighted quadratic fits; returns ``(c0, c_x, c_y)``.

    ``x, y, vals, w`` have shape ``(n, k)``; zero weights drop a column.
    """
    scale = np.sqrt(np.max(np.where(w > 0, x * x + y * y, 0.0), axis=1, keepdims=True))
    scale = np.where(scale > 0, scale, 1.0)
    A = _design(x / scale, y / scale)
    Aw = A * w[..., None]
    N = np.einsum("nki,nkj->nij", Aw, A)
    rhs = np.einsum("nki,nk->ni", Aw, vals)
    c = np.linalg.solve(N, rhs[..., None])[..., 0]
    return c[:, 0], c[:, 1] / scale[:, 0], c[:, 2] / scale[:, 0]


# ---------------------------------------------------------------------------
# the sphere's Gauss map at its vertices
# ---------------------------------------------------------------------------


def _tangent_basis(N: np.ndarray):
    ref = np.where(np.abs(N[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = ref - np.sum(ref * N, axis=1, keepdims=True) * N
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    return e1, np.cross(N, e1)


@dataclass
class _TangentStencils:
    """2-ring neighbours of every vertex in oriented tangent coordinates.

    Neighbours are left-translated by the inverse of the vertex, where the metric is
    Euclidean, and projected on an orthonormal basis ``(e1, e2)`` with ``e1 x e2 = N``.
    """

    nb: np.ndarray  # (n, k) vertex ids
    valid: np.ndarray
    s: np.ndarray
    t: np.ndarray
    h: np.ndarray  # height along N
    N: np.ndarray

    @classmethod
    def of(cls, m: CmcSphereMesh, N: Optional[np.ndarray] = None) -> "_TangentStencils":
        n = m.n_vertices
        ring = _rings(m.F, n, 2)
        valid = (ring >= 0) & (ring != np.arange(n)[:, None])
        nb = np.where(ring >= 0, ring, 0)
        N = m.normals if N is None else N
        e1, e2 = _tangent_basis(N)
        Xi = group_inverse(m.X)
        Y = group_mul(np.broadcast_to(Xi[:, None, :], nb.shape + (3,)), m.X[nb])
        dot = lambda e: np.einsum("nkc,nc->nk", Y, e)
        return cls(nb, valid, dot(e1), dot(e2), dot(N), N)

    def dz(self, own: np.ndarray, neighbours: np.ndarray, rows=slice(None)):
        """``(f_z, f_zbar)`` from vertex values and ``(n, k)`` neighbour values.

        ``rows`` restricts the computation to a subset of vertices.
        """
        vals = neighbours - own[:, None]
        ok = self.valid[rows] & np.isfinite(vals)
        _, fs, ft = _weighted_quadratic(self.s[rows], self.t[rows], np.where(ok, vals, 0.0), ok.astype(float))
        return 0.5 * (fs - 1j * ft), 0.5 * (fs + 1j * ft)


def fitted_normals(m: CmcSphereMesh, iters: int = 2) -> np.ndarray:
    """Vertex normals tilted to the tangent plane of a quadratic height fit over the 2-ring.

    The mesh normals are area weighted and only first order accurate on irregular
    stars; the fitted ones are second order.
    """
    N = m.normals
    for _ in range(iters):
        st = _TangentStencils.of(m, N)
        _, hs, ht = _weighted_quadratic(st.s, st.t, np.where(st.valid, st.h, 0.0), st.valid.astype(float))
        e1, e2 = _tangent_basis(N)
        N = N - hs[:, None] * e1 - ht[:, None] * e2
        N /= np.linalg.norm(N, axis=1, keepdims=True)
    return N


def vertex_gauss_field(m: CmcSphereMesh, stencils: Optional[_TangentStencils] = None) -> GaussField:
    """Vertex Gauss map with ``g_z, g_zbar`` from quadratic fits over the 2-ring.

    Uses :func:`fitted_normals` and ``z = s + i t`` in the tangent coordinates of
    :class:`_TangentStencils`.  Values are stored in the vertex chart.
    """
    st = stencils or _TangentStencils.of(m, fitted_normals(m))
    N = st.N
    den = 1 + N[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(den == 0, complex(np.inf, 0), (N[:, 0] + 1j * N[:, 1]) / den)
    dual = ~(np.abs(g) <= 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        own = np.where(dual, 1j / g, g)
        gn = g[st.nb]
        nbv = np.where(dual[:, None], 1j / gn, gn)
    gz, gzb = st.dz(own, nbv)
    n = m.n_vertices
    return GaussField(np.arange(n, dtype=float), np.zeros(n), own, gz, gzb, m.H, dual,
                      meta={"source": "sphere_vertices"})


def sphere_face_field(m: CmcSphereMesh) -> GaussField:
    """The sphere's Gauss map at face centroids from the per-face linearization."""
    fg = face_gauss(m)
    idx = np.arange(len(m.F), dtype=float)
    return GaussField(idx, np.zeros_like(idx), fg.g, fg.g_z, fg.g_zbar, m.H, fg.dual,
                      meta={"source": "sphere_faces"})


# ---------------------------------------------------------------------------
# table
# ---------------------------------------------------------------------------


@dataclass
class _Chart:
    """Samples in one chart plus the image faces fully inside it."""

    s: np.ndarray  # per-sample chart value (nan outside the chart)
    L: np.ndarray
    faces: np.ndarray  # face ids usable in this chart
    tree: cKDTree  # over image centroids of ``faces``


@dataclass
class LTable:
    """Samples of ``L`` in the two-chart atlas over a sphere triangulation.

    ``q[dual]`` holds ``Gamma = i/q`` and ``L[dual]`` holds ``Lt(Gamma) = -q^4 L(q)``.
    """

    H: float
    q: np.ndarray
    L: np.ndarray
    dual: np.ndarray
    faces: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.q = np.asarray(self.q, complex)
        self.L = np.asarray(self.L, complex)
        self.dual = np.asarray(self.dual, bool)
        self.faces = np.asarray(self.faces, int)
        self._charts = {}
        self._ring1 = None
        self._ring2 = None

    @property
    def n_samples(self) -> int:
        return len(self.q)

    def _rings(self):
        if self._ring1 is None:
            self._ring1 = _rings(self.faces, self.n_samples, 1)
            self._ring2 = _rings(self.faces, self.n_samples, 2)
        return self._ring1, self._ring2

    def chart(self, dual: bool) -> _Chart:
        if dual not in self._charts:
            same = self.dual == dual
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.where(same, self.q, 1j / self.q)
                # Lt(i/q) = -q^4 L(q) and L(q) = -Gamma^4 Lt(Gamma)
                L = np.where(same, self.L, -((1j / s) ** 4) * self.L)
            ok = np.isfinite(s) & (np.abs(s) <= CHART_OVERLAP)
            s = np.where(ok, s, np.nan)
            fok = np.flatnonzero(ok[self.faces].all(axis=1))
            cen = s[self.faces[fok]].mean(axis=1)
            self._charts[dual] = _Chart(s, L, fok, cKDTree(np.column_stack([cen.real, cen.imag])))
        return self._charts[dual]

    # -- evaluation --------------------------------------------------------

    def locate(self, s: np.ndarray, dual: bool) -> np.ndarray:
        """Image face (in the given chart) containing each point, or the nearest one."""
        ch = self.chart(dual)
        k = min(12, len(ch.faces))
        _, cand = ch.tree.query(np.column_stack([s.real, s.imag]), k=k)
        cand = cand.reshape(len(s), k)
        tri = ch.s[self.faces[ch.faces[cand]]]  # (n, k, 3)
        a, b, c = tri[..., 0], tri[..., 1], tri[..., 2]
        p = s[:, None]
        cross = lambda u, v: (u.conj() * v).imag
        area = cross(b - a, c - a)
        l1 = cross(c - b, p - b) / area
        l2 = cross(a - c, p - c) / area
        l3 = 1 - l1 - l2
        inside = np.minimum(np.minimum(l1, l2), l3)
        best = np.argmax(inside, axis=1)
        return ch.faces[cand[np.arange(len(s)), best]]

    def _stencil_fit(self, s, dual: bool, stencil: np.ndarray, drop: Optional[np.ndarray]):
        ch = self.chart(dual)
        ok = stencil >= 0
        idx = np.where(ok, stencil, 0)
        if drop is not None:
            ok &= idx != drop[:, None]
        pts = ch.s[idx]
        ok &= np.isfinite(pts)
        d = pts - s[:, None]
        d = np.where(ok, d, 0.0)
        dist = np.abs(d)
        h = np.sqrt(np.max(np.where(ok, dist ** 2, 0.0), axis=1, keepdims=True))
        w = np.where(ok, 1.0 / (dist / h + 0.05) ** 2, 0.0)
        val, Lx, Ly = _weighted_quadratic(d.real, d.imag, np.where(ok, ch.L[idx], 0.0), w)
        return val, 0.5 * (Lx - 1j * Ly), 0.5 * (Lx + 1j * Ly)

    def fit(self, s, dual, drop=None):
        """``(L, L_s, L_sbar)`` in the chart of each point.

        ``drop`` names one sample per point to leave out of its stencil.
        """
        s = np.atleast_1d(np.asarray(s, complex))
        dual = np.broadcast_to(np.asarray(dual, bool), s.shape)
        r1, _ = self._rings()
        out = [np.empty(s.shape, complex) for _ in range(3)]
        for flag in (False, True):
            sel = np.flatnonzero(dual == flag)
            if len(sel):
                f = self.locate(s[sel], flag)
                st = r1[self.faces[f]].reshape(len(sel), -1)
                st = _dedupe(st)
                dr = None if drop is None else np.asarray(drop)[sel]
                for o, v in zip(out, self._stencil_fit(s[sel], flag, st, dr)):
                    o[sel] = v
        return tuple(out)

    def fit_at_samples(self):
        """``(L, L_s, L_sbar)`` at every sample in its own chart, from its 2-ring."""
        _, r2 = self._rings()
        out = [np.empty(self.n_samples, complex) for _ in range(3)]
        for flag in (False, True):
            sel = np.flatnonzero(self.dual == flag)
            if len(sel):
                for o, v in zip(out, self._stencil_fit(self.q[sel], flag, r2[sel], None)):
                    o[sel] = v
        return tuple(out)

    def __call__(self, q) -> np.ndarray:
        """``L(q)`` for primary-chart points (infinity gives 0)."""
        q = np.asarray(q, complex)
        inf = ~np.isfinite(q)
        dual = inf | (np.abs(q) > 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(dual, 1j / np.where(inf, 1.0, q), q)
        s = np.where(inf, 0.0, s)
        val, _, _ = self.fit(s.ravel(), dual.ravel())
        val = val.reshape(q.shape)
        out = np.where(dual, -(s ** 4) * val, val)
        return np.where(inf, 0.0, out)

    def scaled(self, c: complex) -> "LTable":
        """The table of ``c L`` (a corrupted table for negative controls)."""
        return LTable(self.H, self.q, c * self.L, self.dual, self.faces, {**self.meta, "scaled_by": str(c)})

    # -- JSON --------------------------------------------------------------

    def to_json(self, path: Union[str, Path, None] = None) -> str:
        """Chart-tagged samples; ``index`` keeps the vertex numbering used by ``faces``."""

        def block(mask):
            idx = np.flatnonzero(mask)
            return {"index": idx.tolist(), "q_re": self.q[idx].real.tolist(), "q_im": self.q[idx].imag.tolist(),
                    "L_re": self.L[idx].real.tolist(), "L_im": self.L[idx].imag.tolist()}

        doc = {"H": self.H, "primary": block(~self.dual), "dual": block(self.dual),
               "faces": self.faces.tolist(),
               "stencil": {"method": "image-triangulation quadratic least squares",
                           "rings": 1, "chart_overlap": CHART_OVERLAP},
               "meta": self.meta}
        s = json.dumps(doc)
        if path is not None:
            Path(path).write_text(s + "\n")
        return s

    @classmethod
    def from_json(cls, src: Union[str, Path]) -> "LTable":
        text = str(src)
        doc = json.loads(text if text.lstrip().startswith("{") else Path(src).read_text())
        n = len(doc["primary"]["index"]) + len(doc["dual"]["index"])
        q = np.empty(n, complex)
        L = np.empty(n, complex)
        dual = np.zeros(n, bool)
        for name, flag in (("primary", False), ("dual", True)):
            b = doc[name]
            idx = np.asarray(b["index"], int)
            q[idx] = np.asarray(b["q_re"]) + 1j * np.asarray(b["q_im"])
            L[idx] = np.asarray(b["L_re"]) + 1j * np.asarray(b["L_im"])
            dual[idx] = flag
        return cls(doc["H"], q, L, dual, np.asarray(doc["faces"], int), doc.get("meta", {}))


def _dedupe(st: np.ndarray) -> np.ndarray:
    st = np.sort(st, axis=1)
    rep = np.zeros(st.shape, bool)
    rep[:, 1:] = st[:, 1:] == st[:, :-1]
    return np.where(rep, -1, st)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def build_L(m: CmcSphereMesh) -> LTable:
    """``L`` at the Gauss images of the vertices of a solved sphere.

    Raises ``ValueError`` unless the Gauss map is orientation preserving at every
    vertex (``|g_z| > |g_zbar|``).
    """
    f = vertex_gauss_field(m)
    jac = np.abs(f.g_z) ** 2 - np.abs(f.g_zbar) ** 2
    if np.any(jac <= 0):
        raise ValueError(f"Gauss map Jacobian is not positive at {int(np.sum(jac <= 0))} vertices")
    # L = -M(q) rho and Lt = -M(Gamma) rho_Gamma: the same formula in each chart
    L = -M_of(f.g, m.H) * f.gbar_z / f.g_z
    t = LTable(m.H, f.g, L, f.dual, m.F, {"n_vertices": m.n_vertices})
    t.meta["sphere_vanish_max"] = sphere_self_check(m, t, f)["vanish_max"]
    return t


def surface_derivatives(t: LTable, m: CmcSphereMesh):
    """``(L, L_q, L_qbar)`` at the samples by the chain rule through the surface.

    ``L o G`` is differentiated over each vertex's 2-ring in tangent coordinates, then
    ``(L o G)_z = L_q G_z + L_qbar conj(G_zbar)`` and
    ``(L o G)_zbar = L_q G_zbar + L_qbar conj(G_z)`` are solved for ``L_q, L_qbar``; the
    determinant is the Gauss-map Jacobian ``|G_z|^2 - |G_zbar|^2``.
    """
    if m.n_vertices != t.n_samples:
        raise ValueError("table and mesh have different vertex counts")
    st = _TangentStencils.of(m, fitted_normals(m))
    f = vertex_gauss_field(m, st)
    Lz = np.empty(t.n_samples, complex)
    Lzb = np.empty(t.n_samples, complex)
    for flag in (False, True):
        sel = t.dual == flag
        ch = t.chart(flag)
        a, b = st.dz(ch.L[sel], ch.L[st.nb[sel]], sel)
        Lz[sel], Lzb[sel] = a, b
    Gz, Gzb = f.g_z, f.g_zbar
    det = np.abs(Gz) ** 2 - np.abs(Gzb) ** 2
    Lq = (Lz * np.conj(Gz) - Lzb * np.conj(Gzb)) / det
    Lqb = (Lzb * Gz - Lz * Gzb) / det
    return t.L, Lq, Lqb


def eqL_residuals(t: LTable, m: Optional[CmcSphereMesh] = None) -> np.ndarray:
    """``|(L_q + 2 L A) conj(L) - (L_qbar + 2 L B + M conj(B)) conj(M)|`` at every sample.

    With the generating mesh the derivatives come from :func:`surface_derivatives`,
    otherwise from quadratic fits over 2-rings in the Riemann-sphere chart.
    """
    L, Lq, Lqb = surface_derivatives(t, m) if m is not None else t.fit_at_samples()
    c = coefficients(t.q, t.H)
    A, B, M = c.A, c.B, c.M
    return np.abs((Lq + 2 * L * A) * np.conj(L) - (Lqb + 2 * L * B + M * np.conj(B)) * np.conj(M))


def verify_L(t: LTable, m: Optional[CmcSphereMesh] = None) -> dict:
    """``ratio_max = max |L/M|`` and the residual of the equation satisfied by ``L``.

    ``|L/M|`` takes the same value in both charts.  ``decay_ratio`` is the largest
    ``|q^4 L|`` over dual-chart samples divided by its median.
    """
    ratio = np.abs(t.L / M_of(t.q, t.H))
    res = eqL_residuals(t, m)
    outer = np.abs(t.L[t.dual])
    out = {
        "ratio_max": float(ratio.max()),
        "epsilon": float(1 - ratio.max()),
        "eqL_residual": float(res.max()),
        "eqL_residual_median": float(np.median(res)),
        "decay_ratio": float(outer.max() / np.median(outer)) if len(outer) else None,
    }
    if m is not None:
        out["n_vertices"] = m.n_vertices
    return out


def Q_eval(f: GaussField, t: LTable, noise_floor: Optional[float] = None,
           drop: Optional[np.ndarray] = None) -> dict:
    """``Q = L(g) g_z^2 + M(g) g_z conj(g)_z`` on every sample of ``f``.

    ``vanish_max`` is ``max |Q| / lam``, which does not depend on the conformal
    parameter.  ``cr_ratio_max`` is ``max |Q_zbar| / |Q|`` over grid samples where
    ``|Q| / lam`` exceeds the noise floor (default: 10x the generating sphere's
    ``vanish_max``); scattered fields give ``None``.  ``drop`` leaves one table sample
    per point out of the interpolation.
    """
    if not np.isclose(f.H, t.H):
        raise ValueError(f"field has H={f.H} but the table has H={t.H}")
    fn = f.normalized()
    s = fn.g
    L, _, _ = t.fit(s.ravel(), fn.dual.ravel(), drop)
    L = L.reshape(s.shape)
    Q = L * fn.g_z ** 2 + M_of(s, t.H) * fn.g_z * fn.gbar_z
    lam = conformal_factor(s, fn.g_z, t.H)
    qn = np.abs(Q) / lam
    out = {"Q": Q, "Q_normalized": qn, "vanish_max": float(np.nanmax(qn)),
           "vanish_median": float(np.nanmedian(qn)), "vanish_max_raw": float(np.nanmax(np.abs(Q)))}
    if noise_floor is None:
        noise_floor = 10 * t.meta.get("sphere_vanish_max", 0.0)
    out["noise_floor"] = float(noise_floor)
    out["cr_ratio_max"] = None
    if f.is_grid:
        du, dv = f.spacing()
        Qu, Qv = np.gradient(Q, du, dv, edge_order=2)
        Qzb = 0.5 * (Qu + 1j * Qv)
        mask = qn > noise_floor
        if mask.any():
            out["cr_ratio_max"] = float((np.abs(Qzb[mask]) / np.abs(Q[mask])).max())
    return out


def sphere_self_check(m: CmcSphereMesh, t: LTable, f: Optional[GaussField] = None) -> dict:
    """``Q`` on the sphere's own vertex field, each vertex left out of its own stencil."""
    f = vertex_gauss_field(m) if f is None else f
    if not np.array_equal(f.dual, np.abs(f.g) > 1):
        f = f.normalized()
    return Q_eval(f, t, noise_floor=0.0, drop=np.arange(m.n_vertices))
