"""Gauss-map calculus for CMC surfaces in Sol3.

The Gauss map ``g`` is the unit normal, left-translated to the origin and projected
stereographically: ``g = (N1 + i N2) / (1 + N3)``.  Values near infinity are handled
in the dual chart ``q -> i/q``; the elliptic equation, the coefficient ``M`` (up to the
factor ``|q|^4``) and the representation formula all have the same shape in both charts.

Scalars are plain Python/numpy complex numbers.  The point at infinity is any complex
number with an infinite component (``INF``); :class:`ExtendedComplex` wraps this for
callers that want an explicit type.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .sol3_core import group_inverse, group_mul

INF = complex(np.inf, 0.0)

Number = Union[complex, float, np.ndarray]


class SingularCoefficientError(ZeroDivisionError):
    """``R(q) = 0`` or another forbidden denominator was hit."""


class DegenerateInputError(ValueError):
    pass


class IntegrabilityError(RuntimeError):
    """The closed-loop defect of the representation integrands exceeded tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def is_infinite(q: Number) -> np.ndarray:
    q = np.asarray(q, dtype=complex)
    return np.isinf(q.real) | np.isinf(q.imag)


@dataclass(frozen=True)
class ExtendedComplex:
    """A point of the Riemann sphere."""

    value: complex

    @classmethod
    def infinity(cls) -> "ExtendedComplex":
        return cls(INF)

    @property
    def is_infinite(self) -> bool:
        return bool(is_infinite(self.value))

    def dual(self) -> "ExtendedComplex":
        return ExtendedComplex(complex(dual_value(self.value)))

    def __complex__(self) -> complex:
        return complex(self.value)


def dual_value(q: Number) -> Number:
    """``q -> i/q`` with ``0 <-> infinity``."""
    if isinstance(q, ExtendedComplex):
        return q.dual()
    arr = np.asarray(q, dtype=complex)
    inf = is_infinite(arr)
    zero = arr == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1j / np.where(zero | inf, 1.0, arr)
    out = np.where(inf, 0.0, np.where(zero, INF, out))
    return complex(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# coefficient functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Coefficients:
    R: Number
    A: Number
    B: Number
    M: Number


def R_of(q: Number, H: float) -> Number:
    q = np.asarray(q, dtype=complex)
    r2 = (q * q.conj()).real
    return H * (1 + r2) ** 2 + q * q - q.conj() ** 2


def coefficients(q: Number, H: float) -> Coefficients:
    """``R, A, B, M`` of the Gauss-map equation at ``q`` (vectorized).

    At ``q = infinity``: ``R = infinity`` and ``A = B = M = 0``.
    """
    if isinstance(q, ExtendedComplex):
        q = q.value
    q = np.asarray(q, dtype=complex)
    inf = is_infinite(q)
    qf = np.where(inf, 0.0, q)
    r2 = (qf * qf.conj()).real
    R = R_of(qf, H)
    if np.any((np.abs(R) == 0) & ~inf):
        raise SingularCoefficientError("R(q) = 0 (only possible for H = 0)")
    Rs = np.where(inf, 1.0, R)
    A = (2 * H * (1 + r2) * qf.conj() + 2 * qf) / Rs
    B = -4 * H * (1 + r2) * (qf.conj() + qf ** 3) / np.abs(Rs) ** 2
    M = 1.0 / Rs
    R = np.where(inf, INF, R)
    A, B, M = (np.where(inf, 0.0, x) for x in (A, B, M))
    if q.ndim == 0:
        return Coefficients(complex(R), complex(A), complex(B), complex(M))
    return Coefficients(R, A, B, M)


def M_of(q: Number, H: float) -> Number:
    return coefficients(q, H).M


# ---------------------------------------------------------------------------
# pointwise formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrameVelocity:
    """Frame components of ``X_z`` and the conformal factor ``lam``."""

    A1: Number
    A2: Number
    A3: Number
    lam: Number


def frame_velocity(g: Number, g_z: Number, H: float) -> FrameVelocity:
    g = np.asarray(g, dtype=complex)
    g_z = np.asarray(g_z, dtype=complex)
    if np.any(is_infinite(g)) or np.any(g == 0):
        raise DegenerateInputError("frame formulas need g outside {0, inf}; use the dual chart")
    if np.any(g_z == 0):
        raise DegenerateInputError("g_z = 0: antiholomorphic point")
    gb = g.conj()
    eta = 4 * gb * g_z / R_of(g, H)
    A1 = -(1 - gb ** 2) * eta / (4 * gb)
    A2 = 1j * (1 + gb ** 2) * eta / (4 * gb)
    A3 = eta / 2
    lam = (1 + np.abs(g) ** 2) ** 2 * np.abs(eta) ** 2 / (4 * np.abs(g) ** 2)
    return FrameVelocity(*(_unwrap(x) for x in (A1, A2, A3, lam)))


def conformal_factor(g: Number, g_z: Number, H: float) -> Number:
    """``lam = 4 (1+|g|^2)^2 |g_z|^2 / |R(g)|^2``; finite at ``g = 0``."""
    g = np.asarray(g, dtype=complex)
    lam = 4 * (1 + np.abs(g) ** 2) ** 2 * np.abs(g_z) ** 2 / np.abs(R_of(g, H)) ** 2
    return _unwrap(lam)


def hopf_P(g: Number, g_z: Number, gbar_z: Number, H: float) -> Number:
    """Hopf differential coefficient ``P = 2 g_z conj(g)_z / R - 2 (1 - conj(g)^4) g_z^2 / R^2``."""
    g = np.asarray(g, dtype=complex)
    R = R_of(g, H)
    if np.any(R == 0):
        raise SingularCoefficientError("R(g) = 0")
    gb = g.conj()
    P = 2 * g_z * gbar_z / R - 2 * (1 - gb ** 4) * np.asarray(g_z) ** 2 / R ** 2
    return _unwrap(P)


def umbilicity(g: Number, g_z: Number, gbar_z: Number, H: float) -> Number:
    """``|P| / lam``, which depends on the derivatives only through ``gbar_z / g_z``.

    Equals ``sqrt((|B|^2 - 2 H^2) / 8)`` for the second fundamental form ``B``.
    """
    g = np.asarray(g, dtype=complex)
    rho = np.asarray(gbar_z, dtype=complex) / np.asarray(g_z, dtype=complex)
    val = np.abs(R_of(g, H) * rho - 1 + g.conj() ** 4) / (2 * (1 + np.abs(g) ** 2) ** 2)
    return _unwrap(val)


@dataclass(frozen=True)
class MeanCurvature:
    value: Number
    imag_residual: Number


def mean_curvature_from_gauss(g: Number, g_z: Number, A3: Number) -> MeanCurvature:
    g = np.asarray(g, dtype=complex)
    A3 = np.asarray(A3, dtype=complex)
    if np.any(A3 == 0):
        raise DegenerateInputError("A3 = 0")
    w = (1 + np.abs(g) ** 2) ** 2
    Hc = 2 * g.conj() * np.asarray(g_z) / (w * A3) - (g ** 2 - g.conj() ** 2) / w
    return MeanCurvature(_unwrap(Hc.real), _unwrap(Hc.imag))


def minimal_Qstar(g: Number, g_z: Number, gbar_z: Number, *, atol: float = 1e-14) -> Number:
    """``Q* = g_z conj(g)_z / (g^2 - conj(g)^2)`` for minimal surfaces."""
    g = np.asarray(g, dtype=complex)
    Rs = g ** 2 - g.conj() ** 2
    if np.any(np.abs(Rs) <= atol):
        raise SingularCoefficientError("g^2 - conj(g)^2 = 0: g real or purely imaginary")
    return _unwrap(np.asarray(g_z) * np.asarray(gbar_z) / Rs)


def _unwrap(x):
    x = np.asarray(x)
    return x.item() if x.ndim == 0 else x


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


@dataclass
class GaussField:
    """Samples of a Gauss map with conformal-parameter derivatives.

    ``g``, ``g_z``, ``g_zbar`` are stored in the chart given by ``dual``: where
    ``dual`` is true the stored value is ``i/g`` and the derivatives are those of
    ``i/g``.  On a grid, ``u`` and ``v`` are 2-D arrays from ``np.meshgrid(..,
    indexing="ij")`` with ``z = u + i v``; scattered fields use 1-D arrays.
    """

    u: np.ndarray
    v: np.ndarray
    g: np.ndarray
    g_z: np.ndarray
    g_zbar: np.ndarray
    H: float
    dual: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=complex)
        self.g_z = np.asarray(self.g_z, dtype=complex)
        self.g_zbar = np.asarray(self.g_zbar, dtype=complex)
        if self.dual is None:
            self.dual = np.zeros(self.g.shape, dtype=bool)
        self.dual = np.asarray(self.dual, dtype=bool)

    @property
    def is_grid(self) -> bool:
        return self.g.ndim == 2

    @property
    def gbar_z(self) -> np.ndarray:
        return self.g_zbar.conj()

    def spacing(self) -> Tuple[float, float]:
        if not self.is_grid:
            raise ValueError("scattered field has no grid spacing")
        return float(self.u[1, 0] - self.u[0, 0]), float(self.v[0, 1] - self.v[0, 0])

    def primary_values(self) -> np.ndarray:
        """``g`` in the primary chart (``INF`` where the dual value is 0)."""
        return np.where(self.dual, dual_value(self.g), self.g)

    def admissible(self, atol: float = 0.0) -> np.ndarray:
        """Nowhere-antiholomorphic mask ``|g_z| > atol``."""
        return np.abs(self.g_z) > atol

    def normalized(self) -> "GaussField":
        """Re-chart so that the stored value has modulus at most one."""
        flip = np.abs(self.g) > 1
        return _switch_charts(self, flip)

    # -- CSV ---------------------------------------------------------------

    def to_csv(self, path: Union[str, Path]) -> None:
        header = {"H": self.H, "shape": list(self.g.shape), **self.meta}
        cols = [
            self.u.ravel(), self.v.ravel(),
            self.g.real.ravel(), self.g.imag.ravel(),
            self.g_z.real.ravel(), self.g_z.imag.ravel(),
            self.g_zbar.real.ravel(), self.g_zbar.imag.ravel(),
            self.dual.ravel().astype(int),
        ]
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            fh.write("u,v,re_g,im_g,re_g_z,im_g_z,re_g_zbar,im_g_zbar,chart\n")
            np.savetxt(fh, np.column_stack(cols), delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "GaussField":
        with open(path) as fh:
            header = json.loads(fh.readline()[1:])
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        shape = tuple(header.pop("shape"))
        H = header.pop("H")
        r = lambda a: a.reshape(shape)
        chart = r(data[:, 8] != 0) if data.shape[1] > 8 else None
        return cls(
            u=r(data[:, 0]), v=r(data[:, 1]),
            g=r(data[:, 2] + 1j * data[:, 3]),
            g_z=r(data[:, 4] + 1j * data[:, 5]),
            g_zbar=r(data[:, 6] + 1j * data[:, 7]),
            H=H, dual=chart, meta=header,
        )


def _switch_charts(f: GaussField, mask: np.ndarray) -> GaussField:
    """Move the masked samples to the other chart (same underlying map)."""
    s = f.g[mask]
    if np.any(s == 0):
        raise DegenerateInputError("cannot re-chart a sample sitting at the chart pole")
    g = f.g.copy()
    gz = f.g_z.copy()
    gzb = f.g_zbar.copy()
    g[mask] = 1j / s
    gz[mask] = -1j * f.g_z[mask] / s ** 2
    gzb[mask] = -1j * f.g_zbar[mask] / s ** 2
    dual = f.dual.copy()
    dual[mask] = ~dual[mask]
    return replace(f, g=g, g_z=gz, g_zbar=gzb, dual=dual)


def dual_field(f: GaussField) -> GaussField:
    """The field of ``i/g``.

    A sample stored as ``s`` in one chart of ``g`` is the same number ``s`` in the
    opposite chart of ``i/g``, so only the chart flags change.
    """
    return replace(f, dual=~f.dual, meta=dict(f.meta))


def orientation_reversed(f: GaussField) -> GaussField:
    """Field of ``G(z) = 1/conj(g(conj z))`` at mean curvature ``-H`` (grid fields only).

    A stored value ``s`` of ``g(conj z)`` in either chart becomes the stored value
    ``i conj(s)`` of ``G`` in the opposite chart.
    """
    if not f.is_grid:
        raise ValueError("grid field required")
    flip = lambda a: a[:, ::-1]
    # h(z) = g(conj z): h_z = g_zbar(conj z), h_zbar = g_z(conj z)
    s, h_z, h_zbar = flip(f.g), flip(f.g_zbar), flip(f.g_z)
    return replace(
        f,
        v=-flip(f.v),
        g=1j * s.conj(),
        g_z=1j * h_zbar.conj(),
        g_zbar=1j * h_z.conj(),
        dual=~flip(f.dual),
        H=-f.H,
        meta=dict(f.meta),
    )


# ---------------------------------------------------------------------------
# finite differences on grids
# ---------------------------------------------------------------------------


def _neighbors_in_chart(f: GaussField, di: int, dj: int) -> np.ndarray:
    """Shifted stored values, each re-expressed in the chart of the centre sample."""
    nu, nv = f.g.shape
    out = np.full(f.g.shape, np.nan + 0j)
    src_i = slice(max(di, 0), nu + min(di, 0))
    dst_i = slice(max(-di, 0), nu + min(-di, 0))
    src_j = slice(max(dj, 0), nv + min(dj, 0))
    dst_j = slice(max(-dj, 0), nv + min(-dj, 0))
    val = f.g[src_i, src_j]
    same = f.dual[src_i, src_j] == f.dual[dst_i, dst_j]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[dst_i, dst_j] = np.where(same, val, 1j / val)
    return out


def grid_derivatives(f: GaussField):
    """Centred differences ``(g_z, g_zbar, g_zzbar)`` in the chart of each sample.

    Boundary samples are NaN.
    """
    du, dv = f.spacing()
    c = f.g
    e, w = _neighbors_in_chart(f, 1, 0), _neighbors_in_chart(f, -1, 0)
    n, s = _neighbors_in_chart(f, 0, 1), _neighbors_in_chart(f, 0, -1)
    g_u = (e - w) / (2 * du)
    g_v = (n - s) / (2 * dv)
    lap = (e - 2 * c + w) / du ** 2 + (n - 2 * c + s) / dv ** 2
    return (g_u - 1j * g_v) / 2, (g_u + 1j * g_v) / 2, lap / 4


def pde_residual(f: GaussField) -> np.ndarray:
    """``g_zzbar - A g_z g_zbar - B g_z conj(g)_zbar`` per interior sample (NaN on the boundary).

    Every derivative comes from centred differences of the stored values, each sample
    evaluated in its own chart.
    """
    g_z, g_zb, g_zzb = grid_derivatives(f)
    co = coefficients(f.g, f.H)
    res = g_zzb - co.A * g_z * g_zb - co.B * g_z * g_z.conj()
    return res


def max_residual(res: np.ndarray) -> float:
    return float(np.nanmax(np.abs(res)))


# ---------------------------------------------------------------------------
# representation formula
# ---------------------------------------------------------------------------


@dataclass
class SurfacePatch:
    points: np.ndarray  # (nu, nv, 3)
    lam: np.ndarray  # (nu, nv)
    integrability_residual: float


def representation_integrands(g: np.ndarray, g_z: np.ndarray, dual: np.ndarray, H: float):
    """Functions ``(a1, a2, a3)`` with ``x3_z = a3``, ``x1_z = e^{-x3} a1``, ``x2_z = e^{x3} a2``."""
    g = np.asarray(g, dtype=complex)
    R = R_of(g, H)
    gb = g.conj()
    a3 = np.where(dual, -2 * gb * g_z / R, 2 * gb * g_z / R)
    a1 = np.where(dual, 1j * (gb ** 2 + 1) * g_z / R, (gb ** 2 - 1) * g_z / R)
    a2 = np.where(dual, (gb ** 2 - 1) * g_z / R, 1j * (gb ** 2 + 1) * g_z / R)
    return a1, a2, a3


def _cumtrap(y: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Cumulative trapezoid with the Euler-Maclaurin end correction (fourth order)."""
    y = np.moveaxis(y, axis, 0)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * h * (y[1:] + y[:-1]), axis=0)
    if len(y) >= 3:
        dy = np.gradient(y, h, axis=0, edge_order=2)
        out -= h * h / 12.0 * (dy - dy[0])
    return np.moveaxis(out, 0, axis)


def _staircase(du_f: np.ndarray, dv_f: np.ndarray, du: float, dv: float, i0: int, j0: int) -> np.ndarray:
    """Integrate a gradient field from ``(i0, j0)``: along ``u`` on row ``j0``, then along ``v``."""
    col = _cumtrap(du_f[:, j0], du, 0)
    col = col - col[i0]
    rows = _cumtrap(dv_f, dv, 1)
    rows = rows - rows[:, j0:j0 + 1]
    return col[:, None] + rows


def _loop_defect(du_f: np.ndarray, dv_f: np.ndarray, du: float, dv: float) -> np.ndarray:
    """Trapezoid circulation around each plaquette divided by its area."""
    bottom = 0.5 * du * (du_f[1:, :-1] + du_f[:-1, :-1])
    top = 0.5 * du * (du_f[1:, 1:] + du_f[:-1, 1:])
    left = 0.5 * dv * (dv_f[:-1, 1:] + dv_f[:-1, :-1])
    right = 0.5 * dv * (dv_f[1:, 1:] + dv_f[1:, :-1])
    return (bottom + right - top - left) / (du * dv)


def integrate_representation(
    f: GaussField,
    seed=(0.0, 0.0, 0.0),
    *,
    seed_index: Tuple[int, int] = (0, 0),
    tol: float = 1e-2,
) -> SurfacePatch:
    """Reconstruct the immersion from a Gauss field on a grid.

    ``x3`` is integrated first because the ``x1`` and ``x2`` integrands depend on
    it.  Paths are axis-aligned staircases from ``seed_index``.  The reported
    residual is the largest plaquette circulation per unit area over the three
    coordinates (scaled by ``e^{-+x3}`` for ``x1``, ``x2``).  Raises
    :class:`IntegrabilityError` above ``tol``.
    """
    if not f.is_grid:
        raise ValueError("representation integration needs a grid field")
    if f.H == 0:
        raise DegenerateInputError("H = 0 is not covered by the representation formula")
    if np.any(f.g_z == 0):
        raise DegenerateInputError("field is not nowhere antiholomorphic")
    du, dv = f.spacing()
    i0, j0 = seed_index
    seed = np.asarray(seed, dtype=float)
    a1, a2, a3 = representation_integrands(f.g, f.g_z, f.dual, f.H)

    # x_u = 2 Re x_z, x_v = -2 Im x_z
    x3 = seed[2] + _staircase(2 * a3.real, -2 * a3.imag, du, dv, i0, j0)
    d1u, d1v = 2 * (np.exp(-x3) * a1).real, -2 * (np.exp(-x3) * a1).imag
    d2u, d2v = 2 * (np.exp(x3) * a2).real, -2 * (np.exp(x3) * a2).imag
    x1 = seed[0] + _staircase(d1u, d1v, du, dv, i0, j0)
    x2 = seed[1] + _staircase(d2u, d2v, du, dv, i0, j0)

    defect = max(
        np.abs(_loop_defect(2 * a3.real, -2 * a3.imag, du, dv)).max(),
        np.abs(_loop_defect(d1u, d1v, du, dv) * np.exp(x3[:-1, :-1])).max(),
        np.abs(_loop_defect(d2u, d2v, du, dv) * np.exp(-x3[:-1, :-1])).max(),
    )
    # same expression in either chart
    lam = conformal_factor(f.g, f.g_z, f.H)
    patch = SurfacePatch(np.stack([x1, x2, x3], axis=-1), lam, float(defect))
    if not np.isfinite(defect) or defect > tol:
        raise IntegrabilityError(f"loop defect {defect:.3e} exceeds tolerance {tol:.1e}", float(defect))
    return patch


def translation_between(p_old, p_new) -> np.ndarray:
    """The left translation ``a`` with ``a . p_old = p_new``."""
    return group_mul(np.asarray(p_new, float), group_inverse(np.asarray(p_old, float)))


# ---------------------------------------------------------------------------
# minimal case
# ---------------------------------------------------------------------------


def minimal_Qstar_field(f: GaussField) -> np.ndarray:
    """``|d Q* / d zbar|`` by centred differences (primary-chart grid fields)."""
    if np.any(f.dual):
        raise ValueError("minimal Q* check expects a primary-chart field")
    Q = minimal_Qstar(f.g, f.g_z, f.gbar_z)
    du, dv = f.spacing()
    Qu = np.full(Q.shape, np.nan + 0j)
    Qv = np.full(Q.shape, np.nan + 0j)
    Qu[1:-1, :] = (Q[2:, :] - Q[:-2, :]) / (2 * du)
    Qv[:, 1:-1] = (Q[:, 2:] - Q[:, :-2]) / (2 * dv)
    return (Qu + 1j * Qv) / 2
