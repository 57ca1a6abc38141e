"""CMC surfaces of Sol3 invariant under the x2-translations.

In the parameter ``t`` of the profile, the surface with mean curvature ``H`` is

    x1(t) = -(1/(2H)) int_0^t exp(-cos s/(2H)) cos s ds,
    x2    = -exp(1/(2H)) v / H,
    x3(t) = cos t / (2H).

Its Gauss map depends on one conformal coordinate ``u`` only and solves
``g_u = (1 + g^2) exp(1/(H (1 + g^2)))``; ``g = cot(t/2)`` and
``du/dt = -(1/2) exp(-(1 - cos t)/(2H))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import i0, i1

from .gauss_map import GaussField
from .sol3_core import christoffel, metric_diag

T_START = -np.pi / 2
T_END = 3 * np.pi / 2

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _integrand(s: np.ndarray, H: float) -> np.ndarray:
    return np.exp(-np.cos(s) / (2 * H)) * np.cos(s)


def _integral_from_zero(H: float, t: np.ndarray, panel: float = np.pi / 8) -> np.ndarray:
    """``int_0^t exp(-cos s/(2H)) cos s ds`` by composite 20-point Gauss-Legendre."""
    t = np.asarray(t, dtype=float)
    npan = max(1, int(np.ceil(np.abs(t).max(initial=0.0) / panel)))
    edges = np.linspace(0.0, 1.0, npan + 1)
    out = np.zeros_like(t)
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        s = t[..., None] * (mid + half * _GL_X)
        out += (t * half) * (_integrand(s, H) @ _GL_W)
    return out


def embedding_defect(H: float, panels: int = 16) -> float:
    """``int_{-pi/2}^{3pi/2} exp(-cos t/(2H)) cos t dt``; negative for every ``H > 0``."""
    if H <= 0:
        raise ValueError("H must be positive")
    edges = np.linspace(T_START, T_END, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1] - edges[0])
    s = mid + half * _GL_X
    return float(half * (_integrand(s, H) @ _GL_W).sum())


def embedding_defect_bessel(H: float) -> float:
    """Closed form ``-2 pi I1(1/(2H))`` of :func:`embedding_defect`."""
    return float(-2 * np.pi * i1(1 / (2 * H)))


def u_period(H: float) -> float:
    """Conformal length of one period of the Gauss map: ``pi e^{-1/(2H)} I0(1/(2H))``."""
    a = 1 / (2 * H)
    return float(np.pi * np.exp(-a) * i0(a))


# ---------------------------------------------------------------------------
# profile and parametrization
# ---------------------------------------------------------------------------


@dataclass
class ProfileCurve:
    H: float
    t: np.ndarray
    x1: np.ndarray
    x3: np.ndarray

    @property
    def loop_gap(self) -> float:
        """``x1(3pi/2) - x1(-pi/2)``, i.e. ``-embedding_defect(H) / (2H)``."""
        return float(_integral_from_zero(self.H, np.array([T_END]))[0] * (-1 / (2 * self.H))
                     - _integral_from_zero(self.H, np.array([T_START]))[0] * (-1 / (2 * self.H)))

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w") as fh:
            fh.write("# " + json.dumps({"H": self.H, "loop_gap": self.loop_gap}) + "\n")
            fh.write("t,x1,x3\n")
            np.savetxt(fh, np.column_stack([self.t, self.x1, self.x3]), delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "ProfileCurve":
        with open(path) as fh:
            header = json.loads(fh.readline()[1:])
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        return cls(header["H"], data[:, 0], data[:, 1], data[:, 2])


def profile(H: float, n: int = 512) -> ProfileCurve:
    if H <= 0:
        raise ValueError("H must be positive")
    if n < 16:
        raise ValueError("need at least 16 samples")
    t = np.linspace(T_START, T_END, n)
    return ProfileCurve(H, t, profile_x1(H, t), np.cos(t) / (2 * H))


def profile_x1(H: float, t) -> np.ndarray:
    return -_integral_from_zero(H, np.asarray(t, dtype=float)) / (2 * H)


def parametrize(H: float, t, v) -> np.ndarray:
    """Point of the cylinder at profile parameter ``t`` and ruling parameter ``v``."""
    if H <= 0:
        raise ValueError("H must be positive")
    t, v = np.broadcast_arrays(np.asarray(t, float), np.asarray(v, float))
    return np.stack(
        [profile_x1(H, t), -np.exp(1 / (2 * H)) * v / H, np.cos(t) / (2 * H)], axis=-1
    )


def parametric_mean_curvature(X, s, t, h: float = 1e-4) -> np.ndarray:
    """Mean curvature of a parametrized surface ``X(s, t)`` by centred differences.

    The sign refers to the unit normal along the raised ``X_s x X_t`` covector.
    """
    s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
    P = X(s, t)
    Xs = (X(s + h, t) - X(s - h, t)) / (2 * h)
    Xt = (X(s, t + h) - X(s, t - h)) / (2 * h)
    Xss = (X(s + h, t) - 2 * P + X(s - h, t)) / h ** 2
    Xtt = (X(s, t + h) - 2 * P + X(s, t - h)) / h ** 2
    Xst = (X(s + h, t + h) - X(s + h, t - h) - X(s - h, t + h) + X(s - h, t - h)) / (4 * h * h)
    gd = metric_diag(P)
    G = christoffel(P)  # G[..., k, i, j]

    def cov(a, b, ab):
        return ab + np.einsum("...kij,...i,...j->...k", G, a, b)

    ip = lambda a, b: np.sum(gd * a * b, axis=-1)
    nco = np.cross(Xs, Xt)  # covector orthogonal to both
    nvec = nco / gd
    nvec = nvec / np.sqrt(ip(nvec, nvec))[..., None]
    E, Fm, Gm = ip(Xs, Xs), ip(Xs, Xt), ip(Xt, Xt)
    L = ip(cov(Xs, Xs, Xss), nvec)
    Mm = ip(cov(Xs, Xt, Xst), nvec)
    N = ip(cov(Xt, Xt, Xtt), nvec)
    return (E * N - 2 * Fm * Mm + Gm * L) / (2 * (E * Gm - Fm ** 2))


# ---------------------------------------------------------------------------
# Gauss map
# ---------------------------------------------------------------------------


def _rhs_primary(H: float):
    return lambda u, y: (1 + y ** 2) * np.exp(1 / (H * (1 + y ** 2)))


def _rhs_dual(H: float):
    # gt = 1/g
    return lambda u, y: -(1 + y ** 2) * np.exp(y ** 2 / (H * (1 + y ** 2)))


def _chart_piece(rhs, y0: float, target: float, span: float, rtol: float):
    ev = lambda u, y: y[0] - target
    ev.terminal = True
    sol = solve_ivp(rhs, (0.0, span), [y0], method="DOP853", rtol=rtol, atol=1e-14,
                    dense_output=True, events=ev)
    if sol.status != 1:
        raise RuntimeError("chart crossing not reached; step-size failure near blow-up")
    return sol.sol, float(sol.t_events[0][0])


@dataclass
class CylinderGauss:
    """One period of the cylinder's Gauss map, starting at ``g = 1`` (``u = 0``).

    On ``[0, u_switch]`` the dual value ``1/g`` runs from 1 to -1 (through ``g = inf``);
    on ``[u_switch, period]`` ``g`` runs from -1 to 1.
    """

    H: float
    dual_sol: object
    primary_sol: object
    u_switch: float
    period: float

    def evaluate(self, u: np.ndarray):
        """Stored value, its ``u``-derivative, and the dual-chart flag (``i/g`` storage)."""
        u = np.mod(np.asarray(u, dtype=float), self.period)
        dual = u < self.u_switch
        val = np.empty(u.shape)
        der = np.empty(u.shape)
        if dual.any():
            y = self.dual_sol(u[dual])[0]
            val[dual] = y
            der[dual] = _rhs_dual(self.H)(0, y)
        if (~dual).any():
            y = self.primary_sol(u[~dual] - self.u_switch)[0]
            val[~dual] = y
            der[~dual] = _rhs_primary(self.H)(0, y)
        # dual chart stores i/g = i * (1/g)
        stored = np.where(dual, 1j * val, val + 0j)
        dstored = np.where(dual, 1j * der, der + 0j)
        return stored, dstored, dual

    def t_of_u(self, u: np.ndarray) -> np.ndarray:
        """Profile parameter ``t`` (decreasing in ``u``, ``t(0) = pi/2``)."""
        u = np.asarray(u, dtype=float)
        k = np.floor(u / self.period)
        ur = u - k * self.period
        stored, _, dual = self.evaluate(ur)
        y = np.where(dual, stored.imag, stored.real)
        half = np.where(dual, np.arctan2(y, 1.0), np.arctan2(1.0, y))
        # on the primary piece half lies in (pi/2, 3pi/4]; shift it below the dual piece
        half = np.where(dual, half, half - np.pi)
        return 2 * half - 2 * np.pi * k


def cylinder_gauss(H: float, rtol: float = 1e-13) -> CylinderGauss:
    if H <= 0:
        raise ValueError("H must be positive")
    span = 4 * u_period(H) + 10.0
    dsol, u1 = _chart_piece(_rhs_dual(H), 1.0, -1.0, span, rtol)
    psol, u2 = _chart_piece(_rhs_primary(H), -1.0, 1.0, span, rtol)
    return CylinderGauss(H, dsol, psol, u1, u1 + u2)


def gauss_of_cylinder(H: float, n: int = 256, nv: int = 5, u0: float = 0.0, periods: float = 1.0) -> GaussField:
    """Cylinder Gauss field on an ``n x nv`` grid covering ``periods`` periods in ``u``.

    The grid is square (``dv = du``) and starts at ``(u0, 0)``.
    """
    if n < 3 or nv < 3:
        raise ValueError("the residual stencil needs a grid of at least 3 x 3")
    cg = cylinder_gauss(H)
    u1 = np.linspace(u0, u0 + periods * cg.period, n)
    du = u1[1] - u1[0]
    v1 = du * np.arange(nv)
    U, V = np.meshgrid(u1, v1, indexing="ij")
    s, ds, dual = cg.evaluate(U)
    return GaussField(U, V, s, ds / 2, ds / 2, H, dual,
                      meta={"source": "cylinder", "period": cg.period})
