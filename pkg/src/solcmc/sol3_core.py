"""Closed-form geometry of Sol3.

Model: R^3 with metric ``e^{2 x3} dx1^2 + e^{-2 x3} dx2^2 + dx3^2`` and group law
``a . b = (a1 + e^{-a3} b1, a2 + e^{a3} b2, a3 + b3)``.  Points are arrays whose
last axis has length 3; every function broadcasts over leading axes.

Frame components refer to the left-invariant orthonormal frame
``E1 = e^{-x3} d/dx1, E2 = e^{x3} d/dx2, E3 = d/dx3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, Sequence[float]]

ORIGIN = np.zeros(3)


def _as3(p: ArrayLike) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {p.shape}")
    return p


# ---------------------------------------------------------------------------
# group structure
# ---------------------------------------------------------------------------


def group_mul(a: ArrayLike, b: ArrayLike) -> np.ndarray:
    """Group product ``a . b``; left multiplication by ``a`` is an isometry."""
    a = _as3(a)
    b = _as3(b)
    a, b = np.broadcast_arrays(a, b)
    out = np.empty_like(a)
    out[..., 0] = a[..., 0] + np.exp(-a[..., 2]) * b[..., 0]
    out[..., 1] = a[..., 1] + np.exp(a[..., 2]) * b[..., 1]
    out[..., 2] = a[..., 2] + b[..., 2]
    return out


def group_inverse(p: ArrayLike) -> np.ndarray:
    p = _as3(p)
    out = np.empty_like(p)
    out[..., 0] = -np.exp(p[..., 2]) * p[..., 0]
    out[..., 1] = -np.exp(-p[..., 2]) * p[..., 1]
    out[..., 2] = -p[..., 2]
    return out


def left_translation_differential(a: ArrayLike) -> np.ndarray:
    """Coordinate Jacobian of ``p -> a . p`` (constant in ``p``)."""
    a = _as3(a)
    return np.diag([np.exp(-a[2]), np.exp(a[2]), 1.0])


# ---------------------------------------------------------------------------
# metric and frame
# ---------------------------------------------------------------------------


def metric_diag(p: ArrayLike) -> np.ndarray:
    """Diagonal of the metric tensor in model coordinates."""
    p = _as3(p)
    z = p[..., 2]
    return np.stack([np.exp(2 * z), np.exp(-2 * z), np.ones_like(z)], axis=-1)


def metric_eval(p: ArrayLike, u: ArrayLike, v: ArrayLike) -> np.ndarray:
    """Inner product of coordinate vectors ``u`` and ``v`` at ``p``."""
    return np.sum(metric_diag(p) * _as3(u) * _as3(v), axis=-1)


def metric_norm(p: ArrayLike, u: ArrayLike) -> np.ndarray:
    return np.sqrt(metric_eval(p, u, u))


class FrameDirection(str, Enum):
    COORD_TO_FRAME = "coord_to_frame"
    FRAME_TO_COORD = "frame_to_coord"


def frame_convert(
    p: ArrayLike, vec: ArrayLike, direction: Union[FrameDirection, str]
) -> np.ndarray:
    """Convert a tangent vector between coordinate and frame components.

    ``a1 d1 + a2 d2 + a3 d3`` has frame components ``(e^{x3} a1, e^{-x3} a2, a3)``.
    """
    direction = FrameDirection(direction)
    p = _as3(p)
    vec = _as3(vec)
    z = p[..., 2]
    sign = 1.0 if direction is FrameDirection.COORD_TO_FRAME else -1.0
    scale = np.stack(
        [np.exp(sign * z), np.exp(-sign * z), np.ones_like(z)], axis=-1
    )
    return vec * scale


def coord_to_frame(p: ArrayLike, vec: ArrayLike) -> np.ndarray:
    return frame_convert(p, vec, FrameDirection.COORD_TO_FRAME)


def frame_to_coord(p: ArrayLike, vec: ArrayLike) -> np.ndarray:
    return frame_convert(p, vec, FrameDirection.FRAME_TO_COORD)


def covector_to_frame(p: ArrayLike, covec: ArrayLike) -> np.ndarray:
    """Frame components of the vector dual to a coordinate covector."""
    p = _as3(p)
    covec = _as3(covec)
    z = p[..., 2]
    scale = np.stack([np.exp(-z), np.exp(z), np.ones_like(z)], axis=-1)
    return covec * scale


# ---------------------------------------------------------------------------
# connection and curvature
# ---------------------------------------------------------------------------

# CONNECTION[i, j] = frame components of nabla_{E_i} E_j  (0-based indices)
CONNECTION = np.zeros((3, 3, 3))
CONNECTION[0, 0] = (0.0, 0.0, -1.0)
CONNECTION[0, 2] = (1.0, 0.0, 0.0)
CONNECTION[1, 1] = (0.0, 0.0, 1.0)
CONNECTION[1, 2] = (0.0, -1.0, 0.0)


def connection(i: int, j: int) -> np.ndarray:
    """Frame components of ``nabla_{E_i} E_j`` for 1-based ``i, j``."""
    if i not in (1, 2, 3) or j not in (1, 2, 3):
        raise ValueError("frame indices must lie in {1, 2, 3}")
    return CONNECTION[i - 1, j - 1].copy()


def covariant_derivative_frame(
    v: ArrayLike, w: ArrayLike, dw: ArrayLike
) -> np.ndarray:
    """``nabla_v W`` in frame components.

    ``w`` are the frame components of ``W`` at the point and ``dw`` the directional
    derivative of those components along ``v``.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return np.asarray(dw, dtype=float) + np.einsum("...i,...j,ijk->...k", v, w, CONNECTION)


def _bracket_table() -> np.ndarray:
    # [E_i, E_j] = nabla_i E_j - nabla_j E_i
    return CONNECTION - CONNECTION.transpose(1, 0, 2)


def riemann_tensor() -> np.ndarray:
    """``R[i, j, k] = R(E_i, E_j) E_k`` in frame components.

    For left-invariant fields with constant connection coefficients,
    ``R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z``.
    """
    G = CONNECTION
    brk = _bracket_table()
    R = np.zeros((3, 3, 3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                nyz = G[j, k]
                nxz = G[i, k]
                term1 = np.einsum("m,mn->n", nyz, G[i])
                term2 = np.einsum("m,mn->n", nxz, G[j])
                term3 = np.einsum("m,mn->n", brk[i, j], G[:, k])
                R[i, j, k] = term1 - term2 - term3
    return R


@dataclass(frozen=True)
class CurvatureInvariants:
    sectional_12: float
    sectional_13: float
    sectional_23: float
    ricci_diag: Tuple[float, float, float]
    scalar: float
    ricci: np.ndarray = field(repr=False, compare=False)


def curvature_invariants(p: ArrayLike = ORIGIN) -> CurvatureInvariants:
    """Sectional, Ricci and scalar curvature (the same at every point)."""
    _as3(p)
    R = riemann_tensor()

    def sec(i: int, j: int) -> float:
        # K(E_i, E_j) = <R(E_i, E_j) E_j, E_i>
        return float(R[i, j, j][i])

    ric = np.zeros((3, 3))
    for a in range(3):
        for b in range(3):
            # Ric(X, Y) = sum_k <R(E_k, X) Y, E_k>
            ric[a, b] = sum(R[k, a, b][k] for k in range(3))
    diag = tuple(float(x) for x in np.diag(ric))
    return CurvatureInvariants(
        sectional_12=sec(0, 1),
        sectional_13=sec(0, 2),
        sectional_23=sec(1, 2),
        ricci_diag=diag,  # type: ignore[arg-type]
        scalar=float(np.trace(ric)),
        ricci=ric,
    )


def ricci_normal(n_frame: ArrayLike) -> np.ndarray:
    """``Ric(N, N)`` for a unit vector given in frame components."""
    n = np.asarray(n_frame, dtype=float)
    return -2.0 * n[..., 2] ** 2


def christoffel(p: ArrayLike) -> np.ndarray:
    """Coordinate Christoffel symbols ``Gamma[k, i, j]`` at ``p``."""
    p = _as3(p)
    z = p[..., 2]
    G = np.zeros(p.shape[:-1] + (3, 3, 3))
    e2 = np.exp(2 * z)
    em2 = np.exp(-2 * z)
    G[..., 0, 0, 2] = G[..., 0, 2, 0] = 1.0
    G[..., 1, 1, 2] = G[..., 1, 2, 1] = -1.0
    G[..., 2, 0, 0] = -e2
    G[..., 2, 1, 1] = em2
    return G


# ---------------------------------------------------------------------------
# Killing fields and isometries
# ---------------------------------------------------------------------------


def killing_fields(p: ArrayLike) -> np.ndarray:
    """Coordinate components of F1, F2, F3 at ``p``; shape ``(..., 3, 3)``.

    ``F1 = d1``, ``F2 = d2``, ``F3 = -x1 d1 + x2 d2 + d3`` generate the left
    translations.
    """
    p = _as3(p)
    out = np.zeros(p.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 2, 0] = -p[..., 0]
    out[..., 2, 1] = p[..., 1]
    out[..., 2, 2] = 1.0
    return out


_SIGMA = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
_TAU = np.diag([-1.0, 1.0, 1.0])


@dataclass(frozen=True)
class Isometry:
    """An isometry stored as a word over ``sigma``, ``tau`` and left translations.

    Letters are ``"sigma"``, ``"tau"`` or a length-3 tuple (left translation by that
    point).  The word reads as a composition, so the rightmost letter acts first.
    """

    word: Tuple[Union[str, Tuple[float, float, float]], ...] = ()

    @classmethod
    def sigma(cls) -> "Isometry":
        return cls(("sigma",))

    @classmethod
    def tau(cls) -> "Isometry":
        return cls(("tau",))

    @classmethod
    def translation(cls, a: ArrayLike) -> "Isometry":
        a = _as3(a)
        return cls((tuple(float(x) for x in a),))

    def __matmul__(self, other: "Isometry") -> "Isometry":
        return Isometry(self.word + other.word)

    def power(self, k: int) -> "Isometry":
        return Isometry(self.word * k)

    def affine(self) -> Tuple[np.ndarray, np.ndarray]:
        """``(L, b)`` with ``iso(p) = L p + b``; every letter acts affinely."""
        L = np.eye(3)
        b = np.zeros(3)
        for letter in reversed(self.word):
            L1, b1 = _letter_affine(letter)
            L, b = L1 @ L, L1 @ b + b1
        return L, b

    def apply(self, p: ArrayLike) -> np.ndarray:
        p = _as3(p)
        for letter in reversed(self.word):
            if letter == "sigma":
                p = p @ _SIGMA.T
            elif letter == "tau":
                p = p @ _TAU.T
            else:
                p = group_mul(np.asarray(letter), p)
        return p


def _letter_affine(letter) -> Tuple[np.ndarray, np.ndarray]:
    if letter == "sigma":
        return _SIGMA.copy(), np.zeros(3)
    if letter == "tau":
        return _TAU.copy(), np.zeros(3)
    a = np.asarray(letter, dtype=float)
    return left_translation_differential(a), a.copy()


def isometry_apply(iso: Isometry, p: ArrayLike) -> np.ndarray:
    return iso.apply(p)


def isotropy_group(center: ArrayLike = ORIGIN) -> list:
    """The eight isometries fixing ``center`` (conjugates of the D4 at the origin)."""
    c = _as3(center)
    T = Isometry.translation(c)
    Tinv = Isometry.translation(group_inverse(c))
    s, t = Isometry.sigma(), Isometry.tau()
    words = []
    for k in range(4):
        words.append(s.power(k))
        words.append(s.power(k) @ t)
    return [T @ w @ Tinv for w in words]


# ---------------------------------------------------------------------------
# geodesics
# ---------------------------------------------------------------------------


class GeodesicStepError(RuntimeError):
    pass


def _geodesic_rhs(state: np.ndarray) -> np.ndarray:
    x, c = state[:3], state[3:]
    dx = frame_to_coord(x, c)
    dc = -np.einsum("i,j,ijk->k", c, c, CONNECTION)
    return np.concatenate([dx, dc])


def geodesic_flow(
    p: ArrayLike,
    v: ArrayLike,
    t: float,
    dt: float = 1e-3,
    *,
    speed_tol: float = 1e-6,
    return_velocity: bool = False,
):
    """Follow the geodesic from ``p`` with initial frame velocity ``v`` for time ``t``.

    Classical RK4 with fixed step; raises :class:`GeodesicStepError` if the speed
    drifts by more than ``speed_tol`` (relative).
    """
    if dt <= 0 or t < 0:
        raise ValueError("need dt > 0 and t >= 0")
    state = np.concatenate([_as3(p), _as3(v)]).astype(float)
    speed0 = np.linalg.norm(state[3:])
    nsteps = int(np.ceil(t / dt)) if t > 0 else 0
    h = t / nsteps if nsteps else 0.0
    # a blown-up step shows up as a non-finite speed below
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(nsteps):
            k1 = _geodesic_rhs(state)
            k2 = _geodesic_rhs(state + 0.5 * h * k1)
            k3 = _geodesic_rhs(state + 0.5 * h * k2)
            k4 = _geodesic_rhs(state + h * k3)
            state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if speed0 > 0:
        drift = abs(np.linalg.norm(state[3:]) - speed0) / speed0
        if not np.isfinite(drift) or drift > speed_tol:
            raise GeodesicStepError(
                f"speed drift {drift:.3e} exceeds {speed_tol:.1e}; reduce dt"
            )
    if return_velocity:
        return state[:3], state[3:]
    return state[:3]
