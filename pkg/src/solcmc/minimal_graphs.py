"""Minimal graphs ``x1 = f(x2, x3)`` in Sol3.

Such a graph is minimal exactly when

    (e^{2x3} f3^2 + 1) f22 - 2 e^{2x3} f2 f3 f23 + (e^{-2x3} + e^{2x3} f2^2) f33
        - (e^{2x3} f2^2 - e^{-2x3}) f3 = 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np


class Family(str, Enum):
    AFFINE = "Affine"  # a x2 + b
    EXP = "Exp"  # a e^{-x3}
    MIXED_EXP = "MixedExp"  # a x2 e^{-x3}
    EXP2 = "Exp2"  # x2 e^{-2 x3}


Jet = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]


@dataclass
class GraphFn:
    """A function of ``(x2, x3)`` with its first and second partials.

    ``jet(x2, x3)`` returns ``(f, f2, f3, f22, f23, f33)``.
    """

    jet: Callable[[np.ndarray, np.ndarray], Jet]
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, x2, x3):
        return self.jet(np.asarray(x2, float), np.asarray(x3, float))[0]

    @classmethod
    def from_function(cls, fun: Callable, h: float = 1e-4, family: str = "custom") -> "GraphFn":
        """Wrap a plain function, differentiating it by centred differences."""

        def jet(x2, x3):
            f = fun(x2, x3)
            fp2, fm2 = fun(x2 + h, x3), fun(x2 - h, x3)
            fp3, fm3 = fun(x2, x3 + h), fun(x2, x3 - h)
            f22 = (fp2 - 2 * f + fm2) / h ** 2
            f33 = (fp3 - 2 * f + fm3) / h ** 2
            f23 = (fun(x2 + h, x3 + h) - fun(x2 + h, x3 - h) - fun(x2 - h, x3 + h)
                   + fun(x2 - h, x3 - h)) / (4 * h * h)
            return f, (fp2 - fm2) / (2 * h), (fp3 - fm3) / (2 * h), f22, f23, f33

        return cls(jet, family, {"h": h})

    def consistency_error(self, x2, x3, h: float = 1e-3) -> float:
        """Gap between supplied first derivatives and centred differences of ``f``."""
        x2, x3 = np.asarray(x2, float), np.asarray(x3, float)
        _, f2, f3, *_ = self.jet(x2, x3)
        d2 = (self(x2 + h, x3) - self(x2 - h, x3)) / (2 * h)
        d3 = (self(x2, x3 + h) - self(x2, x3 - h)) / (2 * h)
        return float(max(np.abs(d2 - f2).max(), np.abs(d3 - f3).max()))

    def shifted(self, dx2: float = 0.0, c: float = 0.0) -> "GraphFn":
        """``f(x2 - dx2, x3) + c``."""
        base = self.jet

        def jet(x2, x3):
            f, *rest = base(x2 - dx2, x3)
            return (f + c, *rest)

        return GraphFn(jet, self.family, {**self.params, "dx2": dx2, "c": c})


def residual(g: GraphFn, x2, x3) -> np.ndarray:
    """Minimal-surface operator of the graph ``x1 = f(x2, x3)``."""
    x2, x3 = np.broadcast_arrays(np.asarray(x2, float), np.asarray(x3, float))
    _, f2, f3, f22, f23, f33 = g.jet(x2, x3)
    ep, em = np.exp(2 * x3), np.exp(-2 * x3)
    return (ep * f3 ** 2 + 1) * f22 - 2 * ep * f2 * f3 * f23 + (em + ep * f2 ** 2) * f33 \
        - (ep * f2 ** 2 - em) * f3


def entire_family(name, a: float = 1.0, b: float = 0.0) -> GraphFn:
    """The four explicit entire minimal graphs with exact derivatives."""
    try:
        fam = Family(name)
    except ValueError:
        raise ValueError(f"unknown family {name!r}; choose from {[f.value for f in Family]}") from None
    z = np.zeros_like

    if fam is Family.AFFINE:
        def jet(x2, x3):
            return a * x2 + b, a + z(x2), z(x2), z(x2), z(x2), z(x2)
    elif fam is Family.EXP:
        def jet(x2, x3):
            e = a * np.exp(-x3) + z(x2)
            return e, z(e), -e, z(e), z(e), e
    elif fam is Family.MIXED_EXP:
        def jet(x2, x3):
            e = a * np.exp(-x3) + z(x2)
            return x2 * e, e, -x2 * e, z(e), -e, x2 * e
    else:
        def jet(x2, x3):
            e = np.exp(-2 * x3) + z(x2)
            return x2 * e, e, -2 * x2 * e, z(e), -2 * e, 4 * x2 * e

    return GraphFn(jet, fam.value, {"a": a, "b": b})


def residual_sweep(
    g: GraphFn,
    x2_range: Tuple[float, float] = (-2.0, 2.0),
    x3_range: Tuple[float, float] = (-2.0, 2.0),
    n: int = 21,
    path: Optional[str] = None,
) -> np.ndarray:
    """Residual on an ``n x n`` grid as rows ``(x2, x3, residual)``; optionally written as CSV."""
    x2, x3 = np.meshgrid(np.linspace(*x2_range, n), np.linspace(*x3_range, n), indexing="ij")
    rows = np.column_stack([x2.ravel(), x3.ravel(), residual(g, x2, x3).ravel()])
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x2", "x3", "residual"])
            w.writerows(rows.tolist())
    return rows
