"""Contact classification of tangent vectors.

For a Finsler function F and an orthonormal frame of the chosen Riemannian
metric, C is the position field and G the y-gradient of F expressed in frame
components.  The cross product C x G vanishes exactly where the Finslerian
and Riemannian spheres touch to first order (vertical contact); directions
annihilating every horizontal derivative of F are horizontal contact points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import geometry
from .geometry import FinslerModel, PointData, TangentVector
from .sampling import fibonacci_sphere

__all__ = [
    "ContactClass",
    "f_ab",
    "cross_CG",
    "cross_batch",
    "classify",
    "find_vertical_contact",
]


@dataclass(frozen=True)
class ContactClass:
    vertical: bool
    horizontal: bool
    cross_norm: float


def _resolve(m: FinslerModel, v: TangentVector, data: PointData | None) -> PointData:
    if data is None:
        return geometry.point_data(m, v.base)
    return data


def _frame_fields(m, v, data):
    """Frame components (C, G, b) for a single tangent vector.

    C is the vector itself, G the y-gradient covector, and b = -2 X_i F the
    right-hand side of the compatibility equations, all in the orthonormal
    frame at v.base.
    """
    data = _resolve(m, v, data)
    y = np.asarray(v.y, dtype=float)
    yhat = data.Linv @ y
    F, C, G, b = geometry.frame_batch(m, data, yhat[None, :])
    return float(F[0]), C[0], G[0], b[0], data


def f_ab(m: FinslerModel, v: TangentVector, data: PointData | None = None) -> np.ndarray:
    """The three independent values (f_23, f_31, f_12), f_ab = y^a G_b - y^b G_a."""
    _, C, G, _, _ = _frame_fields(m, v, data)
    f23 = C[1] * G[2] - C[2] * G[1]
    f31 = C[2] * G[0] - C[0] * G[2]
    f12 = C[0] * G[1] - C[1] * G[0]
    return np.array([f23, f31, f12])


def cross_CG(m: FinslerModel, v: TangentVector, data: PointData | None = None) -> np.ndarray:
    """C x G in frame components; equals (f_23, f_31, f_12)."""
    _, C, G, _, _ = _frame_fields(m, v, data)
    return np.cross(C, G)


def cross_batch(m: FinslerModel, data: PointData, yhat: np.ndarray):
    """Vectorized (cross, b, F, G) over rows of frame-component directions."""
    F, C, G, b = geometry.frame_batch(m, data, yhat)
    return np.cross(C, G), b, F, G


def classify(
    m: FinslerModel,
    v: TangentVector,
    data: PointData | None = None,
    eps_v: float = 1e-8,
    eps_h: float = 1e-8,
) -> ContactClass:
    """Vertical and horizontal contact tests with relative thresholds."""
    F, C, G, b, _ = _frame_fields(m, v, data)
    cn = float(np.linalg.norm(np.cross(C, G)))
    vertical = bool(cn <= eps_v * (1.0 + np.linalg.norm(C) * np.linalg.norm(G)))
    # b = -2 X_i^{h*} F in frame components
    horizontal = bool(0.5 * float(np.max(np.abs(b))) <= eps_h * (1.0 + abs(F)))
    return ContactClass(vertical=vertical, horizontal=horizontal, cross_norm=cn)


def find_vertical_contact(
    m: FinslerModel,
    p,
    data: PointData | None = None,
    n_scan: int = 2048,
) -> tuple[np.ndarray, float]:
    """Locate a unit direction minimizing |C x G| at the point p.

    Coarse Fibonacci-lattice scan followed by Nelder-Mead refinement of the
    normalized objective.  Returns (direction in frame components, residual);
    a residual that stays large signals a numerical failure, since a zero of
    C x G always exists.
    """
    if data is None:
        data = geometry.point_data(m, np.asarray(p, dtype=float))
    lattice = fibonacci_sphere(n_scan)
    cross, _, _, _ = cross_batch(m, data, lattice)
    norms = np.linalg.norm(cross, axis=1)
    start = lattice[int(np.argmin(norms))]

    def objective(u):
        r = np.linalg.norm(u)
        if r < 1e-12:
            return np.inf
        c, _, _, _ = cross_batch(m, data, (u / r)[None, :])
        return float(np.linalg.norm(c[0]))

    res = optimize.minimize(
        objective,
        start,
        method="Nelder-Mead",
        options={"xatol": 1e-14, "fatol": 1e-16, "maxiter": 800, "maxfev": 1600},
    )
    u = res.x / np.linalg.norm(res.x)
    return u, objective(u)
