"""Minimum-norm torsion in the undetermined case and connection assembly.

When the solution space of the compatibility equations is a line of axis
motions, writing the grouped unknowns as t_1 = 2(P + sD), t_2 = 2(Q + tD),
t_3 = 2(R + uD) turns the squared torsion norm into an explicit quadratic in
the parameters (s, t, u).  Its unique minimizer has a closed form; the
resulting torsion feeds the Christoffel process, which converts any metric
connection's torsion into full connection coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import compat, expr as ex, geometry
from .compat import Tolerances, TorsionAtPoint
from .geometry import FinslerModel, OrthoFrame, PointData

__all__ = [
    "UndeterminedData",
    "QPCoefficients",
    "ConnectionAtPoint",
    "InfeasibleModel",
    "qp_coefficients",
    "qp_value",
    "extremal_parameters",
    "hessian_check",
    "torsion_from_parameters",
    "decompose_torsion",
    "connection_coefficients",
    "connection_from_axis",
    "LeviCivitaField",
    "AxisField",
    "ExtremalField",
]


class InfeasibleModel(ValueError):
    """Raised when a connection field is requested for an infeasible point."""


@dataclass
class UndeterminedData:
    """Axis D and the determined parts of the grouped solution vectors."""

    D: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray


class QPCoefficients(NamedTuple):
    a: float
    b: float
    c: float
    d: float
    e: float
    f: float
    g: float
    h: float
    i: float
    j: float
    k: float
    l: float
    m: float


def qp_coefficients(ud: UndeterminedData) -> QPCoefficients:
    """The thirteen scalars of the squared-norm quadratic in (s, t, u)."""
    D1, D2, D3 = ud.D
    P1, P2, P3 = ud.P
    Q1, Q2, Q3 = ud.Q
    R1, R2, R3 = ud.R
    return QPCoefficients(
        a=2 * D1 ** 2 + D2 ** 2 + D3 ** 2,
        b=D1 ** 2 + 2 * D2 ** 2 + D3 ** 2,
        c=D1 ** 2 + D2 ** 2 + 2 * D3 ** 2,
        d=4 * D1 * P1 + 2 * D1 * Q2 + 2 * D1 * R3 + 2 * D2 * P2 + 2 * D3 * P3,
        e=2 * D1 * Q1 + 2 * D2 * P1 + 4 * D2 * Q2 + 2 * D2 * R3 + 2 * D3 * Q3,
        f=2 * D1 * R1 + 2 * D2 * R2 + 2 * D3 * P1 + 2 * D3 * Q2 + 4 * D3 * R3,
        g=2 * D1 * D2,
        h=2 * D1 * D3,
        i=2 * D2 * D3,
        j=(2 * P1 ** 2 + P2 ** 2 + P3 ** 2
           + Q1 ** 2 + 2 * Q2 ** 2 + Q3 ** 2
           + R1 ** 2 + R2 ** 2 + 2 * R3 ** 2
           + 2 * P1 * Q2 + 2 * P1 * R3 + 2 * Q2 * R3),
        k=D1 ** 2 + 2 * D2 ** 2 + 2 * D3 ** 2,
        l=2 * D1 ** 2 + D2 ** 2 + 2 * D3 ** 2,
        m=2 * D1 ** 2 + 2 * D2 ** 2 + D3 ** 2,
    )


def qp_value(coef: QPCoefficients, stu) -> float:
    s, t, u = stu
    return (coef.a * s * s + coef.b * t * t + coef.c * u * u
            + coef.d * s + coef.e * t + coef.f * u
            + coef.g * s * t + coef.h * s * u + coef.i * t * u + coef.j)


def extremal_parameters(ud: UndeterminedData) -> np.ndarray:
    """Closed-form minimizer (s0, t0, u0) of the squared torsion norm."""
    co = qp_coefficients(ud)
    d2 = float(ud.D @ ud.D)
    if d2 <= 0.0:
        raise ValueError("zero axis vector")
    denom = 8.0 * d2 * d2
    s0 = (-2 * co.d * co.k + co.e * co.g + co.f * co.h) / denom
    t0 = (co.d * co.g - 2 * co.e * co.l + co.f * co.i) / denom
    u0 = (co.d * co.h + co.e * co.i - 2 * co.f * co.m) / denom
    return np.array([s0, t0, u0])


def hessian_check(ud: UndeterminedData) -> tuple[float, float, float]:
    """Leading principal minors of the quadratic's Hessian, all positive."""
    co = qp_coefficients(ud)
    H = np.array([
        [2 * co.a, co.g, co.h],
        [co.g, 2 * co.b, co.i],
        [co.h, co.i, 2 * co.c],
    ])
    d1 = float(H[0, 0])
    d2 = float(H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0])
    d3 = float(np.linalg.det(H))
    return d1, d2, d3


_ID3 = np.eye(3)


def torsion_from_parameters(
    ud: UndeterminedData,
    stu,
    frame: OrthoFrame | None = None,
) -> TorsionAtPoint:
    """Torsion components for parameters (s, t, u) on the solution line."""
    s, t, u = stu
    D1, D2, D3 = ud.D
    P1, P2, P3 = ud.P
    Q1, Q2, Q3 = ud.Q
    R1, R2, R3 = ud.R
    t9 = np.array([
        P3 + s * D3,                       # T^1_12
        Q3 + t * D3,                       # T^2_12
        -P1 - Q2 - s * D1 - t * D2,        # T^3_12
        -P2 - s * D2,                      # T^1_13
        P1 + R3 + s * D1 + u * D3,         # T^2_13
        -R2 - u * D2,                      # T^3_13
        -Q2 - R3 - t * D2 - u * D3,        # T^1_23
        Q1 + t * D1,                       # T^2_23
        R1 + u * D1,                       # T^3_23
    ])
    if frame is None:
        frame = OrthoFrame(_ID3, _ID3)
    return TorsionAtPoint(t9, frame)


def decompose_torsion(t9: np.ndarray, axis: np.ndarray) -> tuple[UndeterminedData, np.ndarray]:
    """Split a solution into determined parts and parameters along the axis.

    Inverts t_i = 2(P + sD) etc.: the parameter is the D-component of t_i/2
    and P, Q, R are the orthogonal remainders.
    """
    D = np.asarray(axis, dtype=float)
    d2 = float(D @ D)
    groups = compat.grouped_from_torsion(t9) / 2.0
    stu = groups @ D / d2
    parts = groups - np.outer(stu, D)
    ud = UndeterminedData(D=D, P=parts[0], Q=parts[1], R=parts[2])
    return ud, stu


# ---------------------------------------------------------------------------
# connections

@dataclass
class ConnectionAtPoint:
    point: np.ndarray
    gamma: np.ndarray   # (3, 3, 3), [k, i, j] = Gamma^k_ij, chart coordinates


def connection_coefficients(
    m: FinslerModel,
    p,
    torsion: TorsionAtPoint,
    data: PointData | None = None,
) -> ConnectionAtPoint:
    """Metric connection with prescribed torsion, by the Christoffel process.

    Gamma^r_ij = Gamma*^r_ij - (T^l_jk g^kr g_il + T^l_ik g^kr g_jl - T^r_ij)/2
    in chart coordinates; the input torsion is frame-based and is transformed
    first.  Antisymmetrizing the result returns the torsion exactly, and the
    correction is metric-compatible by construction.
    """
    x = np.asarray(p, dtype=float)
    if data is None:
        data = geometry.point_data(m, x)
    T = torsion.chart_components()
    g, ginv = data.gamma, data.gamma_inv
    term1 = np.einsum("ljk,kr,il->rij", T, ginv, g)
    term2 = np.einsum("lik,kr,jl->rij", T, ginv, g)
    gamma = data.christoffel - 0.5 * (term1 + term2 - T)
    return ConnectionAtPoint(point=x, gamma=gamma)


class LeviCivitaField:
    """Connection field of the Riemannian metric itself."""

    name = "levi-civita"

    def __init__(self, m: FinslerModel):
        self.model = m

    def gamma_at(self, x) -> np.ndarray:
        return geometry.point_data(self.model, np.asarray(x, dtype=float)).christoffel


class AxisField:
    """Compatible connection built from a parallelized axis field D.

    nabla_X Y = nabla*_X Y + (<nabla*_X D, Y> D - <Y, D> nabla*_X D) / K^2
    with K^2 the constant gamma-norm square of D.  The field must have
    constant norm; this is enforced across queried points.
    """

    name = "axis"

    def __init__(self, m: FinslerModel, d_exprs, k2: float | None = None):
        self.model = m
        vars_ = tuple(f"x{i + 1}" for i in range(m.n))
        self.d_exprs = tuple(
            e if isinstance(e, ex.Expression) else ex.parse(str(e), vars_)
            for e in d_exprs)
        self.k2 = k2

    def _axis_at(self, x, data: PointData):
        n = self.model.n
        seeds = np.eye(n)
        D = np.empty(n)
        dD = np.empty((n, n))
        for kk in range(n):
            d = ex.eval_dual(self.d_exprs[kk], x, seeds)
            D[kk] = d.value
            dD[kk] = np.broadcast_to(np.asarray(d.deriv, dtype=float), (n,))
        k2 = float(D @ data.gamma @ D)
        if self.k2 is None:
            self.k2 = k2
        elif abs(k2 - self.k2) > 1e-8 * (1.0 + abs(self.k2)):
            raise geometry.GeometryError(
                f"axis norm square drifts from {self.k2:.8f} to {k2:.8f}; "
                "the axis construction needs a constant-length field")
        return D, dD

    def gamma_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        data = geometry.point_data(self.model, x)
        D, dD = self._axis_at(x, data)
        # E[k, i] = (nabla*_i D)^k; dD[k, i] is d_i D^k
        E = dD + np.einsum("kil,l->ki", data.christoffel, D)
        corr = (np.einsum("li,lj,k->kij", E, data.gamma, D)
                - np.einsum("jl,l,ki->kij", data.gamma, D, E)) / self.k2
        return data.christoffel + corr


def connection_from_axis(m: FinslerModel, d_exprs, k2: float | None = None) -> AxisField:
    return AxisField(m, d_exprs, k2)


class ExtremalField:
    """Minimum-torsion-norm compatible connection, solved point by point."""

    name = "extremal"

    def __init__(self, m: FinslerModel, tol: Tolerances | None = None,
                 n_dirs: int | None = None):
        self.model = m
        self.tol = tol or Tolerances()
        self.n_dirs = n_dirs if n_dirs is not None else 32

    def solve_at(self, x):
        x = np.asarray(x, dtype=float)
        data = geometry.point_data(self.model, x)
        sol = compat.solve_pointwise(self.model, x, n_dirs=self.n_dirs,
                                     tol=self.tol, data=data)
        if sol.status == compat.STATUS_INFEASIBLE:
            raise InfeasibleModel(
                f"no compatible connection at {x.tolist()} "
                f"(residual {sol.residual:.3e})")
        return sol, data

    def gamma_at(self, x) -> np.ndarray:
        sol, data = self.solve_at(x)
        return connection_coefficients(self.model, data.x, sol.base, data).gamma
