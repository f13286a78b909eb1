"""Integral curves of the C x G field and the solution lines they carry.

Fix a base point and work in frame components on T_pM.  Along the integral
curve c of C x G the compatibility equations become <c'(t), t_i> = b_i(c(t)),
so after arclength normalization the grouped unknowns t_i decompose against
the Frenet frame (T, N, B) of c_0 as

    t_i = omega_i1 T + omega_i2 N + omega_i3 B,

with omega_i1 and omega_i2 pinned down by the first two derivatives at the
start parameter and omega_i3 reachable either through the curve torsion (if
it does not vanish) or through integrals over the whole sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import contact, geometry
from .compat import Tolerances, torsion_from_grouped
from .geometry import FinslerModel, PointData, TangentVector
from .sampling import fibonacci_sphere

__all__ = [
    "FrenetError",
    "TorsionTooSmall",
    "RevolutionConflict",
    "CurveSamples",
    "IntegralCurves",
    "FrenetData",
    "SolutionLines",
    "integral_curve",
    "frenet_apparatus",
    "best_start_direction",
    "solution_lines",
    "complete_by_curve_torsion",
    "complete_by_sphere_integral",
    "torsion_from_lines",
]


class FrenetError(ValueError):
    pass


class TorsionTooSmall(FrenetError):
    """Curve torsion below threshold; the planar route cannot see omega_3."""


class RevolutionConflict(FrenetError):
    """Sphere integral degenerate: indicatrix is rotationally symmetric
    about the binormal, so the third column stays undetermined."""


@dataclass
class CurveSamples:
    ts: np.ndarray       # (N,), increasing, ts[center] = 0
    ys: np.ndarray       # (N, 3) frame components
    h: float
    center: int
    truncated: bool


@dataclass
class IntegralCurves:
    c: CurveSamples      # c' = (C x G) o c
    c0: CurveSamples     # unit-speed version


@dataclass
class FrenetData:
    T: np.ndarray
    N: np.ndarray
    B: np.ndarray
    kappa: float
    tau: float
    kappa_rate: float    # d kappa / ds at the start parameter
    c0: CurveSamples


@dataclass
class SolutionLines:
    omega: np.ndarray        # (3, 3); row i holds (omega_i1, omega_i2, omega_i3)
    determined3: bool
    v0: np.ndarray
    b0_samples: np.ndarray   # (5, 3) of b_i/|C x G| at the center stencil
    h: float
    fd: FrenetData


def _yhat_of(v, data: PointData) -> np.ndarray:
    if isinstance(v, TangentVector):
        return data.Linv @ np.asarray(v.y, dtype=float)
    return np.asarray(v, dtype=float)


def integral_curve(
    m: FinslerModel,
    v,
    data: PointData | None = None,
    steps: int = 2000,
    h: float | None = None,
    tol: Tolerances | None = None,
) -> IntegralCurves:
    """RK4 curves of the cross field and its normalization through v.

    v is a TangentVector or raw frame components; integration runs steps//2
    forward and backward.  Both curves stay on the sphere |c| = |v| since the
    field is orthogonal to the position.  A side is cut short when it enters
    the vertical-contact region, where the normalized field blows up.
    """
    tol = tol or Tolerances()
    if data is None:
        if not isinstance(v, TangentVector):
            raise FrenetError("raw direction needs explicit point data")
        data = geometry.point_data(m, v.base)
    y0 = _yhat_of(v, data)
    if h is None:
        h = 1e-3 * float(np.linalg.norm(y0))

    cutoff = 100.0 * tol.eps_v

    def field(y, normalized):
        cross, _, _, G = contact.cross_batch(m, data, y[None, :])
        c = cross[0]
        nc = np.linalg.norm(c)
        if nc <= cutoff * (1.0 + np.linalg.norm(G[0])):
            return None
        return c / nc if normalized else c

    def run(normalized):
        half = steps // 2
        fwd, truncated = _rk4_path(field, y0, h, half, normalized)
        bwd, trunc_b = _rk4_path(field, y0, -h, half, normalized)
        ys = np.vstack([bwd[::-1], [y0], fwd])
        n_b = bwd.shape[0]
        ts = (np.arange(ys.shape[0]) - n_b) * h
        return CurveSamples(ts, ys, h, n_b, truncated or trunc_b)

    return IntegralCurves(c=run(False), c0=run(True))


def _rk4_path(field, y0, h, n_steps, normalized):
    out = []
    y = y0
    truncated = False
    for _ in range(n_steps):
        k1 = field(y, normalized)
        if k1 is None:
            truncated = True
            break
        k2 = field(y + 0.5 * h * k1, normalized)
        k3 = field(y + 0.5 * h * k2, normalized) if k2 is not None else None
        k4 = field(y + h * k3, normalized) if k3 is not None else None
        if k4 is None:
            truncated = True
            break
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y)
    return np.array(out).reshape(-1, 3), truncated


def _stencil(vals: np.ndarray, h: float):
    """First three derivatives at the center of a 5-sample window."""
    f_2, f_1, f0, f1, f2 = vals
    d1 = (-f2 + 8 * f1 - 8 * f_1 + f_2) / (12 * h)
    d2 = (-f2 + 16 * f1 - 30 * f0 + 16 * f_1 - f_2) / (12 * h * h)
    d3 = (f2 - 2 * f1 + 2 * f_1 - f_2) / (2 * h ** 3)
    return d1, d2, d3


def _center_window(c: CurveSamples) -> np.ndarray:
    i = c.center
    if i < 2 or i + 2 >= c.ys.shape[0]:
        raise FrenetError("curve truncated too close to the start parameter")
    return c.ys[i - 2:i + 3]


def frenet_apparatus(c0: CurveSamples, tol: Tolerances | None = None) -> FrenetData:
    """Frenet frame, curvature and torsion at parameter 0 of a unit-speed curve."""
    window = _center_window(c0)
    d1, d2, d3 = _stencil(window, c0.h)
    kappa = float(np.linalg.norm(d2))
    if kappa < 1e-12:
        raise FrenetError("vanishing curvature at the start parameter")
    T = d1 / np.linalg.norm(d1)
    N = d2 / kappa
    B = np.cross(T, N)
    tau = float(np.dot(np.cross(d1, d2), d3)) / kappa ** 2
    kappa_rate = float(np.dot(d3, d2)) / kappa
    return FrenetData(T=T, N=N, B=B, kappa=kappa, tau=tau,
                      kappa_rate=kappa_rate, c0=c0)


def best_start_direction(
    m: FinslerModel,
    data: PointData,
    n: int | None = None,
    tol: Tolerances | None = None,
) -> np.ndarray:
    """Sampled unit direction maximizing |C x G|, for well-conditioned lines."""
    tol = tol or Tolerances()
    lattice = fibonacci_sphere(n or tol.n_scan)
    cross, _, _, _ = contact.cross_batch(m, data, lattice)
    return lattice[int(np.argmax(np.linalg.norm(cross, axis=1)))]


def solution_lines(
    m: FinslerModel,
    v=None,
    data: PointData | None = None,
    tol: Tolerances | None = None,
    p=None,
) -> SolutionLines:
    """First two omega columns from derivatives along the integral curve.

    With b0_i = b_i / |C x G|, row i of omega starts as
    (b0_i(v), (b0_i o c_0)'(0) / kappa, 0).
    """
    tol = tol or Tolerances()
    if data is None:
        if isinstance(v, TangentVector):
            data = geometry.point_data(m, v.base)
        elif p is not None:
            data = geometry.point_data(m, np.asarray(p, dtype=float))
        else:
            raise FrenetError("need a TangentVector or a base point")
    if v is None:
        yhat = best_start_direction(m, data, tol=tol)
    else:
        yhat = _yhat_of(v, data)
        yhat = yhat / np.linalg.norm(yhat)

    curves = integral_curve(m, yhat, data, steps=16, h=1e-3, tol=tol)
    fd = frenet_apparatus(curves.c0, tol)
    window = _center_window(curves.c0)
    cross, b, _, _ = contact.cross_batch(m, data, window)
    b0 = b / np.linalg.norm(cross, axis=1)[:, None]

    omega = np.zeros((3, 3))
    d1, _, _ = _stencil(b0, curves.c0.h)
    omega[:, 0] = b0[2]
    omega[:, 1] = d1 / fd.kappa
    return SolutionLines(omega=omega, determined3=False, v0=yhat,
                         b0_samples=b0, h=curves.c0.h, fd=fd)


def complete_by_curve_torsion(
    lines: SolutionLines,
    tol: Tolerances | None = None,
) -> SolutionLines:
    """Third column from the curve's own torsion; needs |tau| above threshold."""
    tol = tol or Tolerances()
    fd = lines.fd
    if abs(fd.tau) <= tol.eps_tau:
        raise TorsionTooSmall(
            f"curve torsion {fd.tau:.3e} is below {tol.eps_tau:.1e}")
    _, d2, _ = _stencil(lines.b0_samples, lines.h)
    k, kr, tau = fd.kappa, fd.kappa_rate, fd.tau
    omega = lines.omega.copy()
    omega[:, 2] = (d2 + k * k * omega[:, 0] - kr * omega[:, 1]) / (k * tau)
    return replace(lines, omega=omega, determined3=True)


def complete_by_sphere_integral(
    lines: SolutionLines,
    m: FinslerModel,
    data: PointData,
    n_quad: int | None = None,
    tol: Tolerances | None = None,
) -> SolutionLines:
    """Third column by least squares of the full system against the binormal.

    Averages over a Fibonacci lattice; the weights cancel in the ratio.  A
    vanishing denominator means <C x G, B> = 0 identically, i.e. the
    indicatrix is a surface of revolution about B and the case was not
    determined after all.
    """
    tol = tol or Tolerances()
    fd = lines.fd
    lattice = fibonacci_sphere(n_quad or tol.n_quad)
    cross, b, _, _ = contact.cross_batch(m, data, lattice)
    cT = cross @ fd.T
    cN = cross @ fd.N
    cB = cross @ fd.B
    den = float(np.mean(cB * cB))
    scale = float(np.mean(np.sum(cross * cross, axis=1)))
    if den <= 1e-9 * (scale + 1e-300):
        raise RevolutionConflict(
            "projection of C x G on the binormal vanishes on the sphere")
    omega = lines.omega.copy()
    for i in range(3):
        # 2 X_i^{h*} F = -b_i
        num = np.mean(cB * (omega[i, 0] * cT + omega[i, 1] * cN - b[:, i]))
        omega[i, 2] = -num / den
    return replace(lines, omega=omega, determined3=True)


def torsion_from_lines(lines: SolutionLines) -> np.ndarray:
    """Grouped vectors t_i from omega, then the 9 torsion components."""
    fd = lines.fd
    frame_rows = np.stack([fd.T, fd.N, fd.B])
    return torsion_from_grouped(lines.omega @ frame_rows)
