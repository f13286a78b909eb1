"""Parallel transport along chart curves and solution-space transport.

The defining property of a compatible connection is that its parallel
transports preserve Finslerian length.  This module integrates the transport
ODE v' = -Gamma(x(t)) xdot v with fixed-step RK4, measures F- and
gamma-length drift, pushes torsion tensors from point to point through a
transported frame, and detects rotational symmetry of the indicatrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import compat, contact, expr as ex, geometry
from .compat import Tolerances, TorsionAtPoint
from .geometry import FinslerModel, PointData
from .sampling import fibonacci_sphere

__all__ = [
    "CurveSpec",
    "TransportPath",
    "TransportedSolution",
    "TransportReport",
    "ISOTROPIC",
    "parallel_transport",
    "transport_frame",
    "check_compatibility",
    "transport_solution",
    "connection_torsion",
    "detect_revolution_axis",
    "transport_report",
    "random_spline_curves",
]

ISOTROPIC = "isotropic"


@dataclass(frozen=True)
class CurveSpec:
    """Chart curve given by n coordinate expressions of the parameter t."""

    path: tuple
    t0: float = 0.0
    t1: float = 1.0

    @staticmethod
    def make(path, t0: float = 0.0, t1: float = 1.0) -> "CurveSpec":
        exprs = tuple(
            e if isinstance(e, ex.Expression) else ex.parse(str(e), ("t",))
            for e in path)
        return CurveSpec(exprs, t0, t1)

    def point_and_velocity(self, t: float):
        vals = [ex.eval_dual(e, [t], [1.0]) for e in self.path]
        x = np.array([d.value for d in vals], dtype=float)
        xdot = np.array([float(d.deriv) for d in vals])
        return x, xdot

    def point(self, t: float) -> np.ndarray:
        return np.array([ex.eval_value(e, [t]) for e in self.path], dtype=float)


@dataclass
class TransportPath:
    ts: np.ndarray
    xs: np.ndarray     # (K, n)
    vs: np.ndarray     # (K, n) transported vector (or (K, n, n) frames)


def _transport_rk4(conn, curve: CurveSpec, v0: np.ndarray, h: float):
    """Shared RK4 driver; v0 may be a vector or a matrix of columns."""
    t0, t1 = curve.t0, curve.t1
    n_steps = max(1, int(round((t1 - t0) / h)))
    h = (t1 - t0) / n_steps

    cache: dict = {}

    def rhs(t, v):
        key = round(t, 12)
        hit = cache.get(key)
        if hit is None:
            x, xdot = curve.point_and_velocity(t)
            hit = (np.einsum("kij,i->kj", conn.gamma_at(x), xdot), x)
            cache[key] = hit
        A, _ = hit
        return -A @ v

    ts = [t0]
    vs = [v0]
    xs = [curve.point(t0)]
    v = v0
    for step in range(n_steps):
        t = t0 + step * h
        k1 = rhs(t, v)
        k2 = rhs(t + 0.5 * h, v + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, v + 0.5 * h * k2)
        k4 = rhs(t + h, v + h * k3)
        v = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t_next = t0 + (step + 1) * h
        ts.append(t_next)
        vs.append(v)
        xs.append(curve.point(t_next))
    return TransportPath(np.array(ts), np.array(xs), np.array(vs))


def parallel_transport(conn, curve: CurveSpec, v0, h: float = 1e-3) -> TransportPath:
    """Transport a single tangent vector along the curve."""
    v0 = np.asarray(v0, dtype=float)
    if not np.any(v0):
        raise ValueError("zero start vector")
    return _transport_rk4(conn, curve, v0, h)


def transport_frame(conn, curve: CurveSpec, frame_columns: np.ndarray,
                    h: float = 1e-3) -> np.ndarray:
    """Transport a matrix of column vectors; returns the columns at t1."""
    path = _transport_rk4(conn, curve, np.asarray(frame_columns, dtype=float), h)
    return path.vs[-1]


def check_compatibility(conn, m: FinslerModel, samples) -> float:
    """Largest horizontal derivative of F over (point, vector) samples.

    The horizontal lift uses the candidate connection's coefficients, so a
    vanishing result is exactly the compatibility condition
    dF/dx_i - y^j Gamma^k_ij dF/dy_k = 0 in chart coordinates.
    """
    worst = 0.0
    for p, y in samples:
        p = np.asarray(p, dtype=float)
        y = np.asarray(y, dtype=float)
        data = geometry.point_data(m, p)
        F, dFy, dFx = geometry.F_and_grads(m, data, y[None, :])
        G = conn.gamma_at(p)
        XF = dFx[0] - np.einsum("j,kij,k->i", y, G, dFy[0])
        worst = max(worst, float(np.max(np.abs(XF))))
    return worst


@dataclass
class TransportedSolution:
    torsion: TorsionAtPoint      # at the endpoint, in its frame
    ortho_defect: float
    residual: float
    homogeneous: bool
    phi: np.ndarray              # frame-to-frame linear map


def connection_torsion(conn, data: PointData) -> np.ndarray:
    """Torsion 9-vector of a connection field at a point, frame components."""
    G = conn.gamma_at(data.x)
    T_chart = G - G.transpose(0, 2, 1)
    That = np.einsum("cr,rij,ia,jb->cab", data.Linv, T_chart, data.L, data.L)
    return compat.tensor_to_components(That)


def transport_solution(
    conn,
    m: FinslerModel,
    curve: CurveSpec,
    torsion_p: TorsionAtPoint,
    homogeneous: bool = False,
    h: float = 1e-3,
    tol: Tolerances | None = None,
    n_dirs: int | None = None,
) -> TransportedSolution:
    """Push a torsion tensor along the curve and test it at the endpoint.

    The map phi comes from transporting the orthonormal frame; under a
    metric connection it is a linear isometry, so its frame expression must
    be orthogonal (the defect is reported).

    Differences of solutions conjugate directly (phi maps the indicatrix at
    the start isometrically onto the indicatrix at the end, hence their
    infinitesimal symmetries onto each other), so homogeneous mode applies
    phi-conjugation to the tensor as given.  A full solution instead rides
    the affine structure: what conjugates correctly is its offset from the
    transporting connection's own torsion, so the result is that torsion at
    the endpoint plus the conjugated offset.  The transported tensor is then
    checked against the compatibility system at the endpoint, homogeneous or
    inhomogeneous accordingly.
    """
    tol = tol or Tolerances()
    p = curve.point(curve.t0)
    q = curve.point(curve.t1)
    data_p = geometry.point_data(m, p)
    data_q = geometry.point_data(m, q)

    V = transport_frame(conn, curve, data_p.L, h)
    phi = data_q.Linv @ V
    ortho = float(np.max(np.abs(phi.T @ phi - np.eye(m.n))))
    phi_inv = np.linalg.inv(phi)

    def conjugate(t9: np.ndarray) -> np.ndarray:
        tensor = TorsionAtPoint(t9, data_p.frame).as_tensor()
        moved = np.einsum("cd,dab,ai,bj->cij", phi, tensor, phi_inv, phi_inv)
        return compat.tensor_to_components(moved)

    if homogeneous:
        t9_q = conjugate(torsion_p.t)
    else:
        offset = torsion_p.t - connection_torsion(conn, data_p)
        t9_q = connection_torsion(conn, data_q) + conjugate(offset)

    sys = compat.assemble_system(m, q, fibonacci_sphere(n_dirs or tol.n_dirs),
                                 data_q, tol)
    if homogeneous:
        residual = float(np.max(np.abs(sys.rows @ t9_q)))
    else:
        residual = float(np.max(np.abs(sys.rows @ t9_q - sys.rhs)))
    return TransportedSolution(
        torsion=TorsionAtPoint(t9_q, data_q.frame),
        ortho_defect=ortho,
        residual=residual,
        homogeneous=homogeneous,
        phi=phi,
    )


def detect_revolution_axis(
    m: FinslerModel,
    p,
    data: PointData | None = None,
    n: int | None = None,
    tol: Tolerances | None = None,
):
    """Common orthogonal direction of all C x G samples, if one exists.

    Returns the axis as frame components, the ISOTROPIC sentinel when the
    cross product vanishes identically (Riemannian case), or None.
    """
    tol = tol or Tolerances()
    if data is None:
        data = geometry.point_data(m, np.asarray(p, dtype=float))
    lattice = fibonacci_sphere(n or tol.n_quad)
    cross, _, _, G = contact.cross_batch(m, data, lattice)
    top = float(np.max(np.linalg.norm(cross, axis=1)))
    gn = float(np.max(np.linalg.norm(G, axis=1)))
    if top <= tol.eps_v * (1.0 + gn):
        return ISOTROPIC
    _, s, vh = np.linalg.svd(cross, full_matrices=False)
    if s[2] > tol.axis_rel * s[0]:
        return None
    axis = vh[2]
    k = int(np.argmax(np.abs(axis)))
    return axis if axis[k] >= 0 else -axis


@dataclass
class TransportReport:
    max_F_drift: float
    max_gamma_drift: float
    richardson_ratio: float | None
    traces: list = field(default_factory=list)


def transport_report(
    conn,
    m: FinslerModel,
    curves,
    v0s,
    h: float = 1e-3,
    richardson: bool = True,
) -> TransportReport:
    """Relative F- and gamma-length drift under transport, per curve.

    Richardson mode repeats each run at h/2 and reports the worst-case ratio
    of endpoint drifts, which should sit near 16 for a fourth-order scheme
    (ratios are skipped when the drift is at rounding level).
    """
    max_f = 0.0
    max_g = 0.0
    ratios = []
    traces = []
    for curve, v0 in zip(curves, v0s):
        f_drift, g_drift = _drift_along(conn, m, curve, v0, h)
        max_f = max(max_f, f_drift)
        max_g = max(max_g, g_drift)
        entry = {"F_drift": f_drift, "gamma_drift": g_drift, "h": h}
        if richardson:
            f2, _ = _drift_along(conn, m, curve, v0, h / 2.0)
            entry["F_drift_half"] = f2
            if f_drift > 1e-13:
                ratios.append(f_drift / max(f2, 1e-300))
        traces.append(entry)
    ratio = min(ratios) if ratios else None
    return TransportReport(max_F_drift=max_f, max_gamma_drift=max_g,
                           richardson_ratio=ratio, traces=traces)


def _drift_along(conn, m, curve, v0, h):
    path = _transport_rk4(conn, curve, np.asarray(v0, dtype=float), h)
    stride = max(1, path.ts.size // 32)
    idx = list(range(0, path.ts.size, stride))
    if idx[-1] != path.ts.size - 1:
        idx.append(path.ts.size - 1)
    f_vals = []
    g_vals = []
    for i in idx:
        data = geometry.point_data(m, path.xs[i])
        F, _, _ = geometry.F_and_grads(m, data, path.vs[i][None, :])
        f_vals.append(float(F[0]))
        g_vals.append(float(path.vs[i] @ data.gamma @ path.vs[i]))
    f_vals = np.array(f_vals)
    g_vals = np.array(g_vals)
    f_drift = float(np.max(np.abs(f_vals - f_vals[0])) / abs(f_vals[0]))
    g_drift = float(np.max(np.abs(g_vals - g_vals[0])) / abs(g_vals[0]))
    return f_drift, g_drift


def random_spline_curves(seed, n_curves, start, scale=0.3):
    """Deterministic cubic chart curves c(t) = start + c1 t + c2 t^2 + c3 t^3."""
    rng = np.random.default_rng(seed)
    start = np.asarray(start, dtype=float)
    curves = []
    for _ in range(n_curves):
        c1, c2, c3 = rng.uniform(-scale, scale, size=(3, start.size))
        path = [
            "{!r} + {!r}*t + {!r}*t^2 + {!r}*t^3".format(
                float(start[i]), float(c1[i]), float(c2[i]), float(c3[i]))
            for i in range(start.size)
        ]
        curves.append(CurveSpec.make(path))
    return curves
