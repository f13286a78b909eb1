"""Pointwise compatibility equations and their affine solution space.

At a fixed base point the unknown is the torsion of a metric linear
connection, nine numbers T^c_{ab} (a<b) in the orthonormal frame.  Every
non-degenerate direction v contributes three linear equations

    sum_{a<b,c} sigma^c_{ab;i}(v) T^c_{ab} = -2 X_i^{h*} F(v),

with sigma^c_{ab;i} = delta_i^c f_ab + delta_i^a f_cb + delta_i^b f_ac.
Stacking many directions gives an overdetermined system whose structure is
best seen after grouping the unknowns into three 3-vectors t_1, t_2, t_3:
row i then reads <C x G, t_i> = -2 X_i^{h*} F, so the stacked matrix is block
diagonal with one copy of the span of the sampled cross products per group.
Its rank is therefore 3 * dim span{C x G} and the nullspace, when the cross
products stay orthogonal to a fixed axis D, consists of the motions
(t_1, t_2, t_3) -> (t_1 + 2s D, t_2 + 2t D, t_3 + 2u D).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import contact, geometry
from .geometry import FinslerModel, OrthoFrame, PointData
from .sampling import circle_nodes, fibonacci_sphere

__all__ = [
    "COMPONENT_ORDER",
    "Tolerances",
    "TorsionAtPoint",
    "CompatSystem",
    "AffineSolutionSpace",
    "Surface2D",
    "STATUS_RIEMANNIAN",
    "STATUS_DETERMINED",
    "STATUS_UNDETERMINED",
    "STATUS_INFEASIBLE",
    "sigma_coefficients",
    "sigma_rows_formula",
    "sigma_rows_table",
    "sigma_rows_grouped",
    "grouped_from_torsion",
    "torsion_from_grouped",
    "tensor_to_components",
    "torsion_parameter_motion",
    "assemble_system",
    "solve_pointwise",
    "solve_surface_2d",
]

# Unknown order: T^c_{ab} for (ab, c) =
# (12,1) (12,2) (12,3) (13,1) (13,2) (13,3) (23,1) (23,2) (23,3)
COMPONENT_ORDER = (
    "T12_1", "T12_2", "T12_3",
    "T13_1", "T13_2", "T13_3",
    "T23_1", "T23_2", "T23_3",
)

_PAIRS = ((0, 1), (0, 2), (1, 2))  # index pairs a<b, zero based

STATUS_RIEMANNIAN = "riemannian_trivial"
STATUS_DETERMINED = "determined"
STATUS_UNDETERMINED = "undetermined_axis"
STATUS_INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds; every consumer takes one of these."""

    eps_v: float = 1e-8        # vertical contact, relative
    eps_h: float = 1e-8        # horizontal contact, relative
    eps_feas: float = 1e-6     # feasibility residual, relative to 1+|rhs|
    eps_tau: float = 1e-4      # cross-route torsion agreement
    rank_rel: float = 1e-8     # singular value cutoff, relative to sigma_1
    axis_rel: float = 1e-6     # rank-1 structure of the nullspace blocks
    n_dirs: int = 96
    n_quad: int = 2048
    n_nodes_2d: int = 512
    n_scan: int = 2048
    ode_h: float = 1e-3


@dataclass
class TorsionAtPoint:
    """Torsion components in an orthonormal frame, COMPONENT_ORDER layout."""

    t: np.ndarray
    frame: OrthoFrame

    def as_tensor(self) -> np.ndarray:
        """Full antisymmetric array T[c, a, b] of frame components."""
        out = np.zeros((3, 3, 3))
        for col, (a, b) in enumerate(_PAIRS):
            for c in range(3):
                out[c, a, b] = self.t[3 * col + c]
                out[c, b, a] = -self.t[3 * col + c]
        return out

    def norm2(self) -> float:
        return float(np.dot(self.t, self.t))

    def chart_components(self) -> np.ndarray:
        """T[r, i, j] in chart coordinates."""
        that = self.as_tensor()
        L, Linv = self.frame.L, self.frame.Linv
        return np.einsum("rc,cab,ai,bj->rij", L, that, Linv, Linv)


@dataclass
class CompatSystem:
    rows: np.ndarray          # (3M, 9)
    rhs: np.ndarray           # (3M,)
    dirs: np.ndarray          # (M, 3) kept unit directions, frame components
    vertical_dirs: np.ndarray  # (K, 3) filtered vertical-contact directions
    horizontal_violation: float
    flags: tuple[str, ...] = ()


@dataclass
class AffineSolutionSpace:
    status: str
    base: TorsionAtPoint
    direction: np.ndarray | None
    axis: np.ndarray | None
    residual: float
    rank: int
    detail: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# row assembly, three equivalent routes

def _f_values(cross: np.ndarray):
    """(f_12, f_13, f_23) from the cross product (f_23, f_31, f_12)."""
    return cross[..., 2], -cross[..., 1], cross[..., 0]


def sigma_rows_formula(cross: np.ndarray) -> np.ndarray:
    """Direct evaluation of sigma^c_{ab;i} over all 27 entries."""
    f12, f13, f23 = _f_values(cross)
    f = np.zeros(cross.shape[:-1] + (3, 3))
    f[..., 0, 1], f[..., 1, 0] = f12, -f12
    f[..., 0, 2], f[..., 2, 0] = f13, -f13
    f[..., 1, 2], f[..., 2, 1] = f23, -f23
    rows = np.zeros(cross.shape[:-1] + (3, 9))
    for i in range(3):
        for col, (a, b) in enumerate(_PAIRS):
            for c in range(3):
                val = 0.0
                if i == c:
                    val = val + f[..., a, b]
                if i == a:
                    val = val + f[..., c, b]
                if i == b:
                    val = val + f[..., a, c]
                rows[..., i, 3 * col + c] = val
    return rows


def sigma_rows_table(cross: np.ndarray) -> np.ndarray:
    """The same three rows written out explicitly."""
    f12, f13, f23 = _f_values(cross)
    z = np.zeros_like(f12)
    row1 = np.stack([2 * f12, z, -f23, 2 * f13, f23, z, f23, z, z], axis=-1)
    row2 = np.stack([z, 2 * f12, f13, z, f13, z, f13, 2 * f23, z], axis=-1)
    row3 = np.stack([z, z, f12, z, f12, 2 * f13, -f12, z, 2 * f23], axis=-1)
    return np.stack([row1, row2, row3], axis=-2)


# Fixed matrices sending the 9 torsion components to the grouped vectors
# t_1, t_2, t_3; row i of the system is then <cross, t_i>.
_G1 = np.array([
    [0, 0, -1, 0, 1, 0, 1, 0, 0],
    [0, 0, 0, -2, 0, 0, 0, 0, 0],
    [2, 0, 0, 0, 0, 0, 0, 0, 0],
], dtype=float)
_G2 = np.array([
    [0, 0, 0, 0, 0, 0, 0, 2, 0],
    [0, 0, -1, 0, -1, 0, -1, 0, 0],
    [0, 2, 0, 0, 0, 0, 0, 0, 0],
], dtype=float)
_G3 = np.array([
    [0, 0, 0, 0, 0, 0, 0, 0, 2],
    [0, 0, 0, 0, 0, -2, 0, 0, 0],
    [0, 0, 1, 0, 1, 0, -1, 0, 0],
], dtype=float)
_GROUP = (_G1, _G2, _G3)


def sigma_rows_grouped(cross: np.ndarray) -> np.ndarray:
    """Rows via the inner-product form <C x G, t_i>."""
    parts = [cross @ g for g in _GROUP]
    return np.stack(parts, axis=-2)


def sigma_coefficients(
    m: FinslerModel,
    v: geometry.TangentVector,
    data: PointData | None = None,
    route: str = "formula",
) -> np.ndarray:
    """3x9 coefficient block for one tangent vector."""
    cross = contact.cross_CG(m, v, data)
    builder = {
        "formula": sigma_rows_formula,
        "table": sigma_rows_table,
        "grouped": sigma_rows_grouped,
    }[route]
    return builder(cross)


def grouped_from_torsion(t9: np.ndarray) -> np.ndarray:
    """Stack (t_1, t_2, t_3) as rows of a 3x3 array."""
    t9 = np.asarray(t9, dtype=float)
    return np.stack([g @ t9 for g in _GROUP])


def torsion_from_grouped(tg: np.ndarray) -> np.ndarray:
    """Invert grouped_from_torsion; tg holds t_1, t_2, t_3 as rows."""
    t1, t2, t3 = np.asarray(tg, dtype=float)
    out = np.empty(9)
    out[0] = t1[2] / 2
    out[1] = t2[2] / 2
    out[2] = -(t1[0] + t2[1]) / 2
    out[3] = -t1[1] / 2
    out[4] = (t1[0] + t3[2]) / 2
    out[5] = -t3[1] / 2
    out[6] = -(t2[1] + t3[2]) / 2
    out[7] = t2[0] / 2
    out[8] = t3[0] / 2
    return out


def tensor_to_components(tensor: np.ndarray) -> np.ndarray:
    """Read the 9 independent components off an antisymmetric T[c, a, b]."""
    tensor = np.asarray(tensor, dtype=float)
    out = np.empty(9)
    for col, (a, b) in enumerate(_PAIRS):
        out[3 * col : 3 * col + 3] = tensor[:, a, b]
    return out


def torsion_parameter_motion(axis: np.ndarray, stu: np.ndarray) -> np.ndarray:
    """Torsion motion for parameters (s, t, u) along the axis D.

    The grouped vectors move by (2s D, 2t D, 2u D); this returns the matching
    9-component torsion displacement.
    """
    d = np.asarray(axis, dtype=float)
    s, t, u = np.asarray(stu, dtype=float)
    return torsion_from_grouped(np.stack([2 * s * d, 2 * t * d, 2 * u * d]))


# ---------------------------------------------------------------------------
# system assembly and pointwise solve

def assemble_system(
    m: FinslerModel,
    p,
    dirs: np.ndarray | None = None,
    data: PointData | None = None,
    tol: Tolerances | None = None,
) -> CompatSystem:
    """Stack the compatibility equations over sampled unit directions.

    Directions are frame components.  Vertical-contact directions carry no
    information and are dropped, but each must be a horizontal contact point
    too; the largest horizontal derivative seen on a dropped direction is
    recorded and flagged when it exceeds the threshold.
    """
    tol = tol or Tolerances()
    if data is None:
        data = geometry.point_data(m, np.asarray(p, dtype=float))
    if dirs is None:
        dirs = fibonacci_sphere(tol.n_dirs)
    cross, b, F, G = contact.cross_batch(m, data, dirs)
    cn = np.linalg.norm(cross, axis=1)
    gn = np.linalg.norm(G, axis=1)
    vertical = cn <= tol.eps_v * (1.0 + gn)

    violation = 0.0
    flags: tuple[str, ...] = ()
    if np.any(vertical):
        # b = -2 X_i^{h*} F
        viol = 0.5 * np.abs(b[vertical]).max(axis=1)
        scale = 1.0 + np.abs(F[vertical])
        violation = float(np.max(viol))
        if np.any(viol > tol.eps_h * scale):
            flags = ("vertical-not-horizontal",)

    keep = ~vertical
    blocks = sigma_rows_grouped(cross[keep])          # (M, 3, 9)
    rows = blocks.reshape(-1, 9)
    rhs = b[keep].reshape(-1)
    return CompatSystem(
        rows=rows,
        rhs=rhs,
        dirs=dirs[keep],
        vertical_dirs=dirs[vertical],
        horizontal_violation=violation,
        flags=flags,
    )


def _numeric_rank(s: np.ndarray, rel: float) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel * s[0]))


def solve_pointwise(
    m: FinslerModel,
    p,
    n_dirs: int | None = None,
    tol: Tolerances | None = None,
    data: PointData | None = None,
) -> AffineSolutionSpace:
    """Least-squares solve of the stacked system and its classification.

    The minimum-norm particular solution is the torsion of minimal norm, so
    the base solution doubles as the extremal torsion whenever the system is
    feasible.  Status decision:

      * a vertical contact direction with a nonzero horizontal derivative is
        an infeasibility certificate, reported before any solve;
      * every sampled direction vertical: the model looks Riemannian at p and
        the Levi-Civita connection solves everything (zero torsion);
      * otherwise rank comes from singular values.  Full rank 9 pins the
        torsion down; rank 6 leaves the three-parameter axis motion, and the
        common axis is read off the nullspace blocks;
      * a residual above threshold overrides everything as infeasible.
    """
    tol = tol or Tolerances()
    if n_dirs is None:
        n_dirs = tol.n_dirs
    x = np.asarray(p, dtype=float)
    if data is None:
        data = geometry.point_data(m, x)
    frame = data.frame
    sys = assemble_system(m, x, fibonacci_sphere(n_dirs), data, tol)

    zero = TorsionAtPoint(np.zeros(9), frame)
    if "vertical-not-horizontal" in sys.flags:
        return AffineSolutionSpace(
            status=STATUS_INFEASIBLE,
            base=zero,
            direction=None,
            axis=None,
            residual=sys.horizontal_violation,
            rank=0,
            detail={"certificate": "vertical-not-horizontal"},
        )
    if sys.rows.shape[0] == 0:
        return AffineSolutionSpace(
            status=STATUS_RIEMANNIAN,
            base=zero,
            direction=None,
            axis=None,
            residual=0.0,
            rank=0,
            detail={},
        )

    u_svd, s, vh = np.linalg.svd(sys.rows, full_matrices=True)
    rank = _numeric_rank(s, tol.rank_rel)
    t_star, *_ = np.linalg.lstsq(sys.rows, sys.rhs, rcond=tol.rank_rel)
    residual = float(np.max(np.abs(sys.rows @ t_star - sys.rhs)))
    rhs_scale = 1.0 + float(np.max(np.abs(sys.rhs)))
    base = TorsionAtPoint(t_star, frame)
    detail: dict = {"singular_values": s, "n_dirs_used": sys.dirs.shape[0]}

    if residual > tol.eps_feas * rhs_scale:
        return AffineSolutionSpace(
            status=STATUS_INFEASIBLE,
            base=base,
            direction=None,
            axis=None,
            residual=residual,
            rank=rank,
            detail=detail,
        )
    if rank == 9:
        return AffineSolutionSpace(
            status=STATUS_DETERMINED,
            base=base,
            direction=None,
            axis=None,
            residual=residual,
            rank=rank,
            detail=detail,
        )

    # Rank-deficient feasible system: the nullspace must consist of axis
    # motions.  Stack the grouped blocks of a null basis and insist they
    # share one direction.
    null_basis = vh[rank:]
    blocks = np.concatenate([grouped_from_torsion(n) for n in null_basis])
    bu, bs, bvh = np.linalg.svd(blocks, full_matrices=False)
    if bs[0] == 0.0 or (bs.size > 1 and bs[1] > tol.axis_rel * bs[0]):
        detail["axis_block_singvals"] = bs
        return AffineSolutionSpace(
            status=STATUS_INFEASIBLE,
            base=base,
            direction=None,
            axis=None,
            residual=residual,
            rank=rank,
            detail=detail,
        )
    axis = bvh[0]
    k = int(np.argmax(np.abs(axis)))
    if axis[k] < 0:
        axis = -axis
    motion = torsion_parameter_motion(axis, axis)
    direction = motion / np.linalg.norm(motion)
    detail["nullity"] = 9 - rank
    return AffineSolutionSpace(
        status=STATUS_UNDETERMINED,
        base=base,
        direction=direction,
        axis=axis,
        residual=residual,
        rank=rank,
        detail=detail,
    )


# ---------------------------------------------------------------------------
# surfaces

@dataclass
class Surface2D:
    torsion: tuple[float, float]   # (T^1_{12}, T^2_{12}) in the frame
    riemannian: bool
    weight: float                  # mean of f_12^2 over the circle


def solve_surface_2d(
    m: FinslerModel,
    p,
    tol: Tolerances | None = None,
    data: PointData | None = None,
) -> Surface2D:
    """Two-dimensional case: a single unknown pair, solved by circle means.

    With only one index pair the compatibility equations read
    f_12 T^i_{12} = -X_i^{h*} F, so T^i_{12} is the ratio of the means of
    -f_12 X_i^{h*} F and f_12^2 over the Riemannian unit circle.  A vanishing
    weight means the Finslerian circle is centrally homothetic to the
    Riemannian one and the surface is Riemannian.
    """
    if m.n != 2:
        raise geometry.GeometryError("solve_surface_2d needs a 2D model")
    tol = tol or Tolerances()
    x = np.asarray(p, dtype=float)
    if data is None:
        data = geometry.point_data(m, x)
    nodes = circle_nodes(tol.n_nodes_2d)
    F, C, G, b = geometry.frame_batch(m, data, nodes)
    f12 = C[:, 0] * G[:, 1] - C[:, 1] * G[:, 0]
    weight = float(np.mean(f12 * f12))
    scale = 1.0 + float(np.mean(F * F))
    if weight <= tol.eps_v ** 2 * scale:
        return Surface2D(torsion=(0.0, 0.0), riemannian=True, weight=weight)
    # b = -2 X_i F, and f12 T^i = -X_i F = b_i / 2
    t1 = float(np.mean(f12 * b[:, 0]) / (2.0 * weight))
    t2 = float(np.mean(f12 * b[:, 1]) / (2.0 * weight))
    return Surface2D(torsion=(t1, t2), riemannian=False, weight=weight)
