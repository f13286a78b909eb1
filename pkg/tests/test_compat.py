import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bwk import compat, contact, geometry
from bwk.compat import Tolerances, TorsionAtPoint
from bwk.geometry import TangentVector
from bwk.sampling import circle_nodes

from conftest import (
    ROTATING_BASE_T9,
    random_directions,
    random_points,
)

finite = st.floats(min_value=-1e3, max_value=1e3,
                   allow_nan=False, allow_infinity=False)


# ---------------------------------------------------------------------------
# row construction

@given(st.tuples(finite, finite, finite))
@settings(max_examples=200, deadline=None)
def test_sigma_routes_agree(cross):
    cross = np.array(cross)
    a = compat.sigma_rows_formula(cross)
    b = compat.sigma_rows_table(cross)
    c = compat.sigma_rows_grouped(cross)
    scale = 1.0 + np.max(np.abs(a))
    assert np.max(np.abs(a - b)) < 1e-14 * scale
    assert np.max(np.abs(a - c)) < 1e-14 * scale


def test_sigma_routes_agree_batched():
    cross = random_directions(31, 50) * 3.0
    a = compat.sigma_rows_formula(cross)
    b = compat.sigma_rows_table(cross)
    c = compat.sigma_rows_grouped(cross)
    assert a.shape == (50, 3, 9)
    np.testing.assert_allclose(a, b, atol=1e-14)
    np.testing.assert_allclose(a, c, atol=1e-14)


def test_sigma_coefficients_routes_on_model(randers_rotating):
    m = randers_rotating
    p = np.array([0.2, -0.3, 0.1])
    pd = geometry.point_data(m, p)
    for yhat in random_directions(32, 10):
        v = TangentVector(p, yhat @ pd.L.T)
        blocks = [compat.sigma_coefficients(m, v, data=pd, route=r)
                  for r in ("formula", "table", "grouped")]
        np.testing.assert_allclose(blocks[0], blocks[1], atol=1e-14)
        np.testing.assert_allclose(blocks[0], blocks[2], atol=1e-14)


@given(st.lists(finite, min_size=9, max_size=9))
@settings(max_examples=200, deadline=None)
def test_grouped_round_trip(t9):
    t9 = np.array(t9)
    tg = compat.grouped_from_torsion(t9)
    back = compat.torsion_from_grouped(tg)
    assert np.max(np.abs(back - t9)) < 1e-12 * (1 + np.max(np.abs(t9)))


def test_grouped_is_row_action():
    rng = np.random.default_rng(33)
    t9 = rng.normal(size=9)
    tg = compat.grouped_from_torsion(t9)
    cross = rng.normal(size=3)
    rows = compat.sigma_rows_grouped(cross)
    np.testing.assert_allclose(rows @ t9, tg @ cross, rtol=1e-13)


def test_parameter_motion_matches_grouped_displacement():
    rng = np.random.default_rng(34)
    axis = rng.normal(size=3)
    stu = rng.normal(size=3)
    motion = compat.torsion_parameter_motion(axis, stu)
    tg = compat.grouped_from_torsion(motion)
    want = np.stack([2 * stu[i] * axis for i in range(3)])
    np.testing.assert_allclose(tg, want, atol=1e-13)


def test_tensor_component_round_trip():
    rng = np.random.default_rng(35)
    t9 = rng.normal(size=9)
    frame = geometry.point_data(
        geometry.make_riemannian([["1", "0", "0"], ["0", "1", "0"],
                                  ["0", "0", "1"]]),
        np.zeros(3)).frame
    tp = TorsionAtPoint(t9, frame)
    tensor = tp.as_tensor()
    assert np.max(np.abs(tensor + tensor.transpose(0, 2, 1))) == 0.0
    np.testing.assert_allclose(compat.tensor_to_components(tensor), t9)
    # identity frame: chart components coincide with frame components
    np.testing.assert_allclose(tp.chart_components(), tensor, atol=1e-15)


def test_chart_components_transform(conformal_randers):
    pd = geometry.point_data(conformal_randers, np.array([0.1, -0.2, 0.3]))
    rng = np.random.default_rng(36)
    t9 = rng.normal(size=9)
    tp = TorsionAtPoint(t9, pd.frame)
    chart = tp.chart_components()
    back = np.einsum("cr,rij,ia,jb->cab",
                     pd.Linv, chart, pd.L, pd.L)
    np.testing.assert_allclose(back, tp.as_tensor(), atol=1e-13)


# ---------------------------------------------------------------------------
# system assembly

def test_riemannian_system_is_empty(curved_riemannian):
    sys = compat.assemble_system(curved_riemannian, np.array([0.3, 0.1, -0.2]))
    assert sys.rows.shape[0] == 0
    assert sys.vertical_dirs.shape[0] > 0
    assert sys.flags == ()
    assert sys.horizontal_violation < 1e-10


def test_randers_system_keeps_nonvertical(randers_rotating):
    sys = compat.assemble_system(randers_rotating, np.zeros(3))
    assert sys.rows.shape == (3 * sys.dirs.shape[0], 9)
    assert sys.rhs.shape == (sys.rows.shape[0],)
    assert sys.dirs.shape[0] + sys.vertical_dirs.shape[0] >= sys.dirs.shape[0]


def test_vertical_not_horizontal_certificate(randers_nonconst):
    # the one-form axis is a vertical contact direction; a growing norm
    # makes the horizontal derivative there nonzero
    dirs = np.vstack([np.array([0.0, 0.0, 1.0]), random_directions(37, 8)])
    sys = compat.assemble_system(randers_nonconst, np.zeros(3), dirs=dirs)
    assert "vertical-not-horizontal" in sys.flags
    assert sys.horizontal_violation > 1e-3


# ---------------------------------------------------------------------------
# pointwise solves across the model zoo

def test_solve_riemannian_trivial(euclidean, curved_riemannian):
    for m in (euclidean, curved_riemannian):
        sol = compat.solve_pointwise(m, np.array([0.2, -0.1, 0.4]))
        assert sol.status == compat.STATUS_RIEMANNIAN
        assert sol.rank == 0
        assert sol.base.norm2() == 0.0


def test_solve_rotating_randers_base(randers_rotating):
    sol = compat.solve_pointwise(randers_rotating, np.zeros(3))
    assert sol.status == compat.STATUS_UNDETERMINED
    assert sol.rank == 6
    assert sol.detail["nullity"] == 3
    np.testing.assert_allclose(sol.base.t, ROTATING_BASE_T9, atol=1e-10)
    # nullspace axis is the one-form direction, canonical sign
    np.testing.assert_allclose(sol.axis, [0.0, 0.0, 1.0], atol=1e-8)
    assert sol.residual < 1e-10


def test_solution_space_is_affine(randers_rotating):
    m = randers_rotating
    p = np.array([0.25, -0.15, 0.05])
    pd = geometry.point_data(m, p)
    sol = compat.solve_pointwise(m, p, data=pd)
    assert sol.status == compat.STATUS_UNDETERMINED
    sys = compat.assemble_system(m, p, data=pd)
    base_res = np.max(np.abs(sys.rows @ sol.base.t - sys.rhs))
    for lam in (-1.0, 1.0, 10.0):
        t = sol.base.t + lam * sol.direction
        res = np.max(np.abs(sys.rows @ t - sys.rhs))
        assert res < base_res + 1e-9
    # motion along any other 9-vector leaves the affine set
    rng = np.random.default_rng(38)
    off = rng.normal(size=9)
    off -= sol.direction * (off @ sol.direction)
    res = np.max(np.abs(sys.rows @ (sol.base.t + off) - sys.rhs))
    assert res > 1e-3


def test_axis_orthogonal_to_cross_span(conformal_randers):
    m = conformal_randers
    p = np.array([0.1, 0.2, -0.1])
    pd = geometry.point_data(m, p)
    sol = compat.solve_pointwise(m, p, data=pd)
    assert sol.status == compat.STATUS_UNDETERMINED
    cross, _, _, _ = contact.cross_batch(m, pd, random_directions(39, 200))
    dots = np.abs(cross @ sol.axis)
    assert np.max(dots) < 1e-8 * (1 + np.max(np.linalg.norm(cross, axis=1)))


def test_rank_is_three_times_cross_span(randers_rotating, dc_quartic,
                                        dc_triaxial_static, curved_riemannian):
    cases = [
        (curved_riemannian, 0),
        (randers_rotating, 6),
        (dc_quartic, 9),
        (dc_triaxial_static, 9),
    ]
    for m, want_rank in cases:
        p = np.array([0.1, -0.2, 0.15])
        pd = geometry.point_data(m, p)
        sol = compat.solve_pointwise(m, p, data=pd)
        assert sol.rank == want_rank
        cross, _, _, _ = contact.cross_batch(m, pd, random_directions(40, 400))
        if want_rank == 0:
            assert np.max(np.linalg.norm(cross, axis=1)) < 1e-10
        else:
            s = np.linalg.svd(cross, compute_uv=False)
            dim = int(np.sum(s > 1e-8 * s[0]))
            assert 3 * dim == want_rank


def test_determined_quartic(dc_quartic):
    from conftest import quartic_torsion_t9
    sol = compat.solve_pointwise(dc_quartic, np.array([0.2, 0.1, -0.3]))
    assert sol.status == compat.STATUS_DETERMINED
    assert sol.rank == 9
    assert sol.direction is None and sol.axis is None
    np.testing.assert_allclose(sol.base.t, quartic_torsion_t9(), atol=1e-10)


def test_static_triaxial_is_determined_flat(dc_triaxial_static):
    sol = compat.solve_pointwise(dc_triaxial_static, np.array([0.3, 0.0, -0.1]))
    assert sol.status == compat.STATUS_DETERMINED
    assert np.max(np.abs(sol.base.t)) < 1e-10


def test_infeasible_by_residual(randers_nonconst):
    sol = compat.solve_pointwise(randers_nonconst, np.zeros(3))
    assert sol.status == compat.STATUS_INFEASIBLE
    assert sol.residual > 1e-3


def test_doubling_directions_is_stable(randers_rotating):
    p = np.array([0.2, 0.1, -0.2])
    a = compat.solve_pointwise(randers_rotating, p, n_dirs=96)
    b = compat.solve_pointwise(randers_rotating, p, n_dirs=192)
    assert a.status == b.status
    assert a.rank == b.rank
    np.testing.assert_allclose(a.base.t, b.base.t, atol=1e-9)
    np.testing.assert_allclose(a.axis, b.axis, atol=1e-8)


# ---------------------------------------------------------------------------
# surfaces

def test_surface_matches_per_direction_solve(surf_randers2d):
    m = surf_randers2d
    p = np.array([0.3, -0.2])
    out = compat.solve_surface_2d(m, p)
    assert not out.riemannian
    assert out.weight > 1e-4

    pd = geometry.point_data(m, p)
    nodes = circle_nodes(64)
    _, C, G, b = geometry.frame_batch(m, pd, nodes)
    f12 = C[:, 0] * G[:, 1] - C[:, 1] * G[:, 0]
    rows = np.zeros((2 * 64, 2))
    rhs = np.zeros(2 * 64)
    rows[0::2, 0] = f12
    rows[1::2, 1] = f12
    rhs[0::2] = b[:, 0] / 2.0
    rhs[1::2] = b[:, 1] / 2.0
    t_ls, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    np.testing.assert_allclose(out.torsion, t_ls, atol=1e-6)


def test_surface_conformal_is_riemannian(surf_conformal2d):
    out = compat.solve_surface_2d(surf_conformal2d, np.array([0.1, 0.4]))
    assert out.riemannian
    assert out.torsion == (0.0, 0.0)
    assert out.weight < 1e-12


def test_surface_rejects_3d_model(randers_const):
    with pytest.raises(geometry.GeometryError):
        compat.solve_surface_2d(randers_const, np.zeros(3))


def test_tolerances_defaults():
    tol = Tolerances()
    assert tol.n_dirs == 96
    assert tol.eps_feas == 1e-6
    assert tol.ode_h == 1e-3
