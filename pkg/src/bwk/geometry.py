"""Finsler models over a chart: F and its first derivatives, the compatible
Riemannian metric field, Levi-Civita Christoffel symbols, orthonormal frames
and horizontal derivatives.

Conventions
-----------
Chart variables are x1..xn, fiber variables y1..yn (n is 2 or 3).  The frame
matrix L has the gamma-orthonormal basis vectors as columns, so a fiber
vector with frame components yhat has chart components y = L @ yhat, and a
covector w_i picks up frame components L.T @ w.  All heavy per-direction
work happens in frame components; see the batch helpers at the bottom.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expr as ex

RIEMANNIAN = "riemannian"
RANDERS = "randers"
CUSTOM = "custom-F"

_KINDS = (RIEMANNIAN, RANDERS, CUSTOM)


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class FinslerModel:
    kind: str
    metric: tuple            # n x n nested tuple of Expression, symmetric
    one_form: Optional[tuple]  # n Expressions, or None
    finsler: Optional[ex.Expression]  # custom-F only, in (x1..xn, y1..yn)
    n: int
    metric_constant: bool = False


@dataclass(frozen=True)
class ChartPoint:
    x: np.ndarray


@dataclass(frozen=True)
class TangentVector:
    base: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class OrthoFrame:
    L: np.ndarray     # columns are gamma-orthonormal basis vectors
    Linv: np.ndarray


def _vars(n):
    return tuple(f"x{i + 1}" for i in range(n))


def _parse_matrix(rows, n):
    out = []
    for i in range(n):
        out.append(tuple(
            e if isinstance(e, ex.Expression) else ex.parse(str(e), _vars(n))
            for e in rows[i]))
    return tuple(out)


def _metric_constant(metric) -> bool:
    return all(ex.is_constant(e) for row in metric for e in row)


def make_riemannian(metric_rows, n=3) -> FinslerModel:
    g = _parse_matrix(metric_rows, n)
    return FinslerModel(RIEMANNIAN, g, None, None, n, _metric_constant(g))


def make_randers(metric_rows, one_form, n=3) -> FinslerModel:
    beta = tuple(
        e if isinstance(e, ex.Expression) else ex.parse(str(e), _vars(n))
        for e in one_form)
    g = _parse_matrix(metric_rows, n)
    return FinslerModel(RANDERS, g, beta, None, n, _metric_constant(g))


def make_custom(metric_rows, finsler_src, n=3) -> FinslerModel:
    fvars = _vars(n) + tuple(f"y{i + 1}" for i in range(n))
    f = finsler_src if isinstance(finsler_src, ex.Expression) \
        else ex.parse(str(finsler_src), fvars)
    g = _parse_matrix(metric_rows, n)
    return FinslerModel(CUSTOM, g, None, f, n, _metric_constant(g))


def euclidean_metric(n=3):
    return [["1" if i == j else "0" for j in range(n)] for i in range(n)]


# ---------------------------------------------------------------------------
# per-point cache

@dataclass
class PointData:
    """Everything about the model at one chart point that directions reuse."""

    x: np.ndarray
    gamma: np.ndarray        # (n, n)
    gamma_inv: np.ndarray
    dgamma: np.ndarray       # (n, n, n), dgamma[k, i, j] = d gamma_ij / d x^k
    christoffel: np.ndarray  # (n, n, n), [k, i, j] = Gamma*^k_ij
    L: np.ndarray
    Linv: np.ndarray
    beta: Optional[np.ndarray]
    dbeta: Optional[np.ndarray]  # (n, n), dbeta[i, j] = d beta_j / d x^i

    @property
    def frame(self) -> OrthoFrame:
        return OrthoFrame(self.L, self.Linv)


def point_data(m: FinslerModel, p) -> PointData:
    p = np.asarray(p, dtype=float)
    n = m.n
    gamma = np.empty((n, n))
    dgamma = np.zeros((n, n, n))
    # seeding every variable with its basis row makes one dual walk return
    # the full gradient: deriv[k] = d/dx^k
    seeds = np.eye(n)
    if m.metric_constant:
        for i in range(n):
            for j in range(i, n):
                gamma[i, j] = gamma[j, i] = ex.eval_value(m.metric[i][j], p)
    else:
        for i in range(n):
            for j in range(i, n):
                d = ex.eval_dual(m.metric[i][j], p, seeds)
                gamma[i, j] = gamma[j, i] = d.value
                grad = np.broadcast_to(np.asarray(d.deriv, dtype=float), (n,))
                dgamma[:, i, j] = dgamma[:, j, i] = grad

    try:
        A = np.linalg.cholesky(gamma)
    except np.linalg.LinAlgError:
        raise GeometryError(f"metric not positive definite at {p.tolist()}")
    L = np.linalg.inv(A).T
    Linv = A.T
    gamma_inv = L @ L.T  # (A A^T)^-1

    if m.metric_constant:
        christoffel = np.zeros((n, n, n))
    else:
        # Gamma*^k_ij = 1/2 gamma^kl (d_i gamma_lj + d_j gamma_li - d_l gamma_ij)
        # dgamma[k,i,j] = d_k gamma_ij, so the bracket indexed [l,i,j] is
        term = dgamma.transpose(1, 0, 2) + dgamma.transpose(1, 2, 0) - dgamma
        christoffel = 0.5 * np.einsum("kl,lij->kij", gamma_inv, term)

    beta = dbeta = None
    if m.one_form is not None:
        beta = np.empty(n)
        dbeta = np.empty((n, n))
        for j in range(n):
            d = ex.eval_dual(m.one_form[j], p, seeds)
            beta[j] = d.value
            dbeta[:, j] = np.broadcast_to(np.asarray(d.deriv, dtype=float), (n,))
        if m.kind == RANDERS:
            b2 = beta @ gamma_inv @ beta
            if b2 >= 1.0:
                raise GeometryError(
                    f"one-form has alpha-norm {np.sqrt(b2):.6f} >= 1 at {p.tolist()}")

    return PointData(p, gamma, gamma_inv, dgamma, christoffel, L, Linv, beta, dbeta)


def christoffel_star(m: FinslerModel, p) -> np.ndarray:
    """Levi-Civita coefficients of the metric field, shape (n,n,n), [k,i,j]."""
    return point_data(m, p).christoffel


def orthonormal_frame(m: FinslerModel, p) -> OrthoFrame:
    return point_data(m, p).frame


# ---------------------------------------------------------------------------
# batched F, dF/dy, dF/dx over many directions at one point

def _as_batch(v, n_rows):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return np.full(n_rows, float(a))
    return a


def F_and_grads(m: FinslerModel, pd: PointData, Y: np.ndarray):
    """F, dF/dy and dF/dx in chart components for chart fiber vectors Y (N,n).

    Returns (F (N,), dFy (N,n), dFx (N,n)).
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    N, n = Y.shape
    if m.kind == CUSTOM:
        # one dual walk with 2n stacked seeds: deriv row s is d/d(x,y)_s,
        # kept as a trailing batch axis so array values broadcast through
        seeds = np.eye(2 * n)[:, :, None]
        env = [ex.DualScalar(pd.x[i], seeds[i]) for i in range(n)]
        env += [ex.DualScalar(Y[:, j], seeds[n + j]) for j in range(n)]
        d = m.finsler.root.eval(env)
        if not isinstance(d, ex.DualScalar):
            return _as_batch(d, N), np.zeros((N, n)), np.zeros((N, n))
        F = _as_batch(d.value, N)
        grad = np.broadcast_to(np.asarray(d.deriv, dtype=float), (2 * n, N))
        return F, grad[n:].T.copy(), grad[:n].T.copy()

    gY = Y @ pd.gamma
    alpha2 = np.sum(Y * gY, axis=1)
    if np.any(alpha2 <= 0):
        raise GeometryError("zero fiber vector")
    alpha = np.sqrt(alpha2)
    dFy = gY / alpha[:, None]
    # dFx_i = (Y . d_i gamma . Y) / (2 alpha)
    dFx = np.einsum("Nj,ijk,Nk->Ni", Y, pd.dgamma, Y) / (2.0 * alpha[:, None])
    F = alpha
    if m.kind == RANDERS:
        F = alpha + Y @ pd.beta
        dFy = dFy + pd.beta
        dFx = dFx + Y @ pd.dbeta.T  # (N,j)·(i,j)^T sums over j
    return F, dFy, dFx


def frame_batch(m: FinslerModel, pd: PointData, Yhat: np.ndarray):
    """Frame-component quantities for frame fiber vectors Yhat (N,n).

    Returns (F, C, G, b) with C = Yhat, G the gradient of F and
    b = -2 X^h* F, both as frame components of shape (N,n).
    """
    Yhat = np.atleast_2d(np.asarray(Yhat, dtype=float))
    Y = Yhat @ pd.L.T
    F, dFy, dFx = F_and_grads(m, pd, Y)
    XF = dFx - np.einsum("Nj,kij,Nk->Ni", Y, pd.christoffel, dFy)
    return F, Yhat, dFy @ pd.L, -2.0 * (XF @ pd.L)


# ---------------------------------------------------------------------------
# single-vector operations (the public entry points)

def _single(m, v: TangentVector):
    pd = point_data(m, v.base)
    y = np.asarray(v.y, dtype=float)
    if not np.any(y):
        raise GeometryError("zero tangent vector")
    return pd, y


def finsler_value(m: FinslerModel, v: TangentVector) -> float:
    pd, y = _single(m, v)
    F, _, _ = F_and_grads(m, pd, y[None, :])
    return float(F[0])


def finsler_grad_y(m: FinslerModel, v: TangentVector,
                   frame: Optional[OrthoFrame] = None) -> np.ndarray:
    """Gradient of F in y, as frame components (covector contracted with L)."""
    pd, y = _single(m, v)
    L = frame.L if frame is not None else pd.L
    _, dFy, _ = F_and_grads(m, pd, y[None, :])
    return dFy[0] @ L


def horizontal_derivative(m: FinslerModel, v: TangentVector,
                          frame: Optional[OrthoFrame] = None) -> np.ndarray:
    """b = (-2 X_i^h* F)(v), rotated into the orthonormal frame."""
    pd, y = _single(m, v)
    L = frame.L if frame is not None else pd.L
    _, dFy, dFx = F_and_grads(m, pd, y[None, :])
    XF = dFx[0] - np.einsum("j,kij,k->i", y, pd.christoffel, dFy[0])
    return -2.0 * (XF @ L)
