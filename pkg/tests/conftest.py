"""Shared model zoo.

Each fixture returns a FinslerModel plus whatever closed-form ground truth
the construction affords.  The constructions are chosen so that expected
torsions, axes and connections are known by hand, independently of the code
under test:

* randers_rotating: flat metric, one-form of constant length K whose unit
  direction n(x) rotates with position.  The compatibility base torsion at
  the origin follows from differentiating n by hand.
* conformal_randers: same unit field under a conformal metric; the one-form
  is scaled so its metric length stays K, which keeps the model feasible
  while making frames and Christoffel symbols nontrivial.
* dc_quartic: F(x, y) = F0(R(-theta(x)) y) for a rotation R about the third
  axis and a quartic norm F0 with no rotational symmetry.  The unique
  compatible connection is Gamma^k_ij = -theta'_i J^k_j with J the rotation
  generator, so every pipeline stage has an exact target.
"""

import sys

import numpy as np
import pytest

from bwk import geometry


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion, printed after the test summary."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None) if mod else None
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for n in sorted(results):
        ok, msg = results[n]
        terminalreporter.write_line(
            f"criterion {n}: {'PASS' if ok else 'FAIL'} - {msg}")

K_ROT = 0.5
THETA_ROT = "0.7*x1"
PHI_ROT = "0.4*(x1+x2)"
Q_QUARTIC = (0.9, -0.7, 0.5)
LAMBDA_CONF = "0.3*sin(2*x1) + 0.2*cos(3*x2) + 0.1*sin(x3)"

DELTA3 = [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]


def rotating_unit_field():
    """Unit 3-vector expressions n(x) used by the Randers instances."""
    th, ph = THETA_ROT, PHI_ROT
    return [
        f"sin({th})*cos({ph})",
        f"-sin({ph})",
        f"cos({th})*cos({ph})",
    ]


def rotating_unit_values(x):
    th = 0.7 * x[0]
    ph = 0.4 * (x[0] + x[1])
    return np.array([
        np.sin(th) * np.cos(ph),
        -np.sin(ph),
        np.cos(th) * np.cos(ph),
    ])


# Base torsion of the rotating Randers instance at the origin, derived by
# hand from the one-form's first derivatives (theta' = 0.7, phi' = 0.4):
# columns ordered (12,1) (12,2) (12,3) (13,1) (13,2) (13,3) (23,1) (23,2) (23,3).
ROTATING_BASE_T9 = np.array([0.0, 0.0, -0.4, -0.7, 0.2, 0.0, 0.2, 0.4, 0.0])
ROTATING_AXIS_FLOW = np.array([0.0, 0.0, -1.0])   # binormal orientation
ROTATING_STU_FLOW = np.array([0.0, 0.0, 0.2])


def quartic_torsion_t9():
    q1, q2, q3 = Q_QUARTIC
    return np.array([q1, q2, 0.0, 0.0, q3, 0.0, -q3, 0.0, 0.0])


def quartic_gamma():
    J = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    return -np.einsum("i,kj->kij", np.array(Q_QUARTIC), J)


def conformal_metric_rows(lam=LAMBDA_CONF, n=3):
    return [[f"exp(2*({lam}))" if i == j else "0" for j in range(n)]
            for i in range(n)]


@pytest.fixture(scope="session")
def euclidean():
    return geometry.make_riemannian(DELTA3)


@pytest.fixture(scope="session")
def curved_riemannian():
    return geometry.make_riemannian(conformal_metric_rows())


@pytest.fixture(scope="session")
def randers_rotating():
    beta = [f"{K_ROT}*({c})" for c in rotating_unit_field()]
    return geometry.make_randers(DELTA3, beta)


@pytest.fixture(scope="session")
def randers_const():
    return geometry.make_randers(DELTA3, ["0", "0", "0.5"])


@pytest.fixture(scope="session")
def conformal_randers():
    lam = LAMBDA_CONF
    beta = [f"{K_ROT}*exp({lam})*({c})" for c in rotating_unit_field()]
    return geometry.make_randers(conformal_metric_rows(), beta)


@pytest.fixture(scope="session")
def randers_nonconst():
    """One-form length varies with x1, so no compatible connection exists."""
    return geometry.make_randers(DELTA3, ["0", "0", "0.5 + 0.2*x1"])


def quartic_finsler_src():
    q1, q2, q3 = Q_QUARTIC
    th = f"({q1}*x1 + {q2}*x2 + {q3}*x3)"
    w1 = f"(cos({th})*y1 + sin({th})*y2)"
    w2 = f"(0 - sin({th})*y1 + cos({th})*y2)"
    s2 = f"({w1}^2 + {w2}^2 + y3^2)"
    s4 = f"({w1}^4 + {w2}^4 + y3^4)"
    return f"({s2}^2 + 0.3*{s4})^0.25"


@pytest.fixture(scope="session")
def dc_quartic():
    return geometry.make_custom(DELTA3, quartic_finsler_src())


@pytest.fixture(scope="session")
def dc_triaxial_static():
    """x-independent triaxial norm: compatible, determined, zero torsion."""
    return geometry.make_custom(DELTA3, "(y1^2 + 1.3*y2^2 + 1.7*y3^2)^0.5")


@pytest.fixture(scope="session")
def surf_randers2d():
    delta2 = [["1", "0"], ["0", "1"]]
    beta = ["0.4*cos(0.6*x1)", "0.4*sin(0.6*x1)"]
    return geometry.make_randers(delta2, beta, n=2)


@pytest.fixture(scope="session")
def surf_conformal2d():
    rows = conformal_metric_rows("0.2*sin(x1) + 0.1*cos(2*x2)", n=2)
    return geometry.make_riemannian(rows, n=2)


# ---------------------------------------------------------------------------
# numeric helpers

def central_diff(f, x, h=1e-6):
    """Gradient of a scalar callable by 5-point central differences."""
    x = np.asarray(x, dtype=float)
    grad = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = 1.0
        f2 = f(x + 2 * h * e)
        f1 = f(x + h * e)
        fm1 = f(x - h * e)
        fm2 = f(x - 2 * h * e)
        grad[i] = (-f2 + 8 * f1 - 8 * fm1 + fm2) / (12 * h)
    return grad


def random_points(seed, count, scale=0.5):
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=(count, 3))


def random_directions(seed, count, n=3):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
