"""Compatible linear connections on Finsler 3-manifolds.

Classify points of a Finsler manifold by the affine space of torsion
tensors whose metric connections preserve the Finslerian length, compute
the minimum-norm (extremal) member in closed form, and verify everything
by parallel transport.
"""

from .compat import (
    COMPONENT_ORDER,
    AffineSolutionSpace,
    Tolerances,
    TorsionAtPoint,
    solve_pointwise,
    solve_surface_2d,
)
from .extremal import (
    AxisField,
    ExtremalField,
    LeviCivitaField,
    connection_coefficients,
    extremal_parameters,
)
from .geometry import (
    FinslerModel,
    GeometryError,
    make_custom,
    make_randers,
    make_riemannian,
    point_data,
)
from .transport import CurveSpec, parallel_transport, transport_solution

__version__ = "0.1.0"

__all__ = [
    "COMPONENT_ORDER",
    "AffineSolutionSpace",
    "AxisField",
    "CurveSpec",
    "ExtremalField",
    "FinslerModel",
    "GeometryError",
    "LeviCivitaField",
    "Tolerances",
    "TorsionAtPoint",
    "connection_coefficients",
    "extremal_parameters",
    "make_custom",
    "make_randers",
    "make_riemannian",
    "parallel_transport",
    "point_data",
    "solve_pointwise",
    "solve_surface_2d",
    "transport_solution",
    "__version__",
]
