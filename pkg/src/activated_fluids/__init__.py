"""Executable constitutive graphs for activated fluids and 1D channel-flow solvers."""

from .errors import (
    DegenerateC,
    DomainMismatch,
    FamilyNotExplicit,
    FamilyNotSampleable,
    FamilyNotStressExplicit,
    FluidsError,
    InvalidAxis,
    InvalidParameters,
    NoConvergence,
    NotInvertible,
    SingularJacobian,
    UnsupportedFluid,
)
from .models import (
    ActivationKind,
    BoundaryFamily,
    BoundaryModel,
    BulkModel,
    Family,
    Limit,
    TensorPair,
    bc_residual,
    flow_curve,
    generalized_fluidity,
    generalized_viscosity,
    graph_residual,
    rate_of_stress,
    slip_of_traction,
    stress_of_rate,
    traction_of_slip,
    zero_limits,
)

__version__ = "0.1.0"
