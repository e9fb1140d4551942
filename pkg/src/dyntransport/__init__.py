"""Discrete dynamic optimal transport on time-expanded graphs."""

from .errors import (
    CertificateError,
    ConfigurationError,
    ContractError,
    EvaluationError,
    InfeasibilityError,
    TransportError,
    ValidationError,
)
from .lagrangian import Lagrangian, TableLagrangian
from .metric_measure import (
    Coupling,
    DiscreteMeasure,
    LipschitzPotential,
    MetricSpace,
    integrate,
    kr_distance,
    kr_dual,
)
from .solvers import ValueFunction, certify_duality, dyn_ot, tonelli_dp, value_function
from .superposition import (
    CurveDecomposition,
    HolonomicApproximation,
    PeriodicCurve,
    SolenoidalDecomposition,
    apportion,
    cycle_decompose,
    decompose_ode,
    holonomic_approximate,
    superpose,
)
from .transport import (
    ClosedMeasure,
    Curve,
    GeneralizedCurve,
    ProjectionCertificate,
    TestFunction,
    TimeExpandedGraph,
    TransportMeasure,
    VectorField,
    action,
    barycentric_project,
    continuity_residual,
    curve_embed,
    jensen_reduce,
    marginal_path,
    tangent_kr_distance,
    to_young,
)
from .young import Integrand, TimeGrid, YoungMeasure, disintegrate, integrate_young, product

__version__ = "0.1.0"
