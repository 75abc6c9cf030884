"""Exact discrete optimal transport on fibered spaces.

Distances between discrete measures, the disintegrated (p, q) metric between
fibered measures, classical and disintegrated barycenters on fixed supports,
and dual certificates that verify barycenter optimality.
"""

__version__ = "0.1.0"

from .barycenter import (
    BarycenterProblem,
    BarycenterResult,
    ProbeReport,
    candidate_search,
    classical_barycenter,
    classical_problem,
    disint_barycenter,
    make_problem,
    objective,
    project_simplex,
    uniqueness_probe,
)
from .duality import (
    DualCertificate,
    GapReport,
    duality_gap,
    eval_dual,
    extract_certificate,
    validate_certificate,
)
from .errors import (
    AllZeroMass,
    BaseMismatch,
    DegenerateInput,
    DisotError,
    EmptySupport,
    FiberMismatch,
    IndexOutOfRange,
    InvalidGroundCost,
    LPInfeasible,
    NegativeWeight,
    NotSolved,
    ParseError,
    ShapeMismatch,
    SupportOutOfRange,
    SupportViolation,
    TooLarge,
)
from .measures import (
    Bundle,
    DiscreteMeasure,
    FiberedMeasure,
    GroundCost,
    ReferencePoint,
    ValidationReport,
    dirac,
    disintegrate,
    normalize_measure,
    p_moment,
    reference_delta,
    validate_ground_cost,
)
from .metric import (
    DisintConfig,
    fiber_distance_profile,
    reference_distance,
    scrmk,
)
from .ot import (
    Coupling,
    OTResult,
    brute_force_ot,
    c_transform,
    coupling_is_deterministic,
    solve_ot,
    transport,
)
