"""Complex projective structures on a chart of C^2 and their Kahler metrisability."""

from .curvature import Classification, classify, k_tensor, liouville, weyl
from .expr import ChartPoint, DomainError, Expr, ParseError, diff, evaluate, parse, to_text
from .geodesics import GeodesicTrajectory, integrate_geodesic, wedge_residual
from .metrisability import (
    HermitianForm3,
    flat_metric_field,
    h_from_metric,
    metric_from_h,
    metrise,
    obstruction_solution_space,
    solve_flat,
    state_from_metric,
    verify_compatibility,
    weyl_obstruction_residual,
)
from .prolongation import ChartPath, ProlongedState, holonomy_defect, prolonged_rhs, transport
from .structure import (
    ChristoffelField,
    HermitianMetricField,
    ProjectiveStructure,
    default_grid,
    fubini_study,
    levi_civita,
    pi_lower,
    project,
    shift,
)

__version__ = "0.1.0"

__all__ = [
    "ChartPath",
    "ChartPoint",
    "ChristoffelField",
    "Classification",
    "DomainError",
    "Expr",
    "GeodesicTrajectory",
    "HermitianForm3",
    "HermitianMetricField",
    "ParseError",
    "ProjectiveStructure",
    "ProlongedState",
    "classify",
    "default_grid",
    "diff",
    "evaluate",
    "flat_metric_field",
    "fubini_study",
    "h_from_metric",
    "holonomy_defect",
    "integrate_geodesic",
    "k_tensor",
    "levi_civita",
    "liouville",
    "metric_from_h",
    "metrise",
    "obstruction_solution_space",
    "parse",
    "pi_lower",
    "project",
    "prolonged_rhs",
    "shift",
    "solve_flat",
    "state_from_metric",
    "to_text",
    "transport",
    "verify_compatibility",
    "wedge_residual",
    "weyl",
    "weyl_obstruction_residual",
]
