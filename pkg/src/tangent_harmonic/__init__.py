"""Tangential harmonic maps from the unit ball to the sphere.

Minimizers of the Dirichlet energy ``E(u) = 1/2 int |grad u|^2`` over unit
vector fields on the unit ball with ``u . nu = 0`` on the boundary sphere:
the reflection calculus across the sphere, an equivariant reduced solver,
a full 3D projected gradient flow, dyadic symmetrization, density and
defect diagnostics, and the closed-form energy bounds.
"""

__version__ = "0.1.0"

from .geometry import DomainError  # noqa: E402
from .fields import (  # noqa: E402
    BallGrid3,
    CylField,
    CylGrid,
    Field3,
    HalfDiskMesh,
    PsiField,
    lift_equivariant,
    load_checkpoint,
    save_checkpoint,
)
from .energy import dirichlet_energy, exterior_energy, reduced_energy  # noqa: E402
from .solvers import SolveParams, SolveTrace, SolverDivergence, solve_full3d, solve_reduced, solve_reduced_multilevel  # noqa: E402
from .symmetrization import symmetrize  # noqa: E402
from .analysis import degree_on_sphere, density, density_profile, detect_defects, extended_field3  # noqa: E402
from .bounds import E_LOWER, E_UPPER, competitor_u0, lower_bound, upper_bound  # noqa: E402
from .estimators import (  # noqa: E402
    DefectDetector,
    DyadicSymmetrizer,
    ReducedHarmonicMapSolver,
    TangentialHarmonicMap3D,
)

__all__ = [
    "__version__",
    "DomainError",
    "BallGrid3",
    "CylField",
    "CylGrid",
    "Field3",
    "HalfDiskMesh",
    "PsiField",
    "lift_equivariant",
    "load_checkpoint",
    "save_checkpoint",
    "dirichlet_energy",
    "exterior_energy",
    "reduced_energy",
    "SolveParams",
    "SolveTrace",
    "SolverDivergence",
    "solve_full3d",
    "solve_reduced",
    "solve_reduced_multilevel",
    "symmetrize",
    "degree_on_sphere",
    "density",
    "density_profile",
    "detect_defects",
    "extended_field3",
    "E_LOWER",
    "E_UPPER",
    "competitor_u0",
    "lower_bound",
    "upper_bound",
    "ReducedHarmonicMapSolver",
    "TangentialHarmonicMap3D",
    "DyadicSymmetrizer",
    "DefectDetector",
]
