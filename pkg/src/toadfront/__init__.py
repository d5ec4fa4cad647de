"""toadfront: a numerical laboratory for trait-structured Fisher-KPP fronts.

Library layout:
  grids       shared domain types (trait grids, profiles, fields, reactions)
  dispersion  principal eigenpairs, c(lambda), minimal-speed constants
  solver      ADI time stepping for every evolution model, waves, sandwiches
  fronts      level-set extraction, logarithmic-delay fits, tail slopes
  kernels     heat-kernel, distance, Harnack / Varadhan / Nash probes
  expansion   multi-scale approximate solutions, residual scaling, criticality
  cli         experiment orchestration, persistence, plot-data emission
"""

__version__ = "0.1.0"

from .grids import (
    Field,
    ReactionLaw,
    SpaceTimeGrid,
    ThetaDomain,
    TraitProfile,
    WindowPolicy,
    normalize_drift,
    sample_profile,
    total_density,
)
from .dispersion import (
    DispersionCurve,
    EigenPair,
    SpectralData,
    dispersion_curve,
    dispersion_report,
    minimize_speed,
    principal_eigenpair,
    spectral_data,
)

__all__ = [
    "Field",
    "ReactionLaw",
    "SpaceTimeGrid",
    "ThetaDomain",
    "TraitProfile",
    "WindowPolicy",
    "normalize_drift",
    "sample_profile",
    "total_density",
    "DispersionCurve",
    "EigenPair",
    "SpectralData",
    "dispersion_curve",
    "dispersion_report",
    "minimize_speed",
    "principal_eigenpair",
    "spectral_data",
    "__version__",
]
