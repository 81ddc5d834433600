from .errors import (
    BiorthogonalityFailure,
    BlowupDetected,
    BranchAmbiguity,
    ConfigError,
    ContractionFailure,
    DegenerateRoots,
    GkdvError,
    GridTooSmall,
    IllConditionedMatch,
    LimitNotSettled,
    NearSingular,
    NewtonDivergence,
    NonConvergence,
    NotProjected,
    RatioOverflow,
    ResolutionLoss,
    TubeExit,
)
from .grid_helpers import (
    FieldGrid,
    cumulative,
    exponential_sweep,
    finite_difference,
    fourier_shift,
    gauss_primitive,
    grid_derivative,
    inner,
    integrate_grid,
    l2_norm,
    make_grid,
)
from .output_helpers import read_snapshot, read_table, write_snapshot, write_summary, write_table

__all__ = [
    "GkdvError",
    "ConfigError",
    "GridTooSmall",
    "BiorthogonalityFailure",
    "RatioOverflow",
    "BranchAmbiguity",
    "DegenerateRoots",
    "NonConvergence",
    "ContractionFailure",
    "LimitNotSettled",
    "IllConditionedMatch",
    "NearSingular",
    "NotProjected",
    "BlowupDetected",
    "ResolutionLoss",
    "NewtonDivergence",
    "TubeExit",
    "FieldGrid",
    "make_grid",
    "grid_derivative",
    "finite_difference",
    "integrate_grid",
    "inner",
    "l2_norm",
    "cumulative",
    "exponential_sweep",
    "fourier_shift",
    "gauss_primitive",
    "write_table",
    "read_table",
    "write_snapshot",
    "read_snapshot",
    "write_summary",
]
