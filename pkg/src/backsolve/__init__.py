"""Regularized space-time least-squares solver for backward heat problems."""

from .config import ConfigError, ExperimentConfig, parse_config
from .mesh import (
    SpatialMesh,
    TimeMesh,
    refine_uniform,
    uniform_time_mesh,
    unit_interval_mesh,
    unit_square_initial,
)
from .operators import (
    KroneckerOperator,
    assemble_B,
    gram_X,
    gram_Y,
    infsup_constant,
    trace_operator,
)
from .precond import RieszPreconditioner, make_G_X, make_G_Y
from .solver import (
    ErrorReport,
    LeastSquaresSystem,
    SolveReport,
    build_meshes,
    build_system,
    choose_epsilon,
    error_report,
    fit_rate,
    pcg,
    solve_backward,
)
from .cli import main, read_results, run, write_csv

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ErrorReport",
    "ExperimentConfig",
    "KroneckerOperator",
    "LeastSquaresSystem",
    "RieszPreconditioner",
    "SolveReport",
    "SpatialMesh",
    "TimeMesh",
    "assemble_B",
    "build_meshes",
    "build_system",
    "choose_epsilon",
    "error_report",
    "fit_rate",
    "gram_X",
    "gram_Y",
    "infsup_constant",
    "main",
    "make_G_X",
    "make_G_Y",
    "parse_config",
    "pcg",
    "read_results",
    "refine_uniform",
    "run",
    "solve_backward",
    "trace_operator",
    "uniform_time_mesh",
    "unit_interval_mesh",
    "unit_square_initial",
    "write_csv",
    "__version__",
]
