"""Finite-time Lyapunov exponents and probabilistic uncertainty measures."""

__version__ = "0.1.0"

from .errors import (ConditioningError, ConfigError, DecompositionError, DomainError,
                     EstimationError, InvalidInputError, NumericError, ResumeError,
                     SingularMatrixError, SniftleError, UndefinedMeasureError)
from .flowfield import (GriddedField, SystemModel, builtin_model, double_gyre,
                        linear_saddle, load_gridded, model_from_grid, rigid_rotation,
                        zero_model)
from .flowmap import FlowSolution, IntegratorConfig, flow_map_only, solve_flow
from .measures import MeasureRecord, ftle, measure_record, q2, s2, sniftle
from .uqcov import CovarianceDecomposition, UncertaintyScales, covariance, gaussian_predictive
