"""Relative entropy and entropy production of continuous-time Markov chains
estimated from waiting times of their time-discretized paths."""
from .core import (
    CtmcModel,
    build_generator,
    continuous_scgf,
    discrete_mean_and_variance,
    discrete_scgf,
    discretized_transition_matrix,
    entropy_production_rate,
    legendre_transform,
    relative_entropy_rate,
    reverse,
    spectral_gap,
    stationary,
    stationary_distribution,
)
from .errors import (
    AbsoluteContinuityError,
    CtmcError,
    DomainError,
    ExperimentError,
    NumericError,
    ValidationError,
)
from .estimators import EstimateReport, ExperimentPlan, Schedule
from .matching import MatchResult, hitting_time, return_time, shadow_hitting_time, waiting_time
from .pathsim import DiscretePath, Trajectory, discretize, girsanov_log_ratio, simulate
from .rng import Seed

__version__ = "0.1.0"
