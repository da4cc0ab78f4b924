"""Bayesian smoothing and imputation of functional data observed on the nodes of a graph."""

__version__ = "0.1.0"

from .basis import CoefficientMatrix, TemporalBasis, from_canonical, temporal_basis, to_canonical
from .errors import (
    ConfigError,
    DegenerateSpectrumError,
    DimensionMismatchError,
    GenerationError,
    GraphSmoothError,
    InsufficientDataError,
    InvalidGraphError,
    NumericalError,
    ValidationError,
)
from .graph import (
    DimensionFit,
    Graph,
    Spectrum,
    build_laplacian,
    estimate_dimension,
    generate_graph,
    graph_spectrum,
    ingest_geographic,
    spectral_decompose,
)
from .kernels import BACKEND
from .mcmc import ChainConfig, ChainTrace, cross_validate_alpha, run_chain
from .pinsker import PinskerFilter, empirical_rate_exponent, pinsker_estimate, pinsker_filter, solve_pinsker_delta
from .posterior import (
    PosteriorField,
    PriorSpec,
    SmoothnessSpec,
    conjugate_posterior,
    prior_variances,
    select_scale_c,
)
from .uncertainty import CredibleBall, credible_ball, equal_tail_intervals, inflate

__all__ = [
    "BACKEND",
    "ChainConfig",
    "ChainTrace",
    "CoefficientMatrix",
    "ConfigError",
    "CredibleBall",
    "DegenerateSpectrumError",
    "DimensionFit",
    "DimensionMismatchError",
    "GenerationError",
    "Graph",
    "GraphSmoothError",
    "InsufficientDataError",
    "InvalidGraphError",
    "NumericalError",
    "PinskerFilter",
    "PosteriorField",
    "PriorSpec",
    "SmoothnessSpec",
    "Spectrum",
    "TemporalBasis",
    "ValidationError",
    "build_laplacian",
    "conjugate_posterior",
    "credible_ball",
    "cross_validate_alpha",
    "empirical_rate_exponent",
    "equal_tail_intervals",
    "estimate_dimension",
    "from_canonical",
    "generate_graph",
    "graph_spectrum",
    "inflate",
    "ingest_geographic",
    "pinsker_estimate",
    "pinsker_filter",
    "prior_variances",
    "run_chain",
    "select_scale_c",
    "solve_pinsker_delta",
    "spectral_decompose",
    "temporal_basis",
    "to_canonical",
]
