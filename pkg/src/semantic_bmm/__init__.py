"""Sequential Bayesian moment matching for Dirichlet-normal-gamma semantic maps."""

from .bmm import (
    PROJECTIONS,
    DegenerateMomentsError,
    bmm_property_update,
    bmm_property_update_composed,
    posterior_moments,
    project,
)
from .conjugate_update import (
    AllSuppressedError,
    categorical_update,
    dirichlet_tilt,
    log_marginal,
    mixture_posterior_terms,
    ng_conjugate_update,
)
from .distributions import (
    DirichletParams,
    MapParams,
    MapState,
    NormalGammaBlock,
    ParameterError,
    PosteriorMoments,
    dirichlet_moments,
    map_moments,
    normal_gamma_moments,
)
from .dynamics import (
    FilterState,
    ForgettingConfig,
    TimedMeasurement,
    TimeRegressionError,
    predict,
    run_filter,
    step,
)
from .special_math import DomainError, digamma, ln_gamma, log_sum_exp
from .voxel_map import VoxelGrid

__version__ = "0.1.0"
