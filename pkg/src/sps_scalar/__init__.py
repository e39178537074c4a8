"""Sign-Perturbed Sums confidence intervals for scalar linear regression."""

from .bounds import invert_radius, lemma_tail, outer_tail_bound, tail_bound
from .core import (
    exact_region,
    grid_scan_region,
    indicator,
    initialize,
    least_squares,
    outer_approximation,
    pairwise_intersections,
    rank_of,
    sums_at,
)
from .model import (
    BoundedRegressor,
    ConfidenceRegion,
    ConstantInNoise,
    DataSet,
    GaussianRegressor,
    OuterInterval,
    SpsConfig,
    SpsInstance,
    Target,
    UserRegressorMGF,
    config_from_level,
)

__version__ = "0.1.0"
