"""Dynamic sparse factor models.

EM estimation of factor models with time-varying sparse loadings under
dynamic spike-and-slab shrinkage, AR(1) latent factors, discount stochastic
volatility, and rotations to sparsity via parameter expansion.
"""

from .engine import InitStrategy, attach_intercept, fit, init_loadings
from .model import (FitResult, InterceptSpec, LoadingsPath, ModelConfig, Panel,
                    SmoothedMoments, VolatilityPath, eval_surrogate, validate_config)
from .prior import (DssParams, indicator_expectation, initial_indicator_expectation,
                    mixing_weight, slab_ar_mean, slab_density, spike_density,
                    stationary_slab_density)
from .rotation import RotationSet, rotate_loadings, update_rotation
from .simeval import (SimOutput, SimScenario, avg_active_per_series,
                      count_active_factors, left_order, rmse, simulate)
from .smoother import FilterState, kalman_filter, kalman_smoother
from .volatility import FfbsState, extract_modes, ffbs_backward, ffbs_forward

__version__ = "0.1.0"

__all__ = [
    "DssParams", "FfbsState", "FilterState", "FitResult", "InitStrategy",
    "InterceptSpec", "LoadingsPath", "ModelConfig", "Panel", "RotationSet",
    "SimOutput", "SimScenario", "SmoothedMoments", "VolatilityPath",
    "attach_intercept", "avg_active_per_series", "count_active_factors",
    "eval_surrogate", "extract_modes", "ffbs_backward", "ffbs_forward", "fit",
    "indicator_expectation", "init_loadings", "initial_indicator_expectation",
    "kalman_filter", "kalman_smoother", "left_order", "mixing_weight", "rmse",
    "rotate_loadings", "simulate", "slab_ar_mean", "slab_density",
    "spike_density", "stationary_slab_density", "update_rotation",
    "validate_config",
]
