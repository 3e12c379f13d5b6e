"""Nonstationary sparse spectral permanental processes, shallow and deep."""

__version__ = "0.1.0"

from .features import FeatureMap, SpectralLayer, init_map, kernel_eval, map_forward
from .integrals import IntegralStats, analytic_stats, intensity_integral, quadrature_stats
from .laplace import DesignCache, LaplacePosterior, find_mode, laplace_posterior, log_marginal
from .metrics import (expected_log_squared, expected_test_loglik, intensity_grid,
                      predictive_f, predictive_intensity, rmse)
from .simulation import KernelSpec, synth_dataset, thinning_sample
from .training import FitConfig, FittedModel, fit
from .window import PointPattern, Window, center_coordinates, load_events, save_events
