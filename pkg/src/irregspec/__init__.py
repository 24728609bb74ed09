"""Spectral analysis of irregularly spaced spatial data via quadratic forms of Fourier coefficients."""

from .serialization import __version__
from .errors import (ConfigError, DataError, IrregSpecError, NumericalError, CheckFailure)
from .grid import FrequencyGrid, frequency, sinc, sinc_prod, sinc_cross_integral
from .models import (SpectralModel, WeightFunction, constant_weight, exponential_model,
                     exponential_half_model, indicator_weight, inverse_spectral_weight, make_model,
                     rectangular_window, scale_separable_model, triangular_window)
from .sampling import (SamplingDensity, SpatialSample, sample_density_locations, sample_uniform_locations,
                       simulate_gaussian_field, simulate_sample)
from .dft import DftField, dft_at, dft_grid, dft_many, ridge_term
from .quadform import (QResult, covariance_estimator, covariance_estimator_spectrum, q_statistic, q_tilde,
                       stationarity_statistic, windowed_spectral_estimator)
from .fit import FitResult, fit_l2, fit_whittle, l2_gradient, l2_objective, minimize, whittle_objective
from .harness import McConfig, McReport, ladder, normality_check, run_mc

__all__ = [
    "__version__", "ConfigError", "DataError", "IrregSpecError", "NumericalError", "CheckFailure",
    "FrequencyGrid", "frequency", "sinc", "sinc_prod", "sinc_cross_integral",
    "SpectralModel", "WeightFunction", "constant_weight", "exponential_model",
    "exponential_half_model", "indicator_weight", "inverse_spectral_weight", "make_model",
    "rectangular_window", "scale_separable_model", "triangular_window",
    "SamplingDensity", "SpatialSample", "sample_density_locations", "sample_uniform_locations",
    "simulate_gaussian_field", "simulate_sample",
    "DftField", "dft_at", "dft_grid", "dft_many", "ridge_term",
    "QResult", "covariance_estimator", "covariance_estimator_spectrum", "q_statistic", "q_tilde",
    "stationarity_statistic", "windowed_spectral_estimator",
    "FitResult", "fit_l2", "fit_whittle", "l2_gradient", "l2_objective", "minimize", "whittle_objective",
    "McConfig", "McReport", "ladder", "normality_check", "run_mc",
]
