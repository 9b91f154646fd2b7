"""Simulation and parameter extraction for pulsed SFWM photon-pair sources."""

__version__ = "0.1.0"

from .coincidence import CarEstimate, GaussianFit, Histogram, compute_car, fit_gaussian_peak, window_counts
from .extract import FitTriple, GammaEstimate, gamma_dual_config, gamma_single_config
from .fitting import QuadFit, RatePoint, repeats_to_rate_point, weighted_quadratic_fit
from .montecarlo import (
    PowerPointRecord,
    SweepDataset,
    simulate_point_aggregate,
    simulate_point_perpulse,
    simulate_sweep,
)
from .presets import lab_source
from .ratemodel import (
    Channel,
    IoConfig,
    SourceParams,
    expected_accidental_rate,
    expected_coincidence_rate,
    expected_singles_rate,
)
from .sweep import AnalysisOptions, SweepPlan, default_plan, run_pipeline

__all__ = [
    "AnalysisOptions",
    "CarEstimate",
    "Channel",
    "FitTriple",
    "GammaEstimate",
    "GaussianFit",
    "Histogram",
    "IoConfig",
    "PowerPointRecord",
    "QuadFit",
    "RatePoint",
    "SourceParams",
    "SweepDataset",
    "SweepPlan",
    "compute_car",
    "default_plan",
    "expected_accidental_rate",
    "expected_coincidence_rate",
    "expected_singles_rate",
    "fit_gaussian_peak",
    "gamma_dual_config",
    "gamma_single_config",
    "lab_source",
    "repeats_to_rate_point",
    "run_pipeline",
    "simulate_point_aggregate",
    "simulate_point_perpulse",
    "simulate_sweep",
    "weighted_quadratic_fit",
    "window_counts",
]
