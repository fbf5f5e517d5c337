"""Batch experiment runner: scaling schedules, regime classification and convergence experiments."""
from .schedule import RegimeReport, ScalingSchedule, classify_regime, normalizer
from .stats import CovarianceEstimate, empirical_cf, estimate_covariance
from .experiment import ExperimentConfig, ExperimentReport, run_convergence_experiment

__all__ = [
    "CovarianceEstimate",
    "ExperimentConfig",
    "ExperimentReport",
    "RegimeReport",
    "ScalingSchedule",
    "classify_regime",
    "empirical_cf",
    "estimate_covariance",
    "normalizer",
    "run_convergence_experiment",
]
