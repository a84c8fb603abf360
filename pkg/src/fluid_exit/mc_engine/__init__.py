"""Exact-event Monte Carlo for sub-Markovian chains with piecewise-constant generators."""
from .estimators import (
    BatchOutcome,
    CompositeBound,
    DecompositionReport,
    EstimateWithCI,
    JointExit,
    OneSided,
    PreExitLaw,
    TwoSidedXi,
    composite_indicator_bound,
    default_horizon,
    direct_pre_exit,
    estimate,
    first_jump_probability,
    mean_and_stderr,
    run_batch,
    simulate,
    verify_decomposition,
    z_score,
)
from .paths import CrossingResult, Outcome, PathSample, crossing, sample_path

__all__ = [
    "BatchOutcome", "CompositeBound", "CrossingResult", "DecompositionReport", "EstimateWithCI",
    "JointExit", "OneSided", "Outcome", "PathSample", "PreExitLaw", "TwoSidedXi",
    "composite_indicator_bound", "crossing", "default_horizon", "direct_pre_exit", "estimate",
    "first_jump_probability", "mean_and_stderr", "run_batch", "sample_path", "simulate",
    "verify_decomposition", "z_score",
]
