"""Exit functionals of Markov-modulated fluid processes.

Analytic two-sided exit values from Wiener-Hopf factors, and an exact-event
Monte Carlo engine that handles piecewise-constant (time-inhomogeneous)
generators.
"""
from . import exit_ops, mc_engine, numerics, wh_factor
from .errors import *  # noqa: F401,F403
from .exit_ops import (
    NeumannResult,
    PreExitResult,
    TwoSidedResult,
    contraction_constant,
    decomposition_residual,
    evolution_operator,
    exit_matrices,
    neumann_apply,
    one_sided,
    pre_exit_law,
    two_sided,
)
from .model import (
    Constant,
    ModelSpec,
    PiecewiseConstant,
    ValidatedModel,
    homogeneous,
    load_model,
    model_from_dict,
    model_to_dict,
    validate_model,
)
from .payoff import ExpDecayFunction
from .wh_factor import WienerHopfFactors, factorize, residual, tilt_factorize

__version__ = "0.1.0"
