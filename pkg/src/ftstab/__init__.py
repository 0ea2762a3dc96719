"""Finite-time stability analysis and state-feedback synthesis for linear
discrete time-varying systems with multiplicative noise."""

__version__ = "0.1.0"

from .errors import (
    CertificateError,
    ConditioningError,
    FtsError,
    PreconditionError,
    SizeCapError,
    ValidationError,
)
from .model import (
    ControlledSystem,
    FeedbackLaw,
    FtsSpec,
    NoiseModel,
    StochasticSystem,
    closed_loop,
    load_problem,
    validate,
)
from .gramian import check_fts_exact, check_fts_sufficient_cor1, moment_propagate, perturbation_margin, weighted_gram
from .lmi import check_fts_lyapunov, synthesize_gains, verify_certificate
from .sim import monte_carlo, simulate
