"""Deletion-robust data valuation."""

from .deletion import (
    BetaBernoulli,
    DeletionModel,
    IndependentBernoulli,
    JointCategorical,
    SizeWeighted,
    enumerate_support,
    point_mass,
)
from .game import (
    CooperativeGame,
    EnumerationLimitError,
    InvalidCoalitionError,
    make_additive_game,
    make_random_monotone_game,
    table_game,
    two_source_fixture,
)
from .risk import DiscreteDistribution, RiskSpec, c_cvar_minus, c_cvar_plus, risk_derdava, risk_game
from .semivalue import (
    Banzhaf,
    Beta,
    CoefficientTable,
    CustomWeights,
    LeaveOneOut,
    Shapley,
    exact_semivalue,
    npo_extend,
)
from .valuation import (
    EstimatorConfig,
    ValuationResult,
    exact_derdava,
    gelman_rubin,
    mc_derdava,
    mcmc012_derdava,
    plan_sample_size,
    scaled_semivalue,
)

__all__ = [
    "Banzhaf",
    "Beta",
    "BetaBernoulli",
    "CoefficientTable",
    "CooperativeGame",
    "CustomWeights",
    "DeletionModel",
    "DiscreteDistribution",
    "EnumerationLimitError",
    "EstimatorConfig",
    "IndependentBernoulli",
    "InvalidCoalitionError",
    "JointCategorical",
    "LeaveOneOut",
    "RiskSpec",
    "Shapley",
    "SizeWeighted",
    "ValuationResult",
    "c_cvar_minus",
    "c_cvar_plus",
    "enumerate_support",
    "exact_derdava",
    "exact_semivalue",
    "gelman_rubin",
    "make_additive_game",
    "make_random_monotone_game",
    "mc_derdava",
    "mcmc012_derdava",
    "npo_extend",
    "plan_sample_size",
    "point_mass",
    "risk_derdava",
    "risk_game",
    "scaled_semivalue",
    "table_game",
    "two_source_fixture",
]
