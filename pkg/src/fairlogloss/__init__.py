"""Fair robust log-loss classification: truncated logistic regression with group-fairness guarantees."""

from .errors import (
    BadValue,
    DegenerateDenominator,
    EmptyFile,
    MissingColumn,
    MissingGroup,
    NonFiniteObjective,
    ZeroGroupRate,
)
from .fairness import CriterionKind, FairnessSpec, empirical_rates, membership
from .lambda_solver import GroupProbs, solve_lambda, truncated_group_means
from .model_core import (
    ConstraintSide,
    GroupRates,
    approximator_probability,
    base_probability,
    predictor_probability,
    reshaping_curve,
)
from .training import Model, TrainConfig, loss, objective, subgradient, train

__version__ = "0.1.0"
