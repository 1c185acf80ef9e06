"""Quantitative hazard-scenario risk assessment.

Distribution fitting, factor screening, copula dependence models, Bayesian
network sampling and Monte Carlo risk estimation for automated-driving
hazard scenarios.
"""

__version__ = "0.1.0"

from .errors import (CycleError, DegenerateDataError, EvaluationError, FitError, GraphError,
                     HazardRiskError, RankDeficiencyError, ValidationError)
from .stats import (Distribution, FailureEvidence, estimate_failure_probability, estimate_failure_rate,
                    fit_marginal)
from .bayesnet import ancestral_sample, build_graph, log_density, topological_order
from .risk import (InjuryLevel, RacSpec, RiskEstimate, mcs_estimate, sil_lookup, sobol_first_order,
                   two_oo_three_failure)
from . import hs1  # registers the scenario functions with the network library
from .scenario import load_dataset, load_scenario, run_scenario, run_screening

__all__ = [
    "CycleError", "DegenerateDataError", "EvaluationError", "FitError", "GraphError", "HazardRiskError",
    "RankDeficiencyError", "ValidationError", "Distribution", "FailureEvidence",
    "estimate_failure_probability", "estimate_failure_rate", "fit_marginal", "ancestral_sample",
    "build_graph", "log_density", "topological_order", "InjuryLevel", "RacSpec", "RiskEstimate",
    "mcs_estimate", "sil_lookup", "sobol_first_order", "two_oo_three_failure", "hs1", "load_dataset",
    "load_scenario", "run_scenario", "run_screening",
]
