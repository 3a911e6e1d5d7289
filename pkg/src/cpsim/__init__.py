"""Contact process in a quenched i.i.d. random edge environment on the
half space Z^d x Z^+: graphical-representation simulator, exact small-graph
oracle, survival/critical-value estimators, and block-renormalization
experiments."""

from .environment import DistributionSpec, Environment, ModelParams
from .estimators import (CriticalEstimate, Estimate, InitialSpec,
                         SurvivalQuery, critical_value, survival_probability,
                         survival_sweep)
from .lattice import Box, Region
from .oracle import FiniteGraph, exact_distribution, exact_hit, exact_survival
from .renorm import (BlockOutcome, BoxSpec, RenormResult, block_probability,
                     block_sensitivity, find_block_params, linear_growth_fit,
                     renorm_run, renorm_samples)

__version__ = "0.1.0"

__all__ = [
    "Box", "Region",
    "DistributionSpec", "Environment", "ModelParams",
    "FiniteGraph", "exact_distribution", "exact_survival", "exact_hit",
    "Estimate", "CriticalEstimate", "InitialSpec", "SurvivalQuery",
    "survival_probability", "survival_sweep", "critical_value",
    "BoxSpec", "BlockOutcome", "RenormResult", "block_probability",
    "find_block_params", "renorm_run", "renorm_samples",
    "linear_growth_fit", "block_sensitivity",
    "__version__",
]
