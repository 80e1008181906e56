"""Primal-dual occupancy-measure learning for constrained episodic pricing MDPs."""
from pddp.core import (
    LayeredTopology,
    OccupancyMeasure,
    Policy,
    TransitionFn,
    ValidityReport,
    expected_value,
    induced_policy,
    induced_transition,
    occupancy_from,
    validate_occupancy,
)
from pddp.confidence import ConfidenceSet
from pddp.environment import PricingEnv, PricingEnvConfig, Schedule, build_pricing_mdp

__all__ = [
    "ConfidenceSet",
    "LayeredTopology",
    "OccupancyMeasure",
    "Policy",
    "PricingEnv",
    "PricingEnvConfig",
    "Schedule",
    "TransitionFn",
    "ValidityReport",
    "build_pricing_mdp",
    "expected_value",
    "induced_policy",
    "induced_transition",
    "occupancy_from",
    "validate_occupancy",
]
