"""Reflected mean-field SDE simulation and deviation experiments."""

from ._mvsde import (
    BoundaryContactError,
    ConfigError,
    ConvexDomain,
    MonotoneOperator,
    NumericalError,
    Scenario,
    control_energy,
    describe_schema,
    mdp_process,
    mdp_rate_of_path,
    rate_of_path,
    rate_optimize,
    resolvent,
    run_config,
    second_moment,
    simulate_coupled_limit,
    simulate_particles,
    solve_limit,
    solve_mdp_skeleton,
    solve_skeleton,
    validate_config,
    w2_1d,
    w2_assignment,
    w2_coupled_bound,
    weak_convergence_probe,
    yosida,
)

__all__ = [
    "BoundaryContactError",
    "ConfigError",
    "ConvexDomain",
    "MonotoneOperator",
    "NumericalError",
    "Scenario",
    "control_energy",
    "describe_schema",
    "mdp_process",
    "mdp_rate_of_path",
    "rate_of_path",
    "rate_optimize",
    "resolvent",
    "run_config",
    "second_moment",
    "simulate_coupled_limit",
    "simulate_particles",
    "solve_limit",
    "solve_mdp_skeleton",
    "solve_skeleton",
    "validate_config",
    "w2_1d",
    "w2_assignment",
    "w2_coupled_bound",
    "weak_convergence_probe",
    "yosida",
]
