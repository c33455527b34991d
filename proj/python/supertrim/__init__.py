"""Superprocess semigroups, particle approximations and verification scenarios."""

import json as _json

from ._supertrim import (
    CapExceeded,
    ConfigError,
    DomainError,
    PreconditionError,
    SolverError,
    gamma_from_h,
    h_transform,
    linear_moment,
    scenario_names,
    simulate_super,
    solve_generating,
    solve_loglaplace,
    survival_p,
    u_infinity,
)
from ._supertrim import run_scenario as _run_scenario

__all__ = [
    "CapExceeded",
    "ConfigError",
    "DomainError",
    "PreconditionError",
    "SolverError",
    "gamma_from_h",
    "h_transform",
    "linear_moment",
    "run_scenario",
    "scenario_names",
    "simulate_super",
    "solve_generating",
    "solve_loglaplace",
    "survival_p",
    "u_infinity",
]


def run_scenario(config):
    """Run a verification scenario. `config` is a dict or a JSON string."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _run_scenario(config)
