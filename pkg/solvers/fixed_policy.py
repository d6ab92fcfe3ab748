"""
Fixed Policy

- Implicit Euler under a prescribed control (constant, or a function of (x, t))
- Companion expectation under the same control
"""

import logging
from typing import Callable, Union

import numpy as np

from core.finite_difference import solve_with_weights, stencil_weights
from core.mesh import Mesh1D, TimeGrid
from models.problem import HjbProblem
from solvers.solution import MeshSolution

logger = logging.getLogger(__name__)

Policy = Union[float, Callable[[np.ndarray, float], np.ndarray]]


def solve_fixed_policy(problem: HjbProblem, mesh: Mesh1D, time_grid: TimeGrid, policy: Policy,
                       track_expectation: bool = False) -> MeshSolution:
    """
    Linear solve of V_tau = L_q V with q given.

    Args:
        problem: problem supplying payoff, coefficients and boundaries
        mesh: spatial mesh
        time_grid: timesteps
        policy: constant control, or policy(nodes, t) giving a control per node
            at forward time t = T - tau
        track_expectation: also evolve the companion expectation

    Returns:
        MeshSolution at tau = T
    """
    bc = problem.boundary_conditions(mesh)
    companion_bc = problem.companion_boundary_conditions(mesh) if track_expectation else None
    u = np.asarray(problem.terminal(mesh.nodes), dtype=float)
    e = np.asarray(problem.companion_terminal(mesh.nodes), dtype=float) if track_expectation else None

    constant = stencil_weights(problem.coefficients(mesh, policy), mesh) if not callable(policy) else None
    dt = time_grid.dt
    for n in range(time_grid.steps):
        tau_new = time_grid.tau(n + 1)
        if constant is None:
            control = np.asarray(policy(mesh.nodes, time_grid.horizon - tau_new), dtype=float)
            weights = stencil_weights(problem.coefficients(mesh, control), mesh)
        else:
            weights = constant
        u = solve_with_weights(weights, mesh, bc, dt, u, tau_new)
        if e is not None:
            e = solve_with_weights(weights, mesh, companion_bc, dt, e, tau_new)

    logger.debug("Fixed policy %s: N=%d, M=%d", problem.name, time_grid.steps, mesh.count)
    return MeshSolution(mesh=mesh, values=u, query=problem.query, expectation=e)
