"""
Direct Control (Policy Iteration)

- Fully implicit step with the control optimized at every node
- Howard iteration: improve the policy by exhaustive search, then solve
- Policy improvement uses the same central/upwind stencils as the linear solves
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from core.config import get_settings
from core.errors import ConfigError, DiscretizationError
from core.finite_difference import (
    BoundaryConditions,
    StencilWeights,
    apply_operator,
    solve_with_weights,
    stencil_weights,
)
from core.mesh import Mesh1D, TimeGrid
from models.problem import Direction, HjbProblem
from solvers.controls import ControlSet
from solvers.solution import MeshSolution

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class HowardStep:
    values: np.ndarray
    policy: np.ndarray  # control index per node
    iterations: int
    converged: bool
    monotone: bool


def control_stencils(problem: HjbProblem, mesh: Mesh1D, controls: ControlSet) -> List[StencilWeights]:
    """Stencil weights of L_q on the mesh for every control in the set."""
    return [stencil_weights(problem.coefficients(mesh, q), mesh) for q in controls]


def _select(stencils: Sequence[StencilWeights], policy: np.ndarray) -> StencilWeights:
    cols = np.arange(len(policy))

    def pick(name):
        return np.stack([getattr(s, name) for s in stencils])[policy, cols]

    return StencilWeights(w_sub=pick("w_sub"), w_sup=pick("w_sup"), r=pick("r"), f=pick("f"))


def howard_step(u_n: np.ndarray, stencils: Sequence[StencilWeights], mesh: Mesh1D,
                bc: BoundaryConditions, dt: float, tau_new: float, direction: Direction,
                tol: float = 1e-10, max_iters: int = 50) -> HowardStep:
    """
    Solve u = u_n + dt * opt_q L_q^h u by policy iteration.

    Args:
        u_n: values at tau_n
        stencils: weights of L_q^h for each control, in control-set order
        mesh: spatial mesh
        bc: boundary conditions
        dt: timestep
        tau_new: tau_{n+1}
        direction: MAX (sup over controls) or MIN (inf)
        tol: relative stopping tolerance on successive iterates
        max_iters: cap on linear solves

    Returns:
        HowardStep with the last iterate; converged is False when the cap was hit
    """
    if not tol > 0:
        raise ConfigError(f"Policy iteration tolerance must be positive, got {tol}")
    if max_iters < 1:
        raise ConfigError(f"max_iters must be at least 1, got {max_iters}")
    if not stencils:
        raise ConfigError("Policy iteration needs at least one control")

    sign = direction.sign
    interior = slice(1, -1)
    policy = np.zeros(mesh.count, dtype=int)
    previous: Optional[np.ndarray] = None
    monotone = True

    for iteration in range(1, max_iters + 1):
        u = solve_with_weights(_select(stencils, policy), mesh, bc, dt, u_n, tau_new)
        scale = tol * max(1.0, float(np.max(np.abs(u))))

        if previous is not None and np.any(sign * (u - previous) < -scale):
            monotone = False
            logger.warning("Policy iteration lost monotonicity at iteration %d", iteration)

        residuals = np.stack([sign * apply_operator(s, u) for s in stencils])
        improved = policy.copy()
        improved[interior] = np.argmax(residuals[:, interior], axis=0)

        unchanged = np.array_equal(improved, policy)
        small = previous is not None and float(np.max(np.abs(u - previous))) <= scale
        logger.debug("Policy iteration %d: %d nodes changed control", iteration, int(np.sum(improved != policy)))
        if unchanged or small:
            return HowardStep(values=u, policy=policy, iterations=iteration, converged=True, monotone=monotone)
        previous, policy = u, improved

    logger.warning("Policy iteration hit max_iters=%d without converging", max_iters)
    return HowardStep(values=u, policy=policy, iterations=max_iters, converged=False, monotone=monotone)


@dataclass(eq=False)
class DirectResult(MeshSolution):
    policy: Optional[np.ndarray] = None
    iterations: Optional[List[int]] = None
    controls: Optional[ControlSet] = None

    def policy_values(self) -> np.ndarray:
        """Control value per node at the last time level."""
        return np.asarray(self.controls.values, dtype=float)[self.policy]


def solve_direct(problem: HjbProblem, mesh: Mesh1D, time_grid: TimeGrid, controls: ControlSet,
                 direction: Optional[Direction] = None, tol: Optional[float] = None,
                 max_iters: Optional[int] = None) -> DirectResult:
    """N policy-iteration steps from the payoff; the control is found with the solution."""
    settings = get_settings()
    direction = direction or problem.direction
    tol = settings.policy_tol if tol is None else tol
    max_iters = settings.policy_max_iters if max_iters is None else max_iters

    stencils = control_stencils(problem, mesh, controls)
    bc = problem.boundary_conditions(mesh)
    u = np.asarray(problem.terminal(mesh.nodes), dtype=float)
    iterations = []
    step = None

    for n in range(time_grid.steps):
        step = howard_step(u, stencils, mesh, bc, time_grid.dt, time_grid.tau(n + 1), direction, tol, max_iters)
        u = step.values
        if not np.all(np.isfinite(u)):
            raise DiscretizationError(f"Direct control solution is not finite at step {n + 1}")
        iterations.append(step.iterations)

    logger.debug(
        "Direct %s: J=%d, N=%d, M=%d, mean iterations %.2f", problem.name, len(controls),
        time_grid.steps, mesh.count, float(np.mean(iterations)),
    )
    return DirectResult(
        mesh=mesh, values=u, query=problem.query,
        policy=step.policy, iterations=iterations, controls=controls,
    )
