import itertools
import math

import numpy as np
import pytest

from core.errors import ConfigError
from core.finite_difference import assemble_implicit_system
from core.mesh import TimeGrid, build_uniform_mesh
from models.problem import Direction
from models.uncertain_volatility import UncertainVolatilityProblem, uv_coefficients
from solvers.controls import ControlSet, discretize_control_set
from solvers.fixed_policy import solve_fixed_policy
from solvers.howard import control_stencils, howard_step, solve_direct

PROBLEM = UncertainVolatilityProblem()
CONTROLS = discretize_control_set(0.3, 0.5, 2)


def _five_node_instance():
    lo, hi = PROBLEM.domain()
    mesh = build_uniform_mesh(lo, hi, 5)
    return mesh, PROBLEM.boundary_conditions(mesh), PROBLEM.terminal(mesh.nodes)


def _enumerated_solutions(mesh, bc, u_n, dt):
    """Dense solve of every policy assignment on the interior nodes."""
    solutions = []
    for choice in itertools.product(CONTROLS.values, repeat=mesh.count - 2):
        sigma = np.array([CONTROLS.values[0], *choice, CONTROLS.values[0]])
        system = assemble_implicit_system(uv_coefficients(sigma, PROBLEM.params), mesh, bc, dt, u_n, dt)
        solutions.append(np.linalg.solve(system.to_dense(), system.rhs))
    return np.stack(solutions)


def test_policy_iteration_matches_exhaustive_enumeration():
    mesh, bc, u_n = _five_node_instance()
    dt = 0.1
    step = howard_step(u_n, control_stencils(PROBLEM, mesh, CONTROLS), mesh, bc, dt, dt, Direction.MAX)
    oracle = _enumerated_solutions(mesh, bc, u_n, dt)
    np.testing.assert_allclose(step.values, oracle.max(axis=0), atol=1e-10)
    assert step.converged
    assert step.monotone
    assert step.iterations <= 10


def test_min_direction_matches_enumeration():
    mesh, bc, u_n = _five_node_instance()
    dt = 0.1
    step = howard_step(u_n, control_stencils(PROBLEM, mesh, CONTROLS), mesh, bc, dt, dt, Direction.MIN)
    oracle = _enumerated_solutions(mesh, bc, u_n, dt)
    np.testing.assert_allclose(step.values, oracle.min(axis=0), atol=1e-10)


def test_single_control_takes_one_iteration():
    mesh = build_uniform_mesh(*PROBLEM.domain(), 33)
    bc = PROBLEM.boundary_conditions(mesh)
    u_n = PROBLEM.terminal(mesh.nodes)
    single = ControlSet.single(0.4)
    step = howard_step(u_n, control_stencils(PROBLEM, mesh, single), mesh, bc, 0.05, 0.05, Direction.MAX)
    assert step.iterations == 1
    assert step.converged


def test_iteration_cap_reports_non_convergence():
    mesh = build_uniform_mesh(-1.0, 1.0, 21)
    bc = PROBLEM.boundary_conditions(mesh)
    u_n = np.exp(2.0 * mesh.nodes)
    step = howard_step(u_n, control_stencils(PROBLEM, mesh, CONTROLS), mesh, bc, 0.01, 0.01,
                       Direction.MAX, max_iters=1)
    assert not step.converged
    assert step.iterations == 1


@pytest.mark.parametrize("kwargs", [{"tol": 0.0}, {"max_iters": 0}])
def test_invalid_iteration_settings(kwargs):
    mesh, bc, u_n = _five_node_instance()
    with pytest.raises(ConfigError):
        howard_step(u_n, control_stencils(PROBLEM, mesh, CONTROLS), mesh, bc, 0.1, 0.1, Direction.MAX, **kwargs)


def test_empty_control_list_rejected():
    mesh, bc, u_n = _five_node_instance()
    with pytest.raises(ConfigError):
        howard_step(u_n, [], mesh, bc, 0.1, 0.1, Direction.MAX)


def test_direct_with_one_control_is_the_fixed_policy_solve():
    mesh = build_uniform_mesh(*PROBLEM.domain(), 65)
    grid = TimeGrid(1.0, 10)
    direct = solve_direct(PROBLEM, mesh, grid, ControlSet.single(0.4))
    fixed = solve_fixed_policy(PROBLEM, mesh, grid, 0.4)
    np.testing.assert_allclose(direct.values, fixed.values, rtol=1e-13, atol=1e-13)
    assert direct.iterations == [1] * 10


def test_direct_control_run():
    mesh = build_uniform_mesh(*PROBLEM.domain(), 65)
    result = solve_direct(PROBLEM, mesh, TimeGrid(1.0, 20), CONTROLS)
    assert len(result.iterations) == 20
    assert max(result.iterations) <= 10
    assert set(np.unique(result.policy_values()[1:-1])) <= {0.3, 0.5}
    assert math.isfinite(result.value)
    low = solve_fixed_policy(PROBLEM, mesh, TimeGrid(1.0, 20), 0.3)
    high = solve_fixed_policy(PROBLEM, mesh, TimeGrid(1.0, 20), 0.5)
    assert np.all(result.values >= np.maximum(low.values, high.values) - 1e-7)


def test_settings_supply_iteration_defaults(monkeypatch):
    monkeypatch.setenv("PCPT_POLICY_MAX_ITERS", "1")
    mesh = build_uniform_mesh(*PROBLEM.domain(), 33)
    result = solve_direct(PROBLEM, mesh, TimeGrid(1.0, 4), CONTROLS)
    assert result.iterations == [1] * 4
