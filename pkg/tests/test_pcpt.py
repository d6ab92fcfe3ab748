import math

import numpy as np
import pytest

from core.errors import ConfigError, DiscretizationError, MeshError
from core.finite_difference import (
    BoundaryConditions,
    DiscountOde,
    OperatorCoefficients,
    implicit_euler_step,
    stencil_weights,
)
from core.interpolation import InterpKind
from core.mesh import TimeGrid, build_uniform_mesh, shifted_mesh
from models.mean_variance import MeanVarianceBoundedProblem, mv_asymptotic_expectation
from models.problem import Direction
from models.uncertain_volatility import UncertainVolatilityProblem, UvParams, uv_coefficients
from solvers.controls import ControlSet, discretize_control_set
from solvers.howard import control_stencils, howard_step
from solvers.pcpt import (
    MeshStrategy,
    SwitchingConfig,
    SwitchingState,
    build_policy_meshes,
    coupling_stage,
    optimal_policy,
    pcpt_step,
    solve_pcpt,
)

FREE_ENDS = BoundaryConditions(lower=DiscountOde(rate=0.0), upper=DiscountOde(rate=0.0))
U0 = np.array([1.0, 5.0, 2.0, 0.0, 3.0])
U1 = np.array([2.0, 1.0, 2.0, 4.0, 0.0])


def _shared_state(*values):
    mesh = build_uniform_mesh(0.0, 1.0, len(values[0]))
    return SwitchingState(meshes=tuple(mesh for _ in values), values=values)


# ------------------------------------------------------------
# switching stage
# ------------------------------------------------------------

def test_max_coupling_without_cost():
    coupling = coupling_stage(_shared_state(U0, U1), SwitchingConfig(cost=0.0))
    for rhs in coupling.rhs:
        np.testing.assert_array_equal(rhs, [2.0, 5.0, 2.0, 4.0, 3.0])
    np.testing.assert_array_equal(coupling.source[0], [1, 0, 0, 1, 0])
    # tie at node 2 goes to the lower index
    np.testing.assert_array_equal(coupling.source[1], [1, 0, 0, 1, 0])


def test_min_coupling_adds_the_cost():
    coupling = coupling_stage(_shared_state(U0, U1), SwitchingConfig(cost=0.5, direction=Direction.MIN))
    np.testing.assert_allclose(coupling.rhs[0], [1.0, 1.5, 2.0, 0.0, 0.5])
    np.testing.assert_allclose(coupling.rhs[1], [1.5, 1.0, 2.0, 0.5, 0.0])


@pytest.mark.parametrize("direction", list(Direction))
def test_large_cost_blocks_every_switch(direction):
    coupling = coupling_stage(_shared_state(U0, U1), SwitchingConfig(cost=10.0, direction=direction))
    np.testing.assert_array_equal(coupling.rhs[0], U0)
    np.testing.assert_array_equal(coupling.rhs[1], U1)


def test_single_component_coupling_is_a_copy():
    state = _shared_state(U0)
    coupling = coupling_stage(state, SwitchingConfig(cost=1.0))
    np.testing.assert_array_equal(coupling.rhs[0], U0)
    assert coupling.rhs[0] is not state.values[0]


@pytest.mark.parametrize("direction", list(Direction))
@pytest.mark.parametrize("cost", [0.0, 1.0])
def test_shared_mesh_fast_path_matches_general_path(direction, cost):
    rng = np.random.default_rng(17)
    mesh = build_uniform_mesh(0.0, 1.0, 50)
    for _ in range(50):
        values = tuple(rng.integers(0, 5, 50).astype(float) for _ in range(4))
        state = SwitchingState(meshes=(mesh,) * 4, values=values)
        fast = coupling_stage(state, SwitchingConfig(cost=cost, direction=direction))
        general = coupling_stage(state, SwitchingConfig(cost=cost, direction=direction,
                                                        interp=InterpKind(reference=mesh)))
        for j in range(4):
            np.testing.assert_array_equal(fast.rhs[j], general.rhs[j])
            np.testing.assert_array_equal(fast.source[j], general.source[j])


def test_zero_cost_makes_components_identical():
    rng = np.random.default_rng(2)
    values = tuple(rng.normal(size=30) for _ in range(3))
    coupling = coupling_stage(_shared_state(*values), SwitchingConfig(cost=0.0))
    expected = np.max(np.stack(values), axis=0)
    for rhs in coupling.rhs:
        np.testing.assert_array_equal(rhs, expected)


# ------------------------------------------------------------
# u_t = 0 on shifted meshes
# ------------------------------------------------------------

def _shifted_pair(count=21):
    a = build_uniform_mesh(0.0, 1.0, count)
    b = shifted_mesh(a, 0.5 * a.spacing)
    zero = stencil_weights(OperatorCoefficients(a=0.0, b=0.0), a)
    state = SwitchingState(meshes=(a, b), values=(a.nodes ** 2, b.nodes ** 2))
    return state, (zero, zero), (FREE_ENDS, FREE_ENDS)


def test_switching_cost_absorbs_interpolation_gain():
    state, weights, bcs = _shifted_pair()
    initial = state.values
    cfg = SwitchingConfig(cost=state.meshes[0].spacing)
    for n in range(100):
        state = pcpt_step(state, weights, bcs, 1e-3, (n + 1) * 1e-3, cfg)
    np.testing.assert_array_equal(state.values[0], initial[0])
    np.testing.assert_array_equal(state.values[1], initial[1])


def test_zero_cost_shifted_meshes_average_neighbours():
    state, weights, bcs = _shifted_pair()
    u = state.values[0]
    cfg = SwitchingConfig(cost=0.0)
    for n in range(2):
        state = pcpt_step(state, weights, bcs, 1e-3, (n + 1) * 1e-3, cfg)
    expected = 0.25 * u[:-2] + 0.5 * u[1:-1] + 0.25 * u[2:]
    np.testing.assert_allclose(state.values[0][1:-1], expected, atol=1e-13)
    assert state.step == 2


# ------------------------------------------------------------
# timestepping
# ------------------------------------------------------------

def test_single_policy_step_is_an_implicit_euler_step():
    p = UvParams()
    mesh = build_uniform_mesh(3.0, 6.0, 41)
    coeffs = uv_coefficients(0.4, p)
    bc = BoundaryConditions(lower=DiscountOde(rate=p.r), upper=DiscountOde(rate=p.r))
    u = np.sin(mesh.nodes) ** 2
    state = SwitchingState(meshes=(mesh,), values=(u,))
    stepped = pcpt_step(state, [stencil_weights(coeffs, mesh)], [bc], 0.01, 0.01, SwitchingConfig())
    np.testing.assert_array_equal(stepped.values[0], implicit_euler_step(coeffs, mesh, bc, 0.01, u, 0.01))


class _ConvexUv(UncertainVolatilityProblem):
    """UV operator on [-1, 1] with discounting ends."""

    def domain(self, control=None):
        return -1.0, 1.0

    def boundary_conditions(self, mesh):
        return BoundaryConditions(lower=DiscountOde(rate=self.params.r), upper=DiscountOde(rate=self.params.r))


def test_one_step_agrees_with_policy_iteration_on_convex_data():
    problem = _ConvexUv()
    mesh = build_uniform_mesh(-1.0, 1.0, 21)
    controls = discretize_control_set(0.3, 0.5, 2)
    stencils = control_stencils(problem, mesh, controls)
    bc = problem.boundary_conditions(mesh)
    u = np.exp(2.0 * mesh.nodes)

    direct = howard_step(u, stencils, mesh, bc, 0.01, 0.01, Direction.MAX)
    assert direct.converged
    assert np.all(direct.policy[1:-1] == 1)
    sigma_max = implicit_euler_step(uv_coefficients(0.5, problem.params), mesh, bc, 0.01, u, 0.01)
    np.testing.assert_allclose(direct.values, sigma_max, rtol=1e-13)

    state = SwitchingState(meshes=(mesh, mesh), values=(u, u))
    stepped = pcpt_step(state, stencils, [bc, bc], 0.01, 0.01, SwitchingConfig())
    np.testing.assert_allclose(stepped.values[1], direct.values, rtol=1e-13)
    for component in stepped.values:
        assert np.all(direct.values >= component - 1e-12)


def _uv_pcpt(cost, workers=1, strategy=MeshStrategy.SHARED, count=65):
    problem = UncertainVolatilityProblem()
    controls = discretize_control_set(0.3, 0.5, 2)
    meshes = build_policy_meshes(problem, controls, strategy, count=count)
    cfg = SwitchingConfig(cost=cost, mesh_strategy=strategy)
    return solve_pcpt(problem, controls, meshes, TimeGrid(1.0, 20), cfg, workers=workers)


def test_value_decreases_with_switching_cost():
    values = [_uv_pcpt(c).value for c in (0.0, 0.01, 0.05, 0.1, 0.5)]
    assert all(later <= earlier + 1e-12 for earlier, later in zip(values, values[1:]))
    assert values[0] > values[-1]


def _single_sigma(sigma, count=65):
    problem = UncertainVolatilityProblem()
    controls = ControlSet.single(sigma)
    meshes = build_policy_meshes(problem, discretize_control_set(0.3, 0.5, 2), MeshStrategy.SHARED, count=count)
    return solve_pcpt(problem, controls, meshes[:1], TimeGrid(1.0, 20), SwitchingConfig()).value


def test_ask_value_dominates_every_constant_volatility():
    value = _uv_pcpt(0.0).value
    for sigma in (0.3, 0.5):
        assert value >= _single_sigma(sigma) - 1e-12


def test_bid_value_is_below_the_ask_value():
    problem = UncertainVolatilityProblem(direction=Direction.MIN)
    controls = discretize_control_set(0.3, 0.5, 2)
    meshes = build_policy_meshes(problem, controls, MeshStrategy.SHARED, count=65)
    cfg = SwitchingConfig(direction=Direction.MIN)
    bid = solve_pcpt(problem, controls, meshes, TimeGrid(1.0, 20), cfg).value
    assert bid <= _uv_pcpt(0.0).value
    for sigma in (0.3, 0.5):
        assert bid <= _single_sigma(sigma) + 1e-12


def test_threaded_solves_match_sequential():
    sequential = _uv_pcpt(0.05, strategy=MeshStrategy.PER_POLICY)
    threaded = _uv_pcpt(0.05, workers=2, strategy=MeshStrategy.PER_POLICY)
    for a, b in zip(sequential.coupled.values, threaded.coupled.values):
        np.testing.assert_array_equal(a, b)


def test_per_policy_meshes():
    problem = UncertainVolatilityProblem()
    controls = discretize_control_set(0.3, 0.5, 2)
    meshes = build_policy_meshes(problem, controls, MeshStrategy.PER_POLICY, spacing=0.1)
    assert [m.count for m in meshes] == [25, 41]
    assert meshes[0].hi - meshes[0].lo == pytest.approx(2.4)
    shared = build_policy_meshes(problem, controls, MeshStrategy.SHARED, count=33)
    assert shared[0] is shared[1]
    with pytest.raises(ConfigError):
        build_policy_meshes(problem, controls, MeshStrategy.SHARED, count=33, spacing=0.1)


def test_optimal_policy_on_shared_mesh():
    state = _shared_state(U0, U1)
    controls = ControlSet(values=np.array([0.3, 0.5]), density=0.1)
    np.testing.assert_array_equal(optimal_policy(state, controls, Direction.MAX), [0.5, 0.3, 0.3, 0.5, 0.3])
    np.testing.assert_array_equal(optimal_policy(state, controls, Direction.MIN), [0.3, 0.5, 0.3, 0.3, 0.5])

    state, _, _ = _shifted_pair()
    with pytest.raises(MeshError):
        optimal_policy(state, controls, Direction.MAX)


def test_tracked_expectation_follows_riskless_growth():
    problem = MeanVarianceBoundedProblem()
    controls = ControlSet.single(0.0)
    meshes = build_policy_meshes(problem, controls, MeshStrategy.SHARED, count=401)
    cfg = SwitchingConfig(direction=problem.direction)
    result = solve_pcpt(problem, controls, meshes, TimeGrid(problem.horizon, 400), cfg, track_expectation=True)
    b = problem.params.r
    exact = mv_asymptotic_expectation(problem.params.W0, problem.horizon, b, problem.params)
    assert result.expectation_at() == pytest.approx(exact, rel=1e-2)
    assert math.isfinite(result.value)


def test_untracked_expectation_raises():
    with pytest.raises(ConfigError):
        _uv_pcpt(0.0, count=17).expectation_at()


def test_invalid_switching_inputs():
    with pytest.raises(ConfigError):
        SwitchingConfig(cost=-1.0)
    mesh = build_uniform_mesh(0.0, 1.0, 5)
    with pytest.raises(DiscretizationError):
        SwitchingState(meshes=(mesh,), values=(np.array([0.0, 1.0, np.nan, 0.0, 0.0]),))
    with pytest.raises(DiscretizationError):
        SwitchingState(meshes=(mesh,), values=(np.zeros(4),))


def _uv_policy_state(rng, controls, problem, count=33):
    meshes = build_policy_meshes(problem, controls, MeshStrategy.PER_POLICY, count=count)
    values = tuple(rng.normal(scale=3.0, size=m.count) for m in meshes)
    return meshes, values


@pytest.mark.parametrize("direction", list(Direction))
@pytest.mark.parametrize("routed", [False, True])
def test_linear_coupling_is_monotone_in_its_inputs(direction, routed):
    rng = np.random.default_rng(41)
    problem = UncertainVolatilityProblem()
    controls = discretize_control_set(0.3, 0.5, 3)
    meshes = build_policy_meshes(problem, controls, MeshStrategy.PER_POLICY, count=33)
    reference = build_uniform_mesh(min(m.lo for m in meshes), max(m.hi for m in meshes), 81) if routed else None
    cfg = SwitchingConfig(cost=0.05, direction=direction, interp=InterpKind(reference=reference))
    for _ in range(100):
        lower = tuple(rng.normal(size=m.count) for m in meshes)
        upper = tuple(u + rng.uniform(0.0, 1.0, len(u)) for u in lower)
        low = coupling_stage(SwitchingState(meshes=meshes, values=lower), cfg)
        high = coupling_stage(SwitchingState(meshes=meshes, values=upper), cfg)
        for a, b in zip(low.rhs, high.rhs):
            assert np.all(b - a >= -1e-12)


@pytest.mark.parametrize("direction", list(Direction))
def test_step_respects_the_max_norm_bound(direction):
    rng = np.random.default_rng(42)
    problem = UncertainVolatilityProblem()
    controls = discretize_control_set(0.3, 0.5, 3)
    cfg = SwitchingConfig(cost=0.02, direction=direction)
    for _ in range(50):
        meshes, values = _uv_policy_state(rng, controls, problem)
        weights = [stencil_weights(uv_coefficients(q, problem.params), m) for q, m in zip(controls.values, meshes)]
        bcs = [problem.boundary_conditions(m) for m in meshes]
        dt = float(rng.uniform(1e-3, 0.1))
        stepped = pcpt_step(SwitchingState(meshes=meshes, values=values), weights, bcs, dt, dt, cfg)
        bound = max(
            max(np.max(np.abs(u)) for u in values),
            max(bc.data_bound(m, dt) for bc, m in zip(bcs, meshes)),
        )
        for u in stepped.values:
            assert np.max(np.abs(u)) <= bound * (1 + 1e-12) + 1e-12
