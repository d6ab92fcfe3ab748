"""
Piecewise Constant Policy Timestepping

- One linear PDE per control, solved implicitly each timestep
- Explicit switching stage (max or min across components, switching cost c)
- Shared mesh or one mesh per policy, coupled by interpolation
- Optional companion expectation following the switching decisions
"""

import logging
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigError, DiscretizationError, MeshError
from core.finite_difference import (
    BoundaryConditions,
    StencilWeights,
    solve_with_weights,
    stencil_weights,
)
from core.interpolation import InterpKind, interp_linear, transfer, transfer_direct
from core.mesh import Mesh1D, TimeGrid, build_uniform_mesh, same_mesh
from models.problem import Direction, HjbProblem
from solvers.controls import ControlSet

logger = logging.getLogger(__name__)


class MeshStrategy(Enum):
    SHARED = "shared"
    PER_POLICY = "per-policy"


@dataclass(frozen=True)
class SwitchingConfig:
    cost: float = 0.0
    direction: Direction = Direction.MAX
    interp: InterpKind = field(default_factory=InterpKind)
    mesh_strategy: MeshStrategy = MeshStrategy.SHARED

    def __post_init__(self):
        if not (np.isfinite(self.cost) and self.cost >= 0):
            raise ConfigError(f"Switching cost must be finite and nonnegative, got {self.cost}")


@dataclass(eq=False)
class SwitchingState:
    """Component j lives on meshes[j]; step counts completed timesteps."""

    meshes: Tuple[Mesh1D, ...]
    values: Tuple[np.ndarray, ...]
    step: int = 0
    companions: Optional[Tuple[np.ndarray, ...]] = None

    def __post_init__(self):
        self.meshes = tuple(self.meshes)
        self.values = tuple(np.asarray(v, dtype=float) for v in self.values)
        if len(self.meshes) != len(self.values) or not self.meshes:
            raise DiscretizationError(
                f"Need one value vector per mesh, got {len(self.values)} for {len(self.meshes)}"
            )
        for j, (mesh, u) in enumerate(zip(self.meshes, self.values)):
            if u.shape != (mesh.count,):
                raise DiscretizationError(f"Component {j} has shape {u.shape}, mesh has {mesh.count} nodes")
            if not np.all(np.isfinite(u)):
                raise DiscretizationError(f"Component {j} is not finite at step {self.step}")
        if self.companions is not None:
            self.companions = tuple(np.asarray(e, dtype=float) for e in self.companions)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def shared(self) -> bool:
        return all(same_mesh(self.meshes[0], m) for m in self.meshes[1:])


@dataclass(eq=False)
class CouplingResult:
    """Right-hand sides after switching, and the component each node switched from."""

    rhs: Tuple[np.ndarray, ...]
    source: Tuple[np.ndarray, ...]


# ============================================================
# SWITCHING STAGE
# ============================================================

def _couple_shared(values: Sequence[np.ndarray], cost: float, sign: float) -> CouplingResult:
    """Same-mesh coupling from the best and second-best components per node."""
    J = len(values)
    scaled = sign * np.stack(values)
    cols = np.arange(scaled.shape[1])

    best_idx = np.argmax(scaled, axis=0)
    best = scaled[best_idx, cols]
    masked = scaled.copy()
    masked[best_idx, cols] = -np.inf
    second_idx = np.argmax(masked, axis=0)
    second = scaled[second_idx, cols]

    rhs, source = [], []
    for j in range(J):
        own = best_idx == j
        other_idx = np.where(own, second_idx, best_idx)
        candidate = np.where(own, second, best) - cost
        switch = (candidate > scaled[j]) | ((candidate == scaled[j]) & (other_idx < j))
        rhs.append(sign * np.where(switch, candidate, scaled[j]))
        source.append(np.where(switch, other_idx, j))
    return CouplingResult(rhs=tuple(rhs), source=tuple(source))


def coupling_stage(state: SwitchingState, cfg: SwitchingConfig) -> CouplingResult:
    """
    u^{n+1/2}_j = max(u_j, max_{k != j} (u_k transferred to mesh j) - c) for MAX,
    min(u_j, min_{k != j} (...) + c) for MIN.

    Ties go to the lowest component index.
    """
    J = len(state)
    if J == 1:
        u = state.values[0]
        return CouplingResult(rhs=(u.copy(),), source=(np.zeros(len(u), dtype=int),))

    sign = cfg.direction.sign
    kind = cfg.interp
    if kind.reference is None and state.shared:
        return _couple_shared(state.values, cfg.cost, sign)

    on_reference = None
    if kind.reference is not None:
        on_reference = [
            transfer_direct(mesh, u, kind.reference, kind.variant)
            for mesh, u in zip(state.meshes, state.values)
        ]

    rhs, source = [], []
    for j, mesh_j in enumerate(state.meshes):
        best = sign * state.values[j]
        src = np.full(mesh_j.count, j)
        for k in range(J):
            if k == j:
                continue
            if on_reference is None:
                moved = transfer_direct(state.meshes[k], state.values[k], mesh_j, kind.variant)
            else:
                moved = transfer_direct(kind.reference, on_reference[k], mesh_j, kind.variant)
            candidate = sign * moved - cfg.cost
            better = (candidate > best) | ((candidate == best) & (k < src))
            best = np.where(better, candidate, best)
            src = np.where(better, k, src)
        rhs.append(sign * best)
        source.append(src)
    return CouplingResult(rhs=tuple(rhs), source=tuple(source))


def couple_companion(state: SwitchingState, coupling: CouplingResult, cfg: SwitchingConfig) -> Tuple[np.ndarray, ...]:
    """Move companion values along the switches recorded by the coupling stage."""
    if state.companions is None:
        raise ConfigError("State carries no companion vectors")
    out = []
    for j, mesh_j in enumerate(state.meshes):
        src = coupling.source[j]
        moved = state.companions[j].copy()
        for k in np.unique(src):
            if k == j:
                continue
            mask = src == k
            moved[mask] = transfer(state.meshes[k], state.companions[k], mesh_j, cfg.interp)[mask]
        out.append(moved)
    return tuple(out)


# ============================================================
# TIMESTEPPING
# ============================================================

def solve_components(rhs: Sequence[np.ndarray], weights: Sequence[StencilWeights],
                     meshes: Sequence[Mesh1D], bcs: Sequence[BoundaryConditions],
                     dt: float, tau_new: float, executor: Optional[Executor] = None) -> Tuple[np.ndarray, ...]:
    """J independent implicit solves; order and interleaving do not affect the result."""
    jobs = list(zip(weights, meshes, bcs, rhs))

    def solve(job):
        w, mesh, bc, b = job
        return solve_with_weights(w, mesh, bc, dt, b, tau_new)

    if executor is None:
        return tuple(solve(job) for job in jobs)
    return tuple(executor.map(solve, jobs))


def pcpt_step(state: SwitchingState, weights: Sequence[StencilWeights], bcs: Sequence[BoundaryConditions],
              dt: float, tau_new: float, cfg: SwitchingConfig,
              companion_bcs: Optional[Sequence[BoundaryConditions]] = None,
              executor: Optional[Executor] = None) -> SwitchingState:
    """
    One timestep: switching stage, then one implicit Euler solve per component.

    Args:
        state: components at tau_n
        weights: stencil weights of L_{q_j} on mesh j
        bcs: boundary conditions per component
        dt: timestep
        tau_new: tau_{n+1}
        cfg: switching configuration
        companion_bcs: boundary conditions for companion vectors, if tracked
        executor: optional pool for the per-component solves

    Returns:
        Components at tau_{n+1}
    """
    coupling = coupling_stage(state, cfg)
    values = solve_components(coupling.rhs, weights, state.meshes, bcs, dt, tau_new, executor)

    companions = None
    if state.companions is not None:
        if companion_bcs is None:
            raise ConfigError("Companion vectors need their own boundary conditions")
        moved = couple_companion(state, coupling, cfg)
        companions = solve_components(moved, weights, state.meshes, companion_bcs, dt, tau_new, executor)

    return SwitchingState(meshes=state.meshes, values=values, step=state.step + 1, companions=companions)


def build_policy_meshes(problem: HjbProblem, controls: ControlSet, strategy: MeshStrategy,
                        count: Optional[int] = None, spacing: Optional[float] = None) -> Tuple[Mesh1D, ...]:
    """
    One mesh shared by every policy, or one per policy on that control's domain.

    Give either a node count per mesh or a target spacing h; with a spacing
    the node count is round((hi - lo) / h) + 1.
    """
    if (count is None) == (spacing is None):
        raise ConfigError("Give exactly one of count and spacing")

    def build(lo, hi):
        n = count if spacing is None else max(3, int(round((hi - lo) / spacing)) + 1)
        return build_uniform_mesh(lo, hi, n)

    if strategy is MeshStrategy.SHARED:
        mesh = build(*problem.domain())
        return tuple(mesh for _ in range(len(controls)))
    return tuple(build(*problem.domain(q)) for q in controls)


# ============================================================
# DRIVER
# ============================================================

@dataclass(eq=False)
class PcptResult:
    raw: SwitchingState
    coupled: SwitchingState
    controls: ControlSet
    query: float
    direction: Direction

    def value_at(self, x: Optional[float] = None, component: int = 0, coupled: bool = True) -> float:
        """Component value at x (default: the query point) by linear interpolation on its mesh."""
        state = self.coupled if coupled else self.raw
        x = self.query if x is None else x
        return interp_linear(state.meshes[component], state.values[component], x)

    @property
    def value(self) -> float:
        return self.value_at()

    def expectation_at(self, x: Optional[float] = None, component: int = 0) -> float:
        if self.coupled.companions is None:
            raise ConfigError("Expectation was not tracked for this solve")
        x = self.query if x is None else x
        return interp_linear(self.coupled.meshes[component], self.coupled.companions[component], x)


def solve_pcpt(problem: HjbProblem, controls: ControlSet, meshes: Sequence[Mesh1D],
               time_grid: TimeGrid, cfg: SwitchingConfig, track_expectation: bool = False,
               workers: int = 1) -> PcptResult:
    """
    Solve the switching system from the payoff to the horizon.

    A closing switching stage is applied after the last step; the reported
    value is component 1 of the coupled state.
    """
    if len(meshes) != len(controls):
        raise ConfigError(f"Need one mesh per control, got {len(meshes)} for {len(controls)}")

    weights = [stencil_weights(problem.coefficients(m, q), m) for m, q in zip(meshes, controls)]
    bcs = [problem.boundary_conditions(m) for m in meshes]
    companion_bcs = None
    companions = None
    if track_expectation:
        companion_bcs = [problem.companion_boundary_conditions(m) for m in meshes]
        companions = tuple(problem.companion_terminal(m.nodes) for m in meshes)

    state = SwitchingState(
        meshes=tuple(meshes),
        values=tuple(problem.terminal(m.nodes) for m in meshes),
        companions=companions,
    )

    dt = time_grid.dt
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 and len(controls) > 1 else None
    try:
        for n in range(time_grid.steps):
            state = pcpt_step(state, weights, bcs, dt, time_grid.tau(n + 1), cfg, companion_bcs, executor)
    finally:
        if executor is not None:
            executor.shutdown()

    closing = coupling_stage(state, cfg)
    coupled = SwitchingState(
        meshes=state.meshes,
        values=closing.rhs,
        step=state.step,
        companions=couple_companion(state, closing, cfg) if track_expectation else None,
    )
    logger.debug(
        "PCPT %s: J=%d, N=%d, M=%d, c=%g", problem.name, len(controls),
        time_grid.steps, meshes[0].count, cfg.cost,
    )
    return PcptResult(raw=state, coupled=coupled, controls=controls, query=problem.query, direction=cfg.direction)


def optimal_policy(state: SwitchingState, controls: ControlSet, direction: Direction) -> np.ndarray:
    """Per node of a shared mesh, the control of the best component (lowest index on ties)."""
    if not state.shared:
        raise MeshError("Policy extraction needs all components on one mesh")
    best = np.argmax(direction.sign * np.stack(state.values), axis=0)
    return np.asarray(controls.values, dtype=float)[best]
