"""
Finite Differences

- Positive-coefficient stencils for L_q u = a u'' + b u' - r u + f
- Central differences where they give nonnegative weights, upwind otherwise
- Boundary rows and the fully implicit Euler step
"""

from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np

from core.config import get_settings
from core.errors import DiscretizationError
from core.mesh import Mesh1D
from core.tridiagonal import TridiagonalSystem, solve_tridiagonal


def _check_residual() -> bool:
    return get_settings().debug


@dataclass(frozen=True, eq=False)
class OperatorCoefficients:
    """
    Coefficients of L_q for one fixed control.

    Each field is a scalar (constant in space) or one value per node.
    a: diffusion (1/2 sigma^2), b: drift, r: discount, f: source.
    """

    a: Union[float, np.ndarray]
    b: Union[float, np.ndarray]
    r: Union[float, np.ndarray] = 0.0
    f: Union[float, np.ndarray] = 0.0

    def __post_init__(self):
        for name in ("a", "b", "r", "f"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DiscretizationError(f"Coefficient {name} is not finite")
        if np.any(np.asarray(self.a) < 0):
            raise DiscretizationError("Diffusion coefficient a must be nonnegative")

    def on(self, count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Broadcast all four coefficients to per-node arrays."""
        return tuple(
            np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (count,))
            for name in ("a", "b", "r", "f")
        )


# ============================================================
# BOUNDARY CONDITIONS
# ============================================================

@dataclass(frozen=True)
class Dirichlet:
    """u = g(x, tau) at the endpoint."""

    value: Callable[[float, float], float]

    def at(self, x: float, tau: float) -> float:
        return float(self.value(x, tau))


@dataclass(frozen=True)
class DiscountOde:
    """V_tau = -rate V at the endpoint."""

    rate: float


@dataclass(frozen=True)
class UpwindDriftOde:
    """V_tau = speed V_x, differenced one-sided from the interior."""

    speed: float


@dataclass(frozen=True)
class AsymptoticQuadratic:
    """Time-dependent Dirichlet value alpha(tau) x^2 + beta(tau) x + delta(tau)."""

    alpha: Callable[[float], float]
    beta: Callable[[float], float]
    delta: Callable[[float], float]

    def at(self, x: float, tau: float) -> float:
        return float(self.alpha(tau) * x * x + self.beta(tau) * x + self.delta(tau))


BoundaryCondition = Union[Dirichlet, DiscountOde, UpwindDriftOde, AsymptoticQuadratic]


@dataclass(frozen=True)
class BoundaryConditions:
    lower: BoundaryCondition
    upper: BoundaryCondition

    def data_bound(self, mesh: Mesh1D, tau: float) -> float:
        """Largest |value| imposed by Dirichlet-type rows at tau (0 if none)."""
        bound = 0.0
        for bc, x in ((self.lower, mesh.lo), (self.upper, mesh.hi)):
            if isinstance(bc, (Dirichlet, AsymptoticQuadratic)):
                bound = max(bound, abs(bc.at(x, tau)))
        return bound


# ============================================================
# STENCILS
# ============================================================

@dataclass(frozen=True, eq=False)
class StencilWeights:
    """Per-node weights of L^h: (L^h u)_i = w_sub u_{i-1} + w_sup u_{i+1} - (w_sub + w_sup + r) u_i + f."""

    w_sub: np.ndarray
    w_sup: np.ndarray
    r: np.ndarray
    f: np.ndarray


def _positive_weights(a, b, h: float):
    w_sub = a / h**2 - b / (2.0 * h)
    w_sup = a / h**2 + b / (2.0 * h)
    central = (w_sub >= 0) & (w_sup >= 0)
    upwind_sub = a / h**2 + np.maximum(-b, 0.0) / h
    upwind_sup = a / h**2 + np.maximum(b, 0.0) / h
    return np.where(central, w_sub, upwind_sub), np.where(central, w_sup, upwind_sup)


def stencil_weights(coeffs: OperatorCoefficients, mesh: Mesh1D) -> StencilWeights:
    """Vectorized positive-coefficient weights for every node of the mesh."""
    a, b, r, f = coeffs.on(mesh.count)
    w_sub, w_sup = _positive_weights(a, b, mesh.spacing)
    return StencilWeights(w_sub=w_sub, w_sup=w_sup, r=np.array(r), f=np.array(f))


def assemble_row_weights(coeffs: OperatorCoefficients, mesh: Mesh1D, i: int) -> Tuple[float, float, float]:
    """
    Weights (w_sub, w_diag, w_sup) of L^h at interior node i, discount excluded.

    Central differences are used when both off-diagonal weights are
    nonnegative, upwinding in the drift otherwise.
    """
    if not 0 < i < mesh.count - 1:
        raise DiscretizationError(f"Node {i} is not interior to a mesh of {mesh.count} nodes")
    a, b, _, _ = coeffs.on(mesh.count)
    w_sub, w_sup = _positive_weights(a[i], b[i], mesh.spacing)
    w_sub, w_sup = float(w_sub), float(w_sup)
    return w_sub, -(w_sub + w_sup), w_sup


def apply_operator(weights: StencilWeights, u: np.ndarray) -> np.ndarray:
    """(L^h u) at interior nodes; boundary entries are zero."""
    out = np.zeros_like(u, dtype=float)
    c = slice(1, -1)
    out[c] = (
        weights.w_sub[c] * u[:-2]
        + weights.w_sup[c] * u[2:]
        - (weights.w_sub[c] + weights.w_sup[c] + weights.r[c]) * u[c]
        + weights.f[c]
    )
    return out


# ============================================================
# IMPLICIT EULER
# ============================================================

def _boundary_row(bc: BoundaryCondition, x: float, h: float, dt: float, tau: float,
                  rhs: float, upper: bool) -> Tuple[float, float, float]:
    """Return (diag, off, rhs) for one endpoint row; off couples to the adjacent interior node."""
    if isinstance(bc, (Dirichlet, AsymptoticQuadratic)):
        return 1.0, 0.0, bc.at(x, tau)
    if isinstance(bc, DiscountOde):
        return 1.0 + bc.rate * dt, 0.0, rhs
    if isinstance(bc, UpwindDriftOde):
        # outgoing characteristic only: forward difference at the left end, backward at the right
        speed = -bc.speed if upper else bc.speed
        if speed < 0:
            end = "upper" if upper else "lower"
            raise DiscretizationError(
                f"UpwindDriftOde speed {bc.speed} has an incoming characteristic at the {end} end"
            )
        k = dt * speed / h
        return 1.0 + k, -k, rhs
    raise DiscretizationError(f"Unknown boundary condition {bc!r}")


def assemble_from_weights(weights: StencilWeights, mesh: Mesh1D, bc: BoundaryConditions,
                          dt: float, rhs_values: np.ndarray, tau_new: float) -> TridiagonalSystem:
    """Assemble (I - dt L^h) u = rhs + dt f with boundary rows."""
    n = mesh.count
    rhs_values = np.asarray(rhs_values, dtype=float)
    if rhs_values.shape != (n,):
        raise DiscretizationError(f"Right-hand side has shape {rhs_values.shape}, mesh has {n} nodes")

    sub = -dt * weights.w_sub
    sup = -dt * weights.w_sup
    diag = 1.0 + dt * (weights.w_sub + weights.w_sup + weights.r)
    rhs = rhs_values + dt * weights.f

    h = mesh.spacing
    diag[0], sup[0], rhs[0] = _boundary_row(bc.lower, mesh.lo, h, dt, tau_new, rhs_values[0], upper=False)
    diag[-1], sub[-1], rhs[-1] = _boundary_row(bc.upper, mesh.hi, h, dt, tau_new, rhs_values[-1], upper=True)
    sub[0] = 0.0
    sup[-1] = 0.0

    if np.any(sub > 0) or np.any(sup > 0) or np.any(diag < np.abs(sub) + np.abs(sup)):
        raise DiscretizationError("Assembled implicit system is not an M-matrix")
    return TridiagonalSystem(sub=sub, diag=diag, sup=sup, rhs=rhs)


def assemble_implicit_system(coeffs: OperatorCoefficients, mesh: Mesh1D, bc: BoundaryConditions,
                             dt: float, rhs_values: np.ndarray, tau_new: float) -> TridiagonalSystem:
    return assemble_from_weights(stencil_weights(coeffs, mesh), mesh, bc, dt, rhs_values, tau_new)


def implicit_euler_step(coeffs: OperatorCoefficients, mesh: Mesh1D, bc: BoundaryConditions,
                        dt: float, rhs_values: np.ndarray, tau_new: float = 0.0) -> np.ndarray:
    """
    One fully implicit Euler step u^{n+1} = (I - dt L^h)^{-1} (rhs + dt f).

    Args:
        coeffs: operator coefficients for a fixed control
        mesh: spatial mesh
        bc: lower/upper boundary conditions
        dt: timestep
        rhs_values: u^{n+1/2} on the mesh
        tau_new: time-to-maturity of the new level (for Dirichlet data)

    Returns:
        u^{n+1} on the mesh
    """
    system = assemble_implicit_system(coeffs, mesh, bc, dt, rhs_values, tau_new)
    return solve_tridiagonal(system, check_residual=_check_residual())


def solve_with_weights(weights: StencilWeights, mesh: Mesh1D, bc: BoundaryConditions,
                       dt: float, rhs_values: np.ndarray, tau_new: float) -> np.ndarray:
    """Implicit step from precomputed weights (reused across timesteps)."""
    system = assemble_from_weights(weights, mesh, bc, dt, rhs_values, tau_new)
    return solve_tridiagonal(system, check_residual=_check_residual())
