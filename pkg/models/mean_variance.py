"""
Mean-Variance Asset Allocation

- Pre-commitment embedding: minimize E[(W_T - gamma/2)^2]
- Bankruptcy allowed, unbounded control (transformed to a bounded control q)
- No bankruptcy, bounded control p in [0, p_max]
- Closed-form policy, moments and asymptotic boundary values
"""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from core.errors import ConfigError, DiscretizationError
from core.finite_difference import (
    AsymptoticQuadratic,
    BoundaryConditions,
    Dirichlet,
    OperatorCoefficients,
    UpwindDriftOde,
)
from core.mesh import Mesh1D
from models.problem import Control, Direction, HjbProblem


@dataclass(frozen=True)
class MvParams:
    r: float = 0.03
    sigma: float = 0.15
    xi: float = 0.33
    pi: float = 0.1
    W0: float = 1.0
    T: float = 20.0
    gamma: float = 14.47
    lam: float = 1.762  # not used by the solvers
    omega: float = 5.0
    q_lo: float = -2.5
    q_hi: float = 3.5
    p_max: float = 1.5
    W_min: float = -40.0
    W_max: float = 40.0

    def __post_init__(self):
        checks = [
            (self.sigma > 0, f"sigma must be positive, got {self.sigma}"),
            (self.T > 0, f"T must be positive, got {self.T}"),
            (self.omega > 0, f"omega must be positive, got {self.omega}"),
            (self.q_lo < self.q_hi, f"Need q_lo < q_hi, got {self.q_lo}, {self.q_hi}"),
            (self.p_max > 0, f"p_max must be positive, got {self.p_max}"),
            (self.W_min < self.W_max, f"Need W_min < W_max, got {self.W_min}, {self.W_max}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)


def _growth(rate: float, tau):
    """(exp(rate tau) - 1) / rate, with the limit tau at rate = 0."""
    if rate == 0:
        return tau
    return np.expm1(rate * tau) / rate


# ============================================================
# CONTROLS AND COEFFICIENTS
# ============================================================

def mv_control_transform(p, W, omega: float):
    """q = p W / max(1, omega |W|)."""
    return p * W / np.maximum(1.0, omega * np.abs(W))


def mv_control_inverse(q, W, omega: float):
    """p = q max(1, omega |W|) / W, for W != 0."""
    return q * np.maximum(1.0, omega * np.abs(W)) / W


def mv_coefficients(q: Control, W, params: MvParams) -> OperatorCoefficients:
    """Transformed operator: a = sigma^2 q^2 max(1, omega^2 W^2)/2, b = pi + W r + q max(1, omega|W|) sigma xi."""
    scale = np.maximum(1.0, params.omega * np.abs(W))
    a = 0.5 * params.sigma**2 * q**2 * scale**2
    b = params.pi + W * params.r + q * scale * params.sigma * params.xi
    return OperatorCoefficients(a=a, b=b)


def mv_bounded_coefficients(p_hat: Control, W, params: MvParams) -> OperatorCoefficients:
    """Untransformed operator: a = sigma^2 p^2 W^2 / 2, b = pi + W (r + p sigma xi)."""
    a = 0.5 * params.sigma**2 * p_hat**2 * W**2
    b = params.pi + W * (params.r + p_hat * params.sigma * params.xi)
    return OperatorCoefficients(a=a, b=b)


def mv_terminal(W, gamma: float):
    return (W - 0.5 * gamma) ** 2


# ============================================================
# ASYMPTOTIC (CONSTANT CONTROL) SOLUTIONS
# ============================================================

def mv_asymptotic_coefficients(p_asym: float, params: MvParams) -> Tuple[float, float]:
    """(a, b) of V_tau = a^2 W^2 V_WW / 2 + (pi + b W) V_W under constant control p_asym."""
    return params.sigma * abs(p_asym), params.r + p_asym * params.sigma * params.xi


def mv_asymptotic_terms(a: float, b: float, params: MvParams) -> Tuple[Callable, Callable, Callable]:
    """alpha(tau), beta(tau), delta(tau) of V = alpha W^2 + beta W + delta."""
    gamma, pi = params.gamma, params.pi
    quad = a * a + 2.0 * b
    if pi == 0:
        c = 0.0
    elif a * a + b == 0:
        raise DiscretizationError(f"Asymptotic solution undefined for a^2 + b = 0 (a={a}, b={b})")
    else:
        c = 2.0 * pi / (a * a + b)

    def alpha(tau):
        return np.exp(quad * tau)

    def beta(tau):
        return -(gamma + c) * np.exp(b * tau) + c * np.exp(quad * tau)

    def delta(tau):
        return -pi * (gamma + c) * _growth(b, tau) + pi * c * _growth(quad, tau) + 0.25 * gamma * gamma

    return alpha, beta, delta


def mv_asymptotic_value(W, tau, a: float, b: float, params: MvParams):
    """Closed-form solution of the constant-control linear PDE with terminal (W - gamma/2)^2."""
    alpha, beta, delta = mv_asymptotic_terms(a, b, params)
    return alpha(tau) * W * W + beta(tau) * W + delta(tau)


def mv_asymptotic_expectation(W, tau, b: float, params: MvParams):
    """E[W_T] under constant control: exp(b tau) W + pi (exp(b tau) - 1) / b."""
    return np.exp(b * tau) * W + params.pi * _growth(b, tau)


# ============================================================
# CLOSED FORM (BANKRUPTCY ALLOWED)
# ============================================================

@dataclass(frozen=True)
class MvMoments:
    mean: float
    variance: float
    objective: float

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


def mv_target(t, params: MvParams):
    """Discounted wealth target gamma e^{-r(T-t)}/2 - pi (1 - e^{-r(T-t)}) / r."""
    tau = params.T - t
    discount = np.exp(-params.r * tau)
    return 0.5 * params.gamma * discount - params.pi * discount * _growth(params.r, tau)


def mv_exact_policy(W, t, params: MvParams):
    """p*(W, t) = -(xi / (sigma W)) [W - target(t)]."""
    return -params.xi / (params.sigma * W) * (W - mv_target(t, params))


def mv_exact_transformed_policy(W, t, params: MvParams):
    """The exact policy in the bounded control variable q (finite at W = 0)."""
    return -params.xi / params.sigma * (W - mv_target(t, params)) / np.maximum(1.0, params.omega * np.abs(W))


def mv_exact_moments(params: MvParams) -> MvMoments:
    """Mean, variance and embedded objective of W_T under the optimal policy."""
    decay = np.exp(-params.xi**2 * params.T)
    riskless = params.W0 * np.exp(params.r * params.T) + params.pi * _growth(params.r, params.T)
    mean = decay * riskless + 0.5 * params.gamma * (1.0 - decay)
    variance = decay / (1.0 - decay) * (mean - riskless) ** 2
    objective = variance + mean**2 - params.gamma * mean + 0.25 * params.gamma**2
    return MvMoments(mean=float(mean), variance=float(variance), objective=float(objective))


def mv_exact_policy_and_moments(params: MvParams):
    """
    Closed-form optimal policy and the moments it produces.

    Returns:
        (policy(W, t), E[W_T], Var[W_T], objective)
    """
    moments = mv_exact_moments(params)

    def policy(W, t):
        return mv_exact_policy(W, t, params)

    return policy, moments.mean, moments.variance, moments.objective


def implied_moments(objective: float, expectation: float, gamma: float) -> Tuple[float, float]:
    """(std, mean) from E[(W_T - gamma/2)^2] and E[W_T]."""
    variance = objective - (expectation - 0.5 * gamma) ** 2
    return float(np.sqrt(max(variance, 0.0))), float(expectation)


# ============================================================
# PROBLEMS
# ============================================================

def _asymptotic_quadratic(p_asym: float, params: MvParams) -> AsymptoticQuadratic:
    a, b = mv_asymptotic_coefficients(p_asym, params)
    return AsymptoticQuadratic(*mv_asymptotic_terms(a, b, params))


def _asymptotic_mean(p_asym: float, params: MvParams) -> Dirichlet:
    _, b = mv_asymptotic_coefficients(p_asym, params)
    return Dirichlet(value=lambda x, tau: mv_asymptotic_expectation(x, tau, b, params))


class MeanVarianceProblem(HjbProblem):
    """Bankruptcy allowed; control q = p W / max(1, omega |W|) in [q_lo, q_hi]."""

    name = "mean-variance"
    direction = Direction.MIN

    def __init__(self, params: Optional[MvParams] = None):
        self.params = params or MvParams()
        self.horizon = self.params.T
        self.query = self.params.W0
        # p* -> -xi/sigma as |W| -> infinity
        self.asymptotic_control = -self.params.xi / self.params.sigma

    def domain(self, control: Optional[float] = None) -> Tuple[float, float]:
        return self.params.W_min, self.params.W_max

    def terminal(self, x: np.ndarray) -> np.ndarray:
        return mv_terminal(x, self.params.gamma)

    def coefficients(self, mesh: Mesh1D, control: Control) -> OperatorCoefficients:
        return mv_coefficients(control, mesh.nodes, self.params)

    def boundary_conditions(self, mesh: Mesh1D) -> BoundaryConditions:
        edge = _asymptotic_quadratic(self.asymptotic_control, self.params)
        return BoundaryConditions(lower=edge, upper=edge)

    def control_range(self) -> Tuple[float, float]:
        return self.params.q_lo, self.params.q_hi

    def companion_terminal(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, dtype=float)

    def companion_boundary_conditions(self, mesh: Mesh1D) -> BoundaryConditions:
        edge = _asymptotic_mean(self.asymptotic_control, self.params)
        return BoundaryConditions(lower=edge, upper=edge)

    def exact_policy(self) -> Callable[[np.ndarray, float], np.ndarray]:
        """Closed-form optimal control in the transformed variable, as (W, t) -> q."""
        return lambda W, t: mv_exact_transformed_policy(W, t, self.params)


class MeanVarianceBoundedProblem(HjbProblem):
    """No bankruptcy (W >= 0), no short-selling: p in [0, p_max]."""

    name = "mean-variance-bounded"
    direction = Direction.MIN

    def __init__(self, params: Optional[MvParams] = None):
        self.params = params or MvParams()
        self.horizon = self.params.T
        self.query = self.params.W0
        # optimal p -> 0 as W -> infinity
        self.asymptotic_control = 0.0

    def domain(self, control: Optional[float] = None) -> Tuple[float, float]:
        return 0.0, self.params.W_max

    def terminal(self, x: np.ndarray) -> np.ndarray:
        return mv_terminal(x, self.params.gamma)

    def coefficients(self, mesh: Mesh1D, control: Control) -> OperatorCoefficients:
        return mv_bounded_coefficients(control, mesh.nodes, self.params)

    def boundary_conditions(self, mesh: Mesh1D) -> BoundaryConditions:
        return BoundaryConditions(
            lower=UpwindDriftOde(speed=self.params.pi),
            upper=_asymptotic_quadratic(self.asymptotic_control, self.params),
        )

    def control_range(self) -> Tuple[float, float]:
        return 0.0, self.params.p_max

    def companion_terminal(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, dtype=float)

    def companion_boundary_conditions(self, mesh: Mesh1D) -> BoundaryConditions:
        return BoundaryConditions(
            lower=UpwindDriftOde(speed=self.params.pi),
            upper=_asymptotic_mean(self.asymptotic_control, self.params),
        )
