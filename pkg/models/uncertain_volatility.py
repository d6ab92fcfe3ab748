"""
Uncertain Volatility

- Butterfly payoff, super-replication value (sup over sigma)
- Log-price coordinates X = log S
- Domains spanning four standard deviations either side of log K
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.errors import ConfigError
from core.finite_difference import (
    BoundaryConditions,
    Dirichlet,
    DiscountOde,
    OperatorCoefficients,
)
from core.mesh import Mesh1D
from models.problem import Control, Direction, HjbProblem


@dataclass(frozen=True)
class UvParams:
    r: float = 0.05
    sigma_min: float = 0.3
    sigma_max: float = 0.5
    T: float = 1.0
    K: float = 100.0
    K1: float = 80.0
    K2: float = 120.0
    S0: float = 100.0

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ConfigError(
                f"Need 0 < sigma_min < sigma_max, got {self.sigma_min}, {self.sigma_max}"
            )
        if not self.K1 < self.K < self.K2:
            raise ConfigError(f"Need K1 < K < K2, got {self.K1}, {self.K}, {self.K2}")
        if not self.T > 0:
            raise ConfigError(f"Horizon T must be positive, got {self.T}")

    @property
    def sigma_bar(self) -> float:
        return 0.5 * (self.sigma_min + self.sigma_max)


def uv_payoff(S, p: UvParams):
    """max(S-K1,0) - 2 max(S-K,0) + max(S-K2,0)."""
    S = np.asarray(S, dtype=float)
    value = (
        np.maximum(S - p.K1, 0.0)
        - 2.0 * np.maximum(S - p.K, 0.0)
        + np.maximum(S - p.K2, 0.0)
    )
    return float(value) if value.ndim == 0 else value


def uv_coefficients(sigma: Control, p: UvParams) -> OperatorCoefficients:
    """L_sigma in log coordinates: a = sigma^2/2, b = r - sigma^2/2, discount r, no source."""
    half_var = 0.5 * np.asarray(sigma, dtype=float) ** 2
    if half_var.ndim == 0:
        half_var = float(half_var)
    return OperatorCoefficients(a=half_var, b=p.r - half_var, r=p.r, f=0.0)


def uv_central_spacing_bound(sigma: float, p: UvParams) -> float:
    """Largest h for which the central stencil has nonnegative weights (2a/|b|)."""
    c = uv_coefficients(sigma, p)
    return math.inf if c.b == 0 else 2.0 * c.a / abs(c.b)


def uv_boundary_conditions(p: UvParams) -> BoundaryConditions:
    return BoundaryConditions(
        lower=DiscountOde(rate=p.r),
        upper=Dirichlet(value=lambda x, tau: 0.0),
    )


class UncertainVolatilityProblem(HjbProblem):
    name = "uncertain-volatility"
    direction = Direction.MAX

    def __init__(self, params: Optional[UvParams] = None, direction: Direction = Direction.MAX):
        """direction MAX gives the super-replication (ask) value, MIN the sub-replication (bid) value."""
        self.params = params or UvParams()
        self.direction = direction
        self.horizon = self.params.T
        self.query = math.log(self.params.S0)

    def domain(self, control: Optional[float] = None) -> Tuple[float, float]:
        """[log K - 4 sigma, log K + 4 sigma]; sigma_bar unless a control is given."""
        width = 4.0 * (self.params.sigma_bar if control is None else control)
        centre = math.log(self.params.K)
        return centre - width, centre + width

    def terminal(self, x: np.ndarray) -> np.ndarray:
        return uv_payoff(np.exp(x), self.params)

    def coefficients(self, mesh: Mesh1D, control: Control) -> OperatorCoefficients:
        return uv_coefficients(control, self.params)

    def boundary_conditions(self, mesh: Mesh1D) -> BoundaryConditions:
        return uv_boundary_conditions(self.params)

    def control_range(self) -> Tuple[float, float]:
        return self.params.sigma_min, self.params.sigma_max
