"""
Problem Interface

- What every HJB problem hands to the solvers
- Direction of the optimization (sup-type or inf-type)
"""

from abc import ABC, abstractmethod
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from core.errors import ConfigError
from core.finite_difference import BoundaryConditions, OperatorCoefficients
from core.mesh import Mesh1D

Control = Union[float, np.ndarray]


class Direction(Enum):
    MAX = "max"
    MIN = "min"

    @property
    def sign(self) -> float:
        return 1.0 if self is Direction.MAX else -1.0


class HjbProblem(ABC):
    """
    V_tau = sup_q L_q V (MAX) or inf_q L_q V (MIN) on a localized 1D domain.
    """

    name: str = "problem"
    direction: Direction = Direction.MAX
    horizon: float = 1.0
    query: float = 0.0

    @abstractmethod
    def domain(self, control: Optional[float] = None) -> Tuple[float, float]:
        """Computational domain, optionally specific to one control's mesh."""

    @abstractmethod
    def terminal(self, x: np.ndarray) -> np.ndarray:
        """Initial data at tau = 0."""

    @abstractmethod
    def coefficients(self, mesh: Mesh1D, control: Control) -> OperatorCoefficients:
        """L_q coefficients on the mesh for a scalar control or one control per node."""

    @abstractmethod
    def boundary_conditions(self, mesh: Mesh1D) -> BoundaryConditions:
        """Endpoint rows for the value function."""

    @abstractmethod
    def control_range(self) -> Tuple[float, float]:
        """Admissible control interval [q_lo, q_hi]."""

    def companion_terminal(self, x: np.ndarray) -> np.ndarray:
        raise ConfigError(f"{self.name} has no companion expectation")

    def companion_boundary_conditions(self, mesh: Mesh1D) -> BoundaryConditions:
        raise ConfigError(f"{self.name} has no companion expectation")
