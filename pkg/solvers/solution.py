"""
Solutions

- Final mesh function of a single-mesh solver
- Value (and companion expectation) at the query point by linear interpolation
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.errors import ConfigError
from core.interpolation import interp_linear
from core.mesh import Mesh1D


@dataclass(eq=False)
class MeshSolution:
    mesh: Mesh1D
    values: np.ndarray
    query: float
    expectation: Optional[np.ndarray] = None

    def value_at(self, x: Optional[float] = None) -> float:
        return interp_linear(self.mesh, self.values, self.query if x is None else x)

    @property
    def value(self) -> float:
        return self.value_at()

    def expectation_at(self, x: Optional[float] = None) -> float:
        if self.expectation is None:
            raise ConfigError("Expectation was not tracked for this solve")
        return interp_linear(self.mesh, self.expectation, self.query if x is None else x)
