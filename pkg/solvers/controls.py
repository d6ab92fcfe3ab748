"""
Control Sets

- Finite approximation Q_h of an admissible control interval
- Density H = max over Q of the distance to Q_h
"""

from dataclasses import dataclass

import numpy as np

from core.errors import ConfigError


@dataclass(frozen=True, eq=False)
class ControlSet:
    """Sorted, distinct control values q_1..q_J and their density H."""

    values: np.ndarray
    density: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) == 0:
            raise ConfigError("A control set needs at least one value")
        if np.any(np.diff(values) <= 0):
            raise ConfigError(f"Control values must be sorted and distinct: {values}")

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(float(q) for q in self.values)

    @classmethod
    def single(cls, q: float) -> "ControlSet":
        return cls(values=np.array([float(q)]), density=0.0)


def discretize_control_set(q_lo: float, q_hi: float, J: int) -> ControlSet:
    """
    J equally spaced controls on [q_lo, q_hi], both endpoints included.

    Args:
        q_lo: lower end of the admissible interval
        q_hi: upper end, q_hi >= q_lo
        J: number of controls (J >= 2 unless the interval is a point)

    Returns:
        ControlSet with density (q_hi - q_lo) / (2 (J - 1))
    """
    if q_hi < q_lo:
        raise ConfigError(f"Need q_hi >= q_lo, got [{q_lo}, {q_hi}]")
    if J < 1:
        raise ConfigError(f"Control count must be positive, got {J}")
    if J == 1:
        if q_hi > q_lo:
            raise ConfigError(f"One control cannot cover [{q_lo}, {q_hi}]")
        return ControlSet.single(q_lo)
    values = np.linspace(q_lo, q_hi, J)
    values.setflags(write=False)
    return ControlSet(values=values, density=(q_hi - q_lo) / (2.0 * (J - 1)))
