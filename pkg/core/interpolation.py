"""
Mesh-to-Mesh Transfer

- Linear interpolation (monotone)
- Limited monotone cubic Hermite (Fritsch-Carlson slopes, clamped to the bracket)
- Optional routing through a single reference mesh
- Constant extrapolation beyond the source domain
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from core.errors import InterpolationError
from core.mesh import Mesh1D, locate_bracket, same_mesh


class InterpVariant(Enum):
    LINEAR = "linear"
    LIMITED_CUBIC = "cubic"


@dataclass(frozen=True, eq=False)
class InterpKind:
    """Interpolation variant plus routing (direct, or via a reference mesh)."""

    variant: InterpVariant = InterpVariant.LINEAR
    reference: Optional[Mesh1D] = None

    @property
    def routing(self) -> str:
        return "direct" if self.reference is None else "reference"


def _check_values(src: Mesh1D, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (src.count,):
        raise InterpolationError(
            f"Expected {src.count} nodal values, got shape {values.shape}"
        )
    return values


def fritsch_carlson_slopes(nodes: np.ndarray, values: np.ndarray) -> np.ndarray:
    """
    Nodal derivatives for monotone piecewise cubic Hermite interpolation.

    Interior nodes take the harmonic mean of the adjacent secants when they
    share a sign, zero otherwise. End nodes take the one-sided secant.
    """
    delta = np.diff(values) / np.diff(nodes)
    slopes = np.zeros_like(values)
    left, right = delta[:-1], delta[1:]
    agree = left * right > 0
    slopes[1:-1][agree] = 2.0 * left[agree] * right[agree] / (left[agree] + right[agree])
    slopes[0] = delta[0]
    slopes[-1] = delta[-1]
    return slopes


def _limited_cubic(src: Mesh1D, values: np.ndarray, xs: np.ndarray) -> np.ndarray:
    nodes = src.nodes
    xs = np.clip(xs, src.lo, src.hi)
    spline = CubicHermiteSpline(nodes, values, fritsch_carlson_slopes(nodes, values))
    raw = spline(xs)

    idx = np.clip(np.searchsorted(nodes, xs, side="right") - 1, 0, src.count - 2)
    v_lo, v_hi = values[idx], values[idx + 1]
    limited = np.clip(raw, np.minimum(v_lo, v_hi), np.maximum(v_lo, v_hi))
    # exact at nodes
    limited = np.where(xs == nodes[idx], v_lo, limited)
    return np.where(xs == nodes[idx + 1], v_hi, limited)


def interp_linear(src: Mesh1D, values, x: float) -> float:
    """Convex combination of the two bracketing nodal values."""
    values = _check_values(src, values)
    i, j = locate_bracket(src, x)
    if i == j:
        return float(values[i])
    w = (x - src.nodes[i]) / (src.nodes[j] - src.nodes[i])
    return float((1.0 - w) * values[i] + w * values[j])


def interp_limited_cubic(src: Mesh1D, values, x: float) -> float:
    """Fritsch-Carlson cubic Hermite value clamped to the bracketing nodal values."""
    values = _check_values(src, values)
    locate_bracket(src, x)
    return float(_limited_cubic(src, values, np.array([x], dtype=float))[0])


def transfer_direct(src: Mesh1D, values, dst: Mesh1D, variant: InterpVariant) -> np.ndarray:
    """
    Interpolate nodal values from src onto every node of dst.

    Destination nodes outside [src.lo, src.hi] take the nearest endpoint value.
    """
    values = _check_values(src, values)
    if same_mesh(src, dst):
        return values.copy()
    if variant is InterpVariant.LINEAR:
        # np.interp extrapolates with the endpoint values
        return np.interp(dst.nodes, src.nodes, values)
    return _limited_cubic(src, values, dst.nodes)


def transfer(src: Mesh1D, values, dst: Mesh1D, kind: InterpKind) -> np.ndarray:
    """
    Transfer a mesh function from src to dst.

    Args:
        src: source mesh
        values: one value per source node
        dst: destination mesh
        kind: variant and routing

    Returns:
        One value per destination node
    """
    if kind.reference is None:
        return transfer_direct(src, values, dst, kind.variant)
    on_reference = transfer_direct(src, values, kind.reference, kind.variant)
    return transfer_direct(kind.reference, on_reference, dst, kind.variant)
