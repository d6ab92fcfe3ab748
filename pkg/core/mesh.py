"""
Meshes

- Uniform 1D spatial meshes (one per policy when meshes differ)
- Constant-step time grid
- O(1) bracket search on uniform spacing
"""

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from core.errors import MeshError


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Sorted node coordinates of one uniform spatial grid."""

    lo: float
    hi: float
    nodes: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return len(self.nodes)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)

    def __len__(self) -> int:
        return self.count


@dataclass(frozen=True)
class TimeGrid:
    """Time-to-maturity grid tau_n = n * dt, n = 0..steps."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise MeshError(f"Timestep count must be positive, got {self.steps}")
        if not self.horizon > 0:
            raise MeshError(f"Horizon must be positive, got {self.horizon}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def tau(self, n: int) -> float:
        # last level pinned to the horizon
        return self.horizon if n == self.steps else n * self.dt


def build_uniform_mesh(lo: float, hi: float, count: int) -> Mesh1D:
    """
    Build a uniform mesh on [lo, hi].

    Args:
        lo: left endpoint
        hi: right endpoint, hi > lo
        count: number of nodes, at least 3

    Returns:
        Mesh1D with nodes[0] == lo and nodes[-1] == hi
    """
    if count < 3:
        raise MeshError(f"A mesh needs at least 3 nodes, got {count}")
    if not hi > lo:
        raise MeshError(f"Mesh endpoints must satisfy hi > lo, got [{lo}, {hi}]")
    nodes = np.linspace(lo, hi, count)
    nodes.setflags(write=False)
    return Mesh1D(lo=float(lo), hi=float(hi), nodes=nodes)


def shifted_mesh(mesh: Mesh1D, offset: float) -> Mesh1D:
    """Same spacing and node count, translated by offset."""
    return build_uniform_mesh(mesh.lo + offset, mesh.hi + offset, mesh.count)


def same_mesh(a: Mesh1D, b: Mesh1D) -> bool:
    return a is b or (a.count == b.count and np.array_equal(a.nodes, b.nodes))


def locate_bracket(mesh: Mesh1D, x: float) -> Tuple[int, int]:
    """
    Find adjacent node indices (i, i+1) with nodes[i] <= x <= nodes[i+1].

    At a node the same index is returned twice. Callers must clamp x into
    [lo, hi] first.
    """
    if x < mesh.lo or x > mesh.hi or math.isnan(x):
        raise MeshError(f"Point {x} outside mesh domain [{mesh.lo}, {mesh.hi}]")
    nodes = mesh.nodes
    last = mesh.count - 1
    i = min(max(int(math.floor((x - mesh.lo) / mesh.spacing)), 0), last - 1)
    # index arithmetic can be off by one ulp near a node
    if nodes[i] > x:
        i -= 1
    elif nodes[i + 1] < x:
        i += 1
    if nodes[i] == x:
        return i, i
    if nodes[i + 1] == x:
        return i + 1, i + 1
    return i, i + 1
