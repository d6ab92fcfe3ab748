"""
Tridiagonal Systems

- Banded storage of one implicit solve
- LAPACK banded solver through scipy
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from core.errors import DiscretizationError


@dataclass(eq=False)
class TridiagonalSystem:
    """
    Rows i: sub[i] u[i-1] + diag[i] u[i] + sup[i] u[i+1] = rhs[i].

    sub[0] and sup[-1] are ignored.
    """

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray

    def __len__(self) -> int:
        return len(self.diag)

    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        out[1:] += self.sub[1:] * u[:-1]
        out[:-1] += self.sup[:-1] * u[1:]
        return out

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.sub[1:], -1) + np.diag(self.sup[:-1], 1)


def solve_tridiagonal(system: TridiagonalSystem, check_residual: bool = False) -> np.ndarray:
    """
    Solve a tridiagonal system.

    Args:
        system: diagonals and right-hand side, all of the same length
        check_residual: verify the l-inf residual after the solve

    Returns:
        Solution vector
    """
    n = len(system.diag)
    if not (len(system.sub) == len(system.sup) == len(system.rhs) == n):
        raise DiscretizationError(
            f"Diagonal sizes differ: sub={len(system.sub)}, diag={n}, "
            f"sup={len(system.sup)}, rhs={len(system.rhs)}"
        )

    banded = np.zeros((3, n))
    banded[0, 1:] = system.sup[:-1]
    banded[1] = system.diag
    banded[2, :-1] = system.sub[1:]
    try:
        u = scipy.linalg.solve_banded((1, 1), banded, system.rhs, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise DiscretizationError(f"Singular tridiagonal system: {e}") from e

    if check_residual:
        residual = np.max(np.abs(system.matvec(u) - system.rhs))
        bound = 1e-10 * (np.max(np.abs(system.rhs)) + 1.0)
        if not residual <= bound:
            raise DiscretizationError(
                f"Tridiagonal residual {residual:.3e} exceeds {bound:.3e}"
            )
    return u
