"""
Convergence Tables

- Errors, increments and ratios of increments per refinement level
- First-order Richardson extrapolation
- Refinement ladders (N, M, J, c per level)
- CSV emission / parsing with pandas
"""

import math
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from core.errors import ConfigError

CSV_FLOAT_FORMAT = "%.12g"
TABLE_COLUMNS = ["level", "N", "M", "J", "c", "value", "error", "increment", "ratio", "status", "message"]
POINT_COLUMNS = ["figure", "method", "h", "c", "m", "dt", "value", "error"]
PROFILE_COLUMNS = ["figure", "series", "x", "value"]


def _round12(x: Optional[float]) -> Optional[float]:
    """Round to the 12 significant digits written to CSV."""
    if x is None or not math.isfinite(x):
        return None
    return float(f"{x:.12g}")


@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    N: Optional[int] = None
    M: Optional[int] = None
    J: Optional[int] = None
    c: Optional[float] = None
    value: Optional[float] = None
    error: Optional[float] = None
    increment: Optional[float] = None
    ratio: Optional[float] = None
    status: str = "ok"
    message: str = ""

    @property
    def failed(self) -> bool:
        return self.status != "ok"


@dataclass(frozen=True)
class LadderLevel:
    N: int
    M: int
    J: int
    c: float = 0.0

    def __post_init__(self):
        if self.N < 1 or self.M < 3 or self.J < 1:
            raise ConfigError(f"Ladder level needs N >= 1, M >= 3, J >= 1, got {self}")
        if not self.c >= 0:
            raise ConfigError(f"Switching cost must be nonnegative, got {self.c}")


# ============================================================
# ERRORS AND EXTRAPOLATION
# ============================================================

def compute_error(value: float, reference: float) -> float:
    if not math.isfinite(reference):
        raise ConfigError(f"Reference value must be finite, got {reference}")
    return abs(value - reference)


def richardson_extrapolate(v_last: float, v_prev: float) -> float:
    """First-order extrapolation from two levels with halved (h, dt)."""
    return 2.0 * v_last - v_prev


def observed_order(ratio: float, refinement: float = 2.0) -> Optional[float]:
    """Convergence order implied by a ratio of increments at the given refinement factor."""
    if ratio is None or not ratio > 0:
        return None
    return math.log(ratio) / math.log(refinement)


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ConfigError("Log-log fit needs at least two positive points")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def build_table(values: Sequence[Optional[float]], reference: Optional[float] = None,
                ladder: Optional[Sequence[LadderLevel]] = None,
                messages: Optional[Sequence[str]] = None) -> List[ConvergenceRow]:
    """
    Rows of a convergence table.

    Args:
        values: V_k per level, None for a failed level
        reference: exact or extrapolated value for the error column
        ladder: grid parameters per level
        messages: failure message per level

    Returns:
        One ConvergenceRow per level; increment V_k - V_{k-1} and ratio
        (V_{k-1} - V_{k-2}) / (V_k - V_{k-1}) only where defined
    """
    if not values:
        raise ConfigError("A convergence table needs at least one value")
    if ladder is not None and len(ladder) != len(values):
        raise ConfigError(f"Ladder has {len(ladder)} levels for {len(values)} values")

    increments: List[Optional[float]] = [None]
    for prev, cur in zip(values[:-1], values[1:]):
        increments.append(None if prev is None or cur is None else cur - prev)

    rows = []
    for k, v in enumerate(values):
        inc = increments[k]
        prev_inc = increments[k - 1] if k >= 1 else None
        ratio = None
        if inc is not None and prev_inc is not None and inc != 0:
            ratio = prev_inc / inc
        step = ladder[k] if ladder is not None else None
        failed = v is None
        rows.append(ConvergenceRow(
            level=k + 1,
            N=step.N if step else None,
            M=step.M if step else None,
            J=step.J if step else None,
            c=_round12(step.c) if step else None,
            value=_round12(v),
            error=_round12(compute_error(v, reference)) if reference is not None and not failed else None,
            increment=_round12(inc),
            ratio=_round12(ratio),
            status="failed" if failed else "ok",
            message=(messages[k] if messages else "") or "",
        ))
    return rows


# ============================================================
# LADDERS
# ============================================================

def sqrt2_control_count(level: int, j0: int = 5) -> int:
    """J_k = ceil(j0 * sqrt(2)^(k-1))."""
    return int(math.ceil(j0 * math.sqrt(2.0) ** (level - 1) - 1e-9))


@dataclass(frozen=True)
class CostRule:
    """Constant switching cost, or c = kappa h^(4/3)."""

    value: float = 0.0
    kappa: Optional[float] = None

    def at(self, h: float) -> float:
        return self.value if self.kappa is None else self.kappa * h ** (4.0 / 3.0)

    def __str__(self) -> str:
        return f"{self.value:g}" if self.kappa is None else f"schedule:{self.kappa:g}"


def parse_cost(text: Union[str, float]) -> CostRule:
    """'0.1', '1/40' or 'schedule:<kappa>'."""
    if isinstance(text, (int, float)):
        return CostRule(value=float(text))
    text = str(text).strip()
    try:
        if text.startswith("schedule:"):
            return CostRule(kappa=float(text.split(":", 1)[1]))
        match = re.fullmatch(r"\s*([\d.eE+-]+)\s*/\s*([\d.eE+-]+)\s*", text)
        value = float(match.group(1)) / float(match.group(2)) if match else float(text)
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError(f"Cannot parse switching cost '{text}'") from e
    if value < 0:
        raise ConfigError(f"Switching cost must be nonnegative, got {text}")
    return CostRule(value=value)


def build_ladder(levels: int, n0: int, m0: int, j0: int = 2, cost: Optional[CostRule] = None,
                 width: float = 1.0, j_schedule: str = "fixed", double_n: bool = True,
                 double_m: bool = True) -> List[LadderLevel]:
    """
    Refinement ladder: N and M double per level (unless pinned), J fixed or growing by sqrt(2).

    width is the length of component 1's domain; it converts M to h for cost schedules.
    """
    if levels < 1:
        raise ConfigError(f"Need at least one level, got {levels}")
    if j_schedule not in ("fixed", "sqrt2"):
        raise ConfigError(f"Unknown control schedule '{j_schedule}'")
    cost = cost or CostRule()
    ladder = []
    for k in range(1, levels + 1):
        N = n0 * 2 ** (k - 1) if double_n else n0
        M = m0 * 2 ** (k - 1) if double_m else m0
        J = sqrt2_control_count(k, j0) if j_schedule == "sqrt2" else j0
        ladder.append(LadderLevel(N=N, M=M, J=J, c=cost.at(width / (M - 1))))
    return ladder


# ============================================================
# CSV
# ============================================================

def write_table_csv(rows: Iterable[ConvergenceRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([asdict(r) for r in rows], columns=TABLE_COLUMNS)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, na_rep="")
    return path


def _cell(value, cast: Callable):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return cast(value)


def read_table_csv(path: Union[str, Path]) -> List[ConvergenceRow]:
    frame = pd.read_csv(path, float_precision="round_trip", keep_default_na=False, na_values=[""])
    missing = set(TABLE_COLUMNS) - set(frame.columns)
    if missing:
        raise ConfigError(f"{path} is missing columns {sorted(missing)}")
    casts: Dict[str, Callable] = {f.name: float for f in fields(ConvergenceRow)}
    casts.update(level=int, N=int, M=int, J=int, status=str, message=str)
    rows = []
    for record in frame.to_dict(orient="records"):
        cells = {name: _cell(record[name], casts[name]) for name in TABLE_COLUMNS}
        cells["status"] = cells["status"] or "ok"
        cells["message"] = cells["message"] or ""
        rows.append(ConvergenceRow(**cells))
    return rows


def write_points_csv(points: Iterable[Dict], path: Union[str, Path],
                     columns: Sequence[str] = POINT_COLUMNS) -> Path:
    """Long-format plot data, one row per point."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(points), columns=list(columns))
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, na_rep="")
    return path
