"""
Study Builder

- Problem construction per model
- Interpolation kind (variant + routing) per study level
- Study specs from CLI flags or a flat KEY=value config file
"""

import logging
import math
from dataclasses import dataclass, fields, replace
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

from dotenv import dotenv_values

from core.errors import ConfigError
from core.interpolation import InterpKind, InterpVariant
from core.mesh import Mesh1D, build_uniform_mesh
from evaluation.convergence import LadderLevel, build_ladder, parse_cost
from models.mean_variance import MeanVarianceBoundedProblem, MeanVarianceProblem, MvParams
from models.problem import Direction, HjbProblem
from models.uncertain_volatility import UncertainVolatilityProblem, UvParams
from solvers.pcpt import MeshStrategy

logger = logging.getLogger(__name__)

Params = Union[UvParams, MvParams]


class ModelKind(Enum):
    UV = "uv"
    MV_UNBOUNDED = "mv-unbounded"
    MV_BOUNDED = "mv-bounded"


class SolverKind(Enum):
    PCPT = "pcpt"
    DIRECT = "direct"
    FIXED = "fixed"
    EXACT_POLICY = "exact-policy"


@dataclass(frozen=True)
class StudySpec:
    name: str
    model: ModelKind
    solver: SolverKind
    ladder: Tuple[LadderLevel, ...]
    interp: InterpVariant = InterpVariant.LINEAR
    routing: str = "direct"
    mesh_strategy: MeshStrategy = MeshStrategy.SHARED
    fixed_control: Optional[float] = None
    reference: Optional[float] = None
    track_expectation: bool = False
    direction: Optional[Direction] = None

    def __post_init__(self):
        if not self.ladder:
            raise ConfigError(f"Study '{self.name}' has an empty ladder")
        if self.routing not in ("direct", "reference"):
            raise ConfigError(f"Routing must be 'direct' or 'reference', got '{self.routing}'")
        if self.solver is SolverKind.FIXED and self.fixed_control is None:
            raise ConfigError(f"Study '{self.name}' uses a fixed control but none was given")
        if self.solver is SolverKind.EXACT_POLICY and self.model is not ModelKind.MV_UNBOUNDED:
            raise ConfigError("An exact policy is only available for the mean-variance problem with bankruptcy")
        if self.direction is not None and self.model is not ModelKind.UV:
            raise ConfigError("Only the uncertain volatility model takes a direction")


# ============================================================
# PROBLEMS
# ============================================================

def default_params(model: ModelKind) -> Params:
    return UvParams() if model is ModelKind.UV else MvParams()


def build_problem(model: ModelKind, params: Optional[Params] = None,
                  direction: Optional[Direction] = None) -> HjbProblem:
    """Problem instance; direction (UV only) picks the ask (max) or bid (min) value."""
    params = params or default_params(model)
    if model is ModelKind.UV:
        return UncertainVolatilityProblem(params, direction or Direction.MAX)
    if model is ModelKind.MV_UNBOUNDED:
        return MeanVarianceProblem(params)
    return MeanVarianceBoundedProblem(params)


def build_interp_kind(variant: InterpVariant, routing: str, meshes: Sequence[Mesh1D]) -> InterpKind:
    """
    Direct transfer, or through one reference mesh.

    The reference spans the union of the policy meshes at their finest spacing.
    """
    if routing == "direct":
        return InterpKind(variant=variant)
    lo = min(m.lo for m in meshes)
    hi = max(m.hi for m in meshes)
    spacing = min(m.spacing for m in meshes)
    count = max(3, math.ceil((hi - lo) / spacing - 1e-9) + 1)
    return InterpKind(variant=variant, reference=build_uniform_mesh(lo, hi, count))


def domain_width(problem: HjbProblem, strategy: MeshStrategy) -> float:
    """Length of component 1's domain."""
    lo, hi = problem.domain()
    if strategy is MeshStrategy.PER_POLICY:
        q_lo, _ = problem.control_range()
        lo, hi = problem.domain(q_lo)
    return hi - lo


def parse_solver(text: str) -> Tuple[SolverKind, Optional[float]]:
    """'pcpt', 'direct', 'exact-policy' or 'fixed:<q>'."""
    text = text.strip().lower()
    if text.startswith("fixed:"):
        try:
            return SolverKind.FIXED, float(text.split(":", 1)[1])
        except ValueError as e:
            raise ConfigError(f"Cannot parse fixed control in '{text}'") from e
    try:
        return SolverKind(text), None
    except ValueError as e:
        raise ConfigError(f"Unknown solver '{text}'") from e


# ============================================================
# CONFIG FILES
# ============================================================

STUDY_KEYS = {
    "name", "model", "solver", "levels", "n0", "m0", "j0", "cost", "cost_kappa", "interp",
    "routing", "mesh_strategy", "query", "j_schedule", "reference", "track_expectation",
    "double_n", "double_m", "direction",
}


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes"):
        return True
    if lowered in ("0", "false", "no"):
        return False
    raise ConfigError(f"Key '{key}' expects a boolean, got '{value}'")


def _parse_enum(key: str, enum_type, value: str):
    try:
        return enum_type(value.strip().lower())
    except ValueError as e:
        choices = ", ".join(m.value for m in enum_type)
        raise ConfigError(f"Key '{key}' must be one of {choices}, got '{value}'") from e


def _parse_number(key: str, value: str, cast=float):
    try:
        return cast(value)
    except ValueError as e:
        raise ConfigError(f"Key '{key}' expects a number, got '{value}'") from e


def params_from_mapping(model: ModelKind, values: Dict[str, str]) -> Params:
    """Parameter record with overrides; keys are matched case-insensitively to field names."""
    base = default_params(model)
    by_lower = {f.name.lower(): f.name for f in fields(base)}
    overrides = {}
    for key, raw in values.items():
        name = by_lower.get(key.lower())
        if name is None:
            raise ConfigError(f"'{key}' is not a parameter of model {model.value}")
        overrides[name] = _parse_number(key, raw)
    return replace(base, **overrides)


def load_study_config(path: Union[str, Path]) -> Tuple[StudySpec, Params]:
    """
    Read a study from a flat KEY=value file.

    Study keys pick model, solver and ladder; every other key must be a
    field of the model's parameter record.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    raw = {k.lower(): (v or "").strip() for k, v in dotenv_values(path).items()}

    model = _parse_enum("model", ModelKind, raw.get("model", "uv"))
    param_values = {k: v for k, v in raw.items() if k not in STUDY_KEYS}
    if "query" in raw:
        param_values["s0" if model is ModelKind.UV else "w0"] = raw["query"]
    params = params_from_mapping(model, param_values)

    solver, fixed_control = parse_solver(raw.get("solver", "pcpt"))
    strategy = _parse_enum("mesh_strategy", MeshStrategy, raw.get("mesh_strategy", "shared"))
    problem = build_problem(model, params)

    if "cost_kappa" in raw:
        cost = parse_cost(f"schedule:{raw['cost_kappa']}")
    else:
        cost = parse_cost(raw.get("cost", "0"))

    ladder = build_ladder(
        levels=_parse_number("levels", raw.get("levels", "3"), int),
        n0=_parse_number("n0", raw.get("n0", "32"), int),
        m0=_parse_number("m0", raw.get("m0", "128"), int),
        j0=1 if solver is SolverKind.FIXED else _parse_number("j0", raw.get("j0", "2"), int),
        cost=cost,
        width=domain_width(problem, strategy),
        j_schedule=raw.get("j_schedule", "fixed"),
        double_n=_parse_bool("double_n", raw.get("double_n", "true")),
        double_m=_parse_bool("double_m", raw.get("double_m", "true")),
    )
    spec = StudySpec(
        name=raw.get("name") or path.stem,
        model=model,
        solver=solver,
        ladder=tuple(ladder),
        interp=_parse_enum("interp", InterpVariant, raw.get("interp", "linear")),
        routing=raw.get("routing", "direct"),
        mesh_strategy=strategy,
        fixed_control=fixed_control,
        reference=_parse_number("reference", raw["reference"]) if raw.get("reference") else None,
        track_expectation=_parse_bool("track_expectation", raw.get("track_expectation", "false")),
        direction=_parse_enum("direction", Direction, raw["direction"]) if raw.get("direction") else None,
    )
    logger.info("Loaded study '%s' from %s (%d levels)", spec.name, path, len(spec.ladder))
    return spec, params
