"""
Convergence Study Runner
========================

Studies:
- Uncertain volatility: switching cost and mesh convergence (per-policy meshes)
- Uncertain volatility: cost, mesh/timestep and method sweeps (plot data)
- Mean-variance with bankruptcy: control refinement, closed-form moments
- Mean-variance without bankruptcy: policy timestepping, direct and fixed control

Every study writes a CSV per ladder and an acceptance.json comparing the
results with published reference values. Mismatches are reported, never raised.
"""

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime
from itertools import repeat
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import PcptError
from core.interpolation import InterpVariant
from core.mesh import TimeGrid, build_uniform_mesh
from core.system_builder import (
    ModelKind,
    Params,
    SolverKind,
    StudySpec,
    build_interp_kind,
    build_problem,
    default_params,
    domain_width,
    load_study_config,
    parse_solver,
)
from evaluation.convergence import (
    PROFILE_COLUMNS,
    ConvergenceRow,
    CostRule,
    LadderLevel,
    build_ladder,
    build_table,
    compute_error,
    fit_loglog_slope,
    parse_cost,
    richardson_extrapolate,
    write_points_csv,
    write_table_csv,
)
from models.mean_variance import (
    MvParams,
    implied_moments,
    mv_asymptotic_coefficients,
    mv_asymptotic_value,
    mv_exact_moments,
    mv_exact_transformed_policy,
)
from models.problem import Direction
from models.uncertain_volatility import UvParams
from solvers.controls import discretize_control_set
from solvers.fixed_policy import solve_fixed_policy
from solvers.howard import solve_direct
from solvers.pcpt import MeshStrategy, SwitchingConfig, build_policy_meshes, optimal_policy, solve_pcpt

logger = logging.getLogger(__name__)

# ============================================================
# PUBLISHED REFERENCE VALUES
# ============================================================

PUBLISHED = {
    "uv_exact": 1.67012,
    "uv_switching": {
        "1/10": [2.0692, 1.9724, 1.9660, 1.9532, 1.9491, 1.9478, 1.9474, 1.9472],
        "1/40": [1.6126, 1.5441, 1.7406, 1.7663, 1.7623, 1.7612, 1.7608, 1.7606],
        "1/160": [1.1989, 1.2205, 1.5510, 1.7019, 1.7033, 1.7022, 1.7018, 1.7016],
        "1/640": [0.9256, 0.9897, 1.3752, 1.6448, 1.6833, 1.6822, 1.6818, 1.6816],
        "0": [0.8271, 0.7221, 1.0227, 1.4109, 1.6654, 1.6702, 1.6703, 1.6702],
    },
    "uv_switching_gaps": {"1/10": 0.2771, "1/40": 0.0905, "1/160": 0.0315, "1/640": 0.0115},
    "uv_switching_ratios": {"1/10": 2.3076, "1/40": 2.3037},
    "mv_controls": [2.257, 1.531, 1.429, 1.254, 1.230, 1.196, 1.186, 1.180, 1.178],
    "mv_bounded_pcpt": [1.5930, 1.5589, 1.5447, 1.5378, 1.5350],
    "mv_bounded_direct": [1.5902, 1.5577, 1.5442, 1.5376],
    "mv_bounded_fixed": [3.4268, 3.4199, 3.4140, 3.4104, 3.4085],
    "mv_closed_form": {"objective": 0.8338, "std": 0.794, "mean": 6.784},
}

TOLERANCE = {
    "uv_exact": 2e-3,
    "uv_switching": 3e-3,
    "mv_controls": 5e-3,
    "mv_bounded": 4e-3,
    "mv_closed_form": 5e-3,
}

UV_SWITCHING_COSTS = ["1/10", "1/40", "1/160", "1/640", "0"]
UV_SWEEP_METHODS = ["shared", "direct", "linear", "linear-reference", "cubic", "cubic-reference"]


# ============================================================
# RESULTS
# ============================================================

@dataclass
class ReferenceCheck:
    study: str
    label: str
    expected: float
    actual: Optional[float]
    tolerance: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = (
            self.actual is not None
            and math.isfinite(self.actual)
            and abs(self.actual - self.expected) <= self.tolerance + 1e-12
        )


def check_range(study: str, label: str, lo: float, hi: float, actual: Optional[float]) -> ReferenceCheck:
    return ReferenceCheck(study=study, label=label, expected=0.5 * (lo + hi), actual=actual, tolerance=0.5 * (hi - lo))


@dataclass
class LevelOutcome:
    value: Optional[float]
    expectation: Optional[float] = None
    seconds: float = 0.0
    iterations: Optional[float] = None
    message: str = ""


@dataclass
class StudyResult:
    spec: StudySpec
    rows: List[ConvergenceRow]
    outcomes: List[LevelOutcome]
    reference: Optional[float] = None
    reference_source: str = "none"
    path: Optional[Path] = None

    @property
    def values(self) -> List[Optional[float]]:
        return [o.value for o in self.outcomes]

    @property
    def final(self) -> Optional[float]:
        return self.outcomes[-1].value

    def summary(self) -> Dict[str, Any]:
        return {
            "name": self.spec.name,
            "model": self.spec.model.value,
            "solver": self.spec.solver.value,
            "reference": self.reference,
            "reference_source": self.reference_source,
            "csv": str(self.path) if self.path else None,
            "seconds": sum(o.seconds for o in self.outcomes),
            "rows": [asdict(r) for r in self.rows],
            "expectations": [o.expectation for o in self.outcomes],
            "mean_policy_iterations": [o.iterations for o in self.outcomes],
        }


@dataclass
class EvaluationReport:
    command: str
    studies: List[StudyResult] = field(default_factory=list)
    checks: List[ReferenceCheck] = field(default_factory=list)
    extras: Dict[str, Any] = field(default_factory=dict)

    def save(self, out_dir: Path) -> Path:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "acceptance.json"
        with open(path, "w") as f:
            json.dump({
                "time": datetime.now().isoformat(),
                "command": self.command,
                "passed": sum(c.passed for c in self.checks),
                "total": len(self.checks),
                "checks": [asdict(c) for c in self.checks],
                "studies": [s.summary() for s in self.studies],
                "extras": self.extras,
            }, f, indent=2, default=str)
        return path

    def print_summary(self):
        print(f"\n{'=' * 70}")
        print(f"[Harness] {self.command}: {sum(c.passed for c in self.checks)}/{len(self.checks)} reference checks passed")
        print(f"{'=' * 70}")
        for c in self.checks:
            actual = "failed" if c.actual is None else f"{c.actual:.6g}"
            mark = "PASS" if c.passed else "FAIL"
            print(f"   {mark} {c.study} | {c.label}: {actual} vs {c.expected:.6g} +/- {c.tolerance:.2g}")


# ============================================================
# SOLVING ONE LEVEL
# ============================================================

def _solve(spec: StudySpec, params: Params, level: LadderLevel) -> Tuple[float, Optional[float], Optional[float]]:
    problem = build_problem(spec.model, params, spec.direction)
    grid = TimeGrid(problem.horizon, level.N)

    if spec.solver is SolverKind.PCPT:
        controls = discretize_control_set(*problem.control_range(), level.J)
        meshes = build_policy_meshes(problem, controls, spec.mesh_strategy, count=level.M)
        cfg = SwitchingConfig(
            cost=level.c,
            direction=problem.direction,
            interp=build_interp_kind(spec.interp, spec.routing, meshes),
            mesh_strategy=spec.mesh_strategy,
        )
        result = solve_pcpt(problem, controls, meshes, grid, cfg, track_expectation=spec.track_expectation)
        return result.value, result.expectation_at() if spec.track_expectation else None, None

    mesh = build_uniform_mesh(*problem.domain(), level.M)
    if spec.solver is SolverKind.DIRECT:
        controls = discretize_control_set(*problem.control_range(), level.J)
        result = solve_direct(problem, mesh, grid, controls)
        return result.value, None, float(np.mean(result.iterations))

    policy = spec.fixed_control if spec.solver is SolverKind.FIXED else problem.exact_policy()
    result = solve_fixed_policy(problem, mesh, grid, policy, track_expectation=spec.track_expectation)
    return result.value, result.expectation_at() if spec.track_expectation else None, None


def solve_level(spec: StudySpec, params: Params, level: LadderLevel) -> LevelOutcome:
    """Run one ladder level end to end; solver failures are recorded, not raised."""
    start = time.perf_counter()
    try:
        with np.errstate(over="raise", invalid="raise"):
            value, expectation, iterations = _solve(spec, params, level)
    except (PcptError, FloatingPointError) as e:
        logger.warning("Study %s level N=%d M=%d J=%d failed: %s", spec.name, level.N, level.M, level.J, e)
        return LevelOutcome(value=None, seconds=time.perf_counter() - start, message=str(e))
    seconds = time.perf_counter() - start
    logger.info("Study %s N=%d M=%d J=%d c=%g -> %.6f (%.1fs)", spec.name, level.N, level.M, level.J, level.c, value, seconds)
    return LevelOutcome(value=value, expectation=expectation, seconds=seconds, iterations=iterations)


def _reference(spec: StudySpec, values: Sequence[Optional[float]]) -> Tuple[Optional[float], str]:
    if spec.reference is not None:
        return spec.reference, "given"
    if len(values) >= 2 and values[-1] is not None and values[-2] is not None:
        return richardson_extrapolate(values[-1], values[-2]), "extrapolated"
    return None, "none"


def run_study(spec: StudySpec, params: Optional[Params] = None, out_dir: Optional[Path] = None,
              workers: int = 1, verbose: bool = False) -> StudyResult:
    """
    Run every ladder level of a study and tabulate the results.

    Args:
        spec: model, solver and ladder
        params: model parameters (defaults per model)
        out_dir: directory for <spec.name>.csv; nothing is written when None
        workers: levels run in separate processes when > 1
        verbose: print one line per level

    Returns:
        StudyResult with rows in level order
    """
    params = params or default_params(spec.model)
    if verbose:
        print(f"[Harness] {spec.name}: {len(spec.ladder)} levels, solver {spec.solver.value}")

    if workers > 1 and len(spec.ladder) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(solve_level, repeat(spec), repeat(params), spec.ladder))
    else:
        outcomes = [solve_level(spec, params, level) for level in spec.ladder]

    values = [o.value for o in outcomes]
    reference, source = _reference(spec, values)
    rows = build_table(values, reference, spec.ladder, [o.message for o in outcomes])
    path = write_table_csv(rows, out_dir / f"{spec.name}.csv") if out_dir is not None else None

    if verbose:
        for row, outcome in zip(rows, outcomes):
            shown = "failed" if row.value is None else f"{row.value:.6f}"
            print(f"[Harness]   Level {row.level}/{len(rows)} N={row.N} M={row.M} J={row.J} c={row.c:g}: "
                  f"{shown} ({outcome.seconds:.1f}s)")
    return StudyResult(spec=spec, rows=rows, outcomes=outcomes, reference=reference,
                       reference_source=source, path=path)


def _run_points(task: Callable, jobs: List[tuple], workers: int) -> List[Dict]:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(task, *zip(*jobs)))
    return [task(*job) for job in jobs]


def _slug(label: str) -> str:
    return label.replace("/", "-").replace(":", "-")


def _level_checks(study: str, values: Sequence[Optional[float]], published: Sequence[float],
                  tolerance: float, levels: Optional[Sequence[int]] = None) -> List[ReferenceCheck]:
    """Compare level k with the published value of level k."""
    levels = levels if levels is not None else range(1, min(len(values), len(published)) + 1)
    return [
        ReferenceCheck(study=study, label=f"level {k}", expected=published[k - 1],
                       actual=values[k - 1], tolerance=tolerance)
        for k in levels if k <= len(values) and k <= len(published)
    ]


# ============================================================
# UNCERTAIN VOLATILITY
# ============================================================

def run_uv_switching(out_dir: Path, levels: int = 8, interp: InterpVariant = InterpVariant.LINEAR,
                     routing: str = "direct", costs: Optional[Sequence[str]] = None,
                     strategy: MeshStrategy = MeshStrategy.PER_POLICY, solver: str = "pcpt",
                     direction: Direction = Direction.MIN, workers: int = 1,
                     verbose: bool = True) -> EvaluationReport:
    """
    Switching cost and mesh convergence: N_k = 32 * 2^(k-1), M_k = 512 * 2^(k-1).

    Published values are bid (MIN) values; with MAX only the tables are written.
    """
    report = EvaluationReport(command="uv-table2")
    params = UvParams()
    problem = build_problem(ModelKind.UV, params, direction)
    solver_kind, fixed = parse_solver(solver)
    published_setup = (costs is None and interp is InterpVariant.LINEAR and routing == "direct"
                       and strategy is MeshStrategy.PER_POLICY and solver_kind is SolverKind.PCPT
                       and direction is Direction.MIN)
    labels = list(costs or UV_SWITCHING_COSTS)
    exact = PUBLISHED["uv_exact"]
    width = domain_width(problem, strategy)

    gaps: Dict[str, float] = {}
    for label in labels:
        rule = parse_cost(label)
        ladder = build_ladder(levels, 32, 512, j0=1 if solver_kind is SolverKind.FIXED else 2,
                              cost=rule, width=width)
        spec = StudySpec(
            name=f"uv-table2-c{_slug(label)}", model=ModelKind.UV, solver=solver_kind,
            ladder=tuple(ladder), interp=interp, routing=routing, mesh_strategy=strategy,
            fixed_control=fixed, reference=exact, direction=direction,
        )
        result = run_study(spec, params, out_dir, workers, verbose)
        report.studies.append(result)

        if rule.kappa is None and rule.value > 0 and result.final is not None:
            gaps[label] = result.final - exact
        if label == "0" or (rule.kappa is None and rule.value == 0):
            extrapolated = _reference(replace(spec, reference=None), result.values)[0]
            report.extras["extrapolated_reference"] = extrapolated
            if levels >= 6 and direction is Direction.MIN:
                report.checks.append(ReferenceCheck(study=spec.name, label="extrapolated reference",
                                                    expected=exact, actual=extrapolated,
                                                    tolerance=TOLERANCE["uv_exact"]))
        if published_setup and label in PUBLISHED["uv_switching"]:
            report.checks += _level_checks(spec.name, result.values, PUBLISHED["uv_switching"][label],
                                           TOLERANCE["uv_switching"], levels=[6, 7, 8])
            if label in PUBLISHED["uv_switching_ratios"] and levels >= 6:
                report.checks.append(check_range(spec.name, "finest ratio", 1.7, 2.9, result.rows[-1].ratio))

    report.extras["reference"] = exact
    report.extras["gaps"] = gaps
    positive = {label: gap for label, gap in gaps.items() if gap > 0}
    if len(positive) >= 2:
        slope = fit_loglog_slope([parse_cost(label).value for label in positive], list(positive.values()))
        report.extras["gap_slope"] = slope
        if published_setup and levels == 8:
            report.checks.append(check_range("uv-table2", "gap vs cost slope", 0.65, 0.85, slope))
    if published_setup and levels == 8:
        for label, expected in PUBLISHED["uv_switching_gaps"].items():
            report.checks.append(ReferenceCheck(study="uv-table2", label=f"gap c={label}", expected=expected,
                                                actual=gaps.get(label), tolerance=TOLERANCE["uv_switching"]))
    return report


def uv_point(figure: str, method: str, h: float, c: float, m: int, params: UvParams,
             direction: Direction = Direction.MIN) -> Dict:
    """One (method, h, c, dt) point of a UV sweep, dt = 1/8 * 2^-m."""
    problem = build_problem(ModelKind.UV, params, direction)
    dt_target = 0.125 * 2.0 ** (-m)
    grid = TimeGrid(problem.horizon, max(1, int(round(problem.horizon / dt_target))))
    point = {"figure": figure, "method": method, "h": h, "c": c, "m": m, "dt": grid.dt, "value": None, "error": None}
    try:
        with np.errstate(over="raise", invalid="raise"):
            if method == "direct":
                lo, hi = problem.domain()
                mesh = build_uniform_mesh(lo, hi, max(3, int(round((hi - lo) / h)) + 1))
                controls = discretize_control_set(*problem.control_range(), 2)
                value = solve_direct(problem, mesh, grid, controls).value
            else:
                strategy = MeshStrategy.SHARED if method == "shared" else MeshStrategy.PER_POLICY
                variant = InterpVariant.LIMITED_CUBIC if method.startswith("cubic") else InterpVariant.LINEAR
                routing = "reference" if method.endswith("reference") else "direct"
                controls = discretize_control_set(*problem.control_range(), 2)
                meshes = build_policy_meshes(problem, controls, strategy, spacing=h)
                kind = build_interp_kind(variant, routing, meshes)
                cfg = SwitchingConfig(cost=c, direction=problem.direction, interp=kind, mesh_strategy=strategy)
                value = solve_pcpt(problem, controls, meshes, grid, cfg).value
    except (PcptError, FloatingPointError) as e:
        logger.warning("Sweep point %s/%s h=%g c=%g m=%d failed: %s", figure, method, h, c, m, e)
        return point
    point.update(value=value, error=compute_error(value, PUBLISHED["uv_exact"]))
    return point


def _envelope(points: Sequence[Dict], method: str) -> Tuple[List[float], List[float]]:
    """Per timestep, the smallest error over all h."""
    best: Dict[float, float] = {}
    for p in points:
        if p["method"] == method and p["error"] is not None and p["error"] > 0:
            best[p["dt"]] = min(best.get(p["dt"], math.inf), p["error"])
    dts = sorted(best)
    return dts, [best[dt] for dt in dts]


def run_uv_sweeps(out_dir: Path, levels: int = 3, direction: Direction = Direction.MIN, workers: int = 1,
                  verbose: bool = True) -> EvaluationReport:
    """
    Plot data for the UV problem, h in {1/4, 1/16, ...} (levels values), dt = 1/8 * 2^-m, m = 0..2 levels.

    cost: cost sweep at the finest h, shared mesh and per-policy linear
    mesh: per-policy linear at c = 0.01 and c = 0.16
    method: c = 0 method comparison
    """
    report = EvaluationReport(command="uv-figures")
    params = UvParams()
    hs = [0.25 * 4.0 ** (-i) for i in range(levels)]
    ms = list(range(2 * levels + 1))

    jobs = []
    for c in [1 / 20, 1 / 40, 1 / 80, 1 / 160, 1 / 320, 1 / 640]:
        for method in ("shared", "linear"):
            jobs += [("cost", method, hs[-1], c, m, params, direction) for m in ms]
    for c in (0.01, 0.16):
        jobs += [("mesh", "linear", h, c, m, params, direction) for h in hs for m in ms]
    for method in UV_SWEEP_METHODS:
        jobs += [("method", method, h, 0.0, m, params, direction) for h in hs for m in ms]

    if verbose:
        print(f"[Harness] uv-figures: {len(jobs)} sweep points")
    points = _run_points(uv_point, jobs, workers)
    report.extras["csv"] = str(write_points_csv(points, out_dir / "uv-figures.csv"))
    if direction is not Direction.MIN:
        return report

    by_method = [p for p in points if p["figure"] == "method"]
    dts, env = _envelope(by_method, "shared")
    if len(env) >= 2:
        report.checks.append(check_range("uv-figures", "shared-mesh envelope slope", 0.8, 1.2,
                                         fit_loglog_slope(dts, env)))
    finest_dt = min(p["dt"] for p in by_method)
    for h in hs[-3:]:
        def err(method):
            return next((p["error"] for p in by_method if p["method"] == method and p["h"] == h
                         and p["dt"] == finest_dt), None)
        linear, cubic = err("linear"), err("cubic")
        if linear is not None and cubic is not None:
            # passes when cubic <= linear
            report.checks.append(ReferenceCheck(study="uv-figures", label=f"cubic minus linear error h={h:g}",
                                                expected=-0.5 * linear, actual=cubic - linear,
                                                tolerance=0.5 * linear))
    return report


# ============================================================
# MEAN-VARIANCE
# ============================================================

def _profile_rows(figure: str, series: str, xs, values) -> List[Dict]:
    return [{"figure": figure, "series": series, "x": float(x), "value": float(v)} for x, v in zip(xs, values)]


def _mv_value_policy_profile(figure: str, model: ModelKind, params: MvParams, N: int, M: int, J: int) -> List[Dict]:
    problem = build_problem(model, params)
    controls = discretize_control_set(*problem.control_range(), J)
    meshes = build_policy_meshes(problem, controls, MeshStrategy.SHARED, count=M)
    cfg = SwitchingConfig(cost=0.0, direction=problem.direction)
    result = solve_pcpt(problem, controls, meshes, TimeGrid(problem.horizon, N), cfg)
    nodes = meshes[0].nodes

    a, b = mv_asymptotic_coefficients(problem.asymptotic_control, params)
    rows = _profile_rows(figure, "value", nodes, result.coupled.values[0])
    rows += _profile_rows(figure, "asymptotic", nodes, mv_asymptotic_value(nodes, problem.horizon, a, b, params))
    rows += _profile_rows(figure, "policy", nodes, optimal_policy(result.raw, controls, problem.direction))
    if model is ModelKind.MV_UNBOUNDED:
        rows += _profile_rows(figure, "exact-policy", nodes, mv_exact_transformed_policy(nodes, 0.0, params))
    return rows


def mv_point(method: str, h: float, m: int, params: MvParams, exact: float) -> Dict:
    """One point of the MV sweep: PCPT with 40 policies, or the exact policy."""
    problem = build_problem(ModelKind.MV_UNBOUNDED, params)
    dt_target = 0.125 * 2.0 ** (-m)
    grid = TimeGrid(problem.horizon, max(1, int(round(problem.horizon / dt_target))))
    lo, hi = problem.domain()
    mesh = build_uniform_mesh(lo, hi, max(3, int(round((hi - lo) / h)) + 1))
    point = {"figure": "mv-sweep", "method": method, "h": h, "c": 0.0, "m": m, "dt": grid.dt, "value": None, "error": None}
    try:
        with np.errstate(over="raise", invalid="raise"):
            if method == "exact-policy":
                value = solve_fixed_policy(problem, mesh, grid, problem.exact_policy()).value
            else:
                controls = discretize_control_set(*problem.control_range(), 40)
                cfg = SwitchingConfig(cost=0.0, direction=problem.direction)
                value = solve_pcpt(problem, controls, tuple(mesh for _ in controls), grid, cfg).value
    except (PcptError, FloatingPointError) as e:
        logger.warning("Sweep point mv-sweep/%s h=%g m=%d failed: %s", method, h, m, e)
        return point
    point.update(value=value, error=compute_error(value, exact))
    return point


def _control_order(rows: Sequence[ConvergenceRow], q_lo: float, q_hi: float, last: int = 4) -> Optional[float]:
    """Slope of log |increment| against log H over the last levels."""
    tail = [r for r in rows if r.increment is not None and r.increment != 0][-last:]
    if len(tail) < 2:
        return None
    density = [(q_hi - q_lo) / (2.0 * (r.J - 1)) for r in tail]
    return fit_loglog_slope(density, [abs(r.increment) for r in tail])


def run_mv_unbounded(out_dir: Path, levels: int = 9, cost: Optional[CostRule] = None,
                     policies: Optional[int] = None, interp: InterpVariant = InterpVariant.LINEAR,
                     routing: str = "direct", solver: str = "pcpt", figures: bool = False,
                     workers: int = 1, verbose: bool = True) -> EvaluationReport:
    """
    Control refinement at N=480, M=120 with J_k = ceil(5 sqrt(2)^(k-1)), plus closed-form
    moments and a moment study with 40 policies and a tracked expectation.
    """
    report = EvaluationReport(command="mv-unbounded")
    params = MvParams()
    problem = build_problem(ModelKind.MV_UNBOUNDED, params)
    solver_kind, fixed = parse_solver(solver)
    published_setup = cost is None and policies is None and solver_kind is SolverKind.PCPT
    width = domain_width(problem, MeshStrategy.SHARED)

    ladder = build_ladder(levels, 480, 120, j0=policies or 5, cost=cost, width=width,
                          j_schedule="fixed" if policies else "sqrt2", double_n=False, double_m=False)
    spec = StudySpec(name="mv-unbounded-controls", model=ModelKind.MV_UNBOUNDED, solver=solver_kind,
                     ladder=tuple(ladder), interp=interp, routing=routing, fixed_control=fixed)
    table = run_study(spec, params, out_dir, workers, verbose)
    report.studies.append(table)

    order = _control_order(table.rows, params.q_lo, params.q_hi)
    report.extras["control_order"] = order
    if published_setup:
        report.checks += _level_checks(spec.name, table.values, PUBLISHED["mv_controls"],
                                       TOLERANCE["mv_controls"], levels=[1, 9])
        if levels >= 6:
            report.checks.append(check_range(spec.name, "control refinement order", 1.5, 2.5, order))

    moments = mv_exact_moments(params)
    report.extras["closed_form"] = {"objective": moments.objective, "std": moments.std, "mean": moments.mean}
    published = PUBLISHED["mv_closed_form"]
    for key, actual in (("objective", moments.objective), ("std", moments.std), ("mean", moments.mean)):
        report.checks.append(ReferenceCheck(study="mv-closed-form", label=f"{key} vs published",
                                            expected=published[key], actual=actual,
                                            tolerance=TOLERANCE["mv_closed_form"]))

    moment_ladder = build_ladder(min(levels, 4), 60, 160, j0=policies or 40, cost=cost, width=width)
    for kind in (SolverKind.PCPT, SolverKind.EXACT_POLICY):
        moment_spec = StudySpec(name=f"mv-unbounded-moments-{kind.value}", model=ModelKind.MV_UNBOUNDED,
                                solver=kind, ladder=tuple(moment_ladder), interp=interp, routing=routing,
                                reference=moments.objective, track_expectation=True)
        result = run_study(moment_spec, params, out_dir, workers, verbose)
        report.studies.append(result)
        final = result.outcomes[-1]
        if final.value is None or final.expectation is None:
            continue
        std, mean = implied_moments(final.value, final.expectation, params.gamma)
        report.extras[moment_spec.name] = {"objective": final.value, "std": std, "mean": mean}
        if kind is SolverKind.PCPT:
            for key, actual, expected in (("objective", final.value, moments.objective),
                                          ("std", std, moments.std), ("mean", mean, moments.mean)):
                report.checks.append(ReferenceCheck(study=moment_spec.name, label=f"{key} vs closed form",
                                                    expected=expected, actual=actual,
                                                    tolerance=TOLERANCE["mv_closed_form"]))
            report.checks.append(ReferenceCheck(study=moment_spec.name, label="objective vs published",
                                                expected=published["objective"], actual=final.value,
                                                tolerance=TOLERANCE["mv_closed_form"]))

    if figures:
        profile = _mv_value_policy_profile("mv-unbounded", ModelKind.MV_UNBOUNDED, params, N=80, M=80, J=20)
        report.extras["profile_csv"] = str(write_points_csv(profile, out_dir / "mv-unbounded-profile.csv",
                                                            PROFILE_COLUMNS))
        jobs = [(method, h, m, params, moments.objective)
                for method in ("pcpt", "exact-policy") for h in (0.25, 0.0625) for m in range(5)]
        points = _run_points(mv_point, jobs, workers)
        report.extras["sweep_csv"] = str(write_points_csv(points, out_dir / "mv-unbounded-sweep.csv"))
    return report


def run_mv_bounded(out_dir: Path, levels: int = 5, cost: Optional[CostRule] = None,
                   policies: Optional[int] = None, interp: InterpVariant = InterpVariant.LINEAR,
                   routing: str = "direct", solver: Optional[str] = None, fixed_control: float = 1.5,
                   figures: bool = False, workers: int = 1, verbose: bool = True) -> EvaluationReport:
    """
    No bankruptcy, p in [0, 1.5]: M_k = 800 * 2^(k-1), N_k = 50 * 2^(k-1), J_k = ceil(5 sqrt(2)^(k-1)).

    Policy timestepping, direct control (first four levels) and a fixed control.
    """
    report = EvaluationReport(command="mv-bounded")
    params = MvParams()
    problem = build_problem(ModelKind.MV_BOUNDED, params)
    width = domain_width(problem, MeshStrategy.SHARED)
    published_setup = cost is None and policies is None

    def ladder(n_levels: int, j0: Optional[int] = None):
        j = j0 or policies or 5
        schedule = "fixed" if (j0 or policies) else "sqrt2"
        return tuple(build_ladder(n_levels, 50, 800, j0=j, cost=cost, width=width, j_schedule=schedule))

    if solver is not None:
        kind, fixed = parse_solver(solver)
        runs = [(f"mv-bounded-{kind.value}", kind, fixed, ladder(levels, 1 if kind is SolverKind.FIXED else None), None)]
    else:
        runs = [
            ("mv-bounded-pcpt", SolverKind.PCPT, None, ladder(levels), "mv_bounded_pcpt"),
            ("mv-bounded-direct", SolverKind.DIRECT, None, ladder(min(levels, 4)), "mv_bounded_direct"),
            ("mv-bounded-fixed", SolverKind.FIXED, fixed_control, ladder(levels, 1), "mv_bounded_fixed"),
        ]

    results: Dict[str, StudyResult] = {}
    for name, kind, fixed, study_ladder, key in runs:
        spec = StudySpec(name=name, model=ModelKind.MV_BOUNDED, solver=kind, ladder=study_ladder,
                         interp=interp, routing=routing, fixed_control=fixed)
        result = run_study(spec, params, out_dir, workers, verbose)
        report.studies.append(result)
        results[name] = result
        if key and published_setup and (kind is not SolverKind.FIXED or fixed_control == 1.5):
            report.checks += _level_checks(name, result.values, PUBLISHED[key], TOLERANCE["mv_bounded"])

    pcpt, direct = results.get("mv-bounded-pcpt"), results.get("mv-bounded-direct")
    if pcpt and direct:
        for k, (a, b) in enumerate(zip(pcpt.values, direct.values), start=1):
            report.checks.append(ReferenceCheck(
                study="mv-bounded", label=f"pcpt minus direct level {k}", expected=0.0,
                actual=None if a is None or b is None else a - b, tolerance=TOLERANCE["mv_bounded"],
            ))

    if figures:
        profile = _mv_value_policy_profile("mv-bounded", ModelKind.MV_BOUNDED, params, N=100, M=800, J=15)
        report.extras["profile_csv"] = str(write_points_csv(profile, out_dir / "mv-bounded-profile.csv",
                                                            PROFILE_COLUMNS))
    return report


def run_custom(config_path: Path, out_dir: Path, workers: int = 1, verbose: bool = True) -> EvaluationReport:
    spec, params = load_study_config(config_path)
    report = EvaluationReport(command=f"custom {spec.name}")
    report.studies.append(run_study(spec, params, out_dir, workers, verbose))
    return report
