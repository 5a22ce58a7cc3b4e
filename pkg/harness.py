"""
Experiment harness
==================

One JSON file fully determines an experiment: the problem to build, the
solvers with their parameter grids, the horizon, checkpoint count,
near-stationarity settings, seeds and output directory. The grammar is
described in EXPERIMENTS_GUIDE.md.

Every grid cell runs once per seed on its own RngStream sub-stream,
cells run concurrently up to `threads`, and each run writes one CSV.

Output Files:
    <output_dir>/<label>__c<cell>__s<seed>.csv
        run_id,seed,iteration,wall_clock_s,objective,infeasibility,near_stationarity
    <output_dir>/summary.csv
        one row per run; `winner` marks the best cell of each label
    <output_dir>/<dataset>_<metric>.svg   (emit_plots)
"""

import itertools
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from dotenv import load_dotenv  # noqa: E402
from scipy import sparse  # noqa: E402

from core import (  # noqa: E402
    Ball,
    Box,
    ConfigError,
    NoFeasibleIterateError,
    ProblemInstance,
    PropertyCheck,
    RngStream,
    SchemaError,
    as_vector,
    check_projection,
    check_subgradient_bound,
    check_subgradients,
    check_weak_convexity,
    eval_constraint,
)
from data import GroupRule, dataset_path, parse_libsvm, scale_features, split_dataset, synthetic_classifier_data  # noqa: E402
from ipp import ConExInnerSolver, build_prox_subproblem, ipp_run  # noqa: E402
from problems import (  # noqa: E402
    LinearClassifierData,
    dp_oracle,
    dp_problem,
    erm_pretrain,
    hinge_erm_oracle,
    l1_ball_problem,
    l1_oracle,
    lipschitz_constants,
    roc_fairness_oracle,
    roc_problem,
    scad,
    scad_oracle,
    sigmoid_gaps,
    synthetic_two_ball,
    theta_grid,
)
from schedules import (  # noqa: E402
    PolicyKind,
    StepsizePolicy,
    lambda_bound_convex,
    manual_schedule,
    nu_prime,
    schedule_bounded_S_convex,
    schedule_convex_diminishing,
    schedule_convex_static,
    schedule_stochastic,
    schedule_strongly_convex,
    schedule_weakly_convex,
)
from solver import SolverTrace, ssg_run, sssg_run  # noqa: E402
from stationarity import default_rho_hat, default_rho_tilde, near_stationarity  # noqa: E402

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["run_id", "seed", "iteration", "wall_clock_s", "objective", "infeasibility", "near_stationarity"]
SUMMARY_COLUMNS = ["run_id", "label", "method", "seed", "params", "status", "error",
                   "final_objective", "final_infeasibility", "winner"]
METRICS = ("objective", "infeasibility", "near_stationarity")
METHODS = ("ssg", "sssg", "ipp-ssg", "ipp-conex")
PROBLEM_KINDS = ("dp", "roc", "two_ball", "l1_ball")
X_AXES = {"iteration": "iteration", "cpu time": "wall_clock_s", "cpu_time": "wall_clock_s"}


# ============================================================================
# 1. CONFIGURATION
# ============================================================================

@dataclass(frozen=True)
class SolverConfig:
    label: str
    method: str
    policy: Dict[str, object]
    rho_hat_mult: List[float] = field(default_factory=lambda: [1.0])
    inner_iters: int = 100
    center_rule: str = "output"
    rho_tilde: Optional[float] = None
    conex: Dict[str, List[float]] = field(default_factory=dict)
    batch_size: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"Solver '{self.label}': unknown method '{self.method}' (expected one of {METHODS})")
        if "__" in self.label or not self.label:
            raise ConfigError(f"Solver label '{self.label}' must be nonempty and free of '__'")
        for key, value in list(self.policy.items()) + [("rho_hat_mult", self.rho_hat_mult)]:
            if isinstance(value, list) and not value:
                raise ConfigError(f"Solver '{self.label}': grid '{key}' is empty")
        if self.method == "ipp-conex":
            for key in ("c1", "c2"):
                if not self.conex.get(key):
                    raise ConfigError(f"Solver '{self.label}': ipp-conex needs a nonempty '{key}' grid")
        if self.inner_iters < 1:
            raise ConfigError(f"Solver '{self.label}': inner_iters must be positive")

    @property
    def is_ipp(self) -> bool:
        return self.method.startswith("ipp")


@dataclass(frozen=True)
class StationarityConfig:
    enabled: bool = True
    count: int = 100
    inner_iters: int = 2500
    rho_hat: Optional[float] = None
    rho_tilde: Optional[float] = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    problem: Dict[str, object]
    solvers: List[SolverConfig]
    T: int
    checkpoints: int
    seed: int = 0
    seeds: List[int] = field(default_factory=lambda: [0])
    stationarity: StationarityConfig = field(default_factory=StationarityConfig)
    output_dir: str = "results"

    def __post_init__(self):
        kind = self.problem.get("kind")
        if kind not in PROBLEM_KINDS:
            raise ConfigError(f"Unknown problem kind '{kind}' (expected one of {PROBLEM_KINDS})")
        if not self.solvers:
            raise ConfigError("At least one solver is required")
        if self.T < 1:
            raise ConfigError(f"T must be positive, got {self.T}")
        if not 1 <= self.checkpoints <= self.T:
            raise ConfigError(f"Checkpoint count {self.checkpoints} must lie in [1, T={self.T}]")
        if self.stationarity.enabled and not 1 <= self.stationarity.count <= self.checkpoints:
            raise ConfigError(f"Stationarity count {self.stationarity.count} must lie in "
                              f"[1, checkpoints={self.checkpoints}]")
        if not self.seeds:
            raise ConfigError("Seed list is empty")
        labels = [s.label for s in self.solvers]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"Solver labels must be unique, got {labels}")

    @property
    def checkpoint_every(self) -> int:
        return max(self.T // self.checkpoints, 1)


def config_from_dict(data: Dict[str, object], seed: Optional[int] = None,
                     output_dir: Optional[str] = None) -> ExperimentConfig:
    """Build an ExperimentConfig; `seed` and `output_dir` override the file."""
    load_dotenv()
    try:
        name = str(data.get("name", "experiment"))
        solvers = [SolverConfig(**entry) for entry in data["solvers"]]
        stationarity = StationarityConfig(**data.get("stationarity", {}))
        base_seed = int(data.get("seed", 0))
        seeds = [int(s) for s in data.get("seeds", [base_seed])]
        if seed is not None:
            base_seed, seeds = seed, [seed]
        default_out = str(Path(os.getenv("SSG_OUTPUT_DIR", "results")) / name)
        return ExperimentConfig(
            name=name,
            problem=dict(data["problem"]),
            solvers=solvers,
            T=int(data["T"]),
            checkpoints=int(data.get("checkpoints", 100)),
            seed=base_seed,
            seeds=seeds,
            stationarity=stationarity,
            output_dir=output_dir or str(data.get("output_dir", default_out)),
        )
    except KeyError as err:
        raise ConfigError(f"Missing configuration key {err}") from err
    except TypeError as err:
        raise ConfigError(f"Invalid configuration entry: {err}") from err


def load_config(path: Union[str, Path], seed: Optional[int] = None,
                output_dir: Optional[str] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as err:
        raise ConfigError(f"Config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from err
    return config_from_dict(data, seed=seed, output_dir=output_dir)


# ============================================================================
# 2. PROBLEM CONSTRUCTION
# ============================================================================

@dataclass(frozen=True, eq=False)
class BuiltProblem:
    problem: ProblemInstance
    x0: np.ndarray
    details: Dict[str, object] = field(default_factory=dict)


def load_classifier_data(section: Dict[str, object], seed: int) -> LinearClassifierData:
    """Dataset -> optional scaling -> seeded 2:1 split with group rule."""
    name = section.get("dataset", "synthetic")
    if name == "synthetic":
        raw = synthetic_classifier_data(**section.get("synthetic", {}))
    else:
        path = dataset_path(str(name))
        if not path.exists():
            raise ConfigError(f"Dataset file not found: {path} (set SSG_DATA_DIR)")
        raw = parse_libsvm(path)
    if section.get("scale", False):
        raw = scale_features(raw)
    rule = GroupRule.from_dict(section.get("group_rule", {"comparison": "==", "constants": [1.0]}))
    split = split_dataset(raw, int(section.get("group_feature", 0)), rule,
                          seed=int(section.get("split_seed", seed)),
                          drop_group_feature=bool(section.get("drop_group_feature", False)),
                          indicator_feature=bool(section.get("indicator_feature", False)))
    return split.classifier_data()


def build_problem(section: Dict[str, object], seed: int = 0) -> BuiltProblem:
    kind = section.get("kind")
    if kind == "l1_ball":
        problem = l1_ball_problem(section["a"], radius=float(section.get("radius", 3.0)), mu=section.get("mu"),
                                  subgradient_sigma=float(section.get("subgradient_sigma", 0.0)),
                                  value_sigma=float(section.get("value_sigma", 0.0)))
        x0 = section.get("x0", np.zeros(problem.dimension))
        return BuiltProblem(problem, as_vector(x0, problem.dimension))

    if kind == "two_ball":
        problem = synthetic_two_ball(section["c1"], section["c2"], float(section.get("radius", 1.0)),
                                     section["objective"], half_width=section.get("half_width"))
        x0 = section.get("x0", section["c1"])
        return BuiltProblem(problem, as_vector(x0, problem.dimension), {"nu": problem.constants.nu})

    if kind == "dp":
        data = load_classifier_data(section, seed)
        problem = dp_problem(data, lam=float(section.get("lambda", 0.2)), kappa=float(section.get("kappa", 0.02)),
                             radius=section.get("radius"))
        return BuiltProblem(problem, np.zeros(problem.dimension), {"n": data.n, "d": data.dimension})

    if kind == "roc":
        data = load_classifier_data(section, seed)
        pretrain = section.get("pretrain", {})
        L_star, x_erm = erm_pretrain(data, iters=int(pretrain.get("iters", 2000)),
                                     eta=float(pretrain.get("eta", 1.0)), rng=RngStream(seed).child(10_000))
        grid = theta_grid(data, x_erm, size=int(section.get("grid_size", 400)))
        problem = roc_problem(data, L_star, kappa_frac=float(section.get("kappa_frac", 0.001)),
                              radius_mult=float(section.get("radius_mult", 5.0)), x_erm=x_erm, grid=grid)
        return BuiltProblem(problem, x_erm, {"n": data.n, "d": data.dimension, "L_star": L_star})

    raise ConfigError(f"Unknown problem kind '{kind}'")


def _required(value, name: str):
    if value is None:
        raise ConfigError(f"Policy needs '{name}', which neither the config nor the problem provides")
    return value


def build_policy(params: Dict[str, object], problem: ProblemInstance, T: int) -> StepsizePolicy:
    """
    ManualGrid policies use the configured constants directly. Theory
    kinds are built from the problem's constants and then run on the
    configured horizon T.
    """
    kind = PolicyKind(params.get("kind", PolicyKind.MANUAL_GRID.value))
    if kind is PolicyKind.MANUAL_GRID:
        return manual_schedule(T, eps=float(params["eps"]), eta=float(params["eta"]),
                               diminishing=bool(params.get("diminishing", False)),
                               eps_decay=params.get("eps_decay"), eta_decay=params.get("eta_decay"),
                               polyak_scale=params.get("polyak_scale"), S=int(params.get("S", 0)),
                               output_mode=params.get("output_mode", "OutputI"),
                               batch_size=int(params.get("batch_size", 1)))

    c = problem.constants
    eps = float(params["eps"])
    rho_hat = float(params.get("rho_hat", default_rho_hat(problem)))

    def convex_multiplier() -> float:
        return lambda_bound_convex(c.M, _required(c.D, "D"), rho_hat, _required(c.g_feas_value, "g_feas"))

    if kind is PolicyKind.STATIC_CONVEX:
        policy = schedule_convex_static(eps, c.M, _required(c.D, "D"), c.rho, rho_hat, convex_multiplier())
    elif kind is PolicyKind.DIMINISHING_CONVEX:
        policy = schedule_convex_diminishing(eps, c.M, _required(c.D, "D"), c.rho, rho_hat, convex_multiplier())
    elif kind in (PolicyKind.STRONGLY_CONVEX_STATIC, PolicyKind.STRONGLY_CONVEX_DIMINISHING):
        variant = "static" if kind is PolicyKind.STRONGLY_CONVEX_STATIC else "diminishing"
        policy = schedule_strongly_convex(eps, c.M, _required(c.D, "D"), c.rho, rho_hat,
                                          float(params.get("mu", _required(c.mu, "mu"))), variant=variant)
    elif kind is PolicyKind.WEAKLY_CONVEX_SWITCHING:
        policy = schedule_weakly_convex(eps, c.M, c.rho, float(params.get("nu", _required(c.nu, "nu"))), T=T)
    elif kind is PolicyKind.BOUNDED_S_CONVEX_SWITCHING:
        policy = schedule_bounded_S_convex(eps, c.M, nu_prime(_required(c.g_feas_value, "g_feas"),
                                                              _required(c.D, "D")), T=T)
    else:
        case = "I" if kind is PolicyKind.STOCHASTIC_STATIC else "II"
        policy = schedule_stochastic(eps, c.M, _required(c.D, "D"), c.rho, rho_hat, convex_multiplier(),
                                     delta=float(params.get("delta", 0.1)), sigma=float(c.sigma or 0.0),
                                     variant=str(params.get("variant", "semi")), case=case, E=params.get("E"))
    if policy.T != T:
        logger.info("%s: theory horizon %d replaced by configured T=%d", kind.value, policy.T, T)
        policy = policy.with_horizon(T)
    return policy


# ============================================================================
# 3. GRID CELLS
# ============================================================================

@dataclass(frozen=True)
class Cell:
    index: int
    solver: SolverConfig
    params: Dict[str, object]
    seed: int

    @property
    def run_id(self) -> str:
        return f"{self.solver.label}__c{self.index}__s{self.seed}"

    @property
    def params_json(self) -> str:
        return json.dumps(self.params, sort_keys=True)


def expand_grid(grid: Dict[str, object]) -> List[Dict[str, object]]:
    """Cartesian product over list-valued entries; scalars are shared by every cell."""
    keys = sorted(grid)
    axes = [grid[k] if isinstance(grid[k], list) else [grid[k]] for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*axes)]


def expand_cells(config: ExperimentConfig) -> List[Cell]:
    cells = []
    index = 0
    for solver in config.solvers:
        grid = dict(solver.policy)
        if solver.is_ipp:
            grid["rho_hat_mult"] = list(solver.rho_hat_mult)
        if solver.method == "ipp-conex":
            grid["c1"] = list(solver.conex["c1"])
            grid["c2"] = list(solver.conex["c2"])
        for params in expand_grid(grid):
            for seed in config.seeds:
                cells.append(Cell(index, solver, params, seed))
            index += 1
    return cells


# ============================================================================
# 4. RUNS AND METRICS
# ============================================================================

@dataclass(frozen=True)
class MetricsRow:
    run_id: str
    seed: int
    iteration: int
    wall_clock_s: float
    objective: float
    infeasibility: float
    near_stationarity: Optional[float] = None


@dataclass
class RunResult:
    cell: Cell
    status: str
    error: str = ""
    metrics: Optional[pd.DataFrame] = None
    final_objective: float = math.nan
    final_infeasibility: float = math.nan

    @property
    def run_id(self) -> str:
        return self.cell.run_id


def stationarity_iterations(T: int, checkpoints: int, count: int) -> List[int]:
    """`count` equally spaced entries of the checkpoint list (k+1)*every - 1."""
    every = max(T // checkpoints, 1)
    base = [(k + 1) * every - 1 for k in range(checkpoints)]
    picks = np.unique(np.round(np.linspace(0, len(base) - 1, count)).astype(int))
    return [base[i] for i in picks]


def solve_cell(config: ExperimentConfig, built: BuiltProblem, cell: Cell, rng: RngStream) -> SolverTrace:
    problem = built.problem
    solver = cell.solver
    every = config.checkpoint_every

    if solver.method == "ssg":
        return ssg_run(problem, build_policy(cell.params, problem, config.T), built.x0, rng, checkpoint_every=every)
    if solver.method == "sssg":
        return sssg_run(problem, build_policy(cell.params, problem, config.T), built.x0, rng,
                        batch_size=solver.batch_size, checkpoint_every=every)

    if config.T % solver.inner_iters:
        raise ConfigError(f"T={config.T} is not a multiple of inner_iters={solver.inner_iters}")
    rho_hat = max(problem.constants.rho, 1.0) * float(cell.params["rho_hat_mult"])
    rho_tilde = solver.rho_tilde if solver.rho_tilde is not None else default_rho_tilde(problem, rho_hat)
    policy_params = {k: v for k, v in cell.params.items() if k not in ("rho_hat_mult", "c1", "c2")}
    inner_solver = None
    if solver.method == "ipp-conex":
        inner_solver = ConExInnerSolver(float(cell.params["c1"]), float(cell.params["c2"]))
    prox = build_prox_subproblem(problem, built.x0, rho_hat, rho_tilde)
    inner_policy = build_policy(policy_params, prox, solver.inner_iters)
    return ipp_run(problem, config.T // solver.inner_iters, inner_policy, solver.inner_iters, rho_hat, rho_tilde,
                   built.x0, rng, center_rule=solver.center_rule, checkpoint_every=every,
                   inner_solver=inner_solver)


def metrics_frame(config: ExperimentConfig, problem: ProblemInstance, trace: SolverTrace, cell: Cell,
                  rng: RngStream) -> pd.DataFrame:
    measured = set()
    settings = config.stationarity
    if settings.enabled:
        measured = set(stationarity_iterations(config.T, config.checkpoints, settings.count))

    rows = []
    for t in sorted(trace.checkpoints):
        x = trace.checkpoints[t]
        stationarity = None
        if t in measured:
            try:
                report = near_stationarity(problem, x, rho_hat=settings.rho_hat, rho_tilde=settings.rho_tilde,
                                           inner_iters=settings.inner_iters, rng=rng.child(t))
                stationarity = report.distance
            except NoFeasibleIterateError as err:
                logger.warning("%s: near-stationarity at t=%d unavailable: %s", cell.run_id, t, err)
        rows.append(MetricsRow(
            run_id=cell.run_id,
            seed=cell.seed,
            iteration=t,
            wall_clock_s=trace.checkpoint_times.get(t, math.nan),
            objective=trace.f_values[t],
            infeasibility=max(eval_constraint(problem, x).value, 0.0),
            near_stationarity=stationarity,
        ))
    return pd.DataFrame([asdict(row) for row in rows], columns=CSV_COLUMNS)


def execute_cell(config: ExperimentConfig, built: BuiltProblem, cell: Cell) -> RunResult:
    """Run one cell; any failure is captured in the result instead of raised."""
    stream = RngStream(cell.seed).child(cell.index)
    logger.info("Cell %s: %s %s", cell.run_id, cell.solver.method, cell.params_json)
    try:
        trace = solve_cell(config, built, cell, stream.child(0))
        frame = metrics_frame(config, built.problem, trace, cell, stream.child(1))
    except Exception as err:
        logger.warning("Cell %s failed: %s: %s", cell.run_id, type(err).__name__, err)
        return RunResult(cell, status="failed", error=f"{type(err).__name__}: {err}")
    last = frame.iloc[-1]
    return RunResult(cell, status="ok", metrics=frame, final_objective=float(last["objective"]),
                     final_infeasibility=float(last["infeasibility"]))


def write_metrics(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, na_rep="")
    return path


def summarize(results: Sequence[RunResult]) -> pd.DataFrame:
    """One row per run; winner = smallest seed-averaged final objective per label."""
    records = [{
        "run_id": r.run_id,
        "label": r.cell.solver.label,
        "method": r.cell.solver.method,
        "seed": r.cell.seed,
        "params": r.cell.params_json,
        "status": r.status,
        "error": r.error,
        "final_objective": r.final_objective,
        "final_infeasibility": r.final_infeasibility,
        "winner": False,
    } for r in results]
    summary = pd.DataFrame(records, columns=SUMMARY_COLUMNS)
    ok = summary[summary["status"] == "ok"]
    if not ok.empty:
        means = ok.groupby(["label", "params"], sort=True)["final_objective"].mean().reset_index()
        best = means.loc[means.groupby("label")["final_objective"].idxmin()]
        for _, row in best.iterrows():
            chosen = (summary["label"] == row["label"]) & (summary["params"] == row["params"])
            summary.loc[chosen, "winner"] = True
    return summary


@dataclass
class ExperimentResult:
    output_dir: Path
    run_paths: List[Path]
    summary_path: Path
    summary: pd.DataFrame


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    built = build_problem(config.problem, config.seed)
    cells = expand_cells(config)
    logger.info("Experiment %s: %d runs on %s with %d thread(s)", config.name, len(cells),
                built.problem.name, threads)

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        results = list(pool.map(lambda cell: execute_cell(config, built, cell), cells))

    run_paths = [write_metrics(r.metrics, out / f"{r.run_id}.csv") for r in results if r.metrics is not None]
    summary = summarize(results)
    summary_path = out / "summary.csv"
    summary.to_csv(summary_path, index=False)
    failed = int((summary["status"] != "ok").sum())
    logger.info("Experiment %s done: %d ok, %d failed", config.name, len(results) - failed, failed)
    return ExperimentResult(out, run_paths, summary_path, summary)


# ============================================================================
# 5. PLOTS
# ============================================================================

def read_metrics_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Load a run CSV, enforcing the exact column set and increasing iterations."""
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError as err:
        raise SchemaError(CSV_COLUMNS[0], f"{path} is empty") from err
    for column in CSV_COLUMNS:
        if column not in frame.columns:
            raise SchemaError(column, f"missing from {path}")
    for column in frame.columns:
        if column not in CSV_COLUMNS:
            raise SchemaError(column, f"unexpected in {path}")
    if frame.empty:
        raise SchemaError("iteration", f"{path} has no rows")
    if not frame["iteration"].is_monotonic_increasing or frame["iteration"].duplicated().any():
        raise SchemaError("iteration", f"not strictly increasing in {path}")
    return frame


def plot_metric(frames: Sequence[pd.DataFrame], metric: str, x_axis: str = "iteration",
                log_y: bool = False):
    """One curve per run, labelled by the solver label in its run_id."""
    if x_axis not in X_AXES:
        raise ConfigError(f"Unknown x-axis '{x_axis}' (expected one of {sorted(X_AXES)})")
    x_column = X_AXES[x_axis]
    fig, ax = plt.subplots(figsize=(6, 4))
    for frame in frames:
        data = frame[[x_column, metric]].dropna()
        if data.empty:
            continue
        label = str(frame["run_id"].iloc[0]).split("__")[0]
        ax.plot(data[x_column], data[metric], label=label, linewidth=1.2)
    ax.set_xlabel("CPU time (s)" if x_column == "wall_clock_s" else "iteration")
    ax.set_ylabel(metric.replace("_", " "))
    if log_y:
        ax.set_yscale("symlog", linthresh=1e-8)
    if ax.get_lines():
        ax.legend(fontsize="small")
    fig.tight_layout()
    return fig


def emit_plots(csv_paths: Sequence[Union[str, Path]], out_dir: Union[str, Path], dataset: str = "experiment",
               x_axis: str = "iteration", log_y: bool = False) -> List[Path]:
    """One SVG per metric that has data in at least one run."""
    if not csv_paths:
        raise SchemaError(CSV_COLUMNS[0], "no CSV files given")
    frames = [read_metrics_csv(p) for p in csv_paths]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suffix = "" if x_axis == "iteration" else "_cputime"
    written = []
    for metric in METRICS:
        if all(frame[metric].isna().all() for frame in frames):
            continue
        fig = plot_metric(frames, metric, x_axis=x_axis, log_y=log_y)
        path = out / f"{dataset}_{metric}{suffix}.svg"
        fig.savefig(path, format="svg")
        plt.close(fig)
        written.append(path)
    return written


# ============================================================================
# 6. SELF TEST
# ============================================================================

def _normal_sampler(d: int, scale: float = 1.0):
    return lambda rng: scale * rng.standard_normal(d)


def _uniform_sampler(d: int, low: float, high: float):
    return lambda rng: rng.uniform(low, high, d)


def _hinge_kink_distance(data: LinearClassifierData):
    signed = sparse.csr_matrix(sparse.diags(data.labels) @ data.features)
    norms = np.maximum(np.sqrt(np.asarray(signed.multiply(signed).sum(axis=1)).ravel()), 1e-12)
    return lambda x: float(np.min(np.abs(1.0 - signed @ x) / norms))


def _gap_kink_distance(data: LinearClassifierData, thresholds: np.ndarray):
    """Value-space margin to a sign flip or an argmax tie, scaled by the Lipschitz constant."""
    alpha, _ = lipschitz_constants(data)

    def distance(x):
        gaps = np.sort(np.abs(sigmoid_gaps(data, thresholds, x)))[::-1]
        tie = gaps[0] - gaps[1] if gaps.size > 1 else math.inf
        return min(gaps[0], tie) / (2.0 * alpha + 1e-12)

    return distance


def _scad_kink_distance(x):
    a = np.abs(x)
    return float(np.min(np.minimum(np.minimum(a, np.abs(a - 1.0)), np.abs(a - 2.0))))


def run_selftest(seed: int = 0, points: int = 1000, pairs: int = 10_000) -> List[PropertyCheck]:
    """Property suites over every shipped oracle and projection."""
    rng = RngStream(seed)
    raw = synthetic_classifier_data(n=240, d=6, seed=seed)
    data = split_dataset(raw, 0, GroupRule("==", (1.0,)), seed=seed).classifier_data()
    d = data.dimension
    grid = theta_grid(data, np.full(d, 0.5), size=40)
    dp_gap = dp_oracle(data)
    _, beta = lipschitz_constants(data)
    a = np.array([2.0, -1.0, 0.5])
    scad_penalty = scad_oracle(d)

    checks = [
        check_subgradients(hinge_erm_oracle(data), _normal_sampler(d), rng.child(0), points=points,
                           kink_distance=_hinge_kink_distance(data)),
        check_subgradients(roc_fairness_oracle(data, grid), _normal_sampler(d), rng.child(1), points=points,
                           kink_distance=_gap_kink_distance(data, grid.thresholds)),
        check_subgradients(dp_gap, _normal_sampler(d), rng.child(2), points=points,
                           kink_distance=_gap_kink_distance(data, np.zeros(1))),
        check_subgradients(scad_penalty, _uniform_sampler(d, -3.0, 3.0), rng.child(3), points=points,
                           kink_distance=_scad_kink_distance),
        check_subgradients(l1_oracle(a), _uniform_sampler(3, -3.0, 3.0), rng.child(4), points=points,
                           kink_distance=lambda x: float(np.min(np.abs(x - a)))),
        check_weak_convexity(lambda z: scad(z).value, 2.0, _uniform_sampler(d, -3.0, 3.0), rng.child(5),
                             pairs=pairs, name="weak convexity[scad]"),
        check_weak_convexity(dp_gap.value, beta, _normal_sampler(d, 2.0), rng.child(6), pairs=pairs,
                             name="weak convexity[demographic_parity]"),
        check_subgradient_bound(scad_penalty, _uniform_sampler(d, -3.0, 3.0), rng.child(7), points=points),
        check_projection(Ball(3.0), _normal_sampler(3, 3.0), rng.child(8), pairs=pairs, name="projection[ball]"),
        check_projection(Box(-4.0, 4.0), _uniform_sampler(2, -8.0, 8.0), rng.child(9), pairs=pairs,
                         name="projection[box]"),
    ]
    return checks
