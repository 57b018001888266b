"""Deterministic Monte Carlo experiments over (K, SNR, epsilon) grids."""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from sparsesense.adaptive import RzaNlmfConfig, run_ass
from sparsesense.baselines import (
    DEFAULT_ENUMERATION_CAP,
    SOLVER_IDS,
    BpdnConfig,
    bpdn_shrinkage,
    omp,
    oracle_exhaustive,
)
from sparsesense.errors import DivergenceError, RankError, SingularParametersError
from sparsesense.metrics import CrlbInputs, crlb_ass, crlb_nss, snr_to_noise_variance
from sparsesense.model import (
    MasterSeed,
    generate_sensing_matrix,
    generate_sparse_signal,
    synthesize_measurements,
)

CSV_COLUMNS = (
    "experiment_id", "solver_id", "k", "snr_db", "epsilon",
    "iteration", "avg_mse", "trials", "crlb_nss", "crlb_ass",
)

SUMMARY_ID = "summary"

# short names accepted on the command line and in config files
SOLVER_ALIASES = {
    "ass": "ass_rza_nlmf",
    "rza_nlmf": "ass_rza_nlmf",
    "omp": "nss_omp",
    "bpdn": "nss_bpdn",
    "oracle": "oracle_exhaustive",
}


def canonical_solver(name: str) -> str:
    name = SOLVER_ALIASES.get(name, name)
    if name not in SOLVER_IDS:
        raise ValueError(f"unknown solver {name!r}")
    return name


@dataclass(frozen=True)
class ExperimentSpec:
    """A Monte Carlo grid. Defaults are the reference setup (N=40, M=20)."""

    n_dim: int = 40
    m_dim: int = 20
    sparsity_levels: tuple[int, ...] = (2, 6, 10)
    snr_grid_db: tuple[float, ...] = (0.0, 3.0, 6.0, 9.0, 12.0)
    epsilon_grid: tuple[float, ...] = (2000.0,)
    solvers: tuple[str, ...] = ("ass_rza_nlmf", "nss_omp", "nss_bpdn")
    trials: int = 200
    master_seed: int = 0
    snr_convention: str = "power10"
    rho_convention: str = "gradient"
    no_noise: bool = False
    rza_config: RzaNlmfConfig = field(default_factory=RzaNlmfConfig)
    bpdn_config: BpdnConfig = field(default_factory=BpdnConfig)

    def __post_init__(self):
        object.__setattr__(self, "sparsity_levels", tuple(int(k) for k in self.sparsity_levels))
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, "epsilon_grid", tuple(float(e) for e in self.epsilon_grid))
        object.__setattr__(self, "solvers", tuple(canonical_solver(s) for s in self.solvers))
        if self.rza_config.rho_convention != self.rho_convention:
            object.__setattr__(self, "rza_config",
                               replace(self.rza_config, rho_convention=self.rho_convention))
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.n_dim < 1 or self.m_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.m_dim > self.n_dim:
            raise ValueError(f"m_dim={self.m_dim} exceeds n_dim={self.n_dim}")
        for name in ("sparsity_levels", "snr_grid_db", "epsilon_grid", "solvers"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        for k in self.sparsity_levels:
            if not 1 <= k <= self.m_dim:
                raise ValueError(f"sparsity {k} must lie in [1, m_dim={self.m_dim}]")
            if "oracle_exhaustive" in self.solvers and math.comb(self.n_dim, k) > DEFAULT_ENUMERATION_CAP:
                raise ValueError(f"oracle_exhaustive cannot enumerate C({self.n_dim}, {k}) supports")
        if any(e <= 0 for e in self.epsilon_grid):
            raise ValueError("epsilon values must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        snr_to_noise_variance(0.0, self.snr_convention)

    def grid(self) -> list["GridPoint"]:
        return [GridPoint(k, s, e) for k, s, e in
                itertools.product(self.sparsity_levels, self.snr_grid_db, self.epsilon_grid)]

    def noise_variance(self, snr_db: float) -> float:
        if self.no_noise:
            return 0.0
        return snr_to_noise_variance(snr_db, self.snr_convention)

    def ass_config(self, epsilon: float) -> RzaNlmfConfig:
        return replace(self.rza_config, epsilon=epsilon, rho_convention=self.rho_convention)

    def n_max(self) -> int:
        return self.rza_config.resolved_n_max(self.m_dim, self.n_dim)


@dataclass(frozen=True)
class GridPoint:
    k: int
    snr_db: float
    epsilon: float


@dataclass
class SolverOutcome:
    """Per-trial output of one solver.

    ``squared_errors`` is the full trajectory for the adaptive solver and a
    single final value for the batch solvers. ``None`` when the run diverged.
    """

    solver_id: str
    squared_errors: np.ndarray | None
    estimate: np.ndarray | None
    residual_norm: float
    diverged: bool = False
    objective_trace: list[float] | None = None
    bpdn_lambda: float | None = None


@dataclass
class TrialOutcome:
    trial_index: int
    point: GridPoint
    truth: np.ndarray
    results: dict[str, SolverOutcome]


def _instance(spec: ExperimentSpec, k: int, snr_db: float, trial_index: int):
    rng = MasterSeed(spec.master_seed, trial_index).rng()
    signal = generate_sparse_signal(spec.n_dim, k, rng)
    X = generate_sensing_matrix(spec.m_dim, spec.n_dim, rng)
    snr = math.inf if spec.no_noise else snr_db
    ensemble = synthesize_measurements(X, signal, snr, rng, convention=spec.snr_convention)
    return signal, ensemble


def _pad(trajectory: list[float], length: int) -> np.ndarray:
    # a converged run keeps its final estimate for the remaining iterations
    out = np.empty(length)
    t = len(trajectory)
    out[:t] = trajectory
    out[t:] = trajectory[-1] if t else np.nan
    return out


def _run_nss(solver: str, spec: ExperimentSpec, k: int, signal, ensemble) -> SolverOutcome:
    X, y = ensemble.sensing_matrix, ensemble.observations
    h = signal.coefficients
    lam = None
    trace = None
    try:
        if solver == "nss_omp":
            res = omp(X, y, k)
        elif solver == "oracle_exhaustive":
            res = oracle_exhaustive(X, y, k)
        else:
            cfg = spec.bpdn_config
            if cfg.lam is None:
                sigma = math.sqrt(ensemble.noise_variance)
                cfg = replace(cfg, lam=sigma * math.sqrt(2.0 * math.log(spec.n_dim)))
            lam = cfg.lam
            res = bpdn_shrinkage(X, y, cfg)
            trace = res.objective_trace
    except (DivergenceError, RankError):
        return SolverOutcome(solver, None, None, math.nan, True, bpdn_lambda=lam)
    d = h - res.estimate
    return SolverOutcome(solver, np.array([float(d @ d)]), res.estimate,
                         res.residual_norm(X, y), False, trace, lam)


def _run_ass(spec: ExperimentSpec, epsilon: float, signal, ensemble) -> SolverOutcome:
    cfg = spec.ass_config(epsilon)
    try:
        res, trace = run_ass(ensemble, cfg, truth=signal)
    except DivergenceError:
        return SolverOutcome("ass_rza_nlmf", None, None, math.nan, True)
    X, y = ensemble.sensing_matrix, ensemble.observations
    return SolverOutcome("ass_rza_nlmf", _pad(trace.per_iteration_mse, spec.n_max()),
                         res.estimate, res.residual_norm(X, y))


def _run_unit(spec: ExperimentSpec, k: int, snr_db: float, trial_index: int,
              epsilons: tuple[float, ...]) -> list[TrialOutcome]:
    """One problem instance, every requested solver, every epsilon.

    Batch solvers do not depend on epsilon, so they run once and are shared.
    """
    signal, ensemble = _instance(spec, k, snr_db, trial_index)
    shared = {s: _run_nss(s, spec, k, signal, ensemble)
              for s in spec.solvers if s != "ass_rza_nlmf"}
    outcomes = []
    for eps in epsilons:
        results = {}
        for s in spec.solvers:
            if s == "ass_rza_nlmf":
                results[s] = _run_ass(spec, eps, signal, ensemble)
            else:
                results[s] = shared[s]
        outcomes.append(TrialOutcome(trial_index, GridPoint(k, snr_db, eps),
                                     signal.coefficients, results))
    return outcomes


def run_trial(spec: ExperimentSpec, point: GridPoint, trial_index: int) -> TrialOutcome:
    """Run every solver in ``spec`` on the instance for ``(master_seed, trial_index)``.

    The instance depends only on the seed, the trial index, K and the SNR, so
    every solver (and every epsilon) sees the same signal, matrix and noise.
    """
    return _run_unit(spec, point.k, point.snr_db, trial_index, (point.epsilon,))[0]


@dataclass(frozen=True)
class ResultRow:
    experiment_id: str
    solver_id: str
    k: int
    snr_db: float
    epsilon: float
    iteration: int
    avg_mse: float
    trials: int
    crlb_nss: float
    crlb_ass: float


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)
    divergences: dict[str, int] = field(default_factory=dict)

    def sorted(self) -> "ResultTable":
        rows = sorted(self.rows, key=lambda r: (r.experiment_id, r.solver_id, r.iteration))
        return ResultTable(rows, dict(self.divergences))

    def select(self, **criteria) -> list[ResultRow]:
        return [r for r in self.rows
                if all(getattr(r, key) == value for key, value in criteria.items())]

    def curve(self, solver_id: str, k: int, snr_db: float, epsilon: float) -> np.ndarray:
        rows = [r for r in self.select(solver_id=solver_id, k=k, snr_db=snr_db, epsilon=epsilon)
                if r.experiment_id != SUMMARY_ID]
        rows.sort(key=lambda r: r.iteration)
        return np.array([r.avg_mse for r in rows])

    def steady_state(self, solver_id: str, k: int, snr_db: float, epsilon: float,
                     m_dim: int) -> float:
        """Adaptive solver: mean over the last M iterations. Batch solvers:
        their single final value."""
        return steady_state_mse(self.curve(solver_id, k, snr_db, epsilon), m_dim)


def steady_state_mse(curve, m_dim: int) -> float:
    curve = np.asarray(curve, dtype=float)
    if curve.size == 0:
        raise ValueError("empty curve")
    return float(curve[-m_dim:].mean())


def _crlbs(spec: ExperimentSpec, point: GridPoint) -> tuple[float, float]:
    sn2 = spec.noise_variance(point.snr_db)
    nss = crlb_nss(point.k, spec.n_dim, sn2)
    cfg = spec.ass_config(point.epsilon)
    try:
        ass = crlb_ass(CrlbInputs(point.k, spec.n_dim, sn2, cfg.mu_iss, 1.0 / point.k, cfg.rho))
    except (SingularParametersError, ValueError):
        ass = math.nan
    return nss, ass


def _unit_args(spec: ExperimentSpec):
    for k, snr in itertools.product(spec.sparsity_levels, spec.snr_grid_db):
        for t in range(spec.trials):
            yield k, snr, t


def _call_unit(args):
    spec, k, snr, t = args
    return _run_unit(spec, k, snr, t, spec.epsilon_grid)


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    """Run the whole grid and average squared errors over trials.

    Trials may be spread over ``workers`` processes; results are reduced in
    trial order so the table does not depend on the worker count. Diverged
    runs are left out of the averages and counted in ``divergences`` and in
    one ``summary`` row per solver.
    """
    spec.validate()
    jobs = [(spec, k, snr, t) for k, snr, t in _unit_args(spec)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(jobs) // (4 * workers))
            unit_results = list(pool.map(_call_unit, jobs, chunksize=chunk))
    else:
        unit_results = [_call_unit(j) for j in jobs]

    sums: dict[tuple[GridPoint, str], np.ndarray] = {}
    counts: dict[tuple[GridPoint, str], int] = {}
    divergences = {s: 0 for s in spec.solvers}
    for outcomes in unit_results:
        for outcome in outcomes:
            for s, res in outcome.results.items():
                key = (outcome.point, s)
                if res.diverged:
                    divergences[s] += 1
                    continue
                if key in sums:
                    sums[key] = sums[key] + res.squared_errors
                    counts[key] += 1
                else:
                    sums[key] = res.squared_errors.copy()
                    counts[key] = 1

    n_max = spec.n_max()
    rows = []
    for idx, point in enumerate(spec.grid()):
        exp_id = f"g{idx:04d}"
        c_nss, c_ass = _crlbs(spec, point)
        for s in spec.solvers:
            key = (point, s)
            if key in sums:
                avg = sums[key] / counts[key]
            else:
                avg = np.full(n_max if s == "ass_rza_nlmf" else 1, math.nan)
            iterations = range(1, len(avg) + 1) if s == "ass_rza_nlmf" else (0,)
            for it, value in zip(iterations, avg):
                rows.append(ResultRow(exp_id, s, point.k, point.snr_db, point.epsilon, it,
                                      float(value), spec.trials, c_nss, c_ass))
    total_units = spec.trials * len(spec.grid())
    for s in spec.solvers:
        rows.append(ResultRow(SUMMARY_ID, s, 0, math.nan, math.nan, 0,
                              float(divergences[s]), total_units, math.nan, math.nan))
    return ResultTable(rows, divergences).sorted()


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(table: ResultTable, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in table.rows:
        writer.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])


def emit_csv(table: ResultTable, path) -> None:
    """Write the table with the fixed header; reals carry 17 significant digits."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            write_csv(table, fh)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_csv(path) -> ResultTable:
    types = {f.name: f.type for f in fields(ResultRow)}
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected header in {path}: {reader.fieldnames}")
        for rec in reader:
            values = {}
            for name, raw in rec.items():
                kind = types[name]
                if kind == "str":
                    values[name] = raw
                elif kind == "int":
                    values[name] = int(raw)
                else:
                    values[name] = float(raw)
            rows.append(ResultRow(**values))
    return ResultTable(rows)
