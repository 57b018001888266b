"""RZA-NLMF adaptive sparse sensing.

The estimator cycles through the rows of the sensing matrix, one per
iteration, and applies a normalized least-mean-fourth update with an
error-dependent step size plus a reweighted zero attractor:

    h <- h + mu_ass(n) e x / ||x||^2 - rho sgn(h) / (1 + eps |h|)
    mu_ass(n) = mu_iss e^2 / (||x||^2 + e^2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from sparsesense.errors import DegenerateSampleError, DivergenceError, ShapeError
from sparsesense.metrics import mse

RHO_CONVENTIONS = ("gradient", "inverse")
STOP_CHECKS = ("cycle", "iteration")

# |e| above this aborts the run; fourth-order recursions overflow quickly past it
DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class RzaNlmfConfig:
    """Hyperparameters of the adaptive estimator.

    ``rho_convention="gradient"`` uses ``rho = mu_iss * lambda_ass * epsilon``,
    which is what differentiating the log-sum penalty gives. ``"inverse"``
    uses ``mu_iss * lambda_ass / epsilon`` for side-by-side comparison runs.
    ``n_max=None`` means ``20 * M * ceil(N / M)`` once the problem size is known.

    ``stop_check="cycle"`` declares convergence only after a full pass over
    the M rows in which every update norm stayed below ``zeta``;
    ``"iteration"`` stops at the first update below ``zeta``, which a single
    small-error row can trigger long before the estimate settles.
    """

    mu_iss: float = 1.5
    lambda_ass: float = 5e-8
    epsilon: float = 2000.0
    zeta: float = 1e-6
    n_max: int | None = None
    rho_convention: str = "gradient"
    stop_check: str = "cycle"

    def __post_init__(self):
        if not self.mu_iss > 0:
            raise ValueError("mu_iss must be > 0")
        if not self.lambda_ass >= 0:
            raise ValueError("lambda_ass must be >= 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.zeta > 0:
            raise ValueError("zeta must be > 0")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be a positive integer")
        if self.rho_convention not in RHO_CONVENTIONS:
            raise ValueError(f"rho_convention must be one of {RHO_CONVENTIONS}")
        if self.stop_check not in STOP_CHECKS:
            raise ValueError(f"stop_check must be one of {STOP_CHECKS}")
        if not math.isfinite(self.rho):
            raise ValueError("attractor gain rho is not finite")

    @property
    def rho(self) -> float:
        if self.rho_convention == "inverse":
            return self.mu_iss * self.lambda_ass / self.epsilon
        return self.mu_iss * self.lambda_ass * self.epsilon

    def resolved_n_max(self, m: int, n: int) -> int:
        if self.n_max is not None:
            return self.n_max
        return 20 * m * math.ceil(n / m)


@dataclass
class EstimatorState:
    estimate: np.ndarray
    iteration: int = 0
    last_delta_norm: float = math.inf
    converged: bool = False
    skipped: bool = False

    @classmethod
    def zeros(cls, n: int) -> "EstimatorState":
        return cls(np.zeros(n))


@dataclass
class IterationTrace:
    per_iteration_error: list[float] = field(default_factory=list)
    per_iteration_mse: list[float] | None = None
    final_iteration: int = 0


def select_row(n: int, m_total: int) -> int:
    """1-based row used at iteration n: ``mod(n, M) + 1``."""
    if m_total < 1 or n < 1:
        raise ValueError("n and m_total must be >= 1")
    return n % m_total + 1


def iteration_error(x_m, y_m: float, estimate) -> float:
    x = np.asarray(x_m, dtype=float)
    h = np.asarray(estimate, dtype=float)
    if x.shape != h.shape:
        raise ShapeError(f"row has shape {x.shape}, estimate has shape {h.shape}")
    return float(y_m - x @ h)


def variable_step_size(mu_iss: float, x_m, e: float) -> float:
    """``mu_iss e^2 / (||x||^2 + e^2)``; small errors give small steps."""
    x = np.asarray(x_m, dtype=float)
    return _step_size(mu_iss, float(x @ x), e)


def _step_size(mu_iss: float, x_norm2: float, e: float) -> float:
    e2 = e * e
    den = x_norm2 + e2
    if den == 0.0:
        raise DegenerateSampleError("zero input row with zero error")
    return mu_iss * (e2 / den)


def zero_attractor(estimate, rho: float, epsilon: float) -> np.ndarray:
    """Elementwise ``rho sgn(h) / (1 + eps |h|)``; exact zeros stay at zero."""
    h = np.asarray(estimate, dtype=float)
    return rho * np.sign(h) / (1.0 + epsilon * np.abs(h))


def _update(h: np.ndarray, x: np.ndarray, x_norm2: float, e: float, mu_iss: float,
            rho: float, epsilon: float) -> np.ndarray:
    step = _step_size(mu_iss, x_norm2, e)
    new = h + (step * e / x_norm2) * x
    if rho != 0.0:
        new -= rho * np.sign(h) / (1.0 + epsilon * np.abs(h))
    return new


def rza_nlmf_step(state: EstimatorState, x_m, y_m: float, cfg: RzaNlmfConfig) -> EstimatorState:
    """One RZA-NLMF iteration. Returns a new state; the input is not modified.

    An all-zero row is skipped: the iteration counter advances and the
    estimate is untouched.
    """
    x = np.asarray(x_m, dtype=float)
    h = state.estimate
    if x.shape != h.shape:
        raise ShapeError(f"row has shape {x.shape}, estimate has shape {h.shape}")
    iteration = state.iteration + 1
    x_norm2 = float(x @ x)
    if x_norm2 == 0.0:
        return replace(state, iteration=iteration, last_delta_norm=0.0, skipped=True)

    e = float(y_m - x @ h)
    _check_error(e, iteration)
    new = _update(h, x, x_norm2, e, cfg.mu_iss, cfg.rho, cfg.epsilon)
    delta = float(np.linalg.norm(new - h))
    if not math.isfinite(delta):
        raise DivergenceError(f"non-finite update at iteration {iteration}", iteration)
    return EstimatorState(new, iteration, delta, delta < cfg.zeta, False)


def _check_error(e: float, iteration: int) -> None:
    if not math.isfinite(e) or abs(e) > DIVERGENCE_LIMIT:
        raise DivergenceError(f"error {e!r} at iteration {iteration} exceeds divergence limit",
                              iteration)


def run_ass(ensemble, cfg: RzaNlmfConfig, truth=None):
    """Run the adaptive estimator from a zero start until the update norm
    stays below ``zeta`` (see ``RzaNlmfConfig.stop_check``) or ``n_max``
    iterations have been taken.

    ``ensemble`` is a :class:`~sparsesense.model.SensingEnsemble` or an
    ``(X, y)`` pair. When ``truth`` (a SparseSignal or vector) is given the
    squared error is recorded after every iteration.

    Returns ``(RecoveryResult, IterationTrace)``.
    """
    from sparsesense.baselines import RecoveryResult

    X, y = _unpack(ensemble)
    m, n = X.shape
    if m == 0 or n == 0:
        raise ValueError("empty ensemble")
    h_true = None
    if truth is not None:
        h_true = np.asarray(getattr(truth, "coefficients", truth), dtype=float)
        if h_true.shape != (n,):
            raise ShapeError(f"truth has shape {h_true.shape}, expected ({n},)")

    n_max = cfg.resolved_n_max(m, n)
    mu, rho, eps, zeta = cfg.mu_iss, cfg.rho, cfg.epsilon, cfg.zeta
    row_norm2 = [float(r @ r) for r in X]  # same reduction as rza_nlmf_step
    trace = IterationTrace(per_iteration_mse=[] if h_true is not None else None)
    errors = trace.per_iteration_error
    quiet_needed = m if cfg.stop_check == "cycle" else 1
    quiet = 0  # consecutive iterations with update norm below zeta
    h = np.zeros(n)
    converged = False
    it = 0
    while it < n_max:
        it += 1
        row = it % m  # 0-based form of mod(n, M) + 1
        x = X[row]
        x_norm2 = row_norm2[row]
        if x_norm2 == 0.0:
            e = float(y[row])
            errors.append(e)
            if h_true is not None:
                trace.per_iteration_mse.append(mse(h_true, h))
            quiet += 1
            if quiet >= quiet_needed:
                converged = True
                break
            continue
        e = float(y[row] - x @ h)
        _check_error(e, it)
        new = _update(h, x, x_norm2, e, mu, rho, eps)
        delta = float(np.linalg.norm(new - h))
        if not math.isfinite(delta):
            raise DivergenceError(f"non-finite update at iteration {it}", it)
        h = new
        errors.append(e)
        if h_true is not None:
            d = h_true - h
            trace.per_iteration_mse.append(float(d @ d))
        quiet = quiet + 1 if delta < zeta else 0
        if quiet >= quiet_needed:
            converged = True
            break
    trace.final_iteration = it
    result = RecoveryResult(h, "ass_rza_nlmf", it, converged)
    return result, trace


def _unpack(ensemble):
    if hasattr(ensemble, "sensing_matrix"):
        X, y = ensemble.sensing_matrix, ensemble.observations
    else:
        X, y = ensemble
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"sensing matrix {X.shape} and observations {y.shape} disagree")
    return X, y
