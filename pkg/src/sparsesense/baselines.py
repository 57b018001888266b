"""Batch sparse recovery: OMP, BPDN by proximal gradient, and an exhaustive l0 oracle."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from sparsesense.errors import DivergenceError, InstanceTooLargeError, RankError, ShapeError

SOLVER_IDS = ("ass_rza_nlmf", "nss_omp", "nss_bpdn", "oracle_exhaustive")

DEFAULT_ENUMERATION_CAP = 100_000


@dataclass
class RecoveryResult:
    """Final estimate of any solver.

    ``objective_value`` is set only by solvers minimizing an explicit
    objective (BPDN), which also keep the per-iteration ``objective_trace``.
    """

    estimate: np.ndarray
    solver_id: str
    iterations_used: int
    converged: bool
    objective_value: float | None = None
    objective_trace: list[float] | None = None

    def residual_norm(self, X, y) -> float:
        return float(np.linalg.norm(np.asarray(y) - np.asarray(X) @ self.estimate))


@dataclass(frozen=True)
class BpdnConfig:
    """``lam=None`` lets the caller pick a data-dependent value (the harness
    uses ``sigma_n * sqrt(2 ln N)``)."""

    lam: float | None = None
    max_iterations: int = 20_000
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.lam is not None and not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError("lam must be finite and >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")


def _check_problem(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"matrix {X.shape} and observations {y.shape} disagree")
    return X, y


def _qr_least_squares(A, y, iteration=None):
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    if diag.size and diag.min() <= 1e-12 * max(diag.max(), 1.0):
        raise RankError(f"selected columns are rank deficient at iteration {iteration}",
                        iteration)
    return solve_triangular(R, Q.T @ y)


def omp(X, y, k: int, residual_tol: float = 0.0) -> RecoveryResult:
    """Orthogonal matching pursuit.

    Greedily adds the column most correlated with the residual (inner
    product with the unit-normalized column), refits by least squares on the
    selected set, and stops after ``k`` selections or once the residual norm
    is at most ``residual_tol``.
    """
    X, y = _check_problem(X, y)
    m, n = X.shape
    if not 1 <= k <= m:
        raise ValueError(f"k={k} must lie in [1, M={m}]")
    if residual_tol < 0:
        raise ValueError("residual_tol must be >= 0")

    col_norms = np.linalg.norm(X, axis=0)
    selected: list[int] = []
    available = col_norms > 0
    residual = y.copy()
    coef = np.zeros(0)
    while len(selected) < k and np.linalg.norm(residual) > residual_tol:
        corr = np.full(n, -np.inf)
        corr[available] = np.abs(X[:, available].T @ residual) / col_norms[available]
        if not np.isfinite(corr).any():
            break
        j = int(np.argmax(corr))
        selected.append(j)
        available[j] = False
        coef = _qr_least_squares(X[:, selected], y, iteration=len(selected))
        residual = y - X[:, selected] @ coef

    estimate = np.zeros(n)
    estimate[selected] = coef
    return RecoveryResult(estimate, "nss_omp", len(selected), True)


def bpdn_objective(X, y, h, lam: float) -> float:
    r = y - X @ h
    return 0.5 * float(r @ r) + lam * float(np.abs(h).sum())


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def lipschitz_constant(X, iterations: int = 500, tol: float = 1e-12) -> float:
    """Largest eigenvalue of X^T X by power iteration (deterministic start)."""
    n = X.shape[1]
    v = np.ones(n) / math.sqrt(n)
    L = 0.0
    for _ in range(iterations):
        w = X.T @ (X @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(norm - L) <= tol * norm:
            L = norm
            break
        L = norm
    return float(L)


def bpdn_shrinkage(X, y, cfg: BpdnConfig) -> RecoveryResult:
    """Minimize ``0.5 ||y - X h||^2 + lam ||h||_1`` by iterative shrinkage.

    Each step is a gradient step of size 1/L on the quadratic followed by
    soft-thresholding at lam/L. If a step would raise the objective (L was
    underestimated by the power iteration), L is doubled and the step
    retried, so the recorded objective sequence never increases.
    """
    X, y = _check_problem(X, y)
    if cfg.lam is None:
        raise ValueError("BpdnConfig.lam must be set")
    lam = cfg.lam
    n = X.shape[1]
    h = np.zeros(n)
    obj = bpdn_objective(X, y, h, lam)
    trace = [obj]
    L = lipschitz_constant(X)
    if L == 0.0:
        return RecoveryResult(h, "nss_bpdn", 0, True, obj, trace)
    L *= 1.0 + 1e-9

    Xty = X.T @ y
    gram = X.T @ X
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        grad = gram @ h - Xty
        for _ in range(60):
            candidate = soft_threshold(h - grad / L, lam / L)
            new_obj = bpdn_objective(X, y, candidate, lam)
            if not math.isfinite(new_obj):
                raise DivergenceError(f"non-finite objective at iteration {it}", it)
            if new_obj <= obj:
                break
            L *= 2.0
        else:
            raise DivergenceError(f"could not find a descent step at iteration {it}", it)
        decrease = obj - new_obj
        h, obj = candidate, new_obj
        trace.append(obj)
        if decrease <= cfg.tolerance * max(abs(obj), np.finfo(float).tiny):
            converged = True
            break
    return RecoveryResult(h, "nss_bpdn", it, converged, obj, trace)


def oracle_exhaustive(X, y, k: int, cap: int = DEFAULT_ENUMERATION_CAP) -> RecoveryResult:
    """Best k-term least-squares fit found by trying every support of size k."""
    X, y = _check_problem(X, y)
    m, n = X.shape
    if not 0 <= k <= n:
        raise ValueError(f"k={k} must lie in [0, N={n}]")
    if k == 0:
        return RecoveryResult(np.zeros(n), "oracle_exhaustive", 0, True)
    count = math.comb(n, k)
    if count > cap:
        raise InstanceTooLargeError(f"C({n}, {k}) = {count} supports exceeds cap {cap}")

    supports = np.array(list(itertools.combinations(range(n), k)), dtype=np.intp)
    yy = float(y @ y)
    best_res = math.inf
    best = None
    for start in range(0, len(supports), 4096):
        chunk = supports[start : start + 4096]
        A = X[:, chunk].transpose(1, 0, 2)  # (chunk, M, k)
        Q, R = np.linalg.qr(A)
        proj = np.einsum("cmk,m->ck", Q, y)
        res = yy - np.einsum("ck,ck->c", proj, proj)
        diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
        res[diag.min(axis=1) <= 1e-12 * np.maximum(diag.max(axis=1), 1.0)] = math.inf
        i = int(np.argmin(res))
        if res[i] < best_res:
            best_res, best = res[i], chunk[i]
    if best is None:
        # every support is rank deficient; fall back to the first
        best = supports[0]
    coef, *_ = np.linalg.lstsq(X[:, best], y, rcond=None)
    estimate = np.zeros(n)
    estimate[best] = coef
    return RecoveryResult(estimate, "oracle_exhaustive", count, True)
