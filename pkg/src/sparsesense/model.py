"""Problem instances: K-sparse signals, Gaussian sensing matrices, noisy measurements."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sparsesense.errors import InstanceTooLargeError, InvalidSparsityError, ShapeError
from sparsesense.metrics import snr_to_noise_variance

DEFAULT_ENUMERATION_CAP = 100_000


@dataclass(frozen=True)
class SparseSignal:
    """A K-sparse coefficient vector.

    ``per_nonzero_variance`` is the variance the nonzeros were drawn from
    (1/K, so that the expected squared norm is one).
    """

    coefficients: np.ndarray
    support: tuple[int, ...]
    per_nonzero_variance: float

    @property
    def n(self) -> int:
        return self.coefficients.shape[0]

    @property
    def k(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class SensingEnsemble:
    measurement_matrix: np.ndarray
    dictionary: np.ndarray
    sensing_matrix: np.ndarray
    observations: np.ndarray
    noise_variance: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.sensing_matrix.shape


@dataclass(frozen=True)
class MasterSeed:
    """Identifies one trial's random stream.

    Streams are derived with ``SeedSequence(seed, spawn_key=(trial_index,))``,
    the same construction numpy uses for spawned children, so distinct trial
    indices give independent streams and no stream depends on how many other
    trials ran before it.
    """

    seed: int
    trial_index: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.trial_index < 0:
            raise ValueError("trial_index must be non-negative")

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.trial_index,))
        return np.random.Generator(np.random.PCG64(ss))


def generate_sparse_signal(n: int, k: int, rng: np.random.Generator) -> SparseSignal:
    """Draw a K-sparse vector of length n.

    The support is uniform without replacement and the nonzeros are i.i.d.
    N(0, 1/k). No per-draw renormalization is applied.
    """
    if n < 1:
        raise ShapeError(f"signal length must be >= 1, got {n}")
    if k < 0 or k > n:
        raise InvalidSparsityError(f"sparsity k={k} outside [0, {n}]")
    h = np.zeros(n)
    if k == 0:
        return SparseSignal(h, (), 0.0)
    variance = 1.0 / k
    support = np.sort(rng.choice(n, size=k, replace=False))
    values = rng.normal(0.0, math.sqrt(variance), size=k)
    # a Gaussian draw of exactly 0.0 would break the exact-K invariant
    while np.any(values == 0.0):
        zero = values == 0.0
        values[zero] = rng.normal(0.0, math.sqrt(variance), size=int(zero.sum()))
    h[support] = values
    return SparseSignal(h, tuple(int(i) for i in support), variance)


def generate_sensing_matrix(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """M x N matrix with i.i.d. standard normal entries (no 1/M scaling)."""
    if m < 1 or n < 1:
        raise ShapeError(f"invalid sensing matrix shape ({m}, {n})")
    X = rng.standard_normal((m, n))
    for i in range(m):
        while not np.any(X[i]):
            X[i] = rng.standard_normal(n)
    return X


def synthesize_measurements(
    X: np.ndarray,
    h: SparseSignal | np.ndarray,
    snr_db: float,
    rng: np.random.Generator,
    dictionary: np.ndarray | None = None,
    convention: str = "power10",
) -> SensingEnsemble:
    """Form ``y = X D h + z`` at the requested SNR (unit signal power).

    ``X`` is the measurement matrix. With no dictionary the sensing matrix is
    ``X`` itself. ``snr_db=inf`` disables the noise entirely.
    """
    W = np.asarray(X, dtype=float)
    coeffs = h.coefficients if isinstance(h, SparseSignal) else np.asarray(h, dtype=float)
    if W.ndim != 2:
        raise ShapeError("measurement matrix must be 2-D")
    m, n = W.shape
    if coeffs.shape != (n,):
        raise ShapeError(f"matrix has {n} columns but signal has shape {coeffs.shape}")
    if dictionary is None:
        D = np.eye(n)
        sensing = W
    else:
        D = np.asarray(dictionary, dtype=float)
        if D.shape != (n, n):
            raise ShapeError(f"dictionary must be {n}x{n}, got {D.shape}")
        sensing = W @ D

    clean = sensing @ coeffs
    if math.isinf(snr_db) and snr_db > 0:
        noise_variance = 0.0
        y = clean
    else:
        noise_variance = snr_to_noise_variance(snr_db, convention)
        y = clean + rng.normal(0.0, math.sqrt(noise_variance), size=m)
    return SensingEnsemble(W, D, sensing, y, noise_variance)


def rip_constant_bruteforce(
    X: np.ndarray,
    k: int,
    scale: float = 1.0,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Exact restricted isometry constant of order k by enumerating supports.

    ``scale`` multiplies X first (e.g. ``1/sqrt(M)`` for unit-variance
    Gaussian matrices). Only meant for tiny instances.
    """
    A = np.asarray(X, dtype=float) * scale
    m, n = A.shape
    if k < 0 or k > min(m, n):
        raise InvalidSparsityError(f"k={k} must lie in [0, min(M, N)={min(m, n)}]")
    if k == 0:
        return 0.0
    count = math.comb(n, k)
    if count > cap:
        raise InstanceTooLargeError(f"C({n}, {k}) = {count} supports exceeds cap {cap}")
    gram = A.T @ A
    delta = 0.0
    for support in itertools.combinations(range(n), k):
        idx = np.array(support)
        eig = np.linalg.eigvalsh(gram[np.ix_(idx, idx)])
        delta = max(delta, 1.0 - eig[0], eig[-1] - 1.0)
    return float(delta)


def write_matrix(path: str | Path, A: np.ndarray) -> None:
    """Plain-text dump: header ``M N`` then one space-separated row per line."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in A]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path: str | Path) -> np.ndarray:
    text = Path(path).read_text().split("\n")
    m, n = (int(t) for t in text[0].split())
    rows = [[float(t) for t in line.split()] for line in text[1 : 1 + m]]
    A = np.array(rows, dtype=float).reshape(m, n)
    return A
