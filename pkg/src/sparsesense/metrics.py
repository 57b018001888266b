"""Squared-error metric and the two CRLB reference curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sparsesense.errors import ShapeError, SingularParametersError

SNR_CONVENTIONS = ("power10", "amplitude20")

_SINGULAR_TOL = 1e-12


def mse(truth, estimate) -> float:
    """Per-trial squared error ||truth - estimate||^2 (the harness averages it)."""
    a = np.asarray(truth, dtype=float)
    b = np.asarray(estimate, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d)


def crlb_nss(k: int, n_dim: int, noise_variance: float) -> float:
    """Bound for batch recovery with interference removed: K * sigma_n^2 / N."""
    if n_dim < 1:
        raise ValueError("n_dim must be >= 1")
    return k * noise_variance / n_dim


@dataclass(frozen=True)
class CrlbInputs:
    k: int
    n_dim: int
    noise_variance: float
    mu_iss: float
    coeff_variance: float
    rho: float

    def __post_init__(self):
        for name in ("k", "n_dim", "noise_variance", "mu_iss", "coeff_variance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")


def crlb_ass(inputs: CrlbInputs) -> float:
    """Reference bound for the adaptive estimator, evaluated term by term as printed.

    ``5 mu sn^4 / (9 mu sn^2 s2 - 2 s2) - rho^2 N K / (27 mu sn^4 - 6 mu sn^2)``
    where sn^2 is the noise variance and s2 the per-nonzero coefficient
    variance. Used only as a plotted curve; nothing checks it against
    simulated MSE.
    """
    mu = inputs.mu_iss
    sn2 = inputs.noise_variance
    sn4 = sn2 * sn2
    s2 = inputs.coeff_variance
    first_den = 9.0 * mu * sn2 * s2 - 2.0 * s2
    second_den = 27.0 * mu * sn4 - 6.0 * mu * sn2
    if abs(first_den) < _SINGULAR_TOL or abs(second_den) < _SINGULAR_TOL:
        raise SingularParametersError(
            f"denominator vanishes (first={first_den!r}, second={second_den!r})"
        )
    first = 5.0 * mu * sn4 / first_den
    second = inputs.rho**2 * inputs.n_dim * inputs.k / second_den
    return first - second


def snr_to_noise_variance(snr_db: float, convention: str = "power10") -> float:
    """Noise variance for unit signal power.

    ``power10`` is the usual 10*log10 power ratio; ``amplitude20`` reproduces the
    20*log(Es / sigma_n^2) definition literally.
    """
    if convention == "power10":
        return 10.0 ** (-snr_db / 10.0)
    if convention == "amplitude20":
        return 10.0 ** (-snr_db / 20.0)
    raise ValueError(f"unknown SNR convention {convention!r}; expected one of {SNR_CONVENTIONS}")
