"""Arrowhead covariance of one sampling group and its closed-form inverse.

The group covariance is ``sigma^2 * [[I_N, r], [r^T, 1]]`` with the sensor block
first and the FC entry last. It is positive definite iff the Schur complement
``d_fc = 1 - ||r||^2`` is positive, and its inverse is available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import (
    CorrelationKernel,
    KernelKind,
    Scenario,
    ScenarioError,
    check_times,
    eval_kernel,
    require_valid,
    validate_scenario,
)

__all__ = [
    "CorrelationKernel",
    "KernelKind",
    "CovarianceMatrix",
    "SingularCovarianceError",
    "build_covariance",
    "covariance_stack",
    "block_inverse",
    "eval_kernel",
    "validate_scenario",
    "ScenarioError",
]

SINGULARITY_TOL = 1e-12


class SingularCovarianceError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    matrix: np.ndarray
    r_fc: np.ndarray
    d_fc: float
    noise_variance: float

    @property
    def n_sensors(self) -> int:
        return int(self.r_fc.size)

    def is_positive_definite(self) -> bool:
        # Schur condition; exact for the arrowhead structure.
        return self.d_fc > 0.0


def arrowhead(r_fc: np.ndarray, noise_variance: float) -> np.ndarray:
    n = r_fc.size
    m = np.eye(n + 1)
    m[:n, n] = r_fc
    m[n, :n] = r_fc
    m *= noise_variance
    return m


def build_covariance(s: Scenario, times) -> CovarianceMatrix:
    require_valid(s)
    t = check_times(s, times)
    if t.ndim != 1:
        raise ScenarioError(["build_covariance takes a single sampling-time vector"])
    r = s.fc_correlations(t)
    r.setflags(write=False)
    d_fc = float(1.0 - r @ r)
    m = arrowhead(r, s.noise_variance)
    m.setflags(write=False)
    return CovarianceMatrix(matrix=m, r_fc=r, d_fc=d_fc, noise_variance=s.noise_variance)


def covariance_stack(s: Scenario, times) -> np.ndarray:
    """Covariance matrices for a batch of sampling-time vectors, shape ``(..., N+1, N+1)``."""
    require_valid(s)
    t = check_times(s, times)
    r = s.fc_correlations(t)
    n = s.n_sensors
    m = np.zeros(r.shape[:-1] + (n + 1, n + 1))
    idx = np.arange(n + 1)
    m[..., idx, idx] = 1.0
    m[..., :n, n] = r
    m[..., n, :n] = r
    m *= s.noise_variance
    return m


def block_inverse(c: CovarianceMatrix) -> np.ndarray:
    """Closed-form inverse of the arrowhead covariance (no dense factorisation)."""
    r, d = c.r_fc, c.d_fc
    if d <= SINGULARITY_TOL:
        raise SingularCovarianceError(f"Schur complement d_fc={d:.3g} is not positive")
    n = r.size
    inv = np.empty((n + 1, n + 1))
    inv[:n, :n] = np.outer(r, r) / d
    inv[:n, :n] += np.eye(n)
    inv[:n, n] = -r / d
    inv[n, :n] = -r / d
    inv[n, n] = 1.0 / d
    inv /= c.noise_variance
    return inv
