"""Problem instances: correlation kernels, SPRT targets and the scenario container.

A scenario describes N sensors plus a fusion center (FC). Sensor ``j`` and the
FC observe jointly stationary Gaussian noise whose correlation is
``rho_j * f_j(|t_fc - t_j|)``; sensors are mutually uncorrelated. Everything
here is immutable once constructed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

# Scenarios with sum(rho^2) above this are rejected (keeps d_fc away from 0).
FEASIBILITY_MARGIN = 1e-9


class ScenarioError(ValueError):
    """Raised when a scenario (or sampling-time vector) fails validation."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class KernelKind(str, enum.Enum):
    EXPONENTIAL = "exponential"
    SQUARED_EXPONENTIAL = "squared_exponential"
    TABULATED = "custom_tabulated"


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CorrelationKernel:
    """Decreasing correlation shape ``f`` with ``f(0) = 1``.

    ``exponential`` is ``exp(-d / length_scale)`` and ``squared_exponential`` is
    ``exp(-(d / length_scale)**2)``. A tabulated kernel is linearly interpolated
    between ``(distances[i], values[i])`` knots; the first knot must be ``(0, 1)``.
    """

    kind: KernelKind
    length_scale: float = 1.0
    distances: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind is KernelKind.TABULATED:
            if self.distances is None or self.values is None:
                raise ValueError("tabulated kernel needs distances and values")
            object.__setattr__(self, "distances", _frozen(self.distances))
            object.__setattr__(self, "values", _frozen(self.values))
            if self.distances.shape != self.values.shape or self.distances.ndim != 1:
                raise ValueError("tabulated kernel distances/values must be 1-D and equal length")

    @classmethod
    def exponential(cls, length_scale: float = 1.0) -> "CorrelationKernel":
        return cls(KernelKind.EXPONENTIAL, length_scale)

    @classmethod
    def squared_exponential(cls, length_scale: float = 1.0) -> "CorrelationKernel":
        return cls(KernelKind.SQUARED_EXPONENTIAL, length_scale)

    @classmethod
    def tabulated(cls, distances, values) -> "CorrelationKernel":
        return cls(KernelKind.TABULATED, distances=distances, values=values)

    @property
    def support(self) -> float:
        """Largest distance at which the kernel is defined."""
        if self.kind is KernelKind.TABULATED:
            return float(self.distances[-1])
        return math.inf

    def violations(self) -> list[str]:
        out = []
        if self.kind is KernelKind.TABULATED:
            d, v = self.distances, self.values
            if d.size < 2:
                out.append("tabulated kernel needs at least two knots")
                return out
            if d[0] != 0.0 or v[0] != 1.0:
                out.append("tabulated kernel must start at (0, 1)")
            if np.any(np.diff(d) <= 0):
                out.append("tabulated kernel distances must be strictly increasing")
            if np.any(np.diff(v) >= 0):
                out.append("tabulated kernel values must be strictly decreasing")
            if np.any(v <= 0) or np.any(v > 1):
                out.append("tabulated kernel values must lie in (0, 1]")
        elif not (self.length_scale > 0 and math.isfinite(self.length_scale)):
            out.append(f"kernel length_scale must be positive, got {self.length_scale}")
        return out

    def __call__(self, distance):
        return eval_kernel(self, distance)

    def to_dict(self) -> dict:
        if self.kind is KernelKind.TABULATED:
            return {
                "kind": self.kind.value,
                "distances": self.distances.tolist(),
                "values": self.values.tolist(),
            }
        return {"kind": self.kind.value, "length_scale": self.length_scale}


def eval_kernel(kernel: CorrelationKernel, distance):
    """Evaluate ``f(distance)``; accepts scalars or arrays of nonnegative distances."""
    d = np.asarray(distance, dtype=float)
    if not np.all(d >= 0):
        raise ValueError("kernel distance must be nonnegative")
    if kernel.kind is KernelKind.EXPONENTIAL:
        out = np.exp(-d / kernel.length_scale)
    elif kernel.kind is KernelKind.SQUARED_EXPONENTIAL:
        out = np.exp(-np.square(d / kernel.length_scale))
    else:
        if np.any(d > kernel.distances[-1]):
            raise ValueError(
                f"distance beyond tabulated kernel support {kernel.distances[-1]}"
            )
        out = np.interp(d, kernel.distances, kernel.values)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SprtConfig:
    """Target detection probability ``p_d`` and false-alarm probability ``p_fa``."""

    p_d: float = 0.92
    p_fa: float = 0.1

    def violations(self) -> list[str]:
        if not (0.0 < self.p_fa < self.p_d < 1.0):
            return [f"SPRT targets need 0 < p_fa < p_d < 1, got p_fa={self.p_fa}, p_d={self.p_d}"]
        return []


@dataclass(frozen=True, eq=False)
class Scenario:
    signals: np.ndarray
    correlations: np.ndarray
    kernels: tuple[CorrelationKernel, ...]
    signal_fc: float = 0.5
    noise_variance: float = 1.0
    window: float = 1.0
    t_fc: float = 0.0
    sprt: SprtConfig = field(default_factory=SprtConfig)

    def __post_init__(self):
        object.__setattr__(self, "signals", _frozen(np.atleast_1d(self.signals)))
        object.__setattr__(self, "correlations", _frozen(np.atleast_1d(self.correlations)))
        kernels = self.kernels
        if isinstance(kernels, CorrelationKernel):
            kernels = (kernels,) * self.signals.size
        object.__setattr__(self, "kernels", tuple(kernels))
        n = self.signals.size
        if n < 1 or self.signals.ndim != 1:
            raise ValueError("need at least one sensor")
        if self.correlations.shape != (n,) or len(self.kernels) != n:
            raise ValueError(
                f"signals ({n}), correlations ({self.correlations.size}) and "
                f"kernels ({len(self.kernels)}) must have equal length"
            )
        for name in ("signal_fc", "noise_variance", "window", "t_fc"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def build(cls, signals, correlations, kernel=None, **kwargs) -> "Scenario":
        """Convenience constructor broadcasting scalar signals and a single kernel."""
        rho = np.atleast_1d(np.asarray(correlations, dtype=float))
        s = np.broadcast_to(np.asarray(signals, dtype=float), rho.shape)
        if kernel is None:
            kernel = CorrelationKernel.squared_exponential()
        return cls(signals=s, correlations=rho, kernels=kernel, **kwargs)

    @property
    def n_sensors(self) -> int:
        return int(self.signals.size)

    @property
    def signal_vector(self) -> np.ndarray:
        """Stacked mean under H1: sensor signals followed by the FC signal."""
        return np.append(self.signals, self.signal_fc)

    @property
    def delta_fc(self) -> float:
        """Largest possible |t_fc - t_j| for t_j in the window."""
        return max(self.t_fc, self.window - self.t_fc)

    @property
    def synchronous_times(self) -> np.ndarray:
        return np.full(self.n_sensors, self.t_fc)

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def fc_correlations(self, times) -> np.ndarray:
        """Sensor-to-FC correlations ``r_j(t)`` for one vector or a batch ``(..., N)``."""
        t = np.asarray(times, dtype=float)
        dist = np.abs(self.t_fc - t)
        out = np.empty_like(dist)
        if _uniform_parametric(self.kernels):
            out[...] = eval_kernel(self.kernels[0], dist)
        else:
            for j, k in enumerate(self.kernels):
                out[..., j] = eval_kernel(k, dist[..., j])
        out *= self.correlations
        # rho_j = 0 gives exactly zero correlation whatever the kernel returns
        out[..., self.correlations == 0.0] = 0.0
        return out


def _uniform_parametric(kernels) -> bool:
    first = kernels[0]
    if first.kind is KernelKind.TABULATED:
        return False
    return all(k.kind is first.kind and k.length_scale == first.length_scale for k in kernels)


def validate_scenario(s: Scenario) -> list[str]:
    """Return every violated feasibility condition (empty list means valid)."""
    out: list[str] = []
    sum_sq = float(np.sum(np.square(s.correlations)))
    if not sum_sq < 1.0 - FEASIBILITY_MARGIN:
        out.append(
            f"sum of squared correlations Σρ²={sum_sq:.6g} ≥ 1: the synchronous "
            "covariance is not positive definite (require Σρ² < 1)"
        )
    if not np.all(np.isfinite(s.signals)) or not math.isfinite(s.signal_fc):
        out.append("signals must be finite")
    if not np.all(np.isfinite(s.correlations)):
        out.append("correlations must be finite")
    if not (s.noise_variance > 0 and math.isfinite(s.noise_variance)):
        out.append(f"noise_variance must be positive, got {s.noise_variance}")
    if not (s.window > 0 and math.isfinite(s.window)):
        out.append(f"window must be positive, got {s.window}")
    if not (0.0 <= s.t_fc <= s.window):
        out.append(f"t_fc={s.t_fc} outside window [0, {s.window}]")
    for j, k in enumerate(s.kernels):
        out.extend(f"kernel {j}: {msg}" for msg in k.violations())
        if k.support < s.delta_fc:
            out.append(f"kernel {j}: tabulated support {k.support} shorter than {s.delta_fc}")
    out.extend(s.sprt.violations())
    return out


def require_valid(s: Scenario) -> None:
    violations = validate_scenario(s)
    if violations:
        raise ScenarioError(violations)


def check_times(s: Scenario, times) -> np.ndarray:
    """Coerce sampling times to an array and verify box membership ``[0, window]``."""
    t = np.asarray(times, dtype=float)
    if t.shape[-1:] != (s.n_sensors,):
        raise ScenarioError([f"sampling times must have trailing length {s.n_sensors}, got shape {t.shape}"])
    if np.any(t < 0) or np.any(t > s.window) or np.any(np.isnan(t)):
        raise ScenarioError([f"sampling times must lie in [0, {s.window}]"])
    return t
