"""Wald's sequential probability ratio test at the fusion center.

One LLR increment is produced per sampling group. Thresholds and LLRs are in
nats; the stopping-time formulas neglect overshoot past the thresholds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .correlation import block_inverse, build_covariance
from .divergence import kl_quadratic_form, lower_bound, upper_bound
from .scenario import Scenario, SprtConfig

__all__ = [
    "Hypothesis",
    "SprtConfig",
    "SprtStatus",
    "SprtState",
    "SprtUsageError",
    "Thresholds",
    "thresholds",
    "llr",
    "llr_weights",
    "step",
    "expected_stopping_time",
    "stopping_time_bounds",
]


class Hypothesis(str, enum.Enum):
    H0 = "h0"
    H1 = "h1"


class SprtStatus(str, enum.Enum):
    RUNNING = "running"
    DECIDED_H1 = "decided_h1"
    DECIDED_H0 = "decided_h0"


class SprtUsageError(RuntimeError):
    pass


@dataclass(frozen=True)
class Thresholds:
    delta_1: float
    delta_0: float


def thresholds(cfg: SprtConfig) -> Thresholds:
    bad = cfg.violations()
    if bad:
        raise ValueError(bad[0])
    return Thresholds(
        delta_1=math.log(cfg.p_d / cfg.p_fa),
        delta_0=math.log((1.0 - cfg.p_d) / (1.0 - cfg.p_fa)),
    )


def llr_weights(s: Scenario, times) -> tuple[np.ndarray, float]:
    """Return ``(w, K)`` with ``w = Sigma^{-1} s~`` so that ``LLR(x) = x @ w - K``."""
    inv = block_inverse(build_covariance(s, times))
    st = s.signal_vector
    w = inv @ st
    return w, 0.5 * float(st @ w)


def llr(s: Scenario, times, observation) -> float:
    x = np.asarray(observation, dtype=float)
    if x.shape != (s.n_sensors + 1,):
        raise ValueError(f"observation must have length {s.n_sensors + 1}, got shape {x.shape}")
    w, k = llr_weights(s, times)
    return float(x @ w) - k


@dataclass(frozen=True)
class SprtState:
    cumulative_llr: float = 0.0
    stage: int = 0
    status: SprtStatus = SprtStatus.RUNNING
    overshoot: float = 0.0

    @property
    def decided(self) -> bool:
        return self.status is not SprtStatus.RUNNING


def step(state: SprtState, llr_value: float, th: Thresholds) -> SprtState:
    if state.decided:
        raise SprtUsageError(f"cannot step an SPRT that already {state.status.value}")
    total = state.cumulative_llr + llr_value
    # ties with a threshold keep sampling
    if total > th.delta_1:
        return SprtState(total, state.stage + 1, SprtStatus.DECIDED_H1, total - th.delta_1)
    if total < th.delta_0:
        return SprtState(total, state.stage + 1, SprtStatus.DECIDED_H0, th.delta_0 - total)
    return replace(state, cumulative_llr=total, stage=state.stage + 1)


def _wald_numerator(cfg: SprtConfig, hypothesis: Hypothesis) -> float:
    th = thresholds(cfg)
    p = cfg.p_d if Hypothesis(hypothesis) is Hypothesis.H1 else cfg.p_fa
    return p * th.delta_1 + (1.0 - p) * th.delta_0


def expected_stopping_time(cfg: SprtConfig, kld: float, hypothesis: Hypothesis = Hypothesis.H0) -> float:
    """Wald's approximate mean number of groups; the expected LLR is ``+kld`` under H1, ``-kld`` under H0."""
    if not kld > 0:
        raise ValueError(f"KL divergence must be positive, got {kld}")
    num = _wald_numerator(cfg, hypothesis)
    return num / kld if Hypothesis(hypothesis) is Hypothesis.H1 else num / -kld


def stopping_time_bounds(cfg: SprtConfig, s: Scenario, hypothesis: Hypothesis = Hypothesis.H0):
    """``(lower, upper)`` stopping-time bounds from the divergence bounds.

    Stopping time is inversely proportional to the divergence, so the upper
    divergence bound yields the lower stopping-time bound and vice versa.
    """
    lo = expected_stopping_time(cfg, upper_bound(s).value, hypothesis)
    hi = expected_stopping_time(cfg, lower_bound(s), hypothesis)
    return lo, hi


def wald_time_at(s: Scenario, times, hypothesis: Hypothesis = Hypothesis.H0) -> float:
    return expected_stopping_time(s.sprt, kl_quadratic_form(s, times), hypothesis)
