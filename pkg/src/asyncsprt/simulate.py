"""Monte Carlo of the group-sampled SPRT.

Each trial draws independent (N+1)-dimensional Gaussian groups with covariance
``Sigma(t)`` until the cumulative LLR leaves ``[delta_0, delta_1]``. Trials are
processed in fixed-size blocks, each with its own Philox stream spawned from the
configured seed, so results do not depend on how blocks are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .correlation import SingularCovarianceError, build_covariance
from .sprt import Hypothesis, llr_weights, thresholds
from .scenario import Scenario

RNG_ALGORITHM = "numpy Philox4x64 via SeedSequence.spawn, one stream per block"


@dataclass(frozen=True)
class McConfig:
    n_trials: int = 10_000
    seed: int = 0
    max_stages: int = 1_000_000
    hypothesis: Hypothesis = Hypothesis.H0
    block_size: int = 1024
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hypothesis", Hypothesis(self.hypothesis))
        if self.n_trials < 1 or self.max_stages < 1 or self.block_size < 1:
            raise ValueError("n_trials, max_stages and block_size must be >= 1")


@dataclass(frozen=True)
class StoppingTimeEstimate:
    mean_stages: float
    std_error: float
    decided_h1_fraction: float
    truncated_fraction: float
    mean_overshoot: float
    n_trials: int
    hypothesis: Hypothesis
    rng_algorithm: str = RNG_ALGORITHM


class GroupSampler:
    """Draws groups for fixed ``(scenario, t)``; the Cholesky factor is computed once."""

    def __init__(self, s: Scenario, times):
        cov = build_covariance(s, times)
        try:
            self.chol = np.linalg.cholesky(cov.matrix)
        except np.linalg.LinAlgError as exc:
            raise SingularCovarianceError("covariance factorisation failed") from exc
        self.signal = s.signal_vector
        self.weights, self.kld = llr_weights(s, times)

    def mean(self, hypothesis: Hypothesis) -> np.ndarray:
        if Hypothesis(hypothesis) is Hypothesis.H1:
            return self.signal
        return np.zeros_like(self.signal)

    def draw(self, hypothesis: Hypothesis, rng: np.random.Generator, size: int | None = None):
        n = self.signal.size
        z = rng.standard_normal(n if size is None else (size, n))
        return z @ self.chol.T + self.mean(hypothesis)

    def llr(self, x: np.ndarray):
        return x @ self.weights - self.kld


def draw_group(s: Scenario, times, hypothesis: Hypothesis, rng: np.random.Generator, size=None):
    return GroupSampler(s, times).draw(hypothesis, rng, size)


def _block_rngs(seed: int, n_trials: int, block_size: int):
    n_blocks = math.ceil(n_trials / block_size)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    sizes = [block_size] * (n_blocks - 1) + [n_trials - block_size * (n_blocks - 1)]
    return [(np.random.Generator(np.random.Philox(c)), m) for c, m in zip(children, sizes)]


def _map_blocks(fn, blocks, workers: int):
    if workers <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def _run_block(sampler: GroupSampler, hypothesis, th, max_stages, block):
    rng, m = block
    total = np.zeros(m)
    stages = np.zeros(m, dtype=np.int64)
    decision = np.zeros(m, dtype=np.int8)  # +1 H1, -1 H0, 0 running/truncated
    overshoot = np.zeros(m)
    running = np.arange(m)
    for _ in range(max_stages):
        if running.size == 0:
            break
        inc = sampler.llr(sampler.draw(hypothesis, rng, running.size))
        total[running] += inc
        stages[running] += 1
        cur = total[running]
        up = cur > th.delta_1
        down = cur < th.delta_0
        decision[running[up]] = 1
        decision[running[down]] = -1
        overshoot[running[up]] = cur[up] - th.delta_1
        overshoot[running[down]] = th.delta_0 - cur[down]
        running = running[~(up | down)]
    return stages, decision, overshoot


def run_sprt_trials(s: Scenario, times, cfg: McConfig) -> StoppingTimeEstimate:
    sampler = GroupSampler(s, times)
    th = thresholds(s.sprt)
    blocks = _block_rngs(cfg.seed, cfg.n_trials, cfg.block_size)
    parts = _map_blocks(
        lambda b: _run_block(sampler, cfg.hypothesis, th, cfg.max_stages, b), blocks, cfg.workers
    )
    stages = np.concatenate([p[0] for p in parts])
    decision = np.concatenate([p[1] for p in parts])
    overshoot = np.concatenate([p[2] for p in parts])
    done = decision != 0
    n_done = int(done.sum())
    if n_done:
        st = stages[done].astype(float)
        mean = float(st.mean())
        stderr = float(st.std(ddof=1) / math.sqrt(n_done)) if n_done > 1 else math.nan
        h1_frac = float(np.mean(decision[done] == 1))
        mean_over = float(overshoot[done].mean())
    else:
        mean = stderr = h1_frac = mean_over = math.nan
    return StoppingTimeEstimate(
        mean_stages=mean,
        std_error=stderr,
        decided_h1_fraction=h1_frac,
        truncated_fraction=1.0 - n_done / cfg.n_trials,
        mean_overshoot=mean_over,
        n_trials=cfg.n_trials,
        hypothesis=cfg.hypothesis,
    )


def llr_samples(s: Scenario, times, cfg: McConfig) -> np.ndarray:
    """``cfg.n_trials`` independent single-group LLRs under ``cfg.hypothesis``."""
    sampler = GroupSampler(s, times)
    blocks = _block_rngs(cfg.seed, cfg.n_trials, cfg.block_size)
    parts = _map_blocks(
        lambda b: sampler.llr(sampler.draw(cfg.hypothesis, b[0], b[1])), blocks, cfg.workers
    )
    return np.concatenate(parts)


def empirical_kld(s: Scenario, times, cfg: McConfig) -> float:
    """Sample mean of the per-group LLR: estimates ``+K`` under H1 and ``-K`` under H0."""
    return float(llr_samples(s, times, cfg).mean())
