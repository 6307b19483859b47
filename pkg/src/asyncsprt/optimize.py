"""Extrema of the KL divergence over the sampling-time box ``[0, window]^N``.

``maximize_kld`` / ``minimize_kld`` run projected gradient ascent (descent) with
central finite-difference gradients and Armijo backtracking from many starting
points at once. ``grid_oracle`` is an exhaustive reference for small ``N``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.stats import qmc

from .divergence import _kld_from_r, kl_divergence, kl_divergence_batch, upper_bound
from .scenario import KernelKind, Scenario, require_valid

Sense = Literal["max", "min"]

GRID_MAX_DIMS = 4
# Candidates within this relative distance of the best value count as ties.
TIE_RTOL = 1e-12
_ARMIJO = 1e-4
_MAX_BACKTRACKS = 40
_GRID_CHUNK = 1 << 21


@dataclass(frozen=True)
class OptimizerConfig:
    """Multistart settings; the defaults are engineering choices, not tuned values."""

    n_starts: int = 32
    max_iters: int = 200
    step_tol: float = 1e-10
    obj_tol: float = 1e-15
    grad_tol: float = 1e-6
    fd_step: float = 1e-6
    grid_resolution: int = 401
    max_corner_dims: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_starts < 1 or self.max_iters < 1:
            raise ValueError("n_starts and max_iters must be >= 1")
        if min(self.step_tol, self.obj_tol, self.grad_tol, self.fd_step) <= 0:
            raise ValueError("tolerances must be positive")
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be >= 2")


@dataclass(frozen=True, eq=False)
class Extremum:
    value: float
    argument: np.ndarray
    sense: str
    starts_converged: int
    n_starts: int
    is_certified_global: bool = False
    grid_gap: float | None = None


class _Objective:
    """Signed objective on batches; skips per-call validation already done upstream."""

    def __init__(self, s: Scenario, sign: float):
        self.s = s
        self.sign = sign
        self.evaluations = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        self.evaluations += x.shape[0] if x.ndim > 1 else 1
        return self.sign * _kld_from_r(self.s, self.s.fc_correlations(x))


def _fd_gradient(obj: _Objective, x: np.ndarray, h: float, hi: float) -> np.ndarray:
    m, n = x.shape
    eye = np.eye(n) * h
    plus = np.clip(x[:, None, :] + eye, 0.0, hi)
    minus = np.clip(x[:, None, :] - eye, 0.0, hi)
    probes = np.concatenate([plus, minus], axis=1).reshape(-1, n)
    vals = obj(probes).reshape(m, 2, n)
    width = np.einsum("mjj->mj", plus - minus)
    return (vals[:, 0] - vals[:, 1]) / width


def projected_ascent(obj, x0: np.ndarray, hi: float, cfg: OptimizerConfig, trace=None):
    """Run batched projected gradient ascent of ``obj`` from each row of ``x0``.

    Returns ``(x, values, converged)``. If ``trace`` is a list, the iterate
    matrix and value vector after every iteration are appended to it.
    """
    x = np.array(x0, dtype=float)
    f = obj(x)
    m = x.shape[0]
    h = cfg.fd_step * hi
    active = np.ones(m, dtype=bool)
    converged = np.zeros(m, dtype=bool)
    alpha = np.full(m, np.nan)
    if trace is not None:
        trace.append((x.copy(), f.copy()))
    for _ in range(cfg.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi = x[idx]
        g = _fd_gradient(obj, xi, h, hi)
        blocked = ((xi <= 0.0) & (g < 0)) | ((xi >= hi) & (g > 0))
        stationary = np.linalg.norm(np.where(blocked, 0.0, g), axis=1) <= cfg.grad_tol
        g[stationary] = 0.0
        gnorm = np.linalg.norm(g, axis=1)
        a = alpha[idx]
        fresh = np.isnan(a)
        a[fresh] = hi / np.maximum(gnorm[fresh], 1e-300)
        pending = gnorm > 0
        new_x = x[idx].copy()
        new_f = f[idx].copy()
        for _ in range(_MAX_BACKTRACKS):
            p = np.flatnonzero(pending)
            if p.size == 0:
                break
            cand = np.clip(x[idx[p]] + a[p, None] * g[p], 0.0, hi)
            step = cand - x[idx[p]]
            fc = obj(cand)
            ok = (fc >= f[idx[p]] + _ARMIJO * np.einsum("ij,ij->i", g[p], step)) & (
                fc >= f[idx[p]]
            )
            new_x[p[ok]] = cand[ok]
            new_f[p[ok]] = fc[ok]
            pending[p[ok]] = False
            a[p[~ok]] *= 0.5
        moved = np.linalg.norm(new_x - x[idx], axis=1)
        gain = new_f - f[idx]
        accepted = ~pending & (gnorm > 0)
        done = (
            ~accepted
            | stationary
            | (moved <= cfg.step_tol * hi)
            | (gain <= cfg.obj_tol * np.maximum(1.0, np.abs(f[idx])))
        )
        x[idx] = new_x
        f[idx] = new_f
        alpha[idx] = np.where(accepted, 2.0 * a, a)
        converged[idx[done]] = True
        active[idx[done]] = False
        if trace is not None:
            trace.append((x.copy(), f.copy()))
    return x, f, converged


def _corner_like(s: Scenario, cfg: OptimizerConfig, rng: np.random.Generator) -> np.ndarray:
    """Box corners plus points with every t_j in {t_fc, farthest endpoint}."""
    n, eps = s.n_sensors, s.window
    far_end = 0.0 if s.t_fc >= eps - s.t_fc else eps
    if n <= cfg.max_corner_dims:
        bits = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    else:
        bits = rng.integers(0, 2, size=(1 << cfg.max_corner_dims, n)).astype(float)
    corners = bits * eps
    patterns = np.where(bits == 0.0, s.t_fc, far_end)
    return np.unique(np.vstack([corners, patterns]), axis=0)


def starting_points(s: Scenario, cfg: OptimizerConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    lhs = qmc.LatinHypercube(d=s.n_sensors, seed=rng).random(cfg.n_starts) * s.window
    return np.vstack([lhs, s.synchronous_times[None, :], _corner_like(s, cfg, rng)])


def _select(values: np.ndarray, points: np.ndarray, sense: Sense) -> int:
    best = values.max() if sense == "max" else values.min()
    tol = TIE_RTOL * max(1.0, abs(best))
    tied = np.flatnonzero(np.abs(values - best) <= tol)
    # lexicographically smallest t among tied optima
    order = np.lexsort(points[tied].T[::-1])
    return int(tied[order[0]])


def _optimize(s: Scenario, cfg: OptimizerConfig, sense: Sense, certify: bool, trace=None) -> Extremum:
    require_valid(s)
    obj = _Objective(s, 1.0 if sense == "max" else -1.0)
    x0 = starting_points(s, cfg)
    x, _, converged = projected_ascent(obj, x0, s.window, cfg, trace=trace)
    values = kl_divergence_batch(s, x)
    i = _select(values, x, sense)
    arg = x[i].copy()
    arg.setflags(write=False)
    result = Extremum(
        value=kl_divergence(s, arg),
        argument=arg,
        sense=sense,
        starts_converged=int(converged.sum()),
        n_starts=int(x.shape[0]),
    )
    if certify and s.n_sensors <= GRID_MAX_DIMS:
        grid = grid_oracle(s, cfg.grid_resolution, sense)
        better = result.value >= grid.value if sense == "max" else result.value <= grid.value
        certified = better or abs(result.value - grid.value) <= grid.grid_gap
        result = Extremum(
            result.value, result.argument, sense, result.starts_converged,
            result.n_starts, certified, grid.grid_gap,
        )
    return result


def maximize_kld(s: Scenario, cfg: OptimizerConfig = OptimizerConfig(), certify: bool = False) -> Extremum:
    return _optimize(s, cfg, "max", certify)


def minimize_kld(s: Scenario, cfg: OptimizerConfig = OptimizerConfig(), certify: bool = False) -> Extremum:
    return _optimize(s, cfg, "min", certify)


def _kernel_lipschitz(kernel) -> float:
    if kernel.kind is KernelKind.EXPONENTIAL:
        return 1.0 / kernel.length_scale
    if kernel.kind is KernelKind.SQUARED_EXPONENTIAL:
        return math.sqrt(2.0 / math.e) / kernel.length_scale
    return float(np.max(np.abs(np.diff(kernel.values) / np.diff(kernel.distances))))


def grid_gap_bound(s: Scenario, spacing: float) -> float:
    """Upper bound on ``|K(t) - K(nearest grid point)|`` for a grid of given spacing."""
    ub = upper_bound(s)
    l_max = max(abs(ub.psi_plus - s.signal_fc), abs(ub.psi_minus - s.signal_fc))
    rho = np.abs(s.correlations)
    dk_dr = (l_max * np.abs(s.signals) + l_max**2 * rho) / (s.noise_variance * ub.d_eq**2)
    lip = np.array([_kernel_lipschitz(k) for k in s.kernels])
    return float(np.sum(dk_dr * rho * lip) * spacing / 2.0)


def grid_oracle(s: Scenario, resolution: int, sense: Sense) -> Extremum:
    """Exhaustive search on a uniform grid (plus the t_j = t_fc slice)."""
    require_valid(s)
    n = s.n_sensors
    if n > GRID_MAX_DIMS:
        raise ValueError(
            f"grid oracle limited to N <= {GRID_MAX_DIMS}; N={n} at resolution "
            f"{resolution} would need {float(resolution) ** n:.3g} evaluations"
        )
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    axis = np.unique(np.append(np.linspace(0.0, s.window, resolution), s.t_fc))
    m = axis.size
    r_axis = s.fc_correlations(np.repeat(axis[:, None], n, axis=1))  # (m, n)
    lin = r_axis * s.signals
    sq = r_axis**2
    const = float(s.signals @ s.signals) / (2.0 * s.noise_variance)

    # chunk over leading axes so each tail block stays bounded
    lead = 0
    while lead < n - 1 and m ** (n - lead) > _GRID_CHUNK:
        lead += 1
    tail = n - lead
    tail_l = np.zeros((m,) * tail)
    tail_q = np.zeros((m,) * tail)
    for k in range(tail):
        shape = [1] * tail
        shape[k] = m
        tail_l = tail_l + lin[:, lead + k].reshape(shape)
        tail_q = tail_q + sq[:, lead + k].reshape(shape)

    sign = 1.0 if sense == "max" else -1.0
    best_val, best_idx = -np.inf, None
    for head in itertools.product(range(m), repeat=lead):
        hl = sum(lin[i, k] for k, i in enumerate(head)) - s.signal_fc
        hq = sum(sq[i, k] for k, i in enumerate(head))
        vals = sign * (const + (tail_l + hl) ** 2 / (2.0 * s.noise_variance * (1.0 - (tail_q + hq))))
        flat = int(np.argmax(vals))
        if vals.flat[flat] > best_val:
            best_val = float(vals.flat[flat])
            best_idx = head + np.unravel_index(flat, vals.shape)
    arg = axis[np.array(best_idx, dtype=int)]
    arg.setflags(write=False)
    spacing = float(np.max(np.diff(axis)))
    return Extremum(
        value=kl_divergence(s, arg),
        argument=arg,
        sense=sense,
        starts_converged=1,
        n_starts=1,
        is_certified_global=True,
        grid_gap=grid_gap_bound(s, spacing),
    )
