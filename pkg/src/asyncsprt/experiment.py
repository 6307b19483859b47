"""Experiment manifests (TOML), sweep execution and CSV output.

Manifest grammar is documented in README.md. Four kinds are supported:
``fig2_sweep_sensors`` (sweep the sensor count), ``fig3_sweep_tfc`` (sweep the
FC sampling time for several windows), ``single_point`` and ``mc_validation``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .divergence import lower_bound, upper_bound
from .optimize import OptimizerConfig, maximize_kld, minimize_kld
from .scenario import CorrelationKernel, Scenario, SprtConfig, validate_scenario
from .simulate import McConfig, run_sprt_trials
from .sprt import Hypothesis, expected_stopping_time

log = logging.getLogger(__name__)

KINDS = ("fig2_sweep_sensors", "fig3_sweep_tfc", "single_point", "mc_validation")

CSV_COLUMNS = (
    "sweep_key", "n_sensors", "eps", "t_fc",
    "kld_min", "kld_max", "bound_lower", "bound_upper",
    "stop_min", "stop_max", "stop_lb", "stop_ub",
    "mc_mean", "mc_stderr", "mc_pfa_or_pd",
)

_TOP_KEYS = {"kind", "seed", "hypothesis", "output", "scenario", "sprt", "sweep", "optimizer", "mc"}
_SCENARIO_KEYS = {"signal", "signals", "signal_fc", "noise_variance", "window", "t_fc",
                  "correlations", "kernel", "kernels"}
_OPTIMIZER_KEYS = {"n_starts", "max_iters", "step_tol", "obj_tol", "grad_tol", "fd_step",
                   "grid_resolution", "max_corner_dims", "certify"}
_MC_KEYS = {"trials", "max_stages", "block_size"}
_SPRT_KEYS = {"p_d", "p_fa"}
_SWEEP_KEYS = {"n_sensors", "windows", "t_fc_points"}

# Row-invariant slack on B_lower <= K_min <= K_max <= B_upper.
ROW_TOL = 1e-9


class SpecError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True, eq=False)
class SweepPoint:
    key: str
    scenario: Scenario


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    kind: str
    points: tuple[SweepPoint, ...]
    optimizer: OptimizerConfig = OptimizerConfig()
    certify: bool = False
    mc_trials: int = 0
    mc_max_stages: int = 1_000_000
    mc_block_size: int = 1024
    hypothesis: Hypothesis = Hypothesis.H0
    seed: int = 0
    output: str | None = None

    def with_overrides(self, **kw) -> "ExperimentSpec":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "starts" in kw:
            kw["optimizer"] = replace(self.optimizer, n_starts=kw.pop("starts"))
        if "hypothesis" in kw:
            kw["hypothesis"] = Hypothesis(kw["hypothesis"])
        return replace(self, **kw)


@dataclass
class ResultRow:
    sweep_key: str
    n_sensors: int
    eps: float
    t_fc: float
    kld_min: float | None = None
    kld_max: float | None = None
    bound_lower: float | None = None
    bound_upper: float | None = None
    stop_min: float | None = None
    stop_max: float | None = None
    stop_lb: float | None = None
    stop_ub: float | None = None
    mc_mean: float | None = None
    mc_stderr: float | None = None
    mc_pfa_or_pd: float | None = None
    argmin: np.ndarray | None = field(default=None, repr=False)
    argmax: np.ndarray | None = field(default=None, repr=False)
    error: str | None = None

    def invariant_holds(self, tol: float = ROW_TOL) -> bool:
        return (
            self.bound_lower - tol <= self.kld_min
            and self.kld_min <= self.kld_max + tol
            and self.kld_max <= self.bound_upper + tol
        )


# -- manifest parsing ---------------------------------------------------------


def _kernel_from(table: Any, where: str, errors: list[str]) -> CorrelationKernel | None:
    if not isinstance(table, dict):
        errors.append(f"{where}: expected a table")
        return None
    kind = table.get("kind", "squared_exponential")
    try:
        if kind == "custom_tabulated":
            return CorrelationKernel.tabulated(table["distances"], table["values"])
        return CorrelationKernel(kind, float(table.get("length_scale", 1.0)))
    except (KeyError, ValueError, TypeError) as exc:
        errors.append(f"{where}: {exc}")
        return None


def _unknown(table: dict, allowed: set, where: str, errors: list[str]):
    for k in sorted(set(table) - allowed):
        errors.append(f"{where}.{k}: unknown key")


def fig2_correlations(n: int) -> np.ndarray:
    """|rho_j| = 1/(2N+1); the first ceil(N/2) sensors positive, the rest negative."""
    mag = 1.0 / (2 * n + 1)
    n_pos = n - n // 2
    return np.array([mag] * n_pos + [-mag] * (n - n_pos))


def _base_scenario(raw: dict, sprt: SprtConfig, errors: list[str]):
    sc = raw.get("scenario", {})
    if not isinstance(sc, dict):
        errors.append("scenario: expected a table")
        return None
    _unknown(sc, _SCENARIO_KEYS, "scenario", errors)
    kernels = None
    if "kernels" in sc:
        if not isinstance(sc["kernels"], list):
            errors.append("scenario.kernels: expected an array of tables")
        else:
            kernels = [_kernel_from(k, f"scenario.kernels[{i}]", errors) for i, k in enumerate(sc["kernels"])]
    else:
        kernels = _kernel_from(sc.get("kernel", {}), "scenario.kernel", errors)
    out = {
        "signal": sc.get("signal", 0.5),
        "signals": sc.get("signals"),
        "correlations": sc.get("correlations"),
        "kernels": kernels,
        "signal_fc": sc.get("signal_fc", 0.5),
        "noise_variance": sc.get("noise_variance", 1.0),
        "window": sc.get("window", 1.0),
        "t_fc": sc.get("t_fc", 0.0),
        "sprt": sprt,
    }
    for name in ("signal_fc", "noise_variance", "window", "t_fc"):
        if not isinstance(out[name], (int, float)) or isinstance(out[name], bool):
            errors.append(f"scenario.{name}: expected a number")
    return out


def _make_scenario(base: dict, where: str, errors: list[str], *, correlations=None, **over):
    rho = correlations if correlations is not None else base["correlations"]
    if rho is None:
        errors.append(f"{where}: scenario.correlations is required for this kind")
        return None
    rho = np.asarray(rho, dtype=float)
    signals = base["signals"] if base["signals"] is not None else np.full(rho.size, float(base["signal"]))
    kernels = base["kernels"]
    if kernels is None or (isinstance(kernels, list) and any(k is None for k in kernels)):
        return None
    if isinstance(kernels, list) and len(kernels) != rho.size:
        errors.append(f"{where}: {len(kernels)} kernels for {rho.size} sensors")
        return None
    params = {k: base[k] for k in ("signal_fc", "noise_variance", "window", "t_fc")}
    params.update(over)
    try:
        s = Scenario(signals=np.asarray(signals, dtype=float), correlations=rho, kernels=kernels,
                     sprt=base["sprt"], **params)
    except (ValueError, TypeError) as exc:
        errors.append(f"{where}: {exc}")
        return None
    errors.extend(f"{where}: {v}" for v in validate_scenario(s))
    return s


def _int_list(value, where, errors):
    if not isinstance(value, list) or not value:
        errors.append(f"{where}: expected a non-empty array")
        return []
    return value


def parse_spec(raw: dict) -> ExperimentSpec:
    errors: list[str] = []
    _unknown(raw, _TOP_KEYS, "spec", errors)
    kind = raw.get("kind")
    if kind not in KINDS:
        raise SpecError([f"kind: expected one of {', '.join(KINDS)}, got {kind!r}"])

    sp = raw.get("sprt", {})
    _unknown(sp, _SPRT_KEYS, "sprt", errors)
    sprt = SprtConfig(p_d=float(sp.get("p_d", 0.92)), p_fa=float(sp.get("p_fa", 0.1)))
    errors.extend(f"sprt: {v}" for v in sprt.violations())

    opt = raw.get("optimizer", {})
    _unknown(opt, _OPTIMIZER_KEYS, "optimizer", errors)
    certify = bool(opt.get("certify", False))
    try:
        optimizer = OptimizerConfig(**{k: v for k, v in opt.items() if k != "certify"})
    except (ValueError, TypeError) as exc:
        errors.append(f"optimizer: {exc}")
        optimizer = OptimizerConfig()

    mc = raw.get("mc", {})
    _unknown(mc, _MC_KEYS, "mc", errors)
    default_trials = 10_000 if kind == "mc_validation" else 0
    mc_trials = int(mc.get("trials", default_trials))
    if mc_trials < 0:
        errors.append("mc.trials: must be >= 0")

    try:
        hypothesis = Hypothesis(raw.get("hypothesis", "h0"))
    except ValueError:
        errors.append(f"hypothesis: expected 'h0' or 'h1', got {raw.get('hypothesis')!r}")
        hypothesis = Hypothesis.H0

    base = _base_scenario(raw, sprt, errors)
    sweep = raw.get("sweep", {})
    _unknown(sweep, _SWEEP_KEYS, "sweep", errors)
    points: list[SweepPoint] = []
    if base is not None:
        if kind == "fig2_sweep_sensors":
            for n in _int_list(sweep.get("n_sensors"), "sweep.n_sensors", errors):
                if not isinstance(n, int) or n < 1:
                    errors.append(f"sweep.n_sensors: {n!r} is not a positive integer")
                    continue
                b = dict(base, signals=None)
                if isinstance(b["kernels"], list):
                    errors.append("sweep.n_sensors: per-sensor kernels cannot be swept over N")
                    break
                s = _make_scenario(b, f"sweep[n_sensors={n}]", errors, correlations=fig2_correlations(n))
                if s is not None:
                    points.append(SweepPoint(f"n_sensors={n}", s))
        elif kind == "fig3_sweep_tfc":
            windows = _int_list(sweep.get("windows"), "sweep.windows", errors)
            m = sweep.get("t_fc_points", 41)
            if not isinstance(m, int) or m < 1:
                errors.append("sweep.t_fc_points: expected a positive integer")
                m = 0
            for eps in windows:
                eps = float(eps)
                grid = np.linspace(0.0, eps, m) if m > 1 else np.array([0.0])
                for frac, t_fc in zip(np.linspace(0.0, 1.0, m) if m > 1 else [0.0], grid):
                    key = f"eps={eps!r};t_fc/eps={float(frac)!r}"
                    s = _make_scenario(base, f"sweep[{key}]", errors, window=eps, t_fc=float(t_fc))
                    if s is not None:
                        points.append(SweepPoint(key, s))
        else:
            s = _make_scenario(base, "scenario", errors)
            if s is not None:
                if kind == "single_point":
                    points.append(SweepPoint("single", s))
                else:
                    points.extend([SweepPoint("kld_min", s), SweepPoint("kld_max", s)])
    if errors:
        raise SpecError(errors)
    return ExperimentSpec(
        kind=kind,
        points=tuple(points),
        optimizer=optimizer,
        certify=certify,
        mc_trials=mc_trials,
        mc_max_stages=int(mc.get("max_stages", 1_000_000)),
        mc_block_size=int(mc.get("block_size", 1024)),
        hypothesis=hypothesis,
        seed=int(raw.get("seed", 0)),
        output=raw.get("output"),
    )


def load_spec(path) -> ExperimentSpec:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecError([f"{path}: TOML parse error: {exc}"]) from exc
    return parse_spec(raw)


# -- execution ------------------------------------------------------------------


def derive_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def _stop(cfg: SprtConfig, kld: float, h: Hypothesis) -> float:
    return expected_stopping_time(cfg, kld, h)


def run_point(spec: ExperimentSpec, index: int, point: SweepPoint) -> ResultRow:
    s = point.scenario
    row = ResultRow(point.key, s.n_sensors, s.window, s.t_fc)
    try:
        cfg = replace(spec.optimizer, seed=derive_seed(spec.seed, index, 0))
        ub, lb = upper_bound(s).value, lower_bound(s)
        kmax = maximize_kld(s, cfg, certify=spec.certify)
        kmin = minimize_kld(s, cfg, certify=spec.certify)
        h = spec.hypothesis
        row.kld_min, row.kld_max = kmin.value, kmax.value
        row.bound_lower, row.bound_upper = lb, ub
        row.argmin, row.argmax = kmin.argument, kmax.argument
        row.stop_min = _stop(s.sprt, kmax.value, h)
        row.stop_max = _stop(s.sprt, kmin.value, h)
        row.stop_lb = _stop(s.sprt, ub, h)
        row.stop_ub = _stop(s.sprt, lb, h)
        if spec.mc_trials > 0:
            at = kmax.argument if point.key == "kld_max" else kmin.argument
            mc = McConfig(
                n_trials=spec.mc_trials,
                seed=derive_seed(spec.seed, index, 1),
                max_stages=spec.mc_max_stages,
                hypothesis=h,
                block_size=spec.mc_block_size,
            )
            est = run_sprt_trials(s, at, mc)
            row.mc_mean, row.mc_stderr = est.mean_stages, est.std_error
            row.mc_pfa_or_pd = est.decided_h1_fraction
    except Exception as exc:  # recorded per row; the sweep continues
        log.exception("sweep point %s failed", point.key)
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> list[ResultRow]:
    jobs = list(enumerate(spec.points))
    if workers <= 1:
        return [run_point(spec, i, p) for i, p in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: run_point(spec, *job), jobs))


# -- output ---------------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def format_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_cell(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_csv(rows, path) -> None:
    Path(path).write_text(format_csv(rows), encoding="utf-8")


PLOT_STUB = '''"""Plot a sweep CSV written by `asyncsprt run` (requires pandas and matplotlib)."""
import sys

import matplotlib.pyplot as plt
import pandas as pd

path = sys.argv[1] if len(sys.argv) > 1 else {csv!r}
df = pd.read_csv(path)
x = "n_sensors" if df["n_sensors"].nunique() > 1 else "t_fc"
fig, ax = plt.subplots()
for eps, g in df.groupby("eps"):
    xs = g[x] / (eps if x == "t_fc" else 1.0)
    for col, style in [("stop_lb", ":"), ("stop_min", "-"), ("stop_max", "--"), ("stop_ub", "-.")]:
        ax.plot(xs, g[col], style, label=f"{{col}} (eps={{eps}})")
ax.set_xlabel("t_fc / eps" if x == "t_fc" else "number of sensors")
ax.set_ylabel("expected stopping time (groups)")
ax.legend(fontsize="small")
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def write_plot_stub(csv_path) -> Path:
    p = Path(csv_path)
    stub = p.with_name(p.stem + "_plot.py")
    stub.write_text(PLOT_STUB.format(csv=p.name), encoding="utf-8")
    return stub
