"""Seeded Monte-Carlo harness for comparing estimators.

Random streams
--------------
Every draw comes from numpy's PCG64 seeded by a ``SeedSequence`` with the
experiment seed as entropy and a spawn key naming what is drawn:

* ``(0,)``                       the true x (length N), shared by every grid point
* ``(1, M)``                     the mean matrix H for M rows
* ``(2, point, trial)``          E (M x N, row-major) and then eps (M) for one trial

so a trial's data depends only on (seed, point index, trial index) and not on
execution order or the number of workers.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import baselines
from .errors import NUMERIC_ERRORS, IoFailure
from .estimator import SolverOptions, solve
from .model import ProblemInstance, SampledTruth

ESTIMATORS = ("GRVML", "LS", "OracleLS", "TLS")
PRESETS = ("nmse-hist", "mse-vs-snr", "kappa-sweep", "mse-vs-m", "custom")
DEFAULT_SNR_GRID = tuple(float(v) for v in range(0, 45, 5))
DEFAULT_M_GRID = (8, 16, 32, 64, 128, 256, 512, 1024)
CSV_HEADER = ("trial", "estimator", "nmse", "squared_error", "case", "nu_star",
              "point", "param", "value")
SUMMARY_SCHEMA = "grvml.experiment-summary/1"


def quantizer_noise_variance(delta: float) -> float:
    """Variance of uniform quantisation noise with step ``delta``."""
    if delta < 0:
        raise ValueError("quantizer step must be >= 0")
    return delta * delta / 12.0


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "custom"
    M: int = 64
    N: int = 4
    sigma_e2: float = 0.10
    sigma_eps2: float = 0.03
    snr_grid_db: tuple[float, ...] = ()
    kappa: float | None = None
    M_grid: tuple[int, ...] = ()
    trials: int = 500
    seed: int = 0
    estimators: tuple[str, ...] = ESTIMATORS
    emit_crb: bool = True
    # test seam: zero out the realised E and eps
    noiseless: bool = False

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be positive")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown or not self.estimators:
            raise ValueError(f"bad estimator list {self.estimators!r}")
        if self.preset in ("mse-vs-snr", "kappa-sweep") and not self.snr_grid_db:
            raise ValueError(f"{self.preset} needs a nonempty SNR grid")
        if self.preset == "kappa-sweep" and not (self.kappa and self.kappa > 0):
            raise ValueError("kappa-sweep needs kappa > 0")
        if self.preset == "mse-vs-m" and not self.M_grid:
            raise ValueError("mse-vs-m needs a nonempty M grid")

    def points(self) -> list["GridPoint"]:
        if self.preset == "mse-vs-snr":
            return [GridPoint(i, "snr_db", db, self.M, self.sigma_e2, 10 ** (-db / 10))
                    for i, db in enumerate(self.snr_grid_db)]
        if self.preset == "kappa-sweep":
            return [GridPoint(i, "snr_db", db, self.M, self.kappa * 10 ** (-db / 10), 10 ** (-db / 10))
                    for i, db in enumerate(self.snr_grid_db)]
        if self.preset == "mse-vs-m":
            return [GridPoint(i, "M", float(m), int(m), self.sigma_e2, self.sigma_eps2)
                    for i, m in enumerate(self.M_grid)]
        return [GridPoint(0, "none", 0.0, self.M, self.sigma_e2, self.sigma_eps2)]


@dataclass(frozen=True)
class GridPoint:
    index: int
    param: str
    value: float
    M: int
    sigma_e2: float
    sigma_eps2: float


def preset_config(name: str, seed: int = 0, trials: int | None = None, **overrides) -> ExperimentConfig:
    """Default configuration of a named experiment, with optional overrides."""
    base = {
        "nmse-hist": dict(M=95, N=100, sigma_e2=0.10, sigma_eps2=0.03, trials=2000,
                          estimators=("GRVML", "LS", "OracleLS"), emit_crb=False),
        "mse-vs-snr": dict(M=64, N=4, sigma_e2=0.10, snr_grid_db=DEFAULT_SNR_GRID, trials=500),
        "kappa-sweep": dict(M=64, N=4, kappa=0.01, snr_grid_db=DEFAULT_SNR_GRID, trials=500),
        "mse-vs-m": dict(N=4, sigma_e2=0.01, sigma_eps2=0.20, M_grid=DEFAULT_M_GRID, trials=500),
        "custom": dict(),
    }
    if name not in base:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    kw = dict(base[name], preset=name, seed=seed)
    if trials is not None:
        kw["trials"] = trials
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kw)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def truth_x(config: ExperimentConfig) -> np.ndarray:
    return _rng(config.seed, 0).standard_normal(config.N)


def mean_matrix(config: ExperimentConfig, M: int) -> np.ndarray:
    return _rng(config.seed, 1, M).standard_normal((M, config.N))


def sample_trial(config: ExperimentConfig, trial_index: int, point_index: int = 0,
                 _cache: dict | None = None) -> tuple[ProblemInstance, SampledTruth]:
    point = config.points()[point_index]
    if _cache is not None and point.M in _cache:
        H, x = _cache[point.M]
    else:
        H, x = mean_matrix(config, point.M), truth_x(config)
    M, N = point.M, config.N
    rng = _rng(config.seed, 2, point_index, trial_index)
    E = rng.standard_normal((M, N)) * math.sqrt(point.sigma_e2)
    eps = rng.standard_normal(M) * math.sqrt(point.sigma_eps2)
    if config.noiseless:
        E, eps = np.zeros_like(E), np.zeros_like(eps)
    y = (H + E) @ x + eps
    inst = ProblemInstance(H=H, y=y, sigma_e2=point.sigma_e2, sigma_eps2=point.sigma_eps2)
    return inst, SampledTruth(x_true=x, E=E, epsilon=eps,
                              seed_path=(config.seed, point_index, trial_index))


@dataclass
class MetricsRecord:
    trial: int
    estimator: str
    nmse: float
    squared_error: float
    estimate: np.ndarray | None
    case_tag: str = ""
    nu_star: float | None = None
    point: int = 0
    error: str | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[MetricsRecord]
    summary: dict = field(default_factory=dict)

    def point_summary(self, index: int) -> dict:
        return self.summary["points"][index]

    def metric(self, estimator: str, key: str) -> list[float]:
        """One aggregate per grid point, e.g. ``metric("GRVML", "mse")``."""
        return [p["estimators"][estimator][key] for p in self.summary["points"]]


def _estimate(name, inst, truth, opts):
    if name == "GRVML":
        sol = solve(inst, opts)
        return sol.x_hat, sol.case_tag.value, sol.nu_star
    if name == "LS":
        return baselines.ls(inst.H, inst.y), "", None
    if name == "OracleLS":
        return baselines.oracle_ls(inst.H, truth.E, inst.y), "", None
    return baselines.tls(inst.H, inst.y), "", None


def _run_trial(config, point, trial, cache, opts):
    inst, truth = sample_trial(config, trial, point.index, cache)
    x = truth.x_true
    xx = float(x @ x)
    out = []
    for name in config.estimators:
        try:
            est, case, nu = _estimate(name, inst, truth, opts)
        except (*NUMERIC_ERRORS, np.linalg.LinAlgError) as exc:
            out.append(MetricsRecord(trial, name, math.nan, math.nan, None, "error", None,
                                     point.index, f"{type(exc).__name__}: {exc}"))
            continue
        se = float(np.sum((est - x) ** 2))
        out.append(MetricsRecord(trial, name, se / xx if xx > 0 else math.nan, se, est,
                                 case, nu, point.index))
    return out


def worker_count() -> int:
    cap = os.environ.get("GRVML_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def _aggregate(config, point, records, x, H):
    est_summary = {}
    for name in config.estimators:
        rows = [r for r in records if r.estimator == name]
        ok = [r for r in rows if r.error is None]
        entry = {"trials": len(rows), "failures": len(rows) - len(ok)}
        if ok:
            nmse = np.array([r.nmse for r in ok])
            sq = np.array([r.squared_error for r in ok])
            mean_est = np.mean([r.estimate for r in ok], axis=0)
            entry.update(mean_nmse=float(nmse.mean()), median_nmse=float(np.median(nmse)),
                         mse=float(sq.mean()), bias=(mean_est - x).tolist())
        else:
            entry.update(mean_nmse=None, median_nmse=None, mse=None, bias=None)
        if name == "GRVML":
            cases = {}
            for r in ok:
                cases[r.case_tag] = cases.get(r.case_tag, 0) + 1
            entry["cases"] = cases
        est_summary[name] = entry
    summary = {"index": point.index, "param": point.param, "value": point.value, "M": point.M,
               "N": config.N, "sigma_e2": point.sigma_e2, "sigma_eps2": point.sigma_eps2,
               "estimators": est_summary}
    if config.emit_crb:
        bound = baselines.crb(H, x, point.sigma_e2, point.sigma_eps2, point.M)
        summary["crb_trace"] = bound.crb_trace
        summary["crb_well_posed"] = bound.well_posed
    return summary


def run_experiment(config: ExperimentConfig, workers: int | None = None,
                   opts: SolverOptions | None = None, progress=None) -> ExperimentResult:
    """Run every trial at every grid point; failures are recorded, not raised."""
    opts = opts or SolverOptions()
    workers = workers or worker_count()
    x = truth_x(config)
    records: list[MetricsRecord] = []
    points_summary = []
    failed_trials = 0
    for point in config.points():
        H = mean_matrix(config, point.M)
        cache = {point.M: (H, x)}
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                per_trial = list(pool.map(lambda t: _run_trial(config, point, t, cache, opts),
                                          range(config.trials)))
        else:
            per_trial = [_run_trial(config, point, t, cache, opts) for t in range(config.trials)]
        failed_trials += sum(any(r.error for r in rows) for rows in per_trial)
        point_records = [r for rows in per_trial for r in rows]
        records.extend(point_records)
        points_summary.append(_aggregate(config, point, point_records, x, H))
        if progress is not None:
            progress(point, len(points_summary), len(config.points()))
    total = config.trials * len(points_summary)
    cfg = asdict(config)
    summary = {"schema": SUMMARY_SCHEMA, "preset": config.preset, "seed": config.seed,
               "config": cfg, "x_true": x.tolist(),
               "rng": "PCG64 via SeedSequence(seed, spawn_key=(0,) x | (1, M) H | (2, point, trial) E, eps)",
               "points": points_summary, "total_trials": total, "failed_trials": failed_trials,
               "failure_rate": failed_trials / total}
    return ExperimentResult(config=config, records=records, summary=summary)


def _fmt(v):
    if v is None:
        return ""
    return repr(float(v))


def write_outputs(result: ExperimentResult, out_dir) -> tuple[Path, Path]:
    cfg = result.config
    out = Path(out_dir)
    stem = f"{cfg.preset}-{cfg.seed}"
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.summary.json"
    points = cfg.points()
    try:
        out.mkdir(parents=True, exist_ok=True)
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r in result.records:
                p = points[r.point]
                writer.writerow([r.trial, r.estimator, _fmt(r.nmse), _fmt(r.squared_error),
                                 r.case_tag, _fmt(r.nu_star), r.point, p.param, _fmt(p.value)])
        json_path.write_text(json.dumps(result.summary, indent=2, default=_json_default) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write experiment outputs to {out}: {exc}") from exc
    return csv_path, json_path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def with_trials(config: ExperimentConfig, trials: int) -> ExperimentConfig:
    return replace(config, trials=trials)
