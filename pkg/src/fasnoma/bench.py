"""Seeded Monte Carlo sweeps over transmit SNR or antenna count.

Outputs of ``run_experiment`` (all deterministic for a fixed config except
``timings.csv``):

``trials.csv``    one row per (sweep point, trial, method)
``summary.csv``   per (sweep point, method): count, mean, median, std and 95% CI
                  of ``max(0, R_s)``, feasible fraction
``manifest.json`` config echo, config hash, per-trial seed keys
``timings.csv``   wall time per row of ``trials.csv``

Seeds: trial ``i`` at sweep index ``j`` uses
``numpy.random.SeedSequence(base_seed, spawn_key=(j, i))`` for the channel and
``spawn_key=(j, i, 1)`` for method-internal randomness (RPA layouts).  Every
method at a given (j, i) sees the same channel realization.
"""

from __future__ import annotations

import csv
import glob
import hashlib
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .ao import AoOptions, AoResult, optimize
from .baselines import BaselineKind, run_fpa, run_oma, run_rpa
from .geometry import default_params, sample_realization

SWEEP_AXES = ("power_ratio_db", "num_antennas")
METHODS = tuple(k.value for k in BaselineKind if k is not BaselineKind.GRID_ORACLE)
TRIAL_COLUMNS = ["sweep_axis", "sweep_index", "sweep_value", "trial", "seed_key", "method",
                 "R_s", "status", "feasible", "outer_iterations", "solves", "logged_solves"]
SUMMARY_COLUMNS = ["sweep_axis", "sweep_value", "method", "count", "mean", "median", "std",
                   "ci95_low", "ci95_high", "feasible_fraction"]
_Z95 = statistics.NormalDist().inv_cdf(0.975)


@dataclass
class ExperimentConfig:
    sweep_axis: str
    sweep_values: List[float]
    methods: List[str] = field(default_factory=lambda: ["FAS-NOMA"])
    num_trials: int = 10
    base_seed: int = 0
    params: Dict = field(default_factory=dict)
    ao: Dict = field(default_factory=dict)
    rpa_draws: int = 1
    name: str = "experiment"
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {SWEEP_AXES}, got {self.sweep_axis!r}")
        if not self.sweep_values:
            raise ValueError("sweep_values must be non-empty")
        if not self.methods:
            raise ValueError("methods must be non-empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if self.num_trials < 1:
            raise ValueError("num_trials must be >= 1")
        if self.sweep_axis in self.params:
            raise ValueError(f"{self.sweep_axis!r} is the sweep axis and cannot also be fixed in params")
        allowed = set(AoOptions.__dataclass_fields__) - {"initial_layout", "initial_beams"}
        bad = set(self.ao) - allowed
        if bad:
            raise ValueError(f"unknown ao options {sorted(bad)}")
        if self.sweep_axis == "num_antennas":
            self.sweep_values = [int(v) for v in self.sweep_values]
        else:
            self.sweep_values = [float(v) for v in self.sweep_values]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        sweep = d.pop("sweep", None)
        if sweep is not None:
            d["sweep_axis"] = sweep["axis"]
            d["sweep_values"] = list(sweep["values"])
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("output_dir", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def point_params(self, value):
        kw = dict(self.params)
        kw[self.sweep_axis] = value
        return default_params(**kw)


def seed_sequence(base_seed: int, sweep_index: int, trial: int, stream: int = 0) -> np.random.SeedSequence:
    key = (sweep_index, trial) if stream == 0 else (sweep_index, trial, stream)
    return np.random.SeedSequence(base_seed, spawn_key=key)


def _run_method(method: str, realization, params, rng, ao: AoOptions, rpa_draws: int) -> AoResult:
    if method == BaselineKind.FAS_NOMA.value:
        return optimize(realization, params, ao)
    if method == BaselineKind.FPA.value:
        return run_fpa(realization, params, ao)
    if method == BaselineKind.RPA.value:
        return run_rpa(realization, params, rng, num_draws=rpa_draws, options=ao)
    if method == BaselineKind.OMA_FAS.value:
        return run_oma(realization, params, ao)
    raise ValueError(method)


def run_trial(config: ExperimentConfig, sweep_index: int, trial: int):
    """All methods on one shared realization; returns ``(rows, wall_times)``."""
    value = config.sweep_values[sweep_index]
    params = config.point_params(value)
    realization = sample_realization(params, seed_sequence(config.base_seed, sweep_index, trial))
    ao = AoOptions(**config.ao)
    rows, times = [], []
    for method in config.methods:
        rng = np.random.default_rng(seed_sequence(config.base_seed, sweep_index, trial, 1))
        row = {"sweep_axis": config.sweep_axis, "sweep_index": sweep_index, "sweep_value": value,
               "trial": trial, "seed_key": f"{config.base_seed}:{sweep_index}:{trial}", "method": method}
        try:
            res = _run_method(method, realization, params, rng, ao, config.rpa_draws)
        except Exception as exc:  # recorded, not fatal
            row.update(R_s=math.nan, status=f"error:{type(exc).__name__}", feasible=False,
                       outer_iterations=0, solves=0, logged_solves=0)
            rows.append(row)
            times.append(0.0)
            continue
        feasible = res.status != "init_failed" and bool(res.flags) and all(
            v for k, v in res.flags.items() if k != "slot2")
        row.update(R_s=res.secrecy_rate, status=res.status, feasible=feasible,
                   outer_iterations=res.outer_iterations, solves=res.stats.solves,
                   logged_solves=res.stats.logged)
        rows.append(row)
        times.append(res.wall_time)
    return rows, times


def _trial_job(args):
    config_dict, j, i = args
    return run_trial(ExperimentConfig.from_dict(config_dict), j, i)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _check_writable(out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, ".write_probe")
    with open(probe, "w") as fh:
        fh.write("")
    os.remove(probe)


@dataclass
class ExperimentOutput:
    out_dir: str
    trials_path: str
    summary_path: str
    manifest_path: str
    timings_path: str
    rows: List[dict]
    summary: List[dict]


def run_experiment(config: ExperimentConfig, out_dir: Optional[str] = None, workers: int = 1,
                   progress=None) -> ExperimentOutput:
    out_dir = out_dir or config.output_dir
    if not out_dir:
        raise ValueError("no output directory given")
    _check_writable(out_dir)

    jobs = [(config.to_dict(), j, i) for j in range(len(config.sweep_values)) for i in range(config.num_trials)]
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, res in enumerate(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (8 * workers)))):
                results.append(res)
                if progress:
                    progress(k + 1, len(jobs))
    else:
        for k, job in enumerate(jobs):
            results.append(_trial_job(job))
            if progress:
                progress(k + 1, len(jobs))

    rows, timing_rows = [], []
    for job_rows, times in results:
        for r, t in zip(job_rows, times):
            rows.append(r)
            timing_rows.append({**{c: r[c] for c in ("sweep_index", "trial", "method")}, "wall_time": t})

    paths = {name: os.path.join(out_dir, name) for name in
             ("trials.csv", "summary.csv", "manifest.json", "timings.csv")}
    write_csv(paths["trials.csv"], TRIAL_COLUMNS, rows)
    write_csv(paths["timings.csv"], ["sweep_index", "trial", "method", "wall_time"], timing_rows)
    summary = summarize_rows(rows)
    write_csv(paths["summary.csv"], SUMMARY_COLUMNS, summary)
    manifest = {
        "format": "fasnoma-run/1",
        "version": __version__,
        "config": config.to_dict(),
        "config_sha256": config.digest(),
        "seed_scheme": "numpy.random.SeedSequence(base_seed, spawn_key=(sweep_index, trial[, 1]))",
        "trials": [{"sweep_index": j, "trial": i, "seed_key": f"{config.base_seed}:{j}:{i}"}
                   for _, j, i in jobs],
    }
    with open(paths["manifest.json"], "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return ExperimentOutput(out_dir, paths["trials.csv"], paths["summary.csv"], paths["manifest.json"],
                            paths["timings.csv"], rows, summary)


def _clamped(r: float) -> float:
    return 0.0 if math.isnan(r) else max(0.0, r)


def _stats(values: List[float]) -> dict:
    xs = sorted(values)
    n = len(xs)
    mean = math.fsum(xs) / n
    std = math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / (n - 1)) if n > 1 else 0.0
    half = _Z95 * std / math.sqrt(n)
    return {"count": n, "mean": mean, "median": statistics.median(xs), "std": std,
            "ci95_low": mean - half, "ci95_high": mean + half}


def summarize_rows(rows: Iterable[dict]) -> List[dict]:
    """Aggregate trial rows per (axis, sweep value, method); failed trials count as ``R_s = 0``."""
    groups: Dict[tuple, list] = {}
    for r in rows:
        key = (r["sweep_axis"], float(r["sweep_value"]), r["method"])
        groups.setdefault(key, []).append(r)
    out = []
    for (axis, value, method), rs in sorted(groups.items()):
        st = _stats([_clamped(float(r["R_s"])) for r in rs])
        feas = sum(1 for r in rs if _truthy(r["feasible"])) / len(rs)
        out.append({"sweep_axis": axis, "sweep_value": value, "method": method, **st,
                    "feasible_fraction": feas})
    return out


def _truthy(v) -> bool:
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true")


def read_trials(path) -> List[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for c in header:
            if c not in TRIAL_COLUMNS:
                raise ValueError(f"{path}: unexpected column {c!r}")
        for c in TRIAL_COLUMNS:
            if c not in header:
                raise ValueError(f"{path}: missing column {c!r}")
        rows = list(reader)
    for k, r in enumerate(rows):
        for c in ("sweep_value", "R_s"):
            try:
                float(r[c])
            except (TypeError, ValueError):
                raise ValueError(f"{path}: row {k + 2}: column {c!r} is not a number: {r[c]!r}") from None
    return rows


def summarize(paths: Sequence[str], out_path: Optional[str] = None) -> List[dict]:
    """Summaries recomputed from one or more trial CSVs (``paths`` may contain glob patterns)."""
    files = []
    for p in paths:
        hits = sorted(glob.glob(p))
        if not hits:
            raise FileNotFoundError(f"no trial files match {p!r}")
        files.extend(hits)
    rows = [r for f in files for r in read_trials(f)]
    summary = summarize_rows(rows)
    if out_path:
        write_csv(out_path, SUMMARY_COLUMNS, summary)
    return summary
