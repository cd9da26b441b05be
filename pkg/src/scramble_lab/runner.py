"""Experiment orchestration: trajectory ensembles, aggregation, CSV/JSON output.

Every trajectory gets a sub-seed derived from ``(master_seed, L, p, index)``
so results do not depend on scheduling. Records are aggregated in sample
order after all tasks of an ensemble finish.
"""
from __future__ import annotations

import csv
import datetime as _dt
import functools
import json
import logging
import math
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    EnsembleSeries,
    FitResult,
    FssResult,
    collapse_points,
    ensemble_average,
    fss_scan,
    loglog_fit,
    saturation_drift,
)
from .choi import entropy_cd, equal_quadripartition, purity_cd, spatial_partition, tmi
from .config import ExperimentConfig
from .haar import HaarReference, haar_i3_reference, normalize_tmi
from .spin import ModelParams, build_hamiltonian, build_propagator
from .trajectory import Recorder, TrajectoryRecord, evolve, trajectory_seed

__all__ = [
    "ExperimentResult",
    "RecorderSpec",
    "read_saturation_table",
    "run_experiment",
    "run_fss_fit",
    "run_haar_ref",
    "run_purity_dynamics",
    "run_tmi_dynamics",
    "run_tmi_saturation",
    "run_tmi_spatial",
    "worker_count",
]

log = logging.getLogger(__name__)

SATURATION_SIGNIFICANCE = 3.0


@dataclass(frozen=True)
class RecorderSpec:
    """Picklable description of what a trajectory records."""

    kind: str  # "purity" | "tmi" | "spatial"
    stride: int
    extra_steps: tuple[int, ...] = ()
    r_values: tuple[int, ...] = ()
    reference: HaarReference | None = None

    def build(self, L: int) -> Recorder:
        if self.kind == "purity":
            obs = {"purity": purity_cd, "S_CD": entropy_cd}
        elif self.kind == "tmi":
            part = equal_quadripartition(L)
            ref = self.reference

            def obs_tmi(K):
                s = tmi(K, part, ref)
                out = {"i3": s.i3}
                if ref is not None:
                    out["tmi"] = s.i3_normalized
                return out

            obs = {"tmi": obs_tmi}
        elif self.kind == "spatial":
            parts = {r: spatial_partition(L, r) for r in self.r_values}
            ref = self.reference

            def obs_spatial(K):
                out = {}
                for r, part in parts.items():
                    s = tmi(K, part)
                    out[f"i3.r{r}"] = s.i3
                    if ref is not None:
                        out[f"tmi.r{r}"] = normalize_tmi(s.i3, ref, L=L)
                return out

            obs = {"spatial": obs_spatial}
        else:
            raise ValueError(f"unknown recorder kind {self.kind!r}")
        return Recorder(obs, stride=self.stride, extra_steps=self.extra_steps)


@functools.lru_cache(maxsize=8)
def _propagator(params: ModelParams):
    return build_propagator(build_hamiltonian(params), params.delta_t)


def _simulate(task) -> TrajectoryRecord:
    params, p, seed, n_steps, spec = task
    return evolve(params, p, seed, n_steps, spec.build(params.L), _propagator(params))


def worker_count(config: ExperimentConfig, L: int) -> int:
    """Workers allowed by the memory budget, capped by cores and the request.

    Each trajectory holds a handful of N_D x N_D complex work arrays; the
    estimate uses six of them plus a fixed 64 MiB interpreter overhead.
    """
    N = 2**L
    per_task = 6 * 16 * N * N + 64 * 1024**2
    cap = config.memory_budget_bytes // per_task
    if cap < 1:
        raise MemoryError(
            f"memory budget {config.memory_budget_bytes} B is below one L={L} trajectory (~{per_task} B)"
        )
    cores = os.cpu_count() or 1
    n = max(1, min(config.workers, cores, cap))
    if n < config.workers:
        log.warning("L=%d: running %d workers instead of %d (cores=%d, memory cap=%d)",
                    L, n, config.workers, cores, cap)
    return n


def _p_key(p: float) -> int:
    return int(round(p * 1e9))


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _tag(p: float, L: int) -> str:
    return f"p{p:g}_L{L}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    out_dir: Path
    records: dict[tuple[int, float], list[TrajectoryRecord]] = field(default_factory=dict)
    series: dict[tuple[str, int, float], EnsembleSeries] = field(default_factory=dict)
    fits: dict[tuple[int, float], FitResult] = field(default_factory=dict)
    table: dict[tuple[float, int], tuple[float, float, int]] = field(default_factory=dict)
    heatmaps: dict[tuple[int, float], dict[tuple[int, int], tuple[float, float, int]]] = field(default_factory=dict)
    saturation_checks: dict[tuple[int, float], dict] = field(default_factory=dict)
    references: dict[int, HaarReference] = field(default_factory=dict)
    fss: FssResult | None = None
    outputs: list[str] = field(default_factory=list)


class _Runner:
    def __init__(self, config: ExperimentConfig, reuse: bool = False):
        self.config = config
        self.reuse = reuse
        self.out = Path(config.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.result = ExperimentResult(config, self.out)
        self.seeds: dict[str, list[int]] = {}

    def reference(self, L: int) -> HaarReference:
        refs = self.result.references
        if L not in refs:
            c = self.config
            refs[L] = haar_i3_reference(L, c.haar_samples, c.haar_seed, cache_dir=c.haar_dir())
        return refs[L]

    def _records_path(self, L: int, p: float) -> Path:
        return self.out / "records" / f"records_{_tag(p, L)}.jsonl"

    def _load_cached(self, L: int, p: float, seeds: list[int]):
        path = self._records_path(L, p)
        meta = path.with_suffix(".meta.json")
        if not (self.reuse and path.exists() and meta.exists()):
            return None
        info = json.loads(meta.read_text())
        if info.get("fingerprint") != self.config.fingerprint():
            return None
        with open(path) as fh:
            recs = [TrajectoryRecord.from_json(json.loads(line)) for line in fh if line.strip()]
        if [r.seed for r in recs] != seeds:
            return None
        log.info("reusing %d cached trajectories for L=%d p=%g", len(recs), L, p)
        return recs

    def _save_records(self, L: int, p: float, recs: list[TrajectoryRecord]) -> None:
        if not self.config.save_records:
            return
        path = self._records_path(L, p)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for rec in recs:
                fh.write(json.dumps(rec.to_json(), separators=(",", ":")) + "\n")
        meta = path.with_suffix(".meta.json")
        meta.write_text(json.dumps({"fingerprint": self.config.fingerprint()}) + "\n")

    def ensemble(self, L: int, p: float, spec: RecorderSpec) -> list[TrajectoryRecord]:
        c = self.config
        params = c.model_params(L)
        n_steps = c.steps_for(L)
        seeds = [trajectory_seed(c.master_seed, L, _p_key(p), s) for s in range(c.samples_for(L))]
        self.seeds[_tag(p, L)] = seeds
        recs = self._load_cached(L, p, seeds)
        if recs is None:
            if p == 0.0:
                # no measurements: every sample is the same unitary trajectory
                base = _simulate((params, p, seeds[0], n_steps, spec))
                recs = [replace(base, seed=s, series={k: list(v) for k, v in base.series.items()}) for s in seeds]
            else:
                tasks = [(params, p, s, n_steps, spec) for s in seeds]
                n_workers = worker_count(c, L)
                if n_workers == 1:
                    recs = [_simulate(t) for t in tasks]
                else:
                    with ProcessPoolExecutor(n_workers) as pool:
                        recs = list(pool.map(_simulate, tasks, chunksize=1))
            self._save_records(L, p, recs)
        self.result.records[(L, p)] = recs
        aborted = [r.seed for r in recs if r.aborted]
        if aborted:
            log.warning("L=%d p=%g: %d aborted trajectories", L, p, len(aborted))
        return recs

    def write_series(self, name: str, series: EnsembleSeries, dt: float) -> None:
        path = self.out / f"series_{name}_{_tag(series.p, series.L)}.csv"
        rows = [
            (t, t * dt, m, e, series.n_samples)
            for t, m, e in zip(series.steps, series.mean, series.std_error)
        ]
        _write_csv(path, ["step", "t", "mean", "std_error", "n"], rows)
        self.result.outputs.append(path.name)

    def manifest(self, extra: dict | None = None) -> None:
        c = self.config
        logs = {}
        for (L, p), recs in sorted(self.result.records.items()):
            redraws = {str(r.seed): r.redraws for r in recs if r.redraws}
            aborted = {str(r.seed): r.aborted for r in recs if r.aborted}
            if redraws or aborted:
                logs[_tag(p, L)] = {"redraws": redraws, "aborted": aborted}
        data = {
            "config": c.to_dict(),
            "fingerprint": c.fingerprint(),
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "versions": {
                "scramble_lab": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
            "seeds": self.seeds,
            "haar_references": {str(L): r.to_json() for L, r in sorted(self.result.references.items())},
            "trajectory_logs": logs,
            "outputs": sorted(self.result.outputs),
        }
        if extra:
            data.update(extra)
        (self.out / "manifest.json").write_text(json.dumps(data, indent=2, default=str) + "\n")


def run_purity_dynamics(config: ExperimentConfig, reuse: bool = False) -> ExperimentResult:
    """Purity of the output half per p, with log-log fits of the ensemble mean."""
    run = _Runner(config, reuse)
    fit_rows = []
    for L in config.L:
        spec = RecorderSpec("purity", config.stride_for(L), tuple(config.extra_steps))
        for p in config.p_values:
            recs = run.ensemble(L, p, spec)
            for name in ("purity", "S_CD"):
                s = ensemble_average(recs, name)
                run.result.series[(name, L, p)] = s
                run.write_series(name, s, config.delta_t)
            try:
                fit = loglog_fit(run.result.series[("purity", L, p)], config.fit_t_min, config.fit_t_max)
            except ValueError as exc:
                log.info("L=%d p=%g: no log-log fit (%s)", L, p, exc)
                fit = FitResult(math.nan, math.nan, math.nan)
            run.result.fits[(L, p)] = fit
            fit_rows.append((p, L, fit.alpha, fit.beta, fit.r_squared))
    _write_csv(run.out / "fits.csv", ["p", "L", "alpha", "beta", "r2"], fit_rows)
    run.result.outputs.append("fits.csv")
    run.manifest()
    return run.result


def run_tmi_dynamics(config: ExperimentConfig, reuse: bool = False) -> ExperimentResult:
    """Haar-normalized TMI at the equal quadripartition, per p, over N_t steps."""
    run = _Runner(config, reuse)
    check_rows = []
    for L in config.L:
        ref = run.reference(L)
        spec = RecorderSpec("tmi", config.stride_for(L), tuple(config.extra_steps), reference=ref)
        for p in config.p_values:
            recs = run.ensemble(L, p, spec)
            for name in ("tmi", "i3"):
                s = ensemble_average(recs, name)
                run.result.series[(name, L, p)] = s
                run.write_series(name, s, config.delta_t)
            try:
                chk = saturation_drift(recs, "tmi")
            except ValueError as exc:
                log.info("L=%d p=%g: no saturation check (%s)", L, p, exc)
                continue
            chk["saturated"] = bool(chk["significance"] <= SATURATION_SIGNIFICANCE)
            run.result.saturation_checks[(L, p)] = chk
            check_rows.append((p, L, chk["drift"], chk["drift_error"], chk["significance"], int(chk["saturated"])))
    _write_csv(run.out / "saturation_check.csv",
               ["p", "L", "drift", "drift_error", "significance", "saturated"], check_rows)
    run.result.outputs.append("saturation_check.csv")
    run.manifest()
    return run.result


def run_tmi_saturation(config: ExperimentConfig, reuse: bool = False) -> ExperimentResult:
    """Table of -<normalized TMI> at t = N_t for every (p, L)."""
    run = _Runner(config, reuse)
    rows = []
    for L in config.L:
        ref = run.reference(L)
        n_steps = config.steps_for(L)
        extra = list(config.extra_steps)
        window = config.saturation_window
        if window:
            extra += range(math.ceil(n_steps * (1.0 - window)), n_steps + 1)
        spec = RecorderSpec("tmi", config.stride_for(L), tuple(sorted(set(extra))), reference=ref)
        for p in config.p_values:
            recs = sorted(run.ensemble(L, p, spec), key=lambda r: r.seed)
            vals = []
            for rec in recs:
                t, y = rec.values("tmi")
                if window:
                    t0 = n_steps * (1.0 - window)
                    sel = [v for tt, v in zip(t, y) if tt >= t0]
                    vals.append(-float(np.mean(sel)))
                else:
                    if t[-1] != n_steps:
                        raise RuntimeError(f"trajectory {rec.seed} ended early at step {t[-1]}")
                    vals.append(-y[-1])
            vals = np.array(vals)
            n = vals.size
            err = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
            run.result.table[(p, L)] = (float(vals.mean()), err, n)
            rows.append((p, L, float(vals.mean()), err, n))
    _write_csv(run.out / "saturation.csv", ["p", "L", "value", "std_error", "n"], rows)
    run.result.outputs.append("saturation.csv")
    run.manifest()
    return run.result


def run_tmi_spatial(config: ExperimentConfig, reuse: bool = False) -> ExperimentResult:
    """Averaged normalized TMI on the sliding partition, one (t, r) grid per p."""
    run = _Runner(config, reuse)
    for L in config.L:
        ref = run.reference(L)
        r_values = tuple(config.r_values) if config.r_values is not None else tuple(range(L - 3))
        spec = RecorderSpec("spatial", config.stride_for(L), tuple(config.extra_steps), r_values, ref)
        for p in config.p_values:
            recs = run.ensemble(L, p, spec)
            for name in ("tmi", "i3"):
                grid = {}
                rows = []
                for r in r_values:
                    s = ensemble_average(recs, f"{name}.r{r}")
                    run.result.series[(f"{name}.r{r}", L, p)] = s
                    for t, m, e in zip(s.steps, s.mean, s.std_error):
                        grid[(t, r)] = (m, e, s.n_samples)
                for (t, r) in sorted(grid):
                    m, e, n = grid[(t, r)]
                    rows.append((t, t * config.delta_t, r, m, e, n))
                if name == "tmi":
                    run.result.heatmaps[(L, p)] = grid
                fname = f"heatmap_{name}_{_tag(p, L)}.csv"
                _write_csv(run.out / fname, ["step", "t", "r", "mean", "std_error", "n"], rows)
                run.result.outputs.append(fname)
    run.manifest()
    return run.result


def run_haar_ref(config: ExperimentConfig, reuse: bool = False) -> ExperimentResult:
    run = _Runner(config, reuse)
    rows = []
    for L in config.L:
        ref = run.reference(L)
        rows.append((L, ref.mean_abs_i3, ref.std_error, ref.n_samples, ref.seed))
    _write_csv(run.out / "haar_reference.csv", ["L", "mean_abs_i3", "std_error", "n_samples", "seed"], rows)
    run.result.outputs.append("haar_reference.csv")
    run.manifest()
    return run.result


def read_saturation_table(path: str | Path) -> dict[tuple[float, int], tuple[float, float, int]]:
    table = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            table[(float(row["p"]), int(row["L"]))] = (
                float(row["value"]), float(row["std_error"]), int(row["n"])
            )
    return table


def _grid(spec, default):
    if spec is None:
        return default
    if len(spec) == 3:
        start, stop, step = spec
        n = int(round((stop - start) / step)) + 1
        return np.round(start + step * np.arange(n), 10)
    return np.asarray(spec, dtype=float)


def run_fss_fit(config: ExperimentConfig, table=None, reuse: bool = False) -> ExperimentResult:
    """Finite-size-scaling scan over a saturation table."""
    from .analysis import default_grid_nu, default_grid_pc

    run = _Runner(config, reuse)
    if table is None:
        src = config.saturation_file or (Path(config.output_dir) / "saturation.csv")
        table = read_saturation_table(src)
    if not table:
        raise ValueError("saturation table is empty")
    if config.fss_p_range is not None:
        lo, hi = config.fss_p_range
        table = {k: v for k, v in table.items() if lo <= k[0] <= hi}
    data = {k: (v[0], v[1]) for k, v in table.items()}
    res = fss_scan(
        data,
        _grid(config.grid_pc, default_grid_pc()),
        _grid(config.grid_nu, default_grid_nu()),
        weighted=config.fss_weighted,
    )
    run.result.table = dict(table)
    run.result.fss = res
    rows = [
        (pc, nu, res.r2_surface[i, j])
        for i, pc in enumerate(res.grid_pc)
        for j, nu in enumerate(res.grid_nu)
    ]
    _write_csv(run.out / "r2_surface.csv", ["p_c", "nu", "r2"], rows)
    _write_csv(run.out / "collapse.csv", ["x", "y", "L"], collapse_points(data, res.best_pc, res.best_nu))
    best = {
        "p_c": res.best_pc,
        "nu": res.best_nu,
        "r2": res.best_r2,
        "poly_coeffs": [float(c) for c in res.poly_coeffs],
        "x_center": res.x_center,
        "x_scale": res.x_scale,
        "n_points": len(data),
    }
    (run.out / "best_fit.json").write_text(json.dumps(best, indent=2) + "\n")
    run.result.outputs += ["r2_surface.csv", "collapse.csv", "best_fit.json"]
    run.manifest()
    return run.result


_DISPATCH = {
    "purity-dynamics": run_purity_dynamics,
    "tmi-dynamics": run_tmi_dynamics,
    "tmi-saturation": run_tmi_saturation,
    "tmi-spatial": run_tmi_spatial,
    "haar-ref": run_haar_ref,
    "fss-fit": run_fss_fit,
}


def run_experiment(config: ExperimentConfig, reuse: bool = False) -> ExperimentResult:
    return _DISPATCH[config.experiment](config, reuse=reuse)
