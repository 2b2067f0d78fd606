"""Experiment configuration, the per-run pipeline, and the sweep runner.

A sweep walks the cartesian product of (scene, method, sampling rate, seed),
reconstructs the spectrum grid with each method, scores it against the
synthetic truth, and writes flat result rows plus per-(method, rate)
aggregates. Model-driven methods share one knowledge-extraction stage
(detection + estimation) per (scene, rate, seed), which is deterministic,
so cached and uncached runs agree exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, metrics, mmpld, plfit, sampler, sfla, synthgen
from .scene import Scene, SpectrumGrid, load_scene
from .synthgen import UrbanPlParams, table1_scene

METHODS = ("SLPM", "FSPM", "IDW", "HaLRTC")

RESULT_COLUMNS = [
    "scene", "k_true", "method", "rate", "seed", "status", "rmse", "cdzr",
    "fazr", "loc_e", "ss_e", "k_est", "detect_success", "fit_a", "fit_b",
    "fit_sigma_db", "error", "wall_time_s",
]
AGGREGATE_COLUMNS = [
    "scene", "k_true", "method", "rate", "n_runs", "rmse_mean", "rmse_std",
    "cdzr_mean", "fazr_mean", "loc_e_mean", "loc_e_std", "ss_e_mean",
    "ss_e_std", "detect_rate",
]


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneRef:
    """A scene plus the label used in result rows."""

    label: str
    scene: Scene


@dataclass
class ExperimentConfig:
    """Validated sweep settings with per-module hyperparameters."""

    scenes: list[SceneRef]
    rates: list[float]
    methods: list[str]
    seeds: list[int]
    truth_a: float = synthgen.DEFAULT_TRUTH_A
    truth_b: float = synthgen.DEFAULT_TRUTH_B
    truth_sigma_db: float = synthgen.DEFAULT_TRUTH_SIGMA_DB
    threshold_dbm: float = -20.0
    mmpld_sigma1: float = mmpld.DEFAULT_SIGMA1
    mmpld_sigma2: float = mmpld.DEFAULT_SIGMA2
    mmpld_k_max: int = mmpld.DEFAULT_K_MAX
    sfla_population: int = 200
    sfla_memeplexes: int = 20
    sfla_local_iters: int = 10
    sfla_global_iters: int = 500
    sfla_alpha: float = 2.5
    sfla_tol: float = 1e-6
    sfla_patience: int = 50
    sfla_power_max_watts: float = 10.0
    sfla_max_fitness_samples: int | None = None
    sfla_fitness_scale: str = "mw"
    sfla_refine: bool = True
    plfit_objective: str = "combined-rss"
    plfit_starts: int = 8
    plfit_bounds_a: tuple[float, float] = plfit.DEFAULT_BOUNDS_A
    plfit_bounds_b: tuple[float, float] = plfit.DEFAULT_BOUNDS_B
    plfit_max_samples: int | None = 4000
    plfit_refine_rounds: int = 2
    idw_power: float = 2.0
    idw_neighbors: int = 8
    halrtc_rho: float = 1e-4
    halrtc_rho_growth: float = 1.1
    halrtc_max_iters: int = 500
    halrtc_tol: float = 1e-6
    raw: dict = field(default_factory=dict)

    def truth_params(self, scene: Scene) -> UrbanPlParams:
        return UrbanPlParams(self.truth_a, self.truth_b, self.truth_sigma_db,
                             scene.frequency_mhz)

    def sfla_config(self, scene: Scene, seed: int) -> sfla.SflaConfig:
        return sfla.SflaConfig.for_grid(
            scene.grid,
            power_max_watts=self.sfla_power_max_watts,
            population=self.sfla_population,
            memeplexes=self.sfla_memeplexes,
            local_iters=self.sfla_local_iters,
            global_iters=self.sfla_global_iters,
            alpha=self.sfla_alpha,
            tol=self.sfla_tol,
            patience=self.sfla_patience,
            max_fitness_samples=self.sfla_max_fitness_samples,
            fitness_scale=self.sfla_fitness_scale,
            seed=seed,
        )

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(canon).hexdigest()[:16]


def _expect(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _resolve_scene_ref(entry, base_dir: Path, index: int) -> SceneRef:
    where = f"scenes[{index}]"
    if isinstance(entry, dict) and "table1_k" in entry:
        k = entry["table1_k"]
        _expect(k in (2, 3, 4), f"{where}.table1_k: must be 2, 3 or 4, got {k!r}")
        return SceneRef(f"table1_k{k}", table1_scene(k))
    if isinstance(entry, dict) and "file" in entry:
        path = Path(entry["file"])
        if not path.is_absolute():
            path = base_dir / path
        _expect(path.exists(), f"{where}.file: no such file {path}")
        return SceneRef(entry.get("label", path.stem), load_scene(path))
    raise ConfigError(f"{where}: expected an object with 'table1_k' or 'file'")


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build and validate a sweep configuration from parsed JSON."""
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a JSON object")

    scene_entries = raw.get("scenes")
    if scene_entries is None and "scene" in raw:
        scene_entries = [raw["scene"]]
    _expect(isinstance(scene_entries, list) and len(scene_entries) > 0,
            "scenes: need a non-empty list (or a single 'scene' object)")
    scenes = [_resolve_scene_ref(e, base_dir, i) for i, e in enumerate(scene_entries)]

    rates = raw.get("rates")
    _expect(isinstance(rates, list) and len(rates) > 0, "rates: need a non-empty list")
    for i, r in enumerate(rates):
        _expect(isinstance(r, (int, float)) and 0 < r <= 1,
                f"rates[{i}]: must be in (0, 1], got {r!r}")

    methods = raw.get("methods", list(METHODS))
    _expect(isinstance(methods, list) and len(methods) > 0,
            "methods: need a non-empty list")
    for i, m in enumerate(methods):
        _expect(m in METHODS, f"methods[{i}]: unknown method {m!r}, "
                              f"choose from {list(METHODS)}")

    seeds = raw.get("seeds")
    _expect(isinstance(seeds, list) and len(seeds) > 0, "seeds: need a non-empty list")
    for i, s in enumerate(seeds):
        _expect(isinstance(s, int), f"seeds[{i}]: must be an integer, got {s!r}")

    cfg = ExperimentConfig(scenes=scenes, rates=[float(r) for r in rates],
                           methods=list(methods), seeds=list(seeds), raw=raw)

    truth = raw.get("truth", {})
    _expect(isinstance(truth, dict), "truth: expected an object")
    cfg.truth_a = float(truth.get("A", cfg.truth_a))
    cfg.truth_b = float(truth.get("B", cfg.truth_b))
    cfg.truth_sigma_db = float(truth.get("sigma_db", cfg.truth_sigma_db))
    _expect(cfg.truth_sigma_db >= 0, "truth.sigma_db: must be nonnegative")

    met = raw.get("metrics", {})
    cfg.threshold_dbm = float(met.get("threshold_dbm", cfg.threshold_dbm))

    det = raw.get("mmpld", {})
    cfg.mmpld_sigma1 = float(det.get("sigma1", cfg.mmpld_sigma1))
    cfg.mmpld_sigma2 = float(det.get("sigma2", cfg.mmpld_sigma2))
    cfg.mmpld_k_max = int(det.get("k_max", cfg.mmpld_k_max))
    _expect(cfg.mmpld_k_max >= 1, "mmpld.k_max: must be >= 1")

    est = raw.get("sfla", {})
    cfg.sfla_population = int(est.get("population", cfg.sfla_population))
    cfg.sfla_memeplexes = int(est.get("memeplexes", cfg.sfla_memeplexes))
    cfg.sfla_local_iters = int(est.get("local_iters", cfg.sfla_local_iters))
    cfg.sfla_global_iters = int(est.get("global_iters", cfg.sfla_global_iters))
    cfg.sfla_alpha = float(est.get("alpha", cfg.sfla_alpha))
    cfg.sfla_tol = float(est.get("tol", cfg.sfla_tol))
    cfg.sfla_patience = int(est.get("patience", cfg.sfla_patience))
    cfg.sfla_power_max_watts = float(est.get("power_max_watts",
                                             cfg.sfla_power_max_watts))
    if "max_fitness_samples" in est:
        cap = est["max_fitness_samples"]
        cfg.sfla_max_fitness_samples = None if cap is None else int(cap)
    cfg.sfla_fitness_scale = est.get("fitness_scale", cfg.sfla_fitness_scale)
    cfg.sfla_refine = bool(est.get("refine", cfg.sfla_refine))
    _expect(cfg.sfla_fitness_scale in ("mw", "db"),
            "sfla.fitness_scale: must be 'mw' or 'db'")
    _expect(1 <= cfg.sfla_memeplexes <= cfg.sfla_population,
            "sfla: need population >= memeplexes >= 1")

    fit = raw.get("plfit", {})
    cfg.plfit_objective = fit.get("objective", cfg.plfit_objective)
    _expect(cfg.plfit_objective in plfit.FIT_OBJECTIVES,
            f"plfit.objective: choose from {list(plfit.FIT_OBJECTIVES)}")
    cfg.plfit_starts = int(fit.get("starts", cfg.plfit_starts))
    if "bounds_a" in fit:
        cfg.plfit_bounds_a = tuple(float(v) for v in fit["bounds_a"])
    if "bounds_b" in fit:
        cfg.plfit_bounds_b = tuple(float(v) for v in fit["bounds_b"])
    if "max_samples" in fit:
        cap = fit["max_samples"]
        cfg.plfit_max_samples = None if cap is None else int(cap)
    cfg.plfit_refine_rounds = int(fit.get("refine_rounds", cfg.plfit_refine_rounds))

    idw = raw.get("idw", {})
    cfg.idw_power = float(idw.get("power_exponent", cfg.idw_power))
    cfg.idw_neighbors = int(idw.get("neighbor_count", cfg.idw_neighbors))

    hal = raw.get("halrtc", {})
    cfg.halrtc_rho = float(hal.get("rho", cfg.halrtc_rho))
    cfg.halrtc_rho_growth = float(hal.get("rho_growth", cfg.halrtc_rho_growth))
    cfg.halrtc_max_iters = int(hal.get("max_iters", cfg.halrtc_max_iters))
    cfg.halrtc_tol = float(hal.get("tol", cfg.halrtc_tol))

    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return config_from_dict(raw, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Seed derivation
# ---------------------------------------------------------------------------

def derive_seed(*parts: int) -> int:
    """Stable child seed from integer key parts (numpy SeedSequence hashing)."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])


_STAGE_TRUTH, _STAGE_SAMPLE, _STAGE_SFLA = 11, 13, 17


def _rate_key(rate: float) -> int:
    return int(round(rate * 1_000_000))


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

@dataclass
class Extraction:
    """Shared knowledge-extraction output of the model-driven methods."""

    k_est: int
    detection: mmpld.DetectionResult
    sources: list[sfla.SourceEstimate]
    estimation: sfla.EstimationResult
    fit_samples: list


def make_truth(scene: Scene, config: ExperimentConfig, seed: int) -> SpectrumGrid:
    return synthgen.generate_truth_grid(scene, config.truth_params(scene),
                                        derive_seed(seed, _STAGE_TRUTH))


def make_samples(truth: SpectrumGrid, config: ExperimentConfig, rate: float,
                 seed: int):
    plan = sampler.SamplingPlan(rate, derive_seed(seed, _STAGE_SAMPLE,
                                                  _rate_key(rate)))
    return sampler.draw_samples(truth, plan)


def extract_knowledge(samples, scene: Scene, config: ExperimentConfig,
                      rate: float, seed: int) -> Extraction:
    """Detection plus estimation, shared by the SLPM and FSPM paths.

    The detection stage's cluster centers seed half the initial frog
    population, and the best genome gets a bounded simplex polish before
    the eta/power split is calibrated.
    """
    detection = mmpld.detect_source_count(
        samples, scene.frequency_mhz,
        thresholds=(config.mmpld_sigma1, config.mmpld_sigma2),
        k_max=config.mmpld_k_max,
    )
    hints = detection.state.positions[detection.state.centers]
    sfla_seed = derive_seed(seed, _STAGE_SFLA, _rate_key(rate))
    sfla_config = config.sfla_config(scene, sfla_seed)
    estimation = sfla.estimate_parameters(
        samples, detection.k, sfla_config, position_hints=hints
    )
    refined = estimation.sources
    if config.sfla_refine:
        refined, _ = sfla.refine_sources(samples, refined, sfla_config)
    sources = sfla.calibrate_powers(refined, config.sfla_alpha,
                                    scene.frequency_mhz)
    fit_samples = samples
    cap = config.plfit_max_samples
    if cap is not None and len(samples) > cap:
        rng = np.random.default_rng(derive_seed(seed, _STAGE_SFLA + 1,
                                                _rate_key(rate)))
        keep = rng.choice(len(samples), size=cap, replace=False)
        fit_samples = [samples[i] for i in keep]
    return Extraction(detection.k, detection, sources, estimation, fit_samples)


@dataclass
class PipelineResult:
    grid: SpectrumGrid
    report: metrics.MetricsReport
    extraction: Extraction | None = None
    fit: plfit.PlFitResult | None = None
    sources: list | None = None


def _position_box(scene: Scene) -> np.ndarray:
    lo = np.asarray(scene.grid.origin)
    return np.c_[lo, lo + np.asarray(scene.grid.extent)]


def _reconstruct_for_method(method: str, scene: Scene, config: ExperimentConfig,
                            samples, extraction: Extraction | None):
    """Returns (grid, fit_result_or_None, sources_used_or_None)."""
    if method == "IDW":
        grid = baselines.idw_reconstruct(
            samples, scene.grid,
            baselines.IdwConfig(config.idw_power, config.idw_neighbors))
        return grid, None, None
    if method == "HaLRTC":
        observed = sampler.samples_to_grid(samples, scene.grid)
        grid = baselines.halrtc_reconstruct(
            observed,
            baselines.HalrtcConfig(rho=config.halrtc_rho,
                                   rho_growth=config.halrtc_rho_growth,
                                   max_iters=config.halrtc_max_iters,
                                   tol=config.halrtc_tol))
        return grid, None, None
    if method == "FSPM":
        params = plfit.free_space_params(scene.frequency_mhz)
        grid = plfit.reconstruct_grid(scene.grid, extraction.sources, params)
        return grid, None, extraction.sources
    if method == "SLPM":
        sources, fit = plfit.fit_model_and_sources(
            extraction.fit_samples, extraction.sources, scene.frequency_mhz,
            _position_box(scene), config.sfla_power_max_watts,
            bounds=(config.plfit_bounds_a, config.plfit_bounds_b),
            objective=config.plfit_objective, n_starts=config.plfit_starts,
            rounds=config.plfit_refine_rounds)
        return plfit.reconstruct_grid(scene.grid, sources, fit.params), fit, sources
    raise ConfigError(f"unknown method {method!r}")


def run_pipeline(config: ExperimentConfig, method: str, rate: float, seed: int,
                 scene_ref: SceneRef | None = None,
                 _shared=None) -> PipelineResult:
    """Run one (method, rate, seed) combination end to end.

    Deterministic in its arguments; the optional ``_shared`` dict carries
    the truth/sample/extraction caches reused across methods in a sweep
    (identical results either way, since every stage is seeded).
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}, choose from {list(METHODS)}")
    ref = scene_ref if scene_ref is not None else config.scenes[0]
    scene = ref.scene
    shared = _shared if _shared is not None else {}

    t_key = (ref.label, seed)
    if t_key not in shared.setdefault("truth", {}):
        shared["truth"][t_key] = make_truth(scene, config, seed)
    truth = shared["truth"][t_key]

    s_key = (ref.label, rate, seed)
    if s_key not in shared.setdefault("samples", {}):
        shared["samples"][s_key] = make_samples(truth, config, rate, seed)
    samples, mask = shared["samples"][s_key]

    extraction = None
    if method in ("SLPM", "FSPM"):
        if s_key not in shared.setdefault("extraction", {}):
            shared["extraction"][s_key] = extract_knowledge(
                samples, scene, config, rate, seed)
        extraction = shared["extraction"][s_key]

    grid, fit, sources_used = _reconstruct_for_method(method, scene, config,
                                                      samples, extraction)

    truth_zones = metrics.zone_partition(truth, scene.sources, config.threshold_dbm)
    est_zones = metrics.zone_partition(grid, scene.sources, config.threshold_dbm)
    zones = metrics.cdzr_fazr(est_zones, truth_zones)
    report_kwargs = dict(
        rmse=metrics.rmse(grid, truth),
        cdzr=zones.cdzr, fazr=zones.fazr, zone_skipped=zones.skipped,
        k_true=len(scene.sources),
    )
    if sources_used is not None:
        report_kwargs.update(
            loc_e=metrics.loc_error(sources_used, scene.sources),
            ss_e=metrics.ss_error(sources_used, scene.sources),
            k_est=extraction.k_est,
            detect_success=extraction.k_est == len(scene.sources),
        )
    report = metrics.MetricsReport(**report_kwargs)
    return PipelineResult(grid, report, extraction, fit, sources_used)


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

def _result_row(ref: SceneRef, method: str, rate: float, seed: int,
                outcome, wall_time: float) -> dict:
    row = {c: "" for c in RESULT_COLUMNS}
    row.update(scene=ref.label, k_true=len(ref.scene.sources), method=method,
               rate=rate, seed=seed, wall_time_s=wall_time)
    if isinstance(outcome, Exception):
        row["status"] = "error"
        row["error"] = f"{type(outcome).__name__}: {outcome}"
        return row
    row["status"] = "ok"
    rep = outcome.report
    row.update(rmse=rep.rmse, cdzr=rep.cdzr, fazr=rep.fazr)
    if rep.loc_e is not None:
        row.update(loc_e=rep.loc_e, ss_e=rep.ss_e, k_est=rep.k_est,
                   detect_success=int(bool(rep.detect_success)))
    if outcome.fit is not None:
        row.update(fit_a=outcome.fit.params.a, fit_b=outcome.fit.params.b,
                   fit_sigma_db=outcome.fit.params.sigma_db)
    return row


def _run_group(args):
    """All methods for one (scene, rate, seed); the worker unit of a sweep."""
    config, ref, rate, seed = args
    shared = {}
    rows = []
    for method in config.methods:
        start = time.perf_counter()
        try:
            outcome = run_pipeline(config, method, rate, seed, ref, shared)
        except Exception as exc:   # noqa: BLE001 - recorded per row
            outcome = exc
        rows.append(_result_row(ref, method, rate, seed, outcome,
                                time.perf_counter() - start))
    return rows


def run_sweep(config: ExperimentConfig, jobs: int = 1):
    """Run the full cartesian product and return (rows, aggregates)."""
    groups = [
        (config, ref, rate, seed)
        for ref in config.scenes
        for rate in config.rates
        for seed in config.seeds
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            nested = list(pool.map(_run_group, groups))
    else:
        nested = [_run_group(g) for g in groups]
    rows = [row for group_rows in nested for row in group_rows]
    rows.sort(key=lambda r: (r["scene"], r["method"], r["rate"], r["seed"]))
    return rows, aggregate_rows(rows)


def _mean_std(values):
    if not values:
        return "", ""
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def aggregate_rows(rows) -> list[dict]:
    """Per (scene, method, rate) means/stds over seeds, ok rows only."""
    keys = sorted({(r["scene"], r["k_true"], r["method"], r["rate"])
                   for r in rows})
    aggregates = []
    for scene, k_true, method, rate in keys:
        ok = [r for r in rows
              if (r["scene"], r["method"], r["rate"]) == (scene, method, rate)
              and r["status"] == "ok"]
        agg = {c: "" for c in AGGREGATE_COLUMNS}
        agg.update(scene=scene, k_true=k_true, method=method, rate=rate,
                   n_runs=len(ok))
        if ok:
            agg["rmse_mean"], agg["rmse_std"] = _mean_std([r["rmse"] for r in ok])
            agg["cdzr_mean"], _ = _mean_std([r["cdzr"] for r in ok])
            agg["fazr_mean"], _ = _mean_std([r["fazr"] for r in ok])
            loc = [r["loc_e"] for r in ok if r["loc_e"] != ""]
            if loc:
                agg["loc_e_mean"], agg["loc_e_std"] = _mean_std(loc)
                agg["ss_e_mean"], agg["ss_e_std"] = _mean_std(
                    [r["ss_e"] for r in ok if r["ss_e"] != ""])
                hits = [r["detect_success"] for r in ok
                        if r["detect_success"] != ""]
                agg["detect_rate"] = float(np.mean(hits)) if hits else ""
        aggregates.append(agg)
    return aggregates


def _format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_rows_csv(rows, columns, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])


def read_rows_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_sweep_outputs(config: ExperimentConfig, rows, aggregates,
                        outdir) -> dict:
    """Write results.csv, aggregates.csv and the run manifest; return paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "results": outdir / "results.csv",
        "aggregates": outdir / "aggregates.csv",
        "manifest": outdir / "run_manifest.json",
    }
    write_rows_csv(rows, RESULT_COLUMNS, paths["results"])
    write_rows_csv(aggregates, AGGREGATE_COLUMNS, paths["aggregates"])
    manifest = {
        "config_hash": config.config_hash(),
        "n_rows": len(rows),
        "n_errors": sum(1 for r in rows if r["status"] == "error"),
        "methods": config.methods,
        "rates": config.rates,
        "seeds": config.seeds,
        "scenes": [ref.label for ref in config.scenes],
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2) + "\n")
    return paths
