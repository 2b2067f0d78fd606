"""Command-line interface: stage-wise tools plus the sweep/report runners.

Every pipeline stage is runnable standalone on files for debugging:

    spectrum3d generate    synthetic truth grid from a scene
    spectrum3d sample      draw an observation set from a truth grid
    spectrum3d detect      estimate the source count from samples
    spectrum3d estimate    estimate source locations/powers from samples
    spectrum3d fit         self-learn the path-loss parameters
    spectrum3d reconstruct render a spectrum grid from sources + model
    spectrum3d evaluate    score an estimated grid against a truth grid
    spectrum3d sweep       full experiment sweep from a JSON config
    spectrum3d report      re-render figures from an existing results.csv

Exit codes: 0 success, 1 configuration error, 2 runtime failure (for sweeps:
all combinations failed), 3 partial sweep failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, experiment, figures, metrics, mmpld, plfit, sampler, sfla
from .experiment import ConfigError
from .scene import (Scene, load_scene, read_grid_binary, save_scene,
                    write_grid_binary, write_grid_csv)
from .synthgen import UrbanPlParams, generate_truth_grid, table1_scene

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3


def _add_scene_args(parser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--scene", type=Path, help="scene JSON file")
    group.add_argument("--table1-k", type=int, choices=(2, 3, 4),
                       help="bundled benchmark scene with this source count")


def _load_scene_arg(args) -> Scene:
    if args.scene is not None:
        return load_scene(args.scene)
    return table1_scene(args.table1_k)


def _load_sources_json(path):
    entries = json.loads(Path(path).read_text())
    return [
        sfla.SourceEstimate(e.get("eta", 1.0), tuple(e["position"]),
                            e["power_watts"])
        for e in entries
    ]


def _save_sources_json(sources, path):
    payload = [
        {"eta": s.eta, "position": list(s.position),
         "power_watts": s.power_watts}
        for s in sources
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def cmd_generate(args) -> int:
    scene = _load_scene_arg(args)
    params = UrbanPlParams(args.truth_a, args.truth_b, args.truth_sigma,
                           scene.frequency_mhz)
    grid = generate_truth_grid(scene, params, args.seed)
    write_grid_binary(grid, args.out)
    if args.csv:
        write_grid_csv(grid, args.csv)
    if args.save_scene:
        save_scene(scene, args.save_scene)
    print(f"wrote truth grid {grid.spec.shape} to {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    scene = _load_scene_arg(args)
    truth = read_grid_binary(args.grid, scene.grid)
    plan = sampler.SamplingPlan(args.rate, args.seed)
    samples, _ = sampler.draw_samples(truth, plan)
    sampler.save_samples_csv(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    samples = sampler.load_samples_csv(args.samples)
    result = mmpld.detect_source_count(
        samples, args.freq_mhz, thresholds=(args.sigma1, args.sigma2),
        k_max=args.k_max)
    if args.trace:
        mmpld.write_criterion_trace(result.state, args.trace)
    flag = " (degenerate-stop warning)" if result.warning else ""
    print(f"detected {result.k} sources{flag}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    scene = _load_scene_arg(args)
    samples = sampler.load_samples_csv(args.samples)
    if args.k is not None:
        k = args.k
        hints = None
    else:
        detection = mmpld.detect_source_count(samples, scene.frequency_mhz)
        k = detection.k
        hints = detection.state.positions[detection.state.centers]
        print(f"detected {k} sources")
    config = sfla.SflaConfig.for_grid(
        scene.grid, population=args.population, memeplexes=args.memeplexes,
        local_iters=args.local_iters, global_iters=args.global_iters,
        alpha=args.alpha, max_fitness_samples=args.max_fitness_samples,
        fitness_scale=args.fitness_scale, seed=args.seed)
    result = sfla.estimate_parameters(samples, k, config, position_hints=hints)
    sources = result.sources
    if not args.no_refine:
        sources, _ = sfla.refine_sources(samples, sources, config)
    sources = sfla.calibrate_powers(sources, config.alpha, scene.frequency_mhz)
    _save_sources_json(sources, args.out)
    if args.trace:
        sfla.write_fitness_trace(result.trace, args.trace)
    print(f"best fitness {result.fitness:.6g} after {result.iterations} "
          f"iterations; wrote {len(sources)} sources to {args.out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    scene = _load_scene_arg(args)
    samples = sampler.load_samples_csv(args.samples)
    sources = _load_sources_json(args.sources)
    result = plfit.fit_pl_params(samples, sources, scene.frequency_mhz,
                                 objective=args.objective)
    plfit.save_fit_result(result, args.out)
    p = result.params
    print(f"fitted A={p.a:.4g} B={p.b:.4g} sigma={p.sigma_db:.4g} dB "
          f"(residual norm {result.residual_norm:.4g})")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    scene = _load_scene_arg(args)
    sources = _load_sources_json(args.sources)
    if args.free_space:
        params = plfit.free_space_params(scene.frequency_mhz)
    elif args.params is not None:
        params = plfit.load_fit_params(args.params, scene.frequency_mhz)
    else:
        raise ConfigError("reconstruct needs --params or --free-space")
    grid = plfit.reconstruct_grid(scene.grid, sources, params)
    write_grid_binary(grid, args.out)
    if args.csv:
        write_grid_csv(grid, args.csv)
    print(f"wrote reconstructed grid to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scene = _load_scene_arg(args)
    est = read_grid_binary(args.est, scene.grid)
    truth = read_grid_binary(args.truth, scene.grid)
    truth_zones = metrics.zone_partition(truth, scene.sources, args.threshold)
    est_zones = metrics.zone_partition(est, scene.sources, args.threshold)
    zones = metrics.cdzr_fazr(est_zones, truth_zones)
    report_kwargs = dict(rmse=metrics.rmse(est, truth), cdzr=zones.cdzr,
                         fazr=zones.fazr, zone_skipped=zones.skipped,
                         k_true=len(scene.sources))
    if args.sources:
        sources = _load_sources_json(args.sources)
        report_kwargs.update(
            loc_e=metrics.loc_error(sources, scene.sources),
            ss_e=metrics.ss_error(sources, scene.sources),
            k_est=len(sources),
            detect_success=len(sources) == len(scene.sources))
    report = metrics.MetricsReport(**report_kwargs)
    print(json.dumps(report.to_dict(), indent=2))
    if args.out:
        report.to_json(args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = experiment.load_config(args.config)
    rows, aggregates = experiment.run_sweep(config, jobs=args.jobs)
    paths = experiment.write_sweep_outputs(config, rows, aggregates, args.out)
    if not args.no_figures:
        figures.emit_figures(rows, args.out)
    n_err = sum(1 for r in rows if r["status"] == "error")
    print(f"{len(rows)} rows ({n_err} failed) -> {paths['results']}")
    if n_err == len(rows):
        return EXIT_RUNTIME
    if n_err > 0:
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args) -> int:
    rows = experiment.read_rows_csv(args.results)
    written = figures.emit_figures(rows, args.out)
    print(f"wrote {len(written)} figure files to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectrum3d",
        description="3D radio spectrum map reconstruction from sparse RSS samples")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic truth grid")
    _add_scene_args(p)
    p.add_argument("--truth-a", type=float, default=2.5)
    p.add_argument("--truth-b", type=float, default=-0.1)
    p.add_argument("--truth-sigma", type=float, default=4.0,
                   help="shadow fading std in dB")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="binary grid dump")
    p.add_argument("--csv", type=Path, help="also dump as CSV")
    p.add_argument("--save-scene", type=Path,
                   help="write the resolved scene JSON here")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", help="draw random samples from a truth grid")
    _add_scene_args(p)
    p.add_argument("--grid", type=Path, required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("detect", help="detect the number of sources")
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--freq-mhz", type=float, default=100.0)
    p.add_argument("--sigma1", type=float, default=mmpld.DEFAULT_SIGMA1)
    p.add_argument("--sigma2", type=float, default=mmpld.DEFAULT_SIGMA2)
    p.add_argument("--k-max", type=int, default=mmpld.DEFAULT_K_MAX)
    p.add_argument("--trace", type=Path, help="write per-K criterion CSV")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("estimate", help="estimate source locations and powers")
    _add_scene_args(p)
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--k", type=int, help="source count (default: detect)")
    p.add_argument("--population", type=int, default=200)
    p.add_argument("--memeplexes", type=int, default=20)
    p.add_argument("--local-iters", type=int, default=10)
    p.add_argument("--global-iters", type=int, default=500)
    p.add_argument("--alpha", type=float, default=2.5)
    p.add_argument("--max-fitness-samples", type=int, default=None)
    p.add_argument("--fitness-scale", choices=("mw", "db"), default="mw")
    p.add_argument("--no-refine", action="store_true",
                   help="skip the simplex polish")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="sources JSON")
    p.add_argument("--trace", type=Path, help="write fitness trace CSV")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fit", help="self-learn path-loss parameters")
    _add_scene_args(p)
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--sources", type=Path, required=True)
    p.add_argument("--objective", choices=plfit.FIT_OBJECTIVES,
                   default="summed-pl")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reconstruct", help="render a grid from sources + model")
    _add_scene_args(p)
    p.add_argument("--sources", type=Path, required=True)
    p.add_argument("--params", type=Path,
                   help="fitted parameter JSON (from 'fit')")
    p.add_argument("--free-space", action="store_true",
                   help="use the fixed free-space model instead of --params")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="score a reconstruction against truth")
    _add_scene_args(p)
    p.add_argument("--est", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--sources", type=Path, help="estimated sources JSON")
    p.add_argument("--threshold", type=float,
                   default=metrics.DEFAULT_THRESHOLD_DBM)
    p.add_argument("--out", type=Path, help="write the metrics JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run a full experiment sweep")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render figures from results.csv")
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
