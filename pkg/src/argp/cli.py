"""Command line for field generation, mapping runs, benchmarks and planning.

Subcommands: ``world gen``, ``map run``, ``map dump``, ``bench table1``,
``plan greedy``.  Outputs are written atomically.  Exit codes: 0 on
success, 2 for invalid usage or configuration (with the JSON path of the
violation), 1 for runtime failures (structured error on stderr).
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import bench as bench_mod
from .config import ConfigError, build_experiment, load_config
from .fileio import atomic_write_lines, atomic_write_text
from .planning import SyntheticTimes
from .world import generate_grf, load_csv, save_csv

SEED_ENV = "ARGP_SEED"


def _resolve_seed(seed, cfg) -> int:
    if seed is not None:
        return int(seed)
    if os.environ.get(SEED_ENV):
        return int(os.environ[SEED_ENV])
    return int(cfg["seeds"])


def _load(config_path, **overrides) -> dict:
    clean = {}
    for key, val in overrides.items():
        if val is None:
            continue
        node = clean
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = val
    return load_config(config_path, clean)


@click.group()
def cli():
    """Adaptive-resolution Gaussian-process terrain mapping experiments."""


# --------------------------------------------------------------------- world

@cli.group()
def world():
    """Ground-truth field generation and inspection."""


@world.command("gen")
@click.option("--seed", type=int, default=None,
              help=f"Field seed (falls back to ${SEED_ENV}, then the config).")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output CSV path (sidecar .meta.json written alongside).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Experiment config JSON.")
@click.option("--extent", type=float, default=None, show_default="20.0",
              help="Square side length in meters.")
@click.option("--resolution", type=float, default=None, show_default="0.1",
              help="Fine-grid resolution in meters.")
@click.option("--sigma2", type=float, default=None, show_default="0.25",
              help="Field kernel signal variance.")
@click.option("--length-scale", type=float, default=None, show_default="2.36",
              help="Field kernel length scale in meters.")
def world_gen(seed, out, config_path, extent, resolution, sigma2, length_scale):
    """Generate a seeded random ground-truth field normalized to [0, 1]."""
    cfg = _load(config_path, **{
        "extent_m": extent, "resolution_m": resolution,
        "kernel.sigma2": sigma2, "kernel.length_scale": length_scale,
    })
    exp = build_experiment(cfg)
    fld = generate_grf(_resolve_seed(seed, cfg), exp.extent, exp.resolution, exp.hyper)
    save_csv(fld, out)
    click.echo(f"wrote {out} ({fld.values.shape[0]}x{fld.values.shape[1]}, "
               f"generator={fld.metadata['generator']})")


# ----------------------------------------------------------------------- map

@cli.group(name="map")
def map_group():
    """Mapping missions over a ground-truth field."""


_MAP_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                 help="Experiment config JSON."),
    click.option("--method", type=click.Choice(["argp", "fr", "gpr", "indep"]),
                 default=None, show_default="argp", help="Mapping method."),
    click.option("--field", "field_path", type=click.Path(exists=True, dir_okay=False),
                 help="Ground-truth CSV (default: generate from the seed)."),
    click.option("--seed", type=int, default=None,
                 help=f"Trial seed (falls back to ${SEED_ENV}, then the config)."),
    click.option("--leaves-per-axis", type=int, default=None, show_default="32",
                 help="Full-depth map resolution per axis."),
    click.option("--synthetic-time", is_flag=True,
                 help="Log fixed synthetic mapping times instead of wall time."),
]


def _map_options(fn):
    for opt in reversed(_MAP_OPTIONS):
        fn = opt(fn)
    return fn


def _run_map_mission(config_path, method, field_path, seed, leaves_per_axis,
                     synthetic_time):
    cfg = _load(config_path, **{
        "method": method, "tree.leaves_per_axis": leaves_per_axis,
    })
    exp = build_experiment(cfg)
    seed = _resolve_seed(seed, cfg)
    if field_path:
        fld = load_csv(field_path)
    else:
        fld = generate_grf(seed, exp.extent, exp.resolution, exp.hyper)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    synthetic = SyntheticTimes() if synthetic_time else None
    return bench_mod.run_mapping_mission(exp, fld, rng, synthetic=synthetic)


@map_group.command("run")
@_map_options
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Per-step mission log CSV.")
@click.option("--metrics", "metrics_path", type=click.Path(dir_okay=False), default=None,
              help="Final metrics JSON.")
@click.option("--dump-map", "dump_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the final map snapshot JSON here.")
@click.option("--cov", "cov_mode", type=click.Choice(["full", "diag"]), default="full",
              show_default=True, help="Covariance detail in the snapshot.")
def map_run(config_path, method, field_path, seed, leaves_per_axis, synthetic_time,
            out, metrics_path, dump_path, cov_mode):
    """Run a lawnmower mapping mission and write its log and metrics."""
    log, snapshot, metrics = _run_map_mission(
        config_path, method, field_path, seed, leaves_per_axis, synthetic_time)
    if out:
        log.to_csv(out)
    if metrics_path:
        atomic_write_text(metrics_path, json.dumps(metrics, indent=2))
    if dump_path:
        _write_snapshot(snapshot, dump_path, cov_mode)
    click.echo(json.dumps(metrics))


@map_group.command("dump")
@_map_options
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Map snapshot JSON path.")
@click.option("--cov", "cov_mode", type=click.Choice(["full", "diag"]), default="full",
              show_default=True, help="Covariance detail in the snapshot.")
def map_dump(config_path, method, field_path, seed, leaves_per_axis, synthetic_time,
             out, cov_mode):
    """Run a mapping mission and write only the final map snapshot."""
    _, snapshot, metrics = _run_map_mission(
        config_path, method, field_path, seed, leaves_per_axis, synthetic_time)
    _write_snapshot(snapshot, out, cov_mode)
    click.echo(f"wrote {out} ({metrics['leaf_count_final']} cells)")


def _write_snapshot(snapshot: dict, path, cov_mode: str) -> None:
    if cov_mode == "diag" and "cov" in snapshot:
        cov = snapshot.pop("cov")
        snapshot["cov_diag"] = [cov[i][i] for i in range(len(cov))]
    atomic_write_text(path, json.dumps(snapshot))


# --------------------------------------------------------------------- bench

@cli.group()
def bench():
    """Seeded comparison benchmarks."""


@bench.command("table1")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--sizes", default="16,32,64", show_default=True,
              help="Comma-separated full-depth map sizes per axis.")
@click.option("--methods", default="argp,fr,gpr,indep", show_default=True,
              help="Comma-separated mapping methods to compare.")
@click.option("--trials", type=int, default=30, show_default=True,
              help="Seeded fields per (size, method) cell.")
@click.option("--seed", type=int, default=None,
              help=f"Base seed (falls back to ${SEED_ENV}, then the config).")
@click.option("--out", type=click.Path(dir_okay=False), default="table1_results.csv",
              show_default=True, help="Per-trial results CSV.")
@click.option("--summary", "summary_path", type=click.Path(dir_okay=False), default=None,
              help="Mean/std summary JSON.")
@click.option("--jobs", type=int, default=0, show_default="all cores",
              help="Parallel trial workers (1 disables the pool).")
@click.option("--synthetic-time", is_flag=True,
              help="Report fixed synthetic mapping times (bitwise-reproducible CSV).")
@click.option("--slow", is_flag=True, help="Include GPR at the 64x64 size.")
def bench_table1(config_path, sizes, methods, trials, seed, out, summary_path, jobs,
                 synthetic_time, slow):
    """Mapping comparison sweep: accuracy, update time and memory per method."""
    cfg = _load(config_path)
    exp = build_experiment(cfg)
    table_cfg = bench_mod.Table1Config(
        sizes=tuple(int(s) for s in sizes.split(",") if s),
        methods=tuple(m.strip() for m in methods.split(",") if m),
        trials=trials,
        base_seed=_resolve_seed(seed, cfg),
        extent=exp.extent,
        resolution=exp.resolution,
        hyper=exp.hyper,
        prior_mean=exp.prior_mean,
        sensor=exp.sensor,
        merge=exp.merge,
        synthetic_mapping_ms=1.0 if synthetic_time else None,
        allow_slow=slow,
        jobs=jobs if jobs > 0 else (os.cpu_count() or 1),
    )
    results = bench_mod.run_table1(table_cfg)
    bench_mod.write_results_csv(results, out)
    click.echo(f"wrote {out} ({len(results)} trials)")
    if summary_path:
        atomic_write_text(summary_path, json.dumps(bench_mod.summarize(results), indent=2))
        click.echo(f"wrote {summary_path}")


# ---------------------------------------------------------------------- plan

@cli.group()
def plan():
    """Informative path planning experiments."""


@plan.command("greedy")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--map", "map_method", type=click.Choice(["argp", "fr"]), default="argp",
              show_default=True, help="Map backend driving the planner.")
@click.option("--budget", type=float, default=100.0, show_default=True,
              help="Mission time budget in seconds.")
@click.option("--trials", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=None,
              help=f"Base seed (falls back to ${SEED_ENV}, then the config).")
@click.option("--prior-mean", type=float, default=0.7, show_default=True,
              help="Optimistic prior mean that encourages exploration.")
@click.option("--out-dir", type=click.Path(file_okay=False), default="missions",
              show_default=True, help="Directory for per-trial mission CSVs.")
@click.option("--synthetic-time", is_flag=True,
              help="Use fixed synthetic planning/mapping times in the budget.")
@click.option("--jobs", type=int, default=1, show_default=True)
def plan_greedy(config_path, map_method, budget, trials, seed, prior_mean, out_dir,
                synthetic_time, jobs):
    """Greedy budgeted missions; logs hotspot uncertainty against time."""
    cfg = _load(config_path, **{
        "method": map_method,
        "planner.budget_s": budget,
        "prior_mean": prior_mean,
    })
    exp = build_experiment(cfg)
    plan_cfg = bench_mod.PlanningConfig(
        methods=(map_method,),
        trials=trials,
        base_seed=_resolve_seed(seed, cfg),
        size=exp.tree.leaves_per_axis,
        extent=exp.extent,
        resolution=exp.resolution,
        hyper=exp.hyper,
        prior_mean=exp.prior_mean,
        sensor=exp.sensor,
        merge=exp.merge,
        planner=exp.planner,
        synthetic=SyntheticTimes() if synthetic_time else None,
        jobs=jobs,
    )
    missions = bench_mod.run_planning_experiment(plan_cfg)
    out = Path(out_dir)
    for (method, trial), log in sorted(missions.items()):
        log.to_csv(out / f"mission_{method}_{trial:03d}.csv")
    atomic_write_lines(out / "timeseries.csv", bench_mod.planning_timeseries_lines(missions))
    atomic_write_text(out / "summary.json",
                      json.dumps(bench_mod.planning_summary(missions), indent=2))
    click.echo(f"wrote {len(missions)} mission logs under {out}")


def main(argv=None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except ConfigError as exc:
        click.echo(f"invalid config at {exc.json_path}: {exc}", err=True)
        return 2
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return 1
    except Exception as exc:  # runtime failure: structured error, exit 1
        click.echo(json.dumps({"error": str(exc), "type": type(exc).__name__}), err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
