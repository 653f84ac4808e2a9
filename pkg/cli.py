"""
netcox command line: ingest | features | fit | bandwidth | simulate | gof | mc-validate

Usage:
    python cli.py ingest --trips data/trips.csv
    python cli.py features
    python cli.py fit --bandwidth 12
    python cli.py bandwidth --candidates 1..52 --target-kernel triangular
    python cli.py gof --n-sims 200 --seed 7

Every command writes its outputs to the paths in the run config (overridable
per option). Failures print a JSON error object on stderr and exit 1; usage
errors exit 2.
"""
import functools
import json
import logging
import os
import sys

import click
import numpy as np

from engine.bandwidth import ROUNDING_MODES, scored_cells, select_bandwidth
from engine.errors import NetcoxError
from engine.estimator import fit_curve, read_fits_csv, theta_from_frame, write_fits_csv, write_fits_json
from engine.features import stream_weekly_panel
from engine.ingest import ingest_trips, read_trips_csv, write_ingest
from engine.kernels import kernel_from_name
from engine.model import read_events_csv, read_panel_json, write_events_csv, write_panel_json
from engine.netstats import gof_bands
from engine.settings_store import load_config
from engine.simulation import design_panel, mc_normality_study, simulate_panel_counts, simulate_stream

logger = logging.getLogger("netcox")

_LOG_FORMAT = "%(asctime)s %(levelname)s: %(message)s"


class CandidateList(click.ParamType):
    """Integer bandwidth candidates: "1..52", "3,5,8" or a mix like "1..4,10"."""
    name = "candidates"

    def convert(self, value, param, ctx):
        if isinstance(value, (list, tuple)):
            return list(value)
        out = []
        for part in str(value).split(","):
            part = part.strip()
            if not part:
                continue
            try:
                if ".." in part:
                    lo, hi = (int(p) for p in part.split("..", 1))
                    out.extend(range(lo, hi + 1))
                else:
                    out.append(int(part))
            except ValueError:
                self.fail(f"{part!r} is not an integer or an 'a..b' range", param, ctx)
        if not out:
            self.fail("candidate list is empty", param, ctx)
        if min(out) < 1:
            self.fail("candidate bandwidths must be >= 1", param, ctx)
        return out


def _write_json(path, obj) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2)


def handled(command):
    """Map domain and IO failures to a JSON error on stderr and exit code 1."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return command(*args, **kwargs)
        except (NetcoxError, ValueError, OSError, KeyError) as e:
            error = {"error": type(e).__name__, "message": str(e), "command": ctx.info_name}
            direction = getattr(e, "direction", None)
            if direction is not None:
                error["direction"] = np.asarray(direction).tolist()
            click.echo(json.dumps(error), err=True)
            ctx.exit(1)
    return wrapper


def _config(ctx):
    return load_config(ctx.obj.get("config_path"))


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON run config (defaults to netcox.json next to the code).")
@click.option("--verbose", is_flag=True, help="Log solver iterations and skipped cells.")
@click.pass_context
def cli(ctx, config_path, verbose):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=_LOG_FORMAT,
                        stream=sys.stderr)
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


# ── ingest / features ───────────────────────────────────────────────────────────

@cli.command()
@click.option("--trips", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--events", "events_path", type=click.Path(dir_okay=False), default=None)
@click.option("--stations", "stations_path", type=click.Path(dir_okay=False), default=None)
@click.option("--rejects", "rejects_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@handled
def ingest(ctx, trips, events_path, stations_path, rejects_path):
    """Trips CSV -> events CSV + station sidecar + rejects report."""
    cfg = _config(ctx)
    trips = trips or cfg.paths["trips"]
    result = ingest_trips(read_trips_csv(trips, cfg.trip_columns), cfg.features.anchor_weekday)
    write_ingest(result, events_path or cfg.paths["events"], stations_path or cfg.paths["stations"],
                 rejects_path or cfg.paths["rejects"])
    click.echo(json.dumps({"events": len(result.stream), "stations": len(result.stations),
                           "rejects": result.reject_counts}))


@cli.command()
@click.option("--events", "events_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@handled
def features(ctx, events_path, out_path):
    """Events CSV -> weekly covariate panel JSON."""
    cfg = _config(ctx)
    stream = read_events_csv(events_path or cfg.paths["events"])
    panel = stream_weekly_panel(stream, cfg.features)
    write_panel_json(panel, out_path or cfg.paths["panel"])
    click.echo(json.dumps({"weeks": panel.n_cells, "records": len(panel.records),
                           "covariates": list(panel.covariate_names)}))


# ── fit / bandwidth ─────────────────────────────────────────────────────────────

@cli.command()
@click.option("--panel", "panel_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--bandwidth", type=click.FloatRange(min=0, min_open=True), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--json-out", "json_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the fits with full covariance as JSON.")
@click.pass_context
@handled
def fit(ctx, panel_path, bandwidth, out_path, json_path):
    """Local MLE curve over the evaluation cells -> fits CSV (theta and se columns)."""
    cfg = _config(ctx)
    panel = read_panel_json(panel_path or cfg.paths["panel"])
    h = bandwidth if bandwidth is not None else cfg.bandwidth
    if h == "auto":
        cv = select_bandwidth(panel, cfg.kernel, cfg.bandwidth_candidates, cfg.rounding, box=cfg.theta_box,
                              cfg=cfg.solver)
        h = cv.h_k
        logger.info("bandwidth 'auto' resolved to %d", h)
    cells = scored_cells(panel) if cfg.eval_cells == "all" else list(cfg.eval_cells)
    spec = cfg.model_spec(panel.q, h, cells)
    result = fit_curve(panel, spec, cfg.solver)
    if not result.fits:
        raise NetcoxError(f"no evaluation cell could be fitted ({len(result.errors)} failures)")
    write_fits_csv(result.fits, out_path or cfg.paths["fits"])
    if json_path:
        write_fits_json(result.fits, json_path, panel.covariate_names)
    click.echo(json.dumps({"bandwidth": h, "fitted": len(result.fits), "failed": len(result.errors)}))


@cli.command()
@click.option("--panel", "panel_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--candidates", type=CandidateList(), default=None,
              help='Integer bandwidths, e.g. "1..52" or "4,8,12".')
@click.option("--target-kernel", default=None, help="Two-sided kernel the bandwidth is transferred to.")
@click.option("--rounding", type=click.Choice(ROUNDING_MODES), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@handled
def bandwidth(ctx, panel_path, candidates, target_kernel, rounding, out_path):
    """One-sided CV bandwidth selection -> CvResult JSON."""
    cfg = _config(ctx)
    panel = read_panel_json(panel_path or cfg.paths["panel"])
    target = kernel_from_name(target_kernel) if target_kernel else cfg.kernel
    result = select_bandwidth(panel, target, candidates or cfg.bandwidth_candidates,
                              rounding or cfg.rounding, box=cfg.theta_box, cfg=cfg.solver)
    _write_json(out_path or cfg.paths["cv"], result.to_dict())
    click.echo(json.dumps({"h_l": result.h_l, "factor": result.factor, "h_k": result.h_k}))


# ── simulate / gof / mc-validate ────────────────────────────────────────────────

@cli.command()
@click.option("--kind", type=click.Choice(["stream", "panel"]), default="stream")
@click.option("--method", type=click.Choice(["auto", "direct", "thinning"]), default=None)
@click.option("--seed", type=click.IntRange(min=0), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.pass_context
@handled
def simulate(ctx, kind, method, seed, out_path):
    """Simulate the configured design -> events CSV (stream) or panel JSON (panel)."""
    cfg = _config(ctx)
    design = cfg.sim_design(seed)
    if kind == "stream":
        stream = simulate_stream(design, method or cfg.simulation["method"])
        write_events_csv(stream, out_path)
        click.echo(json.dumps({"events": len(stream)}))
    else:
        panel = simulate_panel_counts(design_panel(design), design.true_curve, design.seed)
        write_panel_json(panel, out_path)
        click.echo(json.dumps({"records": len(panel.records), "events": int(panel.records["count"].sum())}))


@cli.command()
@click.option("--panel", "panel_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--fits", "fits_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--cell", type=int, default=None, help="Target cell (default: last fitted cell).")
@click.option("--n-sims", type=click.IntRange(min=2), default=None)
@click.option("--seed", type=click.IntRange(min=0), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@handled
def gof(ctx, panel_path, fits_path, cell, n_sims, seed, out_path):
    """Simulation-based GOF bands on regime subnetworks -> GofReport JSON."""
    cfg = _config(ctx)
    panel = read_panel_json(panel_path or cfg.paths["panel"])
    fits = read_fits_csv(fits_path or cfg.paths["fits"])
    cell = int(fits["t0"].max()) if cell is None else cell
    theta = theta_from_frame(fits, cell)
    report = gof_bands(theta, panel, cell, cfg.regimes, n_sims or cfg.n_sims, cfg.quantiles,
                       cfg.seed if seed is None else seed)
    _write_json(out_path or cfg.paths["gof"], report.to_dict())
    click.echo(json.dumps({"cell": cell, "regimes": list(report.regimes)}))


@cli.command("mc-validate")
@click.option("--n-reps", type=click.IntRange(min=1), default=None)
@click.option("--bandwidth", type=click.FloatRange(min=0, min_open=True), default=6.0,
              help="Bandwidth in cells (6 spans 11 cells with the triangular kernel).")
@click.option("--seed", type=click.IntRange(min=0), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@handled
def mc_validate(ctx, n_reps, bandwidth, seed, out_path):
    """Monte Carlo coverage and normality study of the plug-in covariance -> study JSON."""
    cfg = _config(ctx)
    design = cfg.sim_design(seed)
    spec = cfg.model_spec(design.q, bandwidth)
    report = mc_normality_study(design, spec, cfg.solver, n_reps or cfg.simulation["n_reps"],
                                cfg.simulation["t0"])
    _write_json(out_path or cfg.paths["study"], report.to_dict())
    click.echo(json.dumps({"n_reps": report.n_reps, "n_excluded": report.n_excluded}))


if __name__ == "__main__":
    cli()
