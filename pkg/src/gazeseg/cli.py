"""Command line entry points: simulate, run, report, overlay."""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np
from scipy import ndimage

from . import config as cfgmod
from . import netpbm, report as reportmod
from .errors import ConfigError, DataError, GazesegError
from .pipeline import (
    DiskDataset,
    GazeSeries,
    parse_gaze_csv,
    parse_gaze_filename,
    replay_frame,
    run_experiment,
    trace_dump,
    trace_load,
)
from .simulator import (
    emit_scenario,
    mice_like_scenario,
    rats_like_scenario,
    scenario_from_manifest,
)


def _exit_on_error(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GazesegError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


@click.group()
def main():
    """Gaze-prompted segmentation refinement toolkit."""


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(), help="Scenario TOML.")
@click.option("--profile", type=click.Choice(["rats", "mice"]), default="rats")
@click.option("--seed", type=int, default=0)
@click.option("--duration", type=int, default=None, help="Override frame count.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_exit_on_error
def simulate(scenario_path, profile, seed, duration, out_dir):
    """Emit a synthetic scenario file tree with ground truth."""
    if scenario_path:
        doc = cfgmod.load_config_file(scenario_path)
        cfg = scenario_from_manifest(doc)
        if duration:
            from dataclasses import replace

            cfg = replace(cfg, duration=duration)
    else:
        make = rats_like_scenario if profile == "rats" else mice_like_scenario
        cfg = make(seed=seed, duration=duration or 900)
    emit_scenario(cfg, out_dir)
    click.echo(f"wrote {cfg.duration} frames to {out_dir}")


@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--gaze", "gaze_glob", default=None, help="Gaze CSV path or glob.")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--les", is_flag=True, default=None)
@click.option("--kf", is_flag=True, default=None)
@click.option("--dar", is_flag=True, default=None)
@click.option("--grid", type=click.Choice(["isolation", "combination"]), default=None,
              help="Run a whole method grid instead of one flag combination.")
@click.option("--alpha", type=float, default=None)
@click.option("--les-n", type=int, default=None)
@click.option("--les-r", type=float, default=None)
@click.option("--dar-peaks", type=int, default=None)
@click.option("--dar-r", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--participant", default=None, help="Participant label for the results.")
@click.option("--run", "run_label", default=None, help="Run label for the results.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_exit_on_error
def run(data_dir, gaze_glob, config_path, les, kf, dar, grid, alpha, les_n, les_r,
        dar_peaks, dar_r, seed, participant, run_label, out_dir):
    """Process a dataset with one method combination (or a grid) and
    write results.csv plus per-run trace logs."""
    data_dir = Path(data_dir)
    dataset = DiskDataset(data_dir)
    doc = cfgmod.load_config_file(config_path)
    overrides = {
        "les": les, "kf": kf, "dar": dar, "alpha": alpha, "les_n": les_n,
        "les_radius": les_r, "dar_peaks": dar_peaks, "dar_radius": dar_r,
        "seed": seed, "profile": dataset.profile,
    }
    base = cfgmod.build_pipeline_config(
        doc, dataset.manifest.get("defaults"), overrides
    )
    arena_h = cfgmod.build_arena_homography(doc, data_dir, dataset.resolution)
    if arena_h is not None:
        from dataclasses import replace

        base = replace(base, arena_h=arena_h)
    seg, depth = cfgmod.build_providers(doc, data_dir)

    if gaze_glob:
        paths = sorted(data_dir.glob(gaze_glob)) if any(c in gaze_glob for c in "*?[") \
            else [Path(gaze_glob)]
        if not paths:
            raise DataError(f"no gaze files match {gaze_glob!r}")
        series_list = []
        for p in paths:
            pp, rr, obj = parse_gaze_filename(p.name)
            series_list.append(GazeSeries(
                participant=participant or pp,
                run=run_label or rr,
                object_id=obj,
                rows=parse_gaze_csv(Path(p).read_text()),
            ))
    else:
        series_list = dataset.gaze_series()
        if participant or run_label:
            from dataclasses import replace

            series_list = [
                replace(s, participant=participant or s.participant,
                        run=run_label or s.run)
                for s in series_list
            ]

    if grid == "isolation":
        from .pipeline import isolation_grid

        configs = isolation_grid(base)
    elif grid == "combination":
        from .pipeline import combination_grid

        configs = combination_grid(base)
    else:
        configs = [base]

    results, traces = run_experiment(dataset, series_list, configs, seg, depth)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(reportmod.results_csv(results))
    for key, records in sorted(traces.items()):
        (out / f"trace_{key}.jsonl").write_text(trace_dump(records))
    click.echo(f"wrote {len(results)} run results to {out / 'results.csv'}")


@main.command()
@click.option("--in", "in_dir", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["isolation", "combination"]),
              default="isolation")
@click.option("--format", "fmt", type=click.Choice(["md", "csv"]), default="md")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@_exit_on_error
def report(in_dir, mode, fmt, out_dir):
    """Render the results table (markdown or CSV) and a summary figure."""
    in_dir = Path(in_dir)
    out = Path(out_dir) if out_dir else in_dir
    out.mkdir(parents=True, exist_ok=True)
    csv_path = in_dir / "results.csv"
    if not csv_path.exists():
        raise DataError(f"no results.csv in {in_dir}")
    results = reportmod.parse_results_csv(csv_path.read_text())
    if fmt == "md":
        text = reportmod.render_tables(results, mode)
        (out / "report.md").write_text(text)
        click.echo(text)
    else:
        (out / "report.csv").write_text(reportmod.results_csv(results))
    reportmod.plot_results(results, out / "report.png", mode)
    click.echo(f"figure written to {out / 'report.png'}")


@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--results", "results_dir", type=click.Path(exists=True), required=True)
@click.option("--trace", "trace_name", default=None,
              help="Trace file to render (default: first one).")
@click.option("--limit", type=int, default=None, help="Render at most N frames.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_exit_on_error
def overlay(data_dir, results_dir, trace_name, limit, out_dir):
    """Figure-style PPM frames with mask contour and prompt marker."""
    data_dir = Path(data_dir)
    results_dir = Path(results_dir)
    dataset = DiskDataset(data_dir)
    seg, depth = cfgmod.build_providers({}, data_dir)

    if trace_name:
        trace_path = results_dir / trace_name
    else:
        candidates = sorted(results_dir.glob("trace_*.jsonl"))
        if not candidates:
            raise DataError(f"no trace logs in {results_dir}")
        trace_path = candidates[0]
    records = trace_load(trace_path.read_text())
    header, frames = records[0], records[1:]
    flags = header["flags"]
    from .pipeline import PipelineConfig

    cfg = PipelineConfig(
        enable_les="les" in flags,
        enable_kf="kf" in flags,
        enable_dar="dar" in flags,
        seed=header["seed"],
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if limit:
        frames = frames[:limit]
    for record in frames:
        t = record["frame"]
        gray = netpbm.read_gray(
            (data_dir / (netpbm.FRAME_PATTERN % t)).read_bytes()
        ).intensity
        rgb = np.stack([gray] * 3, axis=-1)
        mask = replay_frame(record, header, dataset, cfg, seg, depth)
        contour = mask.bits & ~ndimage.binary_erosion(mask.bits)
        rgb[contour] = (0, 255, 0)
        prompt = record.get("prompt")
        if prompt is not None:
            h, w = gray.shape
            x = min(max(int(round(prompt[0])), 0), w - 1)
            y = min(max(int(round(prompt[1])), 0), h - 1)
            rgb[max(0, y - 3) : y + 4, x, :] = (255, 0, 0)
            rgb[y, max(0, x - 3) : x + 4, :] = (255, 0, 0)
        (out / f"overlay_{t:06d}.ppm").write_bytes(netpbm.write_ppm(rgb))
    click.echo(f"wrote {len(frames)} overlay frames to {out}")


if __name__ == "__main__":
    main()
