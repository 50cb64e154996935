"""Command-line interface: ingest data, run experiments, emit reports."""
from __future__ import annotations

import os

import click

from . import experiment, plots
from .data import generate_synthetic, load_explicit_csv, load_implicit_csv, \
    write_id_maps, write_table_csv


def _load_config(path, seed_list, fixed_bins, n, alpha, groups):
    config = experiment.load_config(path)
    overrides = {}
    if seed_list:
        overrides["seeds"] = [int(s) for s in seed_list.split(",")]
    if fixed_bins is not None:
        overrides["fixed_bins"] = fixed_bins
    if n is not None:
        overrides["n"] = n
    if alpha is not None:
        overrides["alpha"] = alpha
    if groups is not None:
        overrides["n_groups"] = groups
    if overrides:
        from dataclasses import replace
        config = replace(config, **overrides)
    return config


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True), help="JSON experiment config.")(fn)
    fn = click.option("--out", "out_dir", default="out", show_default=True,
                      help="Output directory.")(fn)
    fn = click.option("--seed-list", default=None,
                      help="Comma-separated seeds overriding the config.")(fn)
    fn = click.option("--fixed-bins", default=None, type=int,
                      help="Fixed bin count (overrides adaptive binning).")(fn)
    fn = click.option("--n", default=None, type=int, help="Top-N cutoff override.")(fn)
    fn = click.option("--alpha", default=None, type=float,
                      help="Rank-discount exponent override.")(fn)
    fn = click.option("--groups", default=None, type=int,
                      help="Number of rank groups override.")(fn)
    return fn


@click.group()
def main():
    """Top-N focused calibration experiments for recommender predictions."""


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--kind", type=click.Choice(["explicit", "implicit"]), required=True)
@click.option("--rating-min", default=1.0, show_default=True)
@click.option("--rating-max", default=5.0, show_default=True)
@click.option("--out", "out_dir", default="out", show_default=True)
def ingest(path, kind, rating_min, rating_max, out_dir):
    """Load a feedback CSV, remap ids densely, write the canonical table."""
    if kind == "explicit":
        table = load_explicit_csv(path, rating_min=rating_min, rating_max=rating_max)
    else:
        table = load_implicit_csv(path)
    os.makedirs(out_dir, exist_ok=True)
    write_table_csv(table, os.path.join(out_dir, "interactions.csv"))
    write_id_maps(table, out_dir)
    click.echo(f"{len(table)} records, {table.n_users} users, {table.n_items} items "
               f"-> {out_dir}/interactions.csv")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default="out", show_default=True)
def synth(config_path, out_dir):
    """Generate the synthetic table declared in the config's dataset spec."""
    config = experiment.load_config(config_path)
    if config.dataset.get("kind") != "synthetic":
        raise click.UsageError("config dataset kind must be 'synthetic'")
    spec = experiment.synthetic_spec_from_dict(config.dataset.get("spec", {}))
    table, _ = generate_synthetic(spec)
    os.makedirs(out_dir, exist_ok=True)
    write_table_csv(table, os.path.join(out_dir, "interactions.csv"))
    click.echo(f"{len(table)} records -> {out_dir}/interactions.csv")


@main.command()
@_common_options
def run(config_path, out_dir, seed_list, fixed_bins, n, alpha, groups):
    """Run the experiment grid; writes results.csv and summary.csv."""
    config = _load_config(config_path, seed_list, fixed_bins, n, alpha, groups)
    rows, summary = experiment.run_experiment(config)
    experiment.write_results(out_dir, rows, summary)
    click.echo(f"{len(rows)} result rows -> {out_dir}/results.csv")


@main.command("sweep-n")
@_common_options
@click.option("--n-list", default="5,10,20,50,100", show_default=True,
              help="Comma-separated list lengths to sweep.")
def sweep_n(config_path, out_dir, seed_list, fixed_bins, n, alpha, groups, n_list):
    """Sweep the top-N cutoff; writes results, summary, and a figure."""
    config = _load_config(config_path, seed_list, fixed_bins, n, alpha, groups)
    n_values = [int(v) for v in n_list.split(",")]
    rows, summary = experiment.run_sweep_n(config, n_values)
    experiment.write_results(out_dir, rows, summary)
    plots.render_sweep(summary, "ece@n", os.path.join(out_dir, "sweep.png"))
    click.echo(f"{len(rows)} result rows -> {out_dir}/results.csv, sweep.png")


@main.command()
@_common_options
@click.option("--alpha-list", default="0,0.2,0.5,1,2,3", show_default=True)
@click.option("--groups-list", default="1,2,4,10,20", show_default=True)
def grid(config_path, out_dir, seed_list, fixed_bins, n, alpha, groups,
         alpha_list, groups_list):
    """TNF sensitivity grid over alpha x n_groups; writes heatmap.csv/png."""
    config = _load_config(config_path, seed_list, fixed_bins, n, alpha, groups)
    alphas = [float(v) for v in alpha_list.split(",")]
    group_counts = [int(v) for v in groups_list.split(",")]
    cells = experiment.run_sensitivity_grid(config, alphas, group_counts)
    os.makedirs(out_dir, exist_ok=True)
    experiment.write_csv(os.path.join(out_dir, "heatmap.csv"),
                         ("alpha", "n_groups", "calibrator", "metric", "value"), cells)
    for metric in ("ece@n", "rdece@n"):
        name = metric.replace("@", "_at_")
        plots.render_heatmap(cells, metric, os.path.join(out_dir, f"heatmap_{name}.png"))
    click.echo(f"{len(cells)} cells -> {out_dir}/heatmap.csv")


@main.command()
@_common_options
@click.option("--seed", default=0, show_default=True)
@click.option("--strategy", default="original", show_default=True,
              type=click.Choice(["vanilla", "original"]))
@click.option("--calibrator", default=None, help="Calibrator kind (default: first in config).")
def diagrams(config_path, out_dir, seed_list, fixed_bins, n, alpha, groups,
             seed, strategy, calibrator):
    """Reliability diagram and rank-based calibration plot for one seed."""
    config = _load_config(config_path, seed_list, fixed_bins, n, alpha, groups)
    points, hists, rank_rows = experiment.diagram_data(config, seed, strategy, calibrator)
    os.makedirs(out_dir, exist_ok=True)
    point_rows = [dict(p, kind="point", bin_lo=float("nan"), bin_hi=float("nan"))
                  for p in points]
    hist_rows = [dict(h, kind="hist", mean_prediction=float("nan"),
                      mean_label=float("nan")) for h in hists]
    experiment.write_csv(os.path.join(out_dir, "reliability.csv"),
                         ("series", "kind", "mean_prediction", "mean_label",
                          "count", "bin_lo", "bin_hi"),
                         point_rows + hist_rows)
    experiment.write_csv(os.path.join(out_dir, "rankplot.csv"),
                         ("rank_lo", "rank_hi", "mean_prediction", "mean_label",
                          "count"), rank_rows)
    table, _ = experiment.load_dataset(config.dataset)
    plots.render_reliability(points, hists, os.path.join(out_dir, "reliability.png"),
                             label_range=table.label_range)
    plots.render_rankplot(rank_rows, os.path.join(out_dir, "rankplot.png"))
    click.echo(f"diagrams -> {out_dir}/reliability.csv, rankplot.csv (+ PNGs)")


if __name__ == "__main__":
    main()
