"""Reproducible multi-seed experiment pipeline.

Wires dataset -> split -> recommender -> calibration strategy -> metrics and
collects one result row per (seed, strategy, calibrator, metric). All
randomness is derived from the config seeds, so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .calibrate import NONPARAMETRIC_KINDS, PARAMETRIC_KINDS
from .data import (EXPLICIT, IMPLICIT, InteractionTable, RankDistortion, SyntheticSpec,
                   SyntheticTruth, generate_synthetic, load_explicit_csv,
                   load_implicit_csv, split)
from .errors import ConfigError, FitError, TrainingError
from .recommend import FixedScoreModel, fit_bpr, fit_itemknn, fit_mf
from .strategy import (SampleSet, VanillaStrategy, build_calibration_samples,
                       fit_original, fit_tnf, fit_vad)

STRATEGIES = ("vanilla", "original", "vad", "tnf")

RESULT_COLUMNS = ("seed", "recommender", "calibrator", "strategy", "metric", "n", "value")


@dataclass
class ExperimentConfig:
    dataset: dict
    recommender: dict
    calibrators: list = field(default_factory=lambda: ["isotonic"])
    strategies: list = field(default_factory=lambda: ["vanilla", "original", "tnf"])
    n: int = 20
    n_groups: int | None = None       # default: one group per 5 ranks
    alpha: float = 1.0
    ensemble_size: int = 5
    lam: float = 1.0
    seeds: list = field(default_factory=lambda: list(range(10)))
    m_max: int | None = None
    fixed_bins: int | None = None
    hist_bins: int = 15

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}")
        for c in self.calibrators:
            if c not in NONPARAMETRIC_KINDS + PARAMETRIC_KINDS:
                raise ConfigError(f"unknown calibrator {c!r}")
        needs_cal = [s for s in self.strategies if s != "vanilla"]
        if needs_cal and not self.calibrators:
            raise ConfigError("calibrated strategies require at least one calibrator")
        if not self.strategies:
            raise ConfigError("at least one strategy required")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**raw)


# ---------------------------------------------------------------------------
# dataset / recommender construction

def load_dataset(dcfg: dict) -> tuple[InteractionTable, SyntheticTruth | None]:
    kind = dcfg.get("kind")
    if kind == "explicit_csv":
        table = load_explicit_csv(dcfg["path"], rating_min=dcfg.get("rating_min", 1.0),
                                  rating_max=dcfg.get("rating_max", 5.0))
        return table, None
    if kind == "implicit_csv":
        return load_implicit_csv(dcfg["path"]), None
    if kind == "synthetic":
        spec = synthetic_spec_from_dict(dcfg.get("spec", {}))
        return generate_synthetic(spec)
    raise ConfigError(f"unknown dataset kind {kind!r}")


def synthetic_spec_from_dict(raw: dict) -> SyntheticSpec:
    raw = dict(raw)
    dist = raw.pop("distortion", None)
    spec = SyntheticSpec(**raw)
    if dist is not None:
        spec = replace(spec, distortion=RankDistortion(**dist))
    return spec


def fit_recommender(rcfg: dict, train: InteractionTable, seed: int,
                    truth: SyntheticTruth | None = None):
    kind = rcfg.get("kind")
    if kind == "itemknn":
        return fit_itemknn(train, k=rcfg.get("k", 50))
    if kind == "mf":
        return fit_mf(train, factors=rcfg.get("factors", 16),
                      epochs=rcfg.get("epochs", 30), lr=rcfg.get("lr", 0.01),
                      reg=rcfg.get("reg", 0.02), seed=seed)
    if kind == "bpr":
        return fit_bpr(train, factors=rcfg.get("factors", 16),
                       epochs=rcfg.get("epochs", 30), lr=rcfg.get("lr", 0.01),
                       reg=rcfg.get("reg", 0.02), seed=seed)
    if kind == "fixed":
        if truth is None:
            raise ConfigError("fixed recommender requires a synthetic dataset")
        return FixedScoreModel(scores=truth.score)
    raise ConfigError(f"unknown recommender kind {kind!r}")


def _task_ranges(table: InteractionTable, model):
    """(score_range, output_range) for calibrator fitting on this task."""
    if table.kind == EXPLICIT:
        return model.score_range, (table.rating_min, table.rating_max)
    return model.score_range, (0.0, 1.0)


def _allowed_calibrators(table: InteractionTable, requested):
    """Parametric calibrators target [0,1] probabilities; the rating task
    keeps only the non-parametric ones."""
    if table.kind == EXPLICIT:
        bad = [c for c in requested if c in PARAMETRIC_KINDS]
        if bad:
            raise ConfigError(
                f"calibrators {bad} need binary labels; the rating task supports "
                f"only {list(NONPARAMETRIC_KINDS)}")
    return list(requested)


# ---------------------------------------------------------------------------
# per-seed pipeline

@dataclass
class SeedArtifacts:
    seed: int
    model: object
    val_samples: SampleSet
    test_samples: SampleSet


def prepare_seed(config: ExperimentConfig, table: InteractionTable,
                 truth: SyntheticTruth | None, seed: int) -> SeedArtifacts:
    assign = split(table, seed)
    train = table.subset(assign.train, "train")
    model = fit_recommender(config.recommender, train, seed, truth)
    val = build_calibration_samples(model, table, assign.validation, tag="validation")
    test = build_calibration_samples(model, table, assign.test, tag="test")
    return SeedArtifacts(seed, model, val, test)


def _vad_factory(config, table, seed, truth):
    assign = split(table, seed)
    train = table.subset(assign.train, "train")
    return lambda member_seed: fit_recommender(config.recommender, train, member_seed, truth)


def fit_strategy(config: ExperimentConfig, art: SeedArtifacts, strategy: str,
                 calibrator: str | None, table: InteractionTable,
                 truth: SyntheticTruth | None = None, n_cutoff: int | None = None):
    n_cutoff = config.n if n_cutoff is None else n_cutoff
    score_range, output_range = _task_ranges(table, art.model)
    common = dict(score_range=score_range, output_range=output_range,
                  n_bins=config.hist_bins)
    if strategy == "vanilla":
        return VanillaStrategy(score_range)
    if strategy == "original":
        return fit_original(art.val_samples, calibrator, **common)
    if strategy == "tnf":
        return fit_tnf(art.val_samples, n_cutoff, config.n_groups, config.alpha,
                       calibrator, **common)
    if strategy == "vad":
        factory = _vad_factory(config, table, art.seed, truth)
        return fit_vad(art.val_samples, n_cutoff, factory,
                       ensemble_size=config.ensemble_size, lam=config.lam,
                       kind=calibrator, **common)
    raise ConfigError(f"unknown strategy {strategy!r}")


def _bin_count(config, yhat, y):
    if config.fixed_bins is not None:
        return min(config.fixed_bins, len(yhat))
    return metrics.adaptive_bin_count(yhat, y, config.m_max)


def _calibration_rows(config, strat, strategy, calibrator, art, table, n_cutoff):
    rows = []
    test_top = art.test_samples.top_n(n_cutoff)
    yhat = strat.predict(test_top.scores, test_top.ranks)
    m = _bin_count(config, yhat, test_top.labels)
    rows.append((art.seed, strategy, calibrator, "ece@n", n_cutoff,
                 metrics.ece(yhat, test_top.labels, m)))
    rows.append((art.seed, strategy, calibrator, "rdece@n", n_cutoff,
                 metrics.rdece_at_n(yhat, test_top.labels, test_top.ranks, n_cutoff)))
    if strategy in ("vanilla", "original"):
        # conventional all-items ECE is only defined for strategies that
        # calibrate every rank
        y_all = strat.predict(art.test_samples.scores, art.test_samples.ranks)
        m_all = _bin_count(config, y_all, art.test_samples.labels)
        rows.append((art.seed, strategy, calibrator, "ece", 0,
                     metrics.ece(y_all, art.test_samples.labels, m_all)))
    return rows


def _accuracy_rows(config, art, table):
    """Ranking/regression accuracy from raw scores; identical across
    calibration strategies by construction."""
    rows = []
    test = art.test_samples
    if table.kind == EXPLICIT:
        rows.append((art.seed, "-", "-", "rmse", 0, metrics.rmse(test.scores, test.labels)))
    else:
        rows.append((art.seed, "-", "-", "auc", 0, metrics.auc(test.scores, test.labels)))
        per_user = [test.labels[test.users == u]
                    for u in np.unique(test.users)]
        rows.append((art.seed, "-", "-", "ndcg@n", config.n,
                     metrics.ndcg_at_n(per_user, config.n)))
    return rows


def _cells(config):
    for strategy in config.strategies:
        if strategy == "vanilla":
            yield strategy, "-"
        else:
            for calibrator in config.calibrators:
                yield strategy, calibrator


def run_experiment(config: ExperimentConfig):
    """Run the full grid; returns (result_rows, summary_rows) as dict lists."""
    table, truth = load_dataset(config.dataset)
    _allowed_calibrators(table, config.calibrators)
    rkind = config.recommender.get("kind", "?")
    rows = []
    for seed in config.seeds:
        art = prepare_seed(config, table, truth, seed)
        for _, s, c, metric, n, value in _accuracy_rows(config, art, table):
            rows.append(_row(seed, rkind, c, s, metric, n, value))
        for strategy, calibrator in _cells(config):
            try:
                strat = fit_strategy(config, art, strategy,
                                     None if calibrator == "-" else calibrator,
                                     table, truth)
                cell = _calibration_rows(config, strat, strategy, calibrator,
                                         art, table, config.n)
            except (ConfigError, FitError, TrainingError):
                rows.append(_row(seed, rkind, calibrator, strategy, "error", config.n,
                                 math.nan))
                continue
            for _, s, c, metric, n, value in cell:
                rows.append(_row(seed, rkind, c, s, metric, n, value))
    return rows, summarize(rows)


def _row(seed, recommender, calibrator, strategy, metric, n, value):
    return {"seed": seed, "recommender": recommender, "calibrator": calibrator,
            "strategy": strategy, "metric": metric, "n": n, "value": value}


def summarize(rows):
    """Mean and standard deviation across seeds per result cell."""
    groups = {}
    for r in rows:
        key = (r["recommender"], r["calibrator"], r["strategy"], r["metric"], r["n"])
        groups.setdefault(key, []).append(r["value"])
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        vals = np.array(groups[key], dtype=np.float64)
        out.append({"recommender": key[0], "calibrator": key[1], "strategy": key[2],
                    "metric": key[3], "n": key[4],
                    "mean": float(np.nanmean(vals)) if not np.isnan(vals).all() else math.nan,
                    "std": float(np.nanstd(vals)) if not np.isnan(vals).all() else math.nan,
                    "n_seeds": int(np.sum(~np.isnan(vals)))})
    return out


# ---------------------------------------------------------------------------
# sweeps

def run_sweep_n(config: ExperimentConfig, n_list=(5, 10, 20, 50, 100)):
    """ECE@N / RDECE@N across several list lengths; the recommender fit is
    shared across N, TNF is refit per N (its grouping depends on N)."""
    table, truth = load_dataset(config.dataset)
    _allowed_calibrators(table, config.calibrators)
    rkind = config.recommender.get("kind", "?")
    rows = []
    for seed in config.seeds:
        art = prepare_seed(config, table, truth, seed)
        for n_cutoff in n_list:
            for strategy, calibrator in _cells(config):
                try:
                    strat = fit_strategy(config, art, strategy,
                                         None if calibrator == "-" else calibrator,
                                         table, truth, n_cutoff=n_cutoff)
                    cell = _calibration_rows(config, strat, strategy, calibrator,
                                             art, table, n_cutoff)
                except (ConfigError, FitError, TrainingError):
                    rows.append(_row(seed, rkind, calibrator, strategy, "error",
                                     n_cutoff, math.nan))
                    continue
                for _, s, c, metric, n, value in cell:
                    if metric == "ece":
                        continue  # N-independent, reported by `run`
                    rows.append(_row(seed, rkind, c, s, metric, n, value))
    return rows, summarize(rows)


def run_sensitivity_grid(config: ExperimentConfig, alpha_list, groups_list):
    """TNF hyperparameter grid; one mean metric per (alpha, n_groups) cell."""
    table, truth = load_dataset(config.dataset)
    _allowed_calibrators(table, config.calibrators)
    calibrator = config.calibrators[0]
    arts = [prepare_seed(config, table, truth, seed) for seed in config.seeds]
    cells = []
    for alpha in alpha_list:
        for n_groups in groups_list:
            cell_cfg = replace(config, alpha=alpha, n_groups=n_groups)
            per_seed = {"ece@n": [], "rdece@n": []}
            failed = False
            for art in arts:
                try:
                    strat = fit_strategy(cell_cfg, art, "tnf", calibrator, table, truth)
                    for _, _, _, metric, _, value in _calibration_rows(
                            cell_cfg, strat, "tnf", calibrator, art, table, config.n):
                        if metric in per_seed:
                            per_seed[metric].append(value)
                except (ConfigError, FitError, TrainingError):
                    failed = True
                    break
            for metric in ("ece@n", "rdece@n"):
                vals = per_seed[metric]
                cells.append({"alpha": alpha, "n_groups": n_groups, "metric": metric,
                              "calibrator": calibrator,
                              "value": math.nan if failed or not vals
                              else float(np.mean(vals))})
    return cells


# ---------------------------------------------------------------------------
# diagram data

def diagram_data(config: ExperimentConfig, seed: int, strategy: str = "original",
                 calibrator: str | None = None):
    """Reliability-diagram and rank-plot series for one seed.

    Needs a strategy defined at every rank, so only vanilla and original
    qualify.
    """
    if strategy not in ("vanilla", "original"):
        raise ConfigError("diagrams need predictions at every rank; "
                          "use strategy vanilla or original")
    table, truth = load_dataset(config.dataset)
    if calibrator is None and strategy == "original":
        calibrator = _allowed_calibrators(table, config.calibrators)[0]
    art = prepare_seed(config, table, truth, seed)
    strat = fit_strategy(config, art, strategy, calibrator, table, truth)
    test = art.test_samples
    yhat = strat.predict(test.scores, test.ranks)
    topn = (test.ranks >= 1) & (test.ranks <= config.n)

    lo, hi = table.label_range
    series = {"all": np.ones(len(test), dtype=bool), "topn": topn, "outside": ~topn}
    points = []
    hists = []
    for name, mask in series.items():
        if not mask.any():
            continue
        m = _bin_count(config, yhat[mask], test.labels[mask])
        for mp, ml, cnt in metrics.reliability_diagram(yhat[mask], test.labels[mask], m):
            points.append({"series": name, "mean_prediction": mp, "mean_label": ml,
                           "count": cnt})
        counts, edges = metrics.prediction_histogram(yhat[mask], value_range=(lo, hi))
        for c, e0, e1 in zip(counts, edges[:-1], edges[1:]):
            hists.append({"series": name, "bin_lo": float(e0), "bin_hi": float(e1),
                          "count": int(c)})
    rank_rows = [{"rank_lo": a, "rank_hi": b, "mean_prediction": mp,
                  "mean_label": ml, "count": cnt}
                 for a, b, mp, ml, cnt in metrics.rank_calibration_plot(
                     yhat, test.labels, test.ranks, group_size=5)]
    return points, hists, rank_rows


# ---------------------------------------------------------------------------
# CSV emission (deterministic formatting so reruns are byte-identical)

def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.12g}"
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for r in rows:
            writer.writerow([_fmt(r[c]) for c in columns])


def write_results(out_dir, rows, summary):
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "results.csv"), RESULT_COLUMNS, rows)
    write_csv(os.path.join(out_dir, "summary.csv"),
              ("recommender", "calibrator", "strategy", "metric", "n",
               "mean", "std", "n_seeds"), summary)
