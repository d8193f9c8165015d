"""Artifact-producing steps shared by the command line and the acceptance suite.

Each step reads and writes plain files inside an output directory so runs
can be resumed, compared byte for byte, or inspected by hand.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .anomaly import AnomalyReport
from .config import RunConfig
from .data import (MinMaxScaler, TimeSeriesFrame, compute_features, load_ohlcv, make_windows,
                   read_truth, split_bounds, synth_generate, write_truth)
from .metrics import EvalReport, classification_metrics, regression_metrics, roc_auc
from .model import HybridForecaster, load_checkpoint, save_checkpoint
from .pipeline import detect_frame, forecast_windows, risk_series
from .plotting import plot_anomalies, plot_forecast, plot_loss_curves
from .risk import RiskSeries, risk_labels
from .training import fit

log = logging.getLogger(__name__)

FORECAST_COLUMNS = ["window_end_date", "step", "forecast", "actual", "persistence"]


@dataclass
class Prepared:
    frame: TimeSeriesFrame
    dates: np.ndarray   # feature-row dates (first price row dropped)
    features: np.ndarray
    bounds: list[tuple[int, int]]


def prepare(frame: TimeSeriesFrame, cfg: RunConfig) -> Prepared:
    dates, feats = compute_features(frame, cfg.data.log_return, cfg.data.log_volume)
    return Prepared(frame, dates, feats, split_bounds(len(feats), cfg.data.ratios))


def segment_rows(prep: Prepared, segment: str) -> tuple[int, int]:
    if segment == "all":
        return 0, len(prep.features)
    names = ("train", "val", "test")[:len(prep.bounds)]
    if segment not in names:
        raise ValueError(f"segment {segment!r} not available with ratios of {len(prep.bounds)} split(s)")
    return prep.bounds[names.index(segment)]


def load_data(cfg: RunConfig, path: str | Path | None = None) -> TimeSeriesFrame:
    path = path or cfg.data.csv
    if path is None:
        raise ValueError("no data file given (set data.csv or pass --data)")
    frame = load_ohlcv(path)
    if frame.report.n_rejected:
        log.warning("%s: rejected %d row(s)", path, frame.report.n_rejected)
    return frame


# -- synth ------------------------------------------------------------------------------

def run_synth(cfg: RunConfig, out: Path) -> tuple[Path, Path]:
    out.mkdir(parents=True, exist_ok=True)
    frame, mask = synth_generate(cfg.synth)
    data_path, truth_path = out / "synth.csv", out / "truth.csv"
    frame.to_csv(data_path)
    write_truth(frame.dates, mask, truth_path)
    log.info("wrote %d rows (%d anomalies) to %s", len(frame), int(mask.sum()), data_path)
    return data_path, truth_path


# -- train ------------------------------------------------------------------------------

def seeded_model(cfg: RunConfig, seed: int) -> HybridForecaster:
    return HybridForecaster(replace(cfg.model, seed=seed), cfg.risk)


def run_train(cfg: RunConfig, frame: TimeSeriesFrame, seed: int, out: Path) -> dict:
    """Fit one seed; writes checkpoint.json, trainlog.csv and loss.svg."""
    out.mkdir(parents=True, exist_ok=True)
    prep = prepare(frame, cfg)
    windows = make_windows(prep.features, prep.dates, cfg.model.seq_len, cfg.model.horizon,
                           cfg.data.stride, cfg.data.ratios, cfg.model.target_index)
    if "val" not in windows:
        raise ValueError("training needs a validation split (give at least two ratios)")
    model = seeded_model(cfg, seed)
    started = time.perf_counter()
    model, tlog = fit(model, windows, cfg.train, seed=seed)
    elapsed = time.perf_counter() - started
    scaler = windows["train"].scaler
    _, cut = risk_labels(windows["train"].horizon_vol, np.ones(len(windows["train"]), bool),
                         cfg.risk.label_percentile)
    extra = {"scaler": scaler.to_dict(), "risk_cut": cut, "seed": seed,
             "log_return": cfg.data.log_return, "log_volume": cfg.data.log_volume,
             "ratios": list(cfg.data.ratios), "best_epoch": tlog.best_epoch,
             "stop_reason": tlog.stop_reason}
    digest = save_checkpoint(model, out / "checkpoint.json", extra)
    tlog.to_csv(out / "trainlog.csv")
    plot_loss_curves(tlog.epoch, tlog.train_loss, tlog.val_loss, out / "loss.svg", tlog.best_epoch)
    return {"model": model, "log": tlog, "extra": extra, "sha256": digest, "seconds": elapsed}


def load_trained(path: Path) -> tuple[HybridForecaster, MinMaxScaler, dict]:
    model, extra = load_checkpoint(path)
    if "scaler" not in extra:
        raise ValueError(f"{path}: checkpoint carries no scaler")
    return model, MinMaxScaler.from_dict(extra["scaler"]), extra


# -- detect / forecast ------------------------------------------------------------------

def run_detect(cfg: RunConfig, model: HybridForecaster, scaler: MinMaxScaler, extra: dict,
               frame: TimeSeriesFrame, out: Path, truth: np.ndarray | None = None):
    """Score the configured segment; writes anomaly.json, risk.csv and anomalies.svg."""
    out.mkdir(parents=True, exist_ok=True)
    prep = prepare(frame, cfg)
    start, stop = segment_rows(prep, cfg.data.segment)
    a = cfg.anomaly
    det = detect_frame(model, scaler, prep.features, prep.dates, a.alpha, a.mode, a.window,
                       a.allow_any_alpha, start=start, stop=stop, taper=a.taper)
    det.report.to_json(out / "anomaly.json")
    fs = forecast_windows(model, scaler, prep.features, prep.dates, start=start, stop=stop)
    risk = risk_series(fs, extra.get("risk_cut", float("inf")), cfg.risk.label_percentile)
    risk.to_csv(out / "risk.csv")
    plot_anomalies(det.dates, det.actual, det.fitted, det.report.flags, out / "anomalies.svg",
                   truth=truth)
    return det, risk


def write_forecasts(fs, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_COLUMNS)
        for d, f, y, p in zip(fs.end_dates, fs.forecast, fs.actual, fs.persistence):
            for step in range(len(f)):
                w.writerow([d, step + 1, repr(float(f[step])), repr(float(y[step])), repr(float(p[step]))])


def read_forecasts(path: Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"forecast file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != FORECAST_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(FORECAST_COLUMNS)}")
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in ("forecast", "actual", "persistence")}


def run_forecast(cfg: RunConfig, model: HybridForecaster, scaler: MinMaxScaler,
                 frame: TimeSeriesFrame, out: Path):
    """Rolling forecasts over the segment plus one from the latest rows."""
    out.mkdir(parents=True, exist_ok=True)
    prep = prepare(frame, cfg)
    start, stop = segment_rows(prep, cfg.data.segment)
    fs = forecast_windows(model, scaler, prep.features, prep.dates, start=start, stop=stop)
    write_forecasts(fs, out / "forecasts.csv")

    t, k = model.cfg.seq_len, model.cfg.horizon
    window = scaler.transform(prep.features[-t:])[None]
    latest = scaler.inverse(model.predict(window)["forecast"][0], column=model.cfg.target_index).ravel()
    last = prep.dates[-1]
    future = np.busday_offset(last, np.arange(1, k + 1), roll="forward")
    with open(out / "latest_forecast.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "forecast"])
        for d, v in zip(future, latest):
            w.writerow([str(d), repr(float(v))])
    hist = slice(max(0, len(prep.dates) - 3 * k), None)
    plot_forecast(prep.dates[hist], prep.features[hist, model.cfg.target_index], future, latest,
                  out / "forecast.svg")
    return fs


# -- evaluate ---------------------------------------------------------------------------

def evaluate_files(truth_path: Path | None, report_path: Path | None,
                   forecasts_path: Path | None = None, risk_path: Path | None = None) -> tuple[EvalReport, dict]:
    """EvalReport from whichever artifacts are given, plus persistence-baseline metrics."""
    regression = classification = None
    n = 0
    baseline = {}
    if truth_path is not None or report_path is not None:
        if truth_path is None or report_path is None:
            raise ValueError("anomaly scoring needs both a truth file and an anomaly report")
        tdates, tmask = read_truth(truth_path)
        if not Path(report_path).is_file():
            raise FileNotFoundError(f"anomaly report not found: {report_path}")
        rep = AnomalyReport.from_json(report_path)
        if rep.dates is None:
            raise ValueError(f"{report_path}: report has no dates to align with the truth file")
        rdates = np.asarray(rep.dates, dtype="datetime64[D]")
        common, ti, ri = np.intersect1d(tdates, rdates, return_indices=True)
        if common.size == 0:
            raise ValueError("truth and report date ranges do not overlap; evaluation needs "
                             "overlapping dates")
        classification = classification_metrics(tmask[ti].astype(int), rep.flags[ri])
        n = int(common.size)
    if forecasts_path is not None:
        fc = read_forecasts(forecasts_path)
        regression = regression_metrics(fc["actual"], fc["forecast"])
        base = regression_metrics(fc["actual"], fc["persistence"])
        baseline = {"persistence_rmse": base["rmse"], "persistence_mae": base["mae"],
                    "rmse_ratio": regression["rmse"] / base["rmse"] if base["rmse"] else float("nan")}
        n = n or int(fc["actual"].size)
    report = EvalReport.build(regression, classification, n)
    if risk_path is not None:
        risk = RiskSeries.from_csv(risk_path)
        report.auc = roc_auc(risk.labels.astype(int), risk.scores)
        report.notes = [n for n in report.notes if not n.startswith("auc undefined")]
        if np.isnan(report.auc):
            report.notes.append("auc undefined: single-class risk labels")
    return report, baseline


def write_eval(report: EvalReport, baseline: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(report.to_json())
    (out / "eval.csv").write_text(report.to_csv())
    if baseline:
        (out / "baseline.json").write_text(json.dumps(baseline, indent=2, sort_keys=True) + "\n")


def aggregate(reports: list[EvalReport]) -> dict[str, dict[str, float]]:
    """Mean and population std of each metric across seeds (NaNs ignored)."""
    keys = ("mae", "rmse", "mape_pct", "precision", "recall", "f1", "r2", "auc")
    out = {}
    for k in keys:
        vals = np.array([getattr(r, k) for r in reports], dtype=float)
        finite = vals[np.isfinite(vals)]
        out[k] = {"mean": float(finite.mean()) if finite.size else float("nan"),
                  "std": float(finite.std()) if finite.size else float("nan"),
                  "n": int(finite.size)}
    return out


def write_aggregate(agg: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "mean", "std", "n_seeds"])
        for k, v in agg.items():
            w.writerow([k, repr(v["mean"]), repr(v["std"]), v["n"]])
    clean = {k: {kk: (None if isinstance(vv, float) and not np.isfinite(vv) else vv)
                 for kk, vv in v.items()} for k, v in agg.items()}
    (out / "aggregate.json").write_text(json.dumps(clean, indent=2, sort_keys=True) + "\n")


def seed_dir(out: Path, seed: int) -> Path:
    return out / f"seed_{seed}"


def run_report(cfg: RunConfig, out: Path, truth_path: Path | None = None) -> dict:
    """Full pipeline for every configured seed plus a cross-seed aggregate.

    Without ``data.csv`` the synthetic series is generated first and its
    truth file used for anomaly scoring.
    """
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.resolved.json")
    if cfg.data.csv is None:
        data_path, truth_path = run_synth(cfg, out)
    else:
        data_path = Path(cfg.data.csv)
        truth_path = truth_path or (Path(cfg.data.truth) if cfg.data.truth else None)
    frame = load_data(cfg, data_path)
    truth_mask = None
    results = {}
    reports = []
    for seed in cfg.seeds:
        sdir = seed_dir(out, seed)
        trained = run_train(cfg, frame, seed, sdir)
        model, extra = trained["model"], trained["extra"]
        scaler = MinMaxScaler.from_dict(extra["scaler"])
        if truth_path is not None and truth_mask is None:
            truth_mask = _truth_for_segment(cfg, frame, truth_path)
        det, _ = run_detect(cfg, model, scaler, extra, frame, sdir, truth=truth_mask)
        run_forecast(cfg, model, scaler, frame, sdir)
        report, baseline = evaluate_files(truth_path, sdir / "anomaly.json" if truth_path else None,
                                          sdir / "forecasts.csv", sdir / "risk.csv")
        write_eval(report, baseline, sdir)
        reports.append(report)
        results[seed] = {"report": report, "baseline": baseline, "log": trained["log"],
                         "seconds": trained["seconds"], "sha256": trained["sha256"]}
    write_aggregate(aggregate(reports), out)
    return results


def _truth_for_segment(cfg: RunConfig, frame: TimeSeriesFrame, truth_path: Path) -> np.ndarray:
    tdates, tmask = read_truth(truth_path)
    prep = prepare(frame, cfg)
    start, stop = segment_rows(prep, cfg.data.segment)
    seg = prep.dates[start:stop]
    lookup = dict(zip(tdates.tolist(), tmask.tolist()))
    return np.array([lookup.get(d, False) for d in seg.tolist()], dtype=bool)
