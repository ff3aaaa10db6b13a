"""RMSE/MAE on the normalized scale, timing aggregation, and report emission.

Reports mirror the benchmark table layout: one row per model, sorted by RMSE
ascending, with the timing column holding training time for local trained
models and inference time for prompt/bridge models. De-normalized metrics are
appended as clearly labeled supplementary columns when a standardizer is
available.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import DatasetSplits, Standardizer, inverse_transform
from .errors import CountMismatch, EmptyInput, LengthMismatch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mae: float
    n: int


@dataclass(frozen=True)
class EvalReport:
    label: str
    metrics: Metrics
    time_seconds: float
    manifest_ref: str = ""
    training_seconds: Optional[float] = None
    inference_seconds: Optional[float] = None
    metrics_raw: Optional[Metrics] = None


@dataclass(frozen=True)
class PlotSeries:
    indices: np.ndarray
    actual: np.ndarray
    predicted: np.ndarray


def _check_pair(pred: np.ndarray, target: np.ndarray) -> tuple:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.size != target.size:
        raise LengthMismatch(f"pred has {pred.size} values, target has {target.size}")
    if pred.size == 0:
        raise EmptyInput("cannot score empty vectors")
    if not (np.isfinite(pred).all() and np.isfinite(target).all()):
        raise EmptyInput("non-finite values in pred/target")
    return pred, target


def rmse(pred, target) -> float:
    pred, target = _check_pair(pred, target)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def mae(pred, target) -> float:
    pred, target = _check_pair(pred, target)
    return float(np.mean(np.abs(pred - target)))


def evaluate_model(predictions: Sequence[np.ndarray], splits: DatasetSplits, label: str,
                   time_seconds: float = 0.0, manifest_ref: str = "",
                   training_seconds: Optional[float] = None,
                   inference_seconds: Optional[float] = None,
                   standardizer: Optional[Standardizer] = None) -> EvalReport:
    """Score one prediction vector per test sample, flattened over the horizon."""
    test = splits.test
    if len(predictions) != len(test):
        raise CountMismatch(f"{len(predictions)} predictions for {len(test)} test samples")
    if len(test) == 0:
        raise CountMismatch("test split is empty")
    pred = np.asarray(predictions, dtype=np.float64).reshape(len(test), -1)
    if pred.shape[1] != test.targets.shape[1]:
        raise CountMismatch(
            f"prediction horizon {pred.shape[1]} != target horizon {test.targets.shape[1]}"
        )
    flat_pred, flat_target = pred.ravel(), test.targets.ravel()
    metrics = Metrics(rmse(flat_pred, flat_target), mae(flat_pred, flat_target), flat_pred.size)
    metrics_raw = None
    if standardizer is not None:
        rp = inverse_transform(standardizer, flat_pred)
        rt = inverse_transform(standardizer, flat_target)
        metrics_raw = Metrics(rmse(rp, rt), mae(rp, rt), flat_pred.size)
    return EvalReport(label, metrics, time_seconds, manifest_ref,
                      training_seconds, inference_seconds, metrics_raw)


def _sorted_reports(reports: Sequence[EvalReport]) -> list:
    return sorted(reports, key=lambda r: (r.metrics.rmse, r.label))


def render_markdown(reports: Sequence[EvalReport]) -> str:
    """Fixed column order (Model, RMSE, MAE, Time (s)); rows by RMSE ascending."""
    if not reports:
        raise EmptyInput("no reports to render")
    lines = [
        "| Model | RMSE | MAE | Time (s) |",
        "| --- | ---: | ---: | ---: |",
    ]
    for r in _sorted_reports(reports):
        lines.append(
            f"| {r.label} | {r.metrics.rmse:.4f} | {r.metrics.mae:.4f} | {r.time_seconds:.2f} |"
        )
    return "\n".join(lines) + "\n"


def render_csv(reports: Sequence[EvalReport]) -> str:
    """Numerically lossless CSV (shortest round-trip decimals), supplementary
    de-normalized columns last."""
    if not reports:
        raise EmptyInput("no reports to render")
    header = ("model,rmse,mae,time_seconds,n,training_seconds,inference_seconds,"
              "rmse_denormalized,mae_denormalized")
    rows = [header]
    for r in _sorted_reports(reports):
        cells = [
            r.label,
            repr(r.metrics.rmse),
            repr(r.metrics.mae),
            repr(r.time_seconds),
            str(r.metrics.n),
            "" if r.training_seconds is None else repr(r.training_seconds),
            "" if r.inference_seconds is None else repr(r.inference_seconds),
            "" if r.metrics_raw is None else repr(r.metrics_raw.rmse),
            "" if r.metrics_raw is None else repr(r.metrics_raw.mae),
        ]
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


def emit_report(reports: Sequence[EvalReport], md_path: str, csv_path: str) -> None:
    with open(md_path, "w") as fh:
        fh.write(render_markdown(reports))
    with open(csv_path, "w") as fh:
        fh.write(render_csv(reports))


def plot_data(actual: np.ndarray, predicted: np.ndarray, first_n: int = 300) -> PlotSeries:
    """First first_n (actual, predicted) pairs; truncates with a warning when
    fewer points are available."""
    actual = np.asarray(actual, dtype=np.float64).ravel()
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    if actual.size != predicted.size:
        raise LengthMismatch(f"actual has {actual.size} points, predicted has {predicted.size}")
    n = min(first_n, actual.size)
    if n < first_n:
        log.warning("plot_data: only %d points available, wanted %d", actual.size, first_n)
    return PlotSeries(np.arange(n), actual[:n].copy(), predicted[:n].copy())


def plot_series_csv(series: PlotSeries, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("index,actual,predicted\n")
        for i, a, p in zip(series.indices, series.actual, series.predicted):
            fh.write(f"{int(i)},{repr(float(a))},{repr(float(p))}\n")
