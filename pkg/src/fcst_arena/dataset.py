"""CSV ingestion, sliding windows, chronological splits, standardization,
and the on-disk dataset artifact.

The target column of the sensor log is the only thing modeled. Rows whose
target is missing or unparsable are dropped (and counted); everything else in
the file is ignored. Windows are built with stride 1, split chronologically
70/15/15 at the window level, and normalized with statistics fitted on the
training split only.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    BadFractions,
    EmptySeries,
    EmptyTrain,
    IoError,
    MissingColumn,
    SeriesTooShort,
)

DEFAULT_TARGET_COLUMN = "LIT 301"
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)
CLAMP_EPSILON = 1e-8

ARTIFACT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class IngestConfig:
    csv_path: str
    target_column: str = DEFAULT_TARGET_COLUMN
    timestamp_column: Optional[str] = None
    delimiter: str = ","


@dataclass(frozen=True)
class CleanSeries:
    """Finite float64 target values in file order, after dropping bad rows."""

    values: np.ndarray
    source_fingerprint: str
    dropped_count: int

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 720
    horizon: int = 1

    def __post_init__(self):
        if self.window_len < 1 or self.horizon < 1:
            raise ValueError(
                f"window_len and horizon must be >= 1, got ({self.window_len}, {self.horizon})"
            )


@dataclass(frozen=True)
class WindowSample:
    input: np.ndarray
    target: np.ndarray
    origin_index: int


class WindowSet(Sequence[WindowSample]):
    """A split's samples, stored densely: inputs [n, W], targets [n, H]."""

    def __init__(self, inputs: np.ndarray, targets: np.ndarray, origins: np.ndarray):
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.targets = np.asarray(targets, dtype=np.float64)
        self.origins = np.asarray(origins, dtype=np.int64)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def __getitem__(self, i: int) -> WindowSample:
        return WindowSample(self.inputs[i], self.targets[i], int(self.origins[i]))

    def __iter__(self) -> Iterator[WindowSample]:
        for i in range(len(self)):
            yield self[i]


@dataclass(frozen=True)
class DatasetSplits:
    train: WindowSet
    val: WindowSet
    test: WindowSet
    split_fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS


@dataclass(frozen=True)
class Standardizer:
    mean: float
    std: float
    clamp_epsilon: float = CLAMP_EPSILON


@dataclass(frozen=True)
class DatasetArtifact:
    spec: WindowSpec
    splits: DatasetSplits
    standardizer: Standardizer
    manifest: dict = field(default_factory=dict)


# --- operations ---------------------------------------------------------------


def ingest_csv(config: IngestConfig) -> CleanSeries:
    """Read the target column as float64, dropping missing/unparsable rows."""
    try:
        with open(config.csv_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {config.csv_path}: {exc}") from exc
    fingerprint = hashlib.sha256(raw).hexdigest()

    text = raw.decode("utf-8")
    reader = csv.reader(text.splitlines(), delimiter=config.delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptySeries(f"{config.csv_path} has no header row")

    header = [h.strip() for h in header]
    if config.target_column not in header:
        raise MissingColumn(f"column '{config.target_column}' not in header {header[:8]}...")
    if config.timestamp_column is not None and config.timestamp_column not in header:
        raise MissingColumn(f"timestamp column '{config.timestamp_column}' not in header")
    col = header.index(config.target_column)

    values = []
    dropped = 0
    for row in reader:
        cell = row[col].strip() if col < len(row) else ""
        if not cell:
            dropped += 1
            continue
        try:
            v = float(cell)
        except ValueError:
            dropped += 1
            continue
        if not math.isfinite(v):
            dropped += 1
            continue
        values.append(v)

    if not values:
        raise EmptySeries(f"no usable values in column '{config.target_column}'")
    return CleanSeries(np.array(values, dtype=np.float64), fingerprint, dropped)


def make_windows(series: CleanSeries, spec: WindowSpec) -> WindowSet:
    """All stride-1 (input, target) pairs, in origin order: N - W - H + 1 samples."""
    n = len(series.values)
    w, h = spec.window_len, spec.horizon
    if n < w + h:
        raise SeriesTooShort(f"need at least W+H={w + h} points, series has {n}")
    count = n - w - h + 1
    view = np.lib.stride_tricks.sliding_window_view(series.values, w + h)[:count]
    return WindowSet(view[:, :w].copy(), view[:, w:].copy(), np.arange(count))


def split_chronological(samples: WindowSet,
                        fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS) -> DatasetSplits:
    """Order-preserving split: floor(f0*n) train, floor(f1*n) val, rest test."""
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise BadFractions(f"need three non-negative fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise BadFractions(f"fractions must sum to 1.0, got {fractions}")
    n = len(samples)
    if n < 3:
        raise SeriesTooShort(f"need at least 3 samples to split, got {n}")
    n_train = int(math.floor(fractions[0] * n))
    n_val = int(math.floor(fractions[1] * n))

    def piece(lo, hi):
        return WindowSet(samples.inputs[lo:hi], samples.targets[lo:hi], samples.origins[lo:hi])

    return DatasetSplits(
        train=piece(0, n_train),
        val=piece(n_train, n_train + n_val),
        test=piece(n_train + n_val, n),
        split_fractions=tuple(fractions),
    )


def fit_standardizer(train: WindowSet, clamp_epsilon: float = CLAMP_EPSILON) -> Standardizer:
    """Two-pass mean/std (population, denominator n) over every train value,
    inputs and targets alike. sigma is clamped from below to keep the
    transform invertible on constant series."""
    if len(train) == 0:
        raise EmptyTrain("cannot fit a standardizer on an empty train split")
    values = np.concatenate([train.inputs.ravel(), train.targets.ravel()])
    mean = float(np.mean(values))
    std = float(np.sqrt(np.mean((values - mean) ** 2)))
    return Standardizer(mean=mean, std=max(std, clamp_epsilon), clamp_epsilon=clamp_epsilon)


def transform(s: Standardizer, x: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - s.mean) / s.std


def inverse_transform(s: Standardizer, z: np.ndarray) -> np.ndarray:
    return np.asarray(z, dtype=np.float64) * s.std + s.mean


def _transform_set(s: Standardizer, ws: WindowSet) -> WindowSet:
    return WindowSet(transform(s, ws.inputs), transform(s, ws.targets), ws.origins)


def build_dataset(series: CleanSeries, spec: WindowSpec,
                  fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS,
                  extra_manifest: Optional[dict] = None) -> DatasetArtifact:
    """Window, split, fit on train only, normalize all splits."""
    windows = make_windows(series, spec)
    splits = split_chronological(windows, fractions)
    standardizer = fit_standardizer(splits.train)
    normalized = DatasetSplits(
        train=_transform_set(standardizer, splits.train),
        val=_transform_set(standardizer, splits.val),
        test=_transform_set(standardizer, splits.test),
        split_fractions=splits.split_fractions,
    )
    manifest = {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "source_sha256": series.source_fingerprint,
        "dropped_count": series.dropped_count,
        "series_length": len(series.values),
        "window_len": spec.window_len,
        "horizon": spec.horizon,
        "fractions": list(fractions),
        "mean": standardizer.mean,
        "std": standardizer.std,
        "clamp_epsilon": standardizer.clamp_epsilon,
        "counts": {"train": len(splits.train), "val": len(splits.val), "test": len(splits.test)},
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    return DatasetArtifact(spec, normalized, standardizer, manifest)


# --- on-disk artifact -----------------------------------------------------------

_SPLIT_FILES = ("train", "val", "test")


def _write_split_csv(path: str, ws: WindowSet, w: int, h: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["origin_index"] + [f"x_{i}" for i in range(w)] + [f"y_{i}" for i in range(h)])
        for i in range(len(ws)):
            row = [str(int(ws.origins[i]))]
            row.extend(repr(float(v)) for v in ws.inputs[i])
            row.extend(repr(float(v)) for v in ws.targets[i])
            writer.writerow(row)


def _read_split_csv(path: str, w: int, h: int) -> WindowSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["origin_index"] + [f"x_{i}" for i in range(w)] + [f"y_{i}" for i in range(h)]
        if header != expected:
            raise IoError(f"{path}: unexpected columns")
        origins, inputs, targets = [], [], []
        for row in reader:
            origins.append(int(row[0]))
            vals = [float(c) for c in row[1:]]
            inputs.append(vals[:w])
            targets.append(vals[w:])
    return WindowSet(
        np.array(inputs, dtype=np.float64).reshape(len(origins), w),
        np.array(targets, dtype=np.float64).reshape(len(origins), h),
        np.array(origins, dtype=np.int64),
    )


def save_artifact(artifact: DatasetArtifact, directory: str) -> None:
    """Write manifest.json plus train/val/test CSVs. Deterministic bytes:
    same artifact in, same files out."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(artifact.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    w, h = artifact.spec.window_len, artifact.spec.horizon
    for name in _SPLIT_FILES:
        _write_split_csv(os.path.join(directory, f"{name}.csv"), getattr(artifact.splits, name), w, h)


def load_artifact(directory: str) -> DatasetArtifact:
    try:
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read artifact manifest in {directory}: {exc}") from exc
    spec = WindowSpec(manifest["window_len"], manifest["horizon"])
    sets = {
        name: _read_split_csv(os.path.join(directory, f"{name}.csv"), spec.window_len, spec.horizon)
        for name in _SPLIT_FILES
    }
    splits = DatasetSplits(sets["train"], sets["val"], sets["test"], tuple(manifest["fractions"]))
    standardizer = Standardizer(manifest["mean"], manifest["std"], manifest["clamp_epsilon"])
    return DatasetArtifact(spec, splits, standardizer, manifest)
