"""Shared test utilities: finite-difference oracles and synthetic data."""

from __future__ import annotations

import numpy as np


def finite_difference_grad(f, param_data: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the scalar closure f() w.r.t. param_data.

    param_data is perturbed in place and restored, so f must read the same
    buffer (Tensors keep a reference to the array they were built from).
    """
    grad = np.zeros_like(param_data)
    flat = param_data.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Elementwise |a-n| / max(1, |a|, |n|), reduced with max."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def sine_series(n: int = 3000, period: float = 50.0) -> np.ndarray:
    t = np.arange(n, dtype=np.float64)
    return np.sin(2.0 * np.pi * t / period)


def write_series_csv(path, values, column: str = "LIT 301", extra_columns: int = 0,
                     delimiter: str = ","):
    """A sensor-log-shaped CSV with the target column among dummy columns."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        header = [f"col_{i}" for i in range(extra_columns)] + [column]
        writer.writerow(header)
        for v in values:
            writer.writerow(["0"] * extra_columns + [repr(float(v)) if v == v else ""])
