"""Forecaster backends sharing one predict-a-window contract.

Local backends live here: the persistence baseline, a 2-layer LSTM (64 units)
reading out the last hidden state, and a 3-block dilated causal TCN
(64 channels, dilations 1/2/4, kernel 3, dropout 0.2, residual skips) reading
out the last timestep. Both are trained with the same mini-batch Adam loop on
MSE for a fixed number of epochs; the validation split is monitored, never
used for selection.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import nn
from .dataset import DatasetSplits, WindowSpec
from .errors import BadConfig, NumericError, ShapeMismatch
from .nn.tensor import Tensor
from .rng import SeededRng

CHECKPOINT_FORMAT_VERSION = 1


class ForecasterKind(str, Enum):
    PERSISTENCE = "persistence"
    LSTM = "lstm"
    TCN = "tcn"
    LLM_PROMPT = "llm_prompt"
    BRIDGE = "bridge"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    shuffle_each_epoch: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise BadConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise BadConfig(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class LstmConfig:
    layers: int = 2
    hidden_units: int = 64

    def __post_init__(self):
        if self.layers < 1 or self.hidden_units < 1:
            raise BadConfig(f"bad LSTM config: {self}")


@dataclass(frozen=True)
class TcnConfig:
    layers: int = 3
    channels: int = 64
    dilations: tuple = (1, 2, 4)
    kernel_size: int = 3
    dropout: float = 0.2
    residual: bool = True

    def __post_init__(self):
        if len(self.dilations) != self.layers:
            raise BadConfig(
                f"dilations {list(self.dilations)} must have exactly layers={self.layers} entries"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise BadConfig(f"dropout must be in [0, 1), got {self.dropout}")
        if self.kernel_size < 1 or self.channels < 1:
            raise BadConfig(f"bad TCN config: {self}")

    def receptive_field(self) -> int:
        return 1 + (self.kernel_size - 1) * sum(self.dilations)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)
    total_seconds: float = 0.0

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,val_loss,seconds\n")
            for rec in self.epochs:
                fh.write(f"{rec.epoch},{repr(rec.train_loss)},{repr(rec.val_loss)},{repr(rec.seconds)}\n")


def persistence_forecast(window: np.ndarray, horizon: int = 1) -> np.ndarray:
    """Repeat the last observed value; the floor every model must beat."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 1 or window.size < 1:
        raise ShapeMismatch(f"window must be a non-empty vector, got shape {window.shape}")
    return np.full(horizon, window[-1])


class LstmForecaster:
    kind = ForecasterKind.LSTM

    def __init__(self, config: LstmConfig, spec: WindowSpec, seed: int):
        self.config = config
        self.spec = spec
        self.seed = seed
        rng = SeededRng(seed).derive("init")
        self.params: dict[str, Tensor] = {}
        d_in = 1
        for layer in range(config.layers):
            p = nn.init_lstm_params(rng, d_in, config.hidden_units)
            for key, tensor in p.items():
                self.params[f"lstm.{layer}.{key}"] = tensor
            d_in = config.hidden_units
        head = nn.init_dense_params(rng, config.hidden_units, spec.horizon)
        self.params["head.w"] = head["w"]
        self.params["head.b"] = head["b"]

    def _layer_params(self, layer: int) -> dict:
        return {k: self.params[f"lstm.{layer}.{k}"] for k in ("w_x", "w_h", "b")}

    def forward_batch(self, windows: np.ndarray, training: bool = False,
                      rng: Optional[SeededRng] = None) -> Tensor:
        """[B, W] batch to [B, H] predictions."""
        t_len = windows.shape[1]
        xs = [Tensor(windows[:, t : t + 1]) for t in range(t_len)]
        for layer in range(self.config.layers):
            xs = nn.lstm_sequence(xs, self._layer_params(layer))
        head = {"w": self.params["head.w"], "b": self.params["head.b"]}
        return nn.dense(xs[-1], head)

    def predict(self, window: np.ndarray) -> np.ndarray:
        window = np.asarray(window, dtype=np.float64)
        if window.shape != (self.spec.window_len,):
            raise ShapeMismatch(
                f"window length {window.shape} does not match trained spec W={self.spec.window_len}"
            )
        with nn.no_grad():
            out = self.forward_batch(window[None, :], training=False)
        return out.data[0].copy()


class TcnForecaster:
    kind = ForecasterKind.TCN

    def __init__(self, config: TcnConfig, spec: WindowSpec, seed: int):
        self.config = config
        self.spec = spec
        self.seed = seed
        rng = SeededRng(seed).derive("init")
        self.params: dict[str, Tensor] = {}
        c_in = 1
        for layer, dilation in enumerate(config.dilations):
            conv = nn.init_conv_params(rng, config.channels, c_in, config.kernel_size)
            self.params[f"tcn.{layer}.conv.w"] = conv["w"]
            self.params[f"tcn.{layer}.conv.b"] = conv["b"]
            if config.residual and c_in != config.channels:
                proj = nn.init_conv_params(rng, config.channels, c_in, 1, bias=False)
                self.params[f"tcn.{layer}.proj.w"] = proj["w"]
            c_in = config.channels
        head = nn.init_dense_params(rng, config.channels, spec.horizon)
        self.params["head.w"] = head["w"]
        self.params["head.b"] = head["b"]

    def forward_batch(self, windows: np.ndarray, training: bool = False,
                      rng: Optional[SeededRng] = None) -> Tensor:
        """[B, W] batch to [B, H] predictions."""
        x = Tensor(windows[:, None, :])  # [B, 1, W]
        for layer, dilation in enumerate(self.config.dilations):
            y = nn.dilated_causal_conv1d(x, self.params[f"tcn.{layer}.conv.w"], dilation)
            y = nn.add(y, self.params[f"tcn.{layer}.conv.b"])
            y = nn.relu(y)
            y = nn.dropout(y, self.config.dropout, rng, training)
            if self.config.residual:
                proj_key = f"tcn.{layer}.proj.w"
                skip = nn.dilated_causal_conv1d(x, self.params[proj_key], 1) if proj_key in self.params else x
                y = nn.add(y, skip)
            x = y
        last = x[:, :, -1]  # [B, C]
        head = {"w": self.params["head.w"], "b": self.params["head.b"]}
        return nn.dense(last, head)

    def predict(self, window: np.ndarray) -> np.ndarray:
        window = np.asarray(window, dtype=np.float64)
        if window.shape != (self.spec.window_len,):
            raise ShapeMismatch(
                f"window length {window.shape} does not match trained spec W={self.spec.window_len}"
            )
        with nn.no_grad():
            out = self.forward_batch(window[None, :], training=False)
        return out.data[0].copy()


def build_model(kind, config, spec: WindowSpec, seed: int = 0):
    kind = ForecasterKind(kind)
    if kind is ForecasterKind.LSTM:
        if not isinstance(config, LstmConfig):
            raise BadConfig(f"LSTM forecaster needs an LstmConfig, got {type(config).__name__}")
        return LstmForecaster(config, spec, seed)
    if kind is ForecasterKind.TCN:
        if not isinstance(config, TcnConfig):
            raise BadConfig(f"TCN forecaster needs a TcnConfig, got {type(config).__name__}")
        return TcnForecaster(config, spec, seed)
    raise BadConfig(f"build_model only builds local trainable models, not {kind.value}")


def _batched_loss(model, inputs: np.ndarray, targets: np.ndarray, batch_size: int) -> float:
    """Dataset MSE without building the tape; used for validation monitoring."""
    total, count = 0.0, 0
    with nn.no_grad():
        for lo in range(0, len(inputs), batch_size):
            xb = inputs[lo : lo + batch_size]
            yb = targets[lo : lo + batch_size]
            pred = model.forward_batch(xb, training=False)
            total += float(((pred.data - yb) ** 2).sum())
            count += yb.size
    return total / count if count else float("nan")


def train(model, splits: DatasetSplits, tc: TrainConfig):
    """Exactly tc.epochs epochs of mini-batch Adam on MSE; deterministic for
    a fixed seed. Returns (model, TrainingLog)."""
    rng = SeededRng(tc.seed).derive("train")
    state = nn.adam_init(model.params, learning_rate=tc.learning_rate)
    log = TrainingLog()
    inputs, targets = splits.train.inputs, splits.train.targets
    n = len(inputs)
    if n == 0:
        raise BadConfig("train split is empty")

    t_start = time.monotonic()
    for epoch in range(1, tc.epochs + 1):
        e_start = time.monotonic()
        order = rng.permutation(n) if tc.shuffle_each_epoch else np.arange(n)
        epoch_sq_sum, epoch_count = 0.0, 0
        for lo in range(0, n, tc.batch_size):
            idx = order[lo : lo + tc.batch_size]
            xb, yb = inputs[idx], targets[idx]
            pred = model.forward_batch(xb, training=True, rng=rng)
            loss = nn.mse_loss(pred, Tensor(yb))
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise NumericError(
                    f"non-finite loss {loss_val} at epoch {epoch}, batch offset {lo} "
                    f"(seed {tc.seed}, lr {tc.learning_rate})"
                )
            nn.zero_grads(model.params)
            loss.backward()
            nn.adam_step(state, model.params)
            epoch_sq_sum += loss_val * yb.size
            epoch_count += yb.size
        val_loss = _batched_loss(model, splits.val.inputs, splits.val.targets, tc.batch_size)
        log.epochs.append(EpochRecord(
            epoch=epoch,
            train_loss=epoch_sq_sum / epoch_count,
            val_loss=val_loss,
            seconds=time.monotonic() - e_start,
        ))
    log.total_seconds = time.monotonic() - t_start
    model.adam_state = state
    return model, log


def predict(model, window: np.ndarray) -> np.ndarray:
    return model.predict(window)


# --- checkpoints -----------------------------------------------------------------


def save_checkpoint(model, path: str) -> None:
    """Versioned JSON map: name -> shape + row-major values, plus seed and
    Adam state. Bytes are deterministic for identical models."""
    adam = getattr(model, "adam_state", None)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": model.kind.value,
        "config": _config_dict(model.config),
        "window_len": model.spec.window_len,
        "horizon": model.spec.horizon,
        "seed": model.seed,
        "rng_algorithm": SeededRng(0).algorithm,
        "params": {
            name: {"shape": list(p.data.shape), "data": p.data.ravel().tolist()}
            for name, p in sorted(model.params.items())
        },
        "adam": None if adam is None else {
            "learning_rate": adam.learning_rate,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "epsilon": adam.epsilon,
            "step_count": adam.step_count,
            "m": {name: buf.ravel().tolist() for name, buf in sorted(adam.m.items())},
            "v": {name: buf.ravel().tolist() for name, buf in sorted(adam.v.items())},
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _config_dict(config) -> dict:
    if isinstance(config, LstmConfig):
        return {"layers": config.layers, "hidden_units": config.hidden_units}
    return {
        "layers": config.layers,
        "channels": config.channels,
        "dilations": list(config.dilations),
        "kernel_size": config.kernel_size,
        "dropout": config.dropout,
        "residual": config.residual,
    }


def load_checkpoint(path: str):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise BadConfig(f"unsupported checkpoint format: {payload.get('format_version')}")
    kind = ForecasterKind(payload["kind"])
    spec = WindowSpec(payload["window_len"], payload["horizon"])
    cfg = payload["config"]
    if kind is ForecasterKind.LSTM:
        config = LstmConfig(cfg["layers"], cfg["hidden_units"])
    elif kind is ForecasterKind.TCN:
        config = TcnConfig(cfg["layers"], cfg["channels"], tuple(cfg["dilations"]),
                           cfg["kernel_size"], cfg["dropout"], cfg["residual"])
    else:
        raise BadConfig(f"checkpoint kind {kind} is not a local model")
    model = build_model(kind, config, spec, seed=payload["seed"])
    for name, entry in payload["params"].items():
        if name not in model.params:
            raise BadConfig(f"checkpoint parameter '{name}' unknown to {kind.value} model")
        model.params[name].data = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
    adam = payload.get("adam")
    if adam is not None:
        state = nn.adam_init(model.params, adam["learning_rate"], adam["beta1"],
                             adam["beta2"], adam["epsilon"])
        state.step_count = adam["step_count"]
        for name in model.params:
            state.m[name] = np.array(adam["m"][name], dtype=np.float64).reshape(model.params[name].shape)
            state.v[name] = np.array(adam["v"][name], dtype=np.float64).reshape(model.params[name].shape)
        model.adam_state = state
    return model


def parameter_count(model) -> int:
    return sum(p.data.size for p in model.params.values())
