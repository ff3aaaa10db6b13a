"""Model construction, receptive field, training loop behavior, prediction
purity, and checkpoint round trips."""

import numpy as np
import pytest

from fcst_arena.dataset import CleanSeries, WindowSpec, build_dataset
from fcst_arena.errors import BadConfig, ShapeMismatch
from fcst_arena.forecasters import (
    ForecasterKind,
    LstmConfig,
    TcnConfig,
    TrainConfig,
    build_model,
    load_checkpoint,
    parameter_count,
    persistence_forecast,
    predict,
    save_checkpoint,
    train,
)

from helpers import sine_series


def _sine_artifact(n=600, w=30, period=50.0):
    series = CleanSeries(sine_series(n, period), "sine", 0)
    return build_dataset(series, WindowSpec(w, 1))


# --- persistence ------------------------------------------------------------------


def test_persistence_basics():
    assert persistence_forecast([1.0, 2.0, 3.0], 1).tolist() == [3.0]
    const = [2.222027459944977] * 5
    assert persistence_forecast(const, 1).tolist() == [2.222027459944977]
    assert persistence_forecast([5.0, -1.5], 3).tolist() == [-1.5, -1.5, -1.5]


def test_persistence_rejects_empty():
    with pytest.raises(ShapeMismatch):
        persistence_forecast([], 1)


# --- construction ----------------------------------------------------------------


def test_lstm_parameter_count_oracle():
    # Symbolic oracle for Table-style defaults on scalar input:
    # per layer 4*(H*(D_in+H)+H), head H+1.
    model = build_model("lstm", LstmConfig(), WindowSpec(720, 1), seed=0)
    expected = 4 * (64 * (1 + 64) + 64) + 4 * (64 * (64 + 64) + 64) + (64 + 1)
    assert parameter_count(model) == expected


def test_tcn_receptive_field_formula():
    cfg = TcnConfig()
    assert cfg.receptive_field() == 1 + (3 - 1) * (1 + 2 + 4)
    assert cfg.receptive_field() == 15


def test_bad_configs():
    with pytest.raises(BadConfig):
        TcnConfig(layers=3, dilations=(1, 2))
    with pytest.raises(BadConfig):
        TcnConfig(dropout=1.0)
    with pytest.raises(BadConfig):
        LstmConfig(layers=0)
    with pytest.raises(BadConfig):
        TrainConfig(epochs=0)
    with pytest.raises(BadConfig):
        build_model("persistence", LstmConfig(), WindowSpec(10, 1))
    with pytest.raises(BadConfig):
        build_model("lstm", TcnConfig(), WindowSpec(10, 1))


def test_build_model_deterministic_init():
    a = build_model("lstm", LstmConfig(2, 8), WindowSpec(16, 1), seed=7)
    b = build_model("lstm", LstmConfig(2, 8), WindowSpec(16, 1), seed=7)
    for name in a.params:
        assert np.array_equal(a.params[name].data, b.params[name].data)
    c = build_model("lstm", LstmConfig(2, 8), WindowSpec(16, 1), seed=8)
    assert any(
        not np.array_equal(a.params[n].data, c.params[n].data) for n in a.params
    )


# --- prediction contract ------------------------------------------------------------


def test_predict_zeroed_head_returns_bias():
    model = build_model("lstm", LstmConfig(1, 4), WindowSpec(6, 1), seed=0)
    model.params["head.w"].data[:] = 0.0
    model.params["head.b"].data[:] = 3.25
    for window in (np.zeros(6), np.random.default_rng(0).normal(size=6)):
        assert predict(model, window).tolist() == [3.25]


def test_predict_shape_check():
    model = build_model("tcn", TcnConfig(channels=4), WindowSpec(20, 1), seed=0)
    with pytest.raises(ShapeMismatch):
        predict(model, np.zeros(19))


def test_predict_pure_function_of_window():
    model = build_model("tcn", TcnConfig(channels=4), WindowSpec(20, 1), seed=1)
    window = np.random.default_rng(5).normal(size=20)
    first = predict(model, window)
    second = predict(model, window)
    assert np.array_equal(first, second)
    # params untouched by prediction
    before = {n: p.data.copy() for n, p in model.params.items()}
    predict(model, window)
    for n, p in model.params.items():
        assert np.array_equal(before[n], p.data)


def test_tcn_receptive_field_probe():
    # Kernel 3, dilations (1,2,4): only the last 15 positions can matter.
    w = 40
    model = build_model("tcn", TcnConfig(channels=8), WindowSpec(w, 1), seed=3)
    rng = np.random.default_rng(0)
    window = rng.normal(size=w)
    base = predict(model, window)

    inside_rf = window.copy()
    inside_rf[: w - 15] = rng.normal(size=w - 15) * 10.0
    assert np.array_equal(predict(model, inside_rf), base)

    outside = window.copy()
    outside[w - 15] += 1.0
    assert not np.array_equal(predict(model, outside), base)


# --- training --------------------------------------------------------------------


def test_training_beats_persistence_on_sine():
    # Scaled-down smoke version; the full benchmark regime lives in the
    # acceptance suite.
    artifact = _sine_artifact()
    test = artifact.splits.test

    persistence_preds = np.array([persistence_forecast(x, 1) for x in test.inputs])
    persistence_rmse = float(np.sqrt(np.mean((persistence_preds - test.targets) ** 2)))

    for kind, cfg, epochs in (
        ("lstm", LstmConfig(1, 16), 10),
        ("tcn", TcnConfig(2, 16, (1, 2), 3, 0.0), 15),
    ):
        tc = TrainConfig(epochs=epochs, batch_size=32, learning_rate=1e-3, seed=0)
        model = build_model(kind, cfg, artifact.spec, seed=0)
        model, log = train(model, artifact.splits, tc)
        assert len(log.epochs) == tc.epochs
        preds = np.array([predict(model, x) for x in test.inputs])
        model_rmse = float(np.sqrt(np.mean((preds - test.targets) ** 2)))
        assert model_rmse < persistence_rmse, f"{kind} did not beat persistence"


def test_training_deterministic_given_seed():
    artifact = _sine_artifact(n=200, w=10)
    tc = TrainConfig(epochs=2, batch_size=16, seed=11)
    finals = []
    for _ in range(2):
        model = build_model("tcn", TcnConfig(2, 4, (1, 2), 3, 0.2), artifact.spec, seed=tc.seed)
        model, _ = train(model, artifact.splits, tc)
        finals.append({n: p.data.copy() for n, p in model.params.items()})
    for name in finals[0]:
        assert np.array_equal(finals[0][name], finals[1][name]), name


def test_nan_loss_aborts_with_diagnostic():
    artifact = _sine_artifact(n=150, w=8)
    model = build_model("lstm", LstmConfig(1, 4), artifact.spec, seed=0)
    model.params["head.w"].data[:] = np.nan
    from fcst_arena.errors import NumericError
    with pytest.raises(NumericError, match="epoch 1"):
        train(model, artifact.splits, TrainConfig(epochs=1, batch_size=16, seed=0))


def test_training_log_structure():
    artifact = _sine_artifact(n=200, w=10)
    model = build_model("lstm", LstmConfig(1, 4), artifact.spec, seed=0)
    model, log = train(model, artifact.splits, TrainConfig(epochs=3, batch_size=16, seed=0))
    assert [rec.epoch for rec in log.epochs] == [1, 2, 3]
    assert all(np.isfinite(rec.train_loss) and np.isfinite(rec.val_loss) for rec in log.epochs)
    assert all(rec.seconds >= 0 for rec in log.epochs)
    assert log.total_seconds >= sum(r.seconds for r in log.epochs) * 0.5


def test_training_log_csv(tmp_path):
    artifact = _sine_artifact(n=150, w=8)
    model = build_model("lstm", LstmConfig(1, 4), artifact.spec, seed=0)
    model, log = train(model, artifact.splits, TrainConfig(epochs=2, batch_size=16, seed=0))
    path = tmp_path / "log.csv"
    log.to_csv(str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,seconds"
    assert len(lines) == 3


# --- checkpoints ------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    artifact = _sine_artifact(n=200, w=10)
    model = build_model("tcn", TcnConfig(2, 4, (1, 2), 3, 0.1), artifact.spec, seed=5)
    model, _ = train(model, artifact.splits, TrainConfig(epochs=1, batch_size=16, seed=5))
    path = str(tmp_path / "ckpt.json")
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.kind is ForecasterKind.TCN
    assert loaded.config == model.config
    assert loaded.spec == model.spec
    for name in model.params:
        assert np.array_equal(loaded.params[name].data, model.params[name].data)
    assert loaded.adam_state.step_count == model.adam_state.step_count
    for name in model.params:
        assert np.array_equal(loaded.adam_state.m[name], model.adam_state.m[name])

    window = np.random.default_rng(0).normal(size=10)
    assert np.array_equal(predict(loaded, window), predict(model, window))


def test_checkpoint_bytes_deterministic(tmp_path):
    artifact = _sine_artifact(n=200, w=10)
    paths = []
    for run in range(2):
        model = build_model("lstm", LstmConfig(1, 4), artifact.spec, seed=3)
        model, _ = train(model, artifact.splits, TrainConfig(epochs=2, batch_size=16, seed=3))
        path = tmp_path / f"ckpt{run}.json"
        save_checkpoint(model, str(path))
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()
