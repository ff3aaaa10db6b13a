"""Command-line pipeline: prepare -> train -> forecast -> evaluate -> report.

One YAML config drives every stage; unknown keys are rejected so typos fail
loudly. Each invocation writes a manifest before producing results, and local
stages are bit-reproducible from (config, seed, input file).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np
import yaml

from . import __version__, bridge, evaluation, provider as provider_mod
from .dataset import (
    IngestConfig,
    WindowSpec,
    build_dataset,
    ingest_csv,
    load_artifact,
    save_artifact,
)
from .errors import (
    BridgeFault,
    ConfigError,
    CountMismatch,
    DataError,
    EvalError,
    FcstArenaError,
    NnError,
    PromptError,
)
from .forecasters import (
    ForecasterKind,
    LstmConfig,
    TcnConfig,
    TrainConfig,
    build_model,
    load_checkpoint,
    persistence_forecast,
    save_checkpoint,
    train,
)
from .prompting import PromptMode, ProviderConfig, select_shots

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MODEL = 4
EXIT_PROVIDER = 5
EXIT_BRIDGE = 6
EXIT_EVAL = 7

# section -> key -> (accepted types, default). None default means "no default,
# may stay absent"; _REQUIRED must be present before the owning stage runs.
_REQUIRED = object()

_SCHEMA = {
    "dataset": {
        "csv_path": (str, _REQUIRED),
        "target_column": (str, "LIT 301"),
        "timestamp_column": (str, None),
        "delimiter": (str, ","),
        "window_len": (int, 720),
        "horizon": (int, 1),
        "fractions": (list, [0.70, 0.15, 0.15]),
    },
    "train": {
        "epochs": (int, 20),
        "batch_size": (int, 32),
        "learning_rate": (float, 1e-3),
        "seed": (int, 0),
        "shuffle_each_epoch": (bool, True),
    },
    "lstm": {
        "layers": (int, 2),
        "hidden_units": (int, 64),
    },
    "tcn": {
        "layers": (int, 3),
        "channels": (int, 64),
        "dilations": (list, [1, 2, 4]),
        "kernel_size": (int, 3),
        "dropout": (float, 0.2),
        "residual": (bool, True),
    },
    "provider": {
        "endpoint_url": (str, _REQUIRED),
        "model_id": (str, "o4-mini"),
        "api_key_env_var": (str, "LLM_API_KEY"),
        "temperature": (float, 0.0),
        "request_timeout": (float, 120.0),
        "max_retries": (int, 5),
        "backoff_base": (float, 2.0),
        "max_in_flight": (int, 1),
        "token_warn_threshold": (int, 500),
        "prompt_mode": (str, "zero_shot"),
        "shots": (int, 2),
        "failure_policy": (str, "abort"),
    },
    "bridge": {
        "command": (list, _REQUIRED),
        "handshake_timeout": (float, 10.0),
        "request_timeout": (float, 300.0),
    },
    "evaluation": {
        "plot_first_n": (int, 300),
        "timing": (str, "wall"),
    },
    "output": {
        "base_dir": (str, "runs"),
    },
}


def load_config(path: str) -> dict:
    """Parse and schema-check the YAML run config; unknown keys are errors."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    config = {}
    for section, content in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if content is None:
            content = {}
        if not isinstance(content, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key in content:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
    for section, keys in _SCHEMA.items():
        out = {}
        src = raw.get(section) or {}
        for key, (expected, default) in keys.items():
            if key in src:
                value = src[key]
                if value is not None:
                    if expected is float and isinstance(value, int) and not isinstance(value, bool):
                        value = float(value)
                    if isinstance(value, bool) and expected is not bool:
                        raise ConfigError(f"{section}.{key} has wrong type (bool)")
                    if not isinstance(value, expected):
                        raise ConfigError(
                            f"{section}.{key} must be {expected.__name__}, got {type(value).__name__}"
                        )
                out[key] = value
            elif default is not _REQUIRED:
                out[key] = default
        config[section] = out
    return config


def _require(config: dict, section: str, key: str):
    if key not in config[section] or config[section][key] is None:
        raise ConfigError(f"config is missing required key {section}.{key}")
    return config[section][key]


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def default_out_dir(config: dict) -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    return os.path.join(config["output"]["base_dir"], f"{stamp}-{config_hash(config)[:8]}")


class RunManifest:
    """Written before results, finalized after; one per command invocation."""

    def __init__(self, out_dir: str, command: str, config: dict, model: str = ""):
        self.path = os.path.join(out_dir, "manifests",
                                 f"{command}-{model}.json" if model else f"{command}.json")
        self.body = {
            "tool_version": __version__,
            "command": command,
            "model": model,
            "config_hash": config_hash(config),
            "seed": config["train"]["seed"],
            "started_at": _utc_now(),
            "finished_at": None,
        }
        os.makedirs(os.path.dirname(self.path), exist_ok=True)
        self._write()

    def _write(self):
        with open(self.path, "w") as fh:
            json.dump(self.body, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def update(self, **fields):
        self.body.update(fields)
        self._write()

    def finalize(self):
        self.update(finished_at=_utc_now())

    def relative_ref(self, out_dir: str) -> str:
        return os.path.relpath(self.path, out_dir)


def _artifact_dir(out_dir: str) -> str:
    return os.path.join(out_dir, "artifact")


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: str):
    with open(path) as fh:
        return json.load(fh)


# --- subcommands -----------------------------------------------------------------


def cmd_prepare(config: dict, out_dir: str) -> None:
    manifest = RunManifest(out_dir, "prepare", config)
    ds = config["dataset"]
    ingest = IngestConfig(
        csv_path=_require(config, "dataset", "csv_path"),
        target_column=ds["target_column"],
        timestamp_column=ds["timestamp_column"],
        delimiter=ds["delimiter"],
    )
    series = ingest_csv(ingest)
    spec = WindowSpec(ds["window_len"], ds["horizon"])
    artifact = build_dataset(series, spec, tuple(ds["fractions"]),
                             extra_manifest={"target_column": ds["target_column"]})
    save_artifact(artifact, _artifact_dir(out_dir))
    manifest.update(source_sha256=series.source_fingerprint,
                    counts=artifact.manifest["counts"], dropped=series.dropped_count)
    manifest.finalize()
    c = artifact.manifest["counts"]
    print(f"prepared {c['train']}+{c['val']}+{c['test']} windows "
          f"(dropped {series.dropped_count} rows) -> {_artifact_dir(out_dir)}")


def _model_configs(config: dict):
    lstm = LstmConfig(config["lstm"]["layers"], config["lstm"]["hidden_units"])
    t = config["tcn"]
    tcn = TcnConfig(t["layers"], t["channels"], tuple(t["dilations"]),
                    t["kernel_size"], t["dropout"], t["residual"])
    return lstm, tcn


def cmd_train(config: dict, out_dir: str, model_name: str) -> None:
    if model_name not in ("lstm", "tcn"):
        raise ConfigError(f"train supports lstm|tcn, got {model_name!r}")
    manifest = RunManifest(out_dir, "train", config, model_name)
    artifact = load_artifact(_artifact_dir(out_dir))
    tr = config["train"]
    tc = TrainConfig(tr["epochs"], tr["batch_size"], tr["learning_rate"],
                     tr["seed"], tr["shuffle_each_epoch"])
    lstm_cfg, tcn_cfg = _model_configs(config)
    cfg = lstm_cfg if model_name == "lstm" else tcn_cfg
    model = build_model(model_name, cfg, artifact.spec, seed=tc.seed)
    model, tlog = train(model, artifact.splits, tc)

    save_checkpoint(model, os.path.join(out_dir, f"checkpoint_{model_name}.json"))
    tlog.to_csv(os.path.join(out_dir, f"train_log_{model_name}.csv"))
    _write_json(os.path.join(out_dir, f"train_meta_{model_name}.json"), {
        "model": model_name,
        "training_seconds": tlog.total_seconds,
        "epochs": len(tlog.epochs),
        "final_train_loss": tlog.epochs[-1].train_loss,
        "final_val_loss": tlog.epochs[-1].val_loss,
    })
    manifest.update(artifact_sha256=artifact.manifest["source_sha256"],
                    training_seconds=tlog.total_seconds)
    manifest.finalize()
    print(f"trained {model_name}: final train loss {tlog.epochs[-1].train_loss:.6f}, "
          f"val loss {tlog.epochs[-1].val_loss:.6f}, {tlog.total_seconds:.1f}s")


def _write_predictions(path: str, preds: np.ndarray) -> None:
    preds = np.asarray(preds, dtype=np.float64)
    if preds.ndim == 1:
        preds = preds[:, None]
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            if preds.shape[1] == 1:
                writer.writerow(["index", "pred"])
            else:
                writer.writerow(["index"] + [f"pred_{j}" for j in range(preds.shape[1])])
            for i, row in enumerate(preds):
                writer.writerow([str(i)] + [repr(float(v)) for v in row])
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def read_predictions(path: str) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [[float(c) for c in row[1:]] for row in reader]
    return np.array(rows, dtype=np.float64)


def cmd_forecast(config: dict, out_dir: str, model_name: str) -> None:
    try:
        kind = ForecasterKind(model_name)
    except ValueError:
        raise ConfigError(
            f"unknown forecast backend {model_name!r}; pick from "
            f"{', '.join(k.value for k in ForecasterKind)}"
        ) from None
    manifest = RunManifest(out_dir, "forecast", config, model_name)
    artifact = load_artifact(_artifact_dir(out_dir))
    test = artifact.splits.test
    horizon = artifact.spec.horizon
    label = model_name
    extra = {}

    start = time.monotonic()
    if kind is ForecasterKind.PERSISTENCE:
        preds = np.array([persistence_forecast(test.inputs[i], horizon) for i in range(len(test))])
        inference_seconds = time.monotonic() - start
    elif kind in (ForecasterKind.LSTM, ForecasterKind.TCN):
        model = load_checkpoint(os.path.join(out_dir, f"checkpoint_{model_name}.json"))
        chunks = []
        from .nn import no_grad
        with no_grad():
            for lo in range(0, len(test), 256):
                out = model.forward_batch(test.inputs[lo : lo + 256], training=False)
                chunks.append(out.data)
        preds = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, horizon))
        inference_seconds = time.monotonic() - start
    elif kind is ForecasterKind.LLM_PROMPT:
        p = config["provider"]
        _require(config, "provider", "endpoint_url")
        pc = ProviderConfig(
            endpoint_url=p["endpoint_url"], model_id=p["model_id"],
            api_key_env_var=p["api_key_env_var"], temperature=p["temperature"],
            request_timeout=p["request_timeout"], max_retries=p["max_retries"],
            backoff_base=p["backoff_base"], max_in_flight=p["max_in_flight"],
            token_warn_threshold=p["token_warn_threshold"],
        )
        mode = PromptMode(p["prompt_mode"])
        shots = None
        if mode is PromptMode.FEW_SHOT:
            shots = select_shots(artifact.splits.train, p["shots"])
            extra["shot_origin_indices"] = [s.origin_index for s in shots]
        result = provider_mod.run_batch(
            pc, mode, shots, list(test.inputs), horizon,
            transcript_path=os.path.join(out_dir, "transcript_llm_prompt.jsonl"),
            failure_policy=p["failure_policy"],
        )
        missing = [i for i, v in enumerate(result.predictions) if v is None]
        if missing:
            raise CountMismatch(f"{len(missing)} windows failed (first: {missing[0]})")
        preds = np.array([pp.values for pp in result.predictions])
        inference_seconds = result.total_latency
        label = f"{p['model_id']} ({'Zero Shot' if mode is PromptMode.ZERO_SHOT else 'Few Shot'})"
        extra.update(provider_model_id=p["model_id"], temperature=p["temperature"],
                     prompt_mode=mode.value)
    elif kind is ForecasterKind.BRIDGE:
        b = config["bridge"]
        command = _require(config, "bridge", "command")
        session = bridge.spawn_and_handshake(command, b["handshake_timeout"], b["request_timeout"])
        try:
            rows = []
            for i in range(len(test)):
                values, _ = bridge.bridge_forecast(session, test.inputs[i], horizon)
                rows.append(values)
        finally:
            bridge.shutdown(session)
        preds = np.array(rows) if rows else np.zeros((0, horizon))
        inference_seconds = session.total_request_seconds
        label = f"bridge ({session.hello.model_name})"
        extra.update(bridge_model_name=session.hello.model_name)
    else:
        raise ConfigError(f"unknown forecast backend {model_name!r}")

    _write_predictions(os.path.join(out_dir, f"predictions_{model_name}.csv"), preds)
    _write_json(os.path.join(out_dir, f"forecast_meta_{model_name}.json"), {
        "model": model_name,
        "label": label,
        "inference_seconds": inference_seconds,
        "count": int(len(preds)),
    })
    manifest.update(inference_seconds=inference_seconds, count=int(len(preds)), **extra)
    manifest.finalize()
    print(f"forecast {model_name}: {len(preds)} windows in {inference_seconds:.2f}s")


def _discover_models(out_dir: str) -> list:
    found = []
    for name in sorted(os.listdir(out_dir)):
        if name.startswith("predictions_") and name.endswith(".csv"):
            found.append(name[len("predictions_") : -len(".csv")])
    return found


def cmd_evaluate(config: dict, out_dir: str, models: list) -> None:
    manifest = RunManifest(out_dir, "evaluate", config)
    artifact = load_artifact(_artifact_dir(out_dir))
    timing_mode = config["evaluation"]["timing"]
    if timing_mode not in ("wall", "none"):
        raise ConfigError(f"evaluation.timing must be wall|none, got {timing_mode!r}")
    models = models or _discover_models(out_dir)
    if not models:
        raise EvalError(f"no predictions_*.csv files in {out_dir}")

    reports = []
    for model_name in models:
        preds = read_predictions(os.path.join(out_dir, f"predictions_{model_name}.csv"))
        meta_path = os.path.join(out_dir, f"forecast_meta_{model_name}.json")
        meta = _read_json(meta_path) if os.path.exists(meta_path) else {}
        label = meta.get("label", model_name)
        training_seconds = None
        train_meta_path = os.path.join(out_dir, f"train_meta_{model_name}.json")
        if os.path.exists(train_meta_path):
            training_seconds = _read_json(train_meta_path).get("training_seconds")
        inference_seconds = meta.get("inference_seconds")

        if timing_mode == "none":
            time_seconds, training_seconds, inference_seconds = 0.0, None, None
        elif model_name in ("lstm", "tcn") and training_seconds is not None:
            time_seconds = training_seconds
        else:
            time_seconds = inference_seconds or 0.0

        report = evaluation.evaluate_model(
            list(preds), artifact.splits, label,
            time_seconds=time_seconds,
            manifest_ref=manifest.relative_ref(out_dir),
            training_seconds=training_seconds,
            inference_seconds=inference_seconds,
            standardizer=artifact.standardizer,
        )
        reports.append(report)

        series = evaluation.plot_data(
            artifact.splits.test.targets[:, 0], preds[:, 0],
            first_n=config["evaluation"]["plot_first_n"],
        )
        evaluation.plot_series_csv(series, os.path.join(out_dir, f"plot_{model_name}.csv"))

    evaluation.emit_report(reports, os.path.join(out_dir, "report.md"),
                           os.path.join(out_dir, "report.csv"))
    manifest.update(models=models)
    manifest.finalize()
    print(f"evaluated {len(reports)} model(s) -> {os.path.join(out_dir, 'report.md')}")


def cmd_report(config: dict, out_dir: str) -> None:
    """Re-render report.md from an existing report.csv."""
    csv_path = os.path.join(out_dir, "report.csv")
    if not os.path.exists(csv_path):
        raise EvalError(f"{csv_path} not found; run evaluate first")
    reports = []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            reports.append(evaluation.EvalReport(
                label=row["model"],
                metrics=evaluation.Metrics(float(row["rmse"]), float(row["mae"]), int(row["n"])),
                time_seconds=float(row["time_seconds"]),
            ))
    with open(os.path.join(out_dir, "report.md"), "w") as fh:
        fh.write(evaluation.render_markdown(reports))
    print(f"rendered {os.path.join(out_dir, 'report.md')}")


# --- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcst-arena",
        description="Forecasting benchmark pipeline: prepare, train, forecast, evaluate, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("prepare", "train", "forecast", "evaluate", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run config")
        p.add_argument("--out", default=None, help="run directory (default: new timestamped dir)")
        p.add_argument("--seed", type=int, default=None, help="override train.seed")
        if name in ("train", "forecast"):
            p.add_argument("--model", required=True,
                           help="train: lstm|tcn; forecast: persistence|lstm|tcn|llm_prompt|bridge")
        if name == "evaluate":
            p.add_argument("--model", action="append", default=None,
                           help="repeatable; default: every predictions_*.csv in the run dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config["train"]["seed"] = args.seed
        out_dir = args.out or default_out_dir(config)
        os.makedirs(out_dir, exist_ok=True)

        if args.command == "prepare":
            cmd_prepare(config, out_dir)
        elif args.command == "train":
            cmd_train(config, out_dir, args.model)
        elif args.command == "forecast":
            cmd_forecast(config, out_dir, args.model)
        elif args.command == "evaluate":
            cmd_evaluate(config, out_dir, args.model)
        elif args.command == "report":
            cmd_report(config, out_dir)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NnError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except PromptError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except BridgeFault as exc:
        print(f"bridge error: {exc}", file=sys.stderr)
        return EXIT_BRIDGE
    except EvalError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except FcstArenaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
