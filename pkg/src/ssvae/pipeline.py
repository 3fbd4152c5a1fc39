"""Generate, train, evaluate and compare, with every artifact stamped by config hash and seed."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .baselines.ukf import fit_linear_system
from .baselines.vae import RecurrentVAE, VanillaVAE
from .checkpoint import MODEL_KINDS, CheckpointError, load_checkpoint, read_model_meta, save_checkpoint
from .config import ConfigError, MetricsConfig, TrainConfig
from .metrics import (MetricsReport, config_hash, detect_events, detection_trace, feature_power,
                      frame_accuracy, lowpass, mean_std, pearson, rpe, rpe_per_channel,
                      speech_hit_rate, tolerant_hit_rate)
from .model import SSVAE, FitHistory, fit
from .plots import bar_chart, line_chart
from .synth import DatasetError, generate_dataset, read_dataset, train_test_split, write_dataset

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DISPLAY_NAMES = {"ssvae": "SSVAE", "rnn": "recurrent VAE", "ukf": "UKF", "vanilla": "vanilla VAE"}


class ValidationError(ValueError):
    """Bad input to a pipeline command; maps to exit code 2."""


VALIDATION_ERRORS = (ValidationError, ConfigError, DatasetError, CheckpointError)


def _stamp(cfg_hash: str, seed: int) -> dict:
    return {"config_hash": cfg_hash, "seed": int(seed), "format_version": FORMAT_VERSION}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def _write_csv(path: Path, stamp: dict, header: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={stamp[k]}" for k in sorted(stamp)) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def _g(x: float) -> str:
    return repr(float(x))


def dataset_hash(meta_config: dict) -> str:
    return config_hash(meta_config)


# generate ------------------------------------------------------------------

def generate(cfg: TrainConfig, out) -> tuple[Path, list[int], list[int]]:
    synth = cfg.synth_config()
    blocks = generate_dataset(synth)
    train, test = train_test_split(synth.n_blocks, synth.train_fraction)
    extra = {**_stamp(cfg.hash(), cfg.seed), "train_blocks": train, "test_blocks": test}
    path = write_dataset(blocks, out, synth, extra=extra)
    return path, train, test


def load_split(dataset_dir):
    """Blocks plus the train/test split recorded when the dataset was written."""
    blocks, synth = read_dataset(dataset_dir)
    train, test = train_test_split(len(blocks), synth.train_fraction)
    return blocks, synth, train, test


# train ---------------------------------------------------------------------

def build_untrained(kind: str, obs_dim: int, cfg: TrainConfig):
    if kind == "ssvae":
        return SSVAE(obs_dim, cfg.ssvae_config())
    if kind == "vanilla":
        return VanillaVAE(obs_dim, cfg.baselines.vae_config(cfg.seed))
    if kind == "rnn":
        return RecurrentVAE(obs_dim, cfg.baselines.vae_config(cfg.seed))
    raise ValidationError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}")


def train(cfg: TrainConfig, dataset_dir, kind: str, out) -> Path:
    if kind not in MODEL_KINDS:
        raise ValidationError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}")
    blocks, synth, train_idx, _ = load_split(dataset_dir)
    windows = [blocks[i].observations for i in train_idx]
    obs_dim = synth.channels
    history = FitHistory()
    if kind == "ukf":
        b = cfg.baselines
        model = fit_linear_system(windows, b.ukf_state_dim, b.ukf_alpha, b.ukf_beta, b.ukf_kappa)
    else:
        model = build_untrained(kind, obs_dim, cfg)
        history = fit(windows, model) if kind == "ssvae" else model.fit(windows)
    out = Path(out)
    stamp = _stamp(cfg.hash(), cfg.seed)
    extra = {**stamp, "dataset_hash": dataset_hash(asdict(synth)), "train_blocks": train_idx}
    save_checkpoint(model, out, extra=extra)
    rows = [(epoch, *(_g(v) for v in vals)) for epoch, *vals in history.rows()]
    _write_csv(out / "loss_curve.csv", stamp, ["epoch", "loss", "recon", "kl_r", "kl_u"], rows)
    return out


# evaluate ------------------------------------------------------------------

def _features(model, kind: str, o: np.ndarray):
    """Reconstruction, detection features and (SSVAE only) background states."""
    if kind == "ssvae":
        seq = model.infer_sequence(o)
        return seq.reconstruction, seq.u_samples, seq.r_samples
    if kind == "ukf":
        preds, states = model.track(o)
        return preds, states, None
    o_hat, q = model.reconstruct(o)
    return o_hat, np.asarray(q.mean), None


def check_compatible(meta: dict, synth, checkpoint_dir) -> None:
    obs_dim = meta["hyperparameters"]["obs_dim"]
    if obs_dim != synth.channels:
        raise ValidationError(f"{checkpoint_dir}: checkpoint expects {obs_dim} channels, "
                              f"dataset has {synth.channels}")
    expected = meta.get("dataset_hash")
    actual = dataset_hash(asdict(synth))
    if expected is not None and expected != actual:
        raise ValidationError(f"{checkpoint_dir}: trained on dataset {expected}, evaluating on {actual}")


def evaluate_model(model, kind: str, blocks, test_idx, metrics_cfg: MetricsConfig, cfg_hash: str):
    """Per-test-block metrics plus the traces used for plotting."""
    report = MetricsReport(kind, cfg_hash)
    traces, separation = {}, []
    w, sw = metrics_cfg.lowpass_window, metrics_cfg.separation_window
    for i in test_idx:
        b = blocks[i]
        o_hat, feats, background = _features(model, kind, b.observations)
        detected = detect_events(feats, w)
        report.blocks.append(i)
        report.rpe_per_block.append(rpe(o_hat, b.observations))
        report.rpe_per_channel.append(rpe_per_channel(o_hat, b.observations).tolist())
        report.speech_hit_rate_per_block.append(speech_hit_rate(detected, b.labels))
        report.tolerant_hit_rate_per_block.append(
            tolerant_hit_rate(detected, b.labels, metrics_cfg.tolerance_frames))
        report.frame_accuracy_per_block.append(frame_accuracy(detected, b.labels))
        traces[i] = {"trace": detection_trace(feats, w), "detected": detected, "labels": b.labels}
        if background is not None:
            labels = b.labels.astype(float)
            separation.append({"block": i,
                               "corr_u": pearson(lowpass(feature_power(feats), sw), labels),
                               "corr_r": pearson(lowpass(feature_power(background), sw), labels)})
    return report, traces, separation


def _metrics_document(report: MetricsReport, separation, stamp: dict, kind: str) -> dict:
    doc = {**stamp, "model": kind, **report.to_dict()}
    doc["config_hash"] = stamp["config_hash"]
    if separation:
        doc["separation"] = separation
    return doc


def _metrics_rows(report: MetricsReport, kind: str):
    for k, block in enumerate(report.blocks):
        yield (kind, block, _g(report.rpe_per_block[k]), _g(report.speech_hit_rate_per_block[k]),
               _g(report.tolerant_hit_rate_per_block[k]), _g(report.frame_accuracy_per_block[k]))


METRICS_HEADER = ["model", "block", "rpe", "shr", "shr_tolerant", "frame_accuracy"]


def _load_for_dataset(checkpoint_dir, synth):
    meta = read_model_meta(checkpoint_dir)
    check_compatible(meta, synth, checkpoint_dir)
    model, meta = load_checkpoint(checkpoint_dir)
    return model, meta


def evaluate(checkpoint_dir, dataset_dir, out, metrics_cfg: MetricsConfig | None = None) -> dict:
    metrics_cfg = metrics_cfg or MetricsConfig()
    blocks, synth, _, test_idx = load_split(dataset_dir)
    model, meta = _load_for_dataset(checkpoint_dir, synth)
    kind = meta["kind"]
    stamp = _stamp(meta["config_hash"], meta["seed"])
    report, _, separation = evaluate_model(model, kind, blocks, test_idx, metrics_cfg, stamp["config_hash"])
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    doc = _metrics_document(report, separation, stamp, kind)
    _write_json(out / "metrics.json", doc)
    _write_csv(out / "metrics.csv", stamp, METRICS_HEADER, _metrics_rows(report, kind))
    return doc


# compare -------------------------------------------------------------------

def ordering(values: dict[str, float], higher_is_better: bool, tol: float = 1e-12) -> str:
    """Best-first ordering of values; ties (within ``tol``) are joined by ``=``.

    Higher-is-better orderings read ``a > b``, lower-is-better ones ``a < b``.
    """
    sep = " > " if higher_is_better else " < "
    items = sorted(values.items(), key=lambda kv: (-kv[1] if higher_is_better else kv[1], kv[0]))
    out, prev = [], None
    for name, v in items:
        if prev is not None:
            out.append(" = " if abs(v - prev) <= tol else sep)
        out.append(name)
        prev = v
    return "".join(out)


def _markdown_table(docs: dict[str, dict]) -> str:
    lines = ["| model | RPE | SHR | SHR (tolerant) | frame accuracy |", "|---|---|---|---|---|"]
    for name, doc in docs.items():
        lines.append(f"| {name} | {doc['summary']['rpe']} | {doc['summary']['shr']} | "
                     f"{mean_std(doc['tolerant_hit_rate_per_block'])} | "
                     f"{mean_std(doc['frame_accuracy_per_block'])} |")
    return "\n".join(lines) + "\n"


def compare(dataset_dir, checkpoints: dict[str, str], out, metrics_cfg: MetricsConfig | None = None) -> dict:
    """Evaluate each named checkpoint on the shared test split and write the report and plots.

    ``checkpoints`` maps a row name (usually the model kind) to a checkpoint directory.
    """
    missing = [f"{name} ({path})" for name, path in checkpoints.items()
               if not (Path(path) / "model.json").is_file()]
    if missing:
        raise ValidationError("missing checkpoints: " + ", ".join(missing))
    metrics_cfg = metrics_cfg or MetricsConfig()
    blocks, synth, _, test_idx = load_split(dataset_dir)
    docs, traces, hashes = {}, {}, set()
    for name, path in checkpoints.items():
        model, meta = _load_for_dataset(path, synth)
        stamp = _stamp(meta["config_hash"], meta["seed"])
        hashes.add((stamp["config_hash"], stamp["seed"]))
        report, tr, sep = evaluate_model(model, meta["kind"], blocks, test_idx, metrics_cfg, stamp["config_hash"])
        docs[name] = _metrics_document(report, sep, stamp, meta["kind"])
        traces[name] = tr
    cfg_hash, seed = sorted(hashes)[0]
    stamp = _stamp(cfg_hash, seed)
    if len(hashes) > 1:
        log.warning("checkpoints were trained under different configs: %s", sorted(hashes))

    rpe_means = {n: d["summary"]["rpe_mean"] for n, d in docs.items()}
    shr_means = {n: d["summary"]["shr_mean"] for n, d in docs.items()}
    result = {**stamp, "test_blocks": test_idx, "models": docs,
              "rpe_ordering": ordering(rpe_means, higher_is_better=False),
              "shr_ordering": ordering(shr_means, higher_is_better=True)}
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "compare.json", result)
    rows = [row for name, d in docs.items() for row in
            _metrics_rows(MetricsReport(name, cfg_hash, d["blocks"], d["rpe_per_block"], [],
                                        d["speech_hit_rate_per_block"], d["tolerant_hit_rate_per_block"],
                                        d["frame_accuracy_per_block"]), name)]
    _write_csv(out / "metrics.csv", stamp, METRICS_HEADER, rows)
    md = ["# Model comparison", "", f"config `{cfg_hash}`, seed {seed}, test blocks {test_idx}", "",
          _markdown_table(docs), f"RPE ordering: {result['rpe_ordering']}", "",
          f"SHR ordering: {result['shr_ordering']}", ""]
    (out / "compare.md").write_text("\n".join(md))

    comment = f"config_hash={cfg_hash} seed={seed} format_version={FORMAT_VERSION}"
    series = {name: d["rpe_per_block"] for name, d in docs.items()}
    (out / "compare.svg").write_text(bar_chart([str(i) for i in test_idx], series,
                                               "Test-block RPE", "RPE", comment, reference=1.0))
    first = next(iter(docs))
    block = test_idx[0]
    tr = traces[first][block]
    overlay = {f"{first} smoothed power": tr["trace"],
               "event labels": 0.95 * (2.0 * tr["labels"] - 1.0),
               "detections": 0.85 * (2.0 * tr["detected"] - 1.0)}
    (out / "detection.svg").write_text(line_chart(overlay, f"Event detection, block {block}",
                                                  "normalized power", comment))
    return result


def run_experiment(cfg: TrainConfig, out) -> dict:
    """Full experiment under ``out``: dataset, one checkpoint per kind, per-model metrics, comparison."""
    out = Path(out)
    generate(cfg, out / "data")
    order = ("ssvae", "rnn", "ukf", "vanilla")
    for kind in order:
        log.info("training %s", kind)
        train(cfg, out / "data", kind, out / "checkpoints" / kind)
        evaluate(out / "checkpoints" / kind, out / "data", out / "eval" / kind, cfg.metrics)
    return compare(out / "data", {k: out / "checkpoints" / k for k in order}, out / "compare", cfg.metrics)
