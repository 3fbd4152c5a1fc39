"""``model.json`` + ``weights.bin`` checkpoints for every model kind."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .baselines.ukf import LinearSystem
from .baselines.vae import RecurrentVAE, VAEConfig, VanillaVAE
from .model import SSVAE, SSVAEConfig
from .nn import flatten_params, load_flat

FORMAT_VERSION = 1
MODEL_KINDS = ("ssvae", "vanilla", "rnn", "ukf")


class CheckpointError(ValueError):
    pass


def _param_arrays(model):
    if isinstance(model, LinearSystem):
        return [(name, np.asarray(getattr(model, name))) for name in LinearSystem.ARRAYS]
    return [(p.name, p.data) for p in model.parameters()]


def _hyperparameters(model) -> dict:
    if isinstance(model, LinearSystem):
        return {"obs_dim": model.obs_dim, "state_dim": model.state_dim,
                "alpha": model.alpha, "beta": model.beta, "kappa": model.kappa}
    return model.hyperparameters()


def save_checkpoint(model, directory, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = _param_arrays(model)
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "hyperparameters": _hyperparameters(model),
        "parameters": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    if extra:
        meta.update(extra)
    flat = np.concatenate([a.reshape(-1) for _, a in arrays]) if arrays else np.zeros(0)
    (directory / "weights.bin").write_bytes(flat.astype("<f4").tobytes())
    (directory / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return directory


def read_model_meta(directory) -> dict:
    path = Path(directory) / "model.json"
    try:
        meta = json.loads(path.read_text())
    except FileNotFoundError:
        raise CheckpointError(f"{path}: missing") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: malformed ({exc})") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format_version {meta.get('format_version')!r}, expected {FORMAT_VERSION}")
    if meta.get("kind") not in MODEL_KINDS:
        raise CheckpointError(f"{path}: unknown model kind {meta.get('kind')!r}")
    return meta


def build_model(kind: str, hyper: dict):
    hyper = dict(hyper)
    obs_dim = hyper.pop("obs_dim")
    if kind == "ssvae":
        return SSVAE(obs_dim, SSVAEConfig(**hyper))
    if kind == "vanilla":
        return VanillaVAE(obs_dim, VAEConfig(**hyper))
    if kind == "rnn":
        return RecurrentVAE(obs_dim, VAEConfig(**hyper))
    raise CheckpointError(f"cannot build model of kind {kind!r}")


def load_checkpoint(directory):
    directory = Path(directory)
    meta = read_model_meta(directory)
    raw = (directory / "weights.bin").read_bytes()
    flat = np.frombuffer(raw, dtype="<f4").astype(np.float32)
    expected = sum(int(np.prod(p["shape"])) for p in meta["parameters"])
    if flat.size != expected or len(raw) % 4:
        raise CheckpointError(f"{directory / 'weights.bin'}: expected {4 * expected} bytes, found {len(raw)}")
    kind, hyper = meta["kind"], meta["hyperparameters"]
    if kind == "ukf":
        arrays, offset = {}, 0
        for p in meta["parameters"]:
            n = int(np.prod(p["shape"]))
            arrays[p["name"]] = flat[offset: offset + n].reshape(p["shape"]).astype(np.float64)
            offset += n
        return LinearSystem(**arrays, alpha=hyper["alpha"], beta=hyper["beta"], kappa=hyper["kappa"]), meta
    model = build_model(kind, hyper)
    names = [p.name for p in model.parameters()]
    if names != [p["name"] for p in meta["parameters"]]:
        raise CheckpointError(f"{directory / 'model.json'}: parameter layout does not match a {kind} model")
    load_flat(model.parameters(), flat)
    return model, meta


def flat_weights(model) -> np.ndarray:
    if isinstance(model, LinearSystem):
        return np.concatenate([a.reshape(-1) for _, a in _param_arrays(model)])
    return flatten_params(model.parameters())
