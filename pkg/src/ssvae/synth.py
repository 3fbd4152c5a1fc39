"""Synthetic multichannel recordings from a separable linear-Gaussian state-space model.

The system matrices depend only on the seed, so every block of a dataset is
a different stretch of the same "recording"; latent trajectories, events and
noise depend on ``(seed, block_index)``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.linalg import expm

FORMAT_VERSION = 1


class DatasetError(ValueError):
    """A dataset directory is malformed or inconsistent."""


@dataclass
class SynthConfig:
    channels: int = 32
    background_dim: int = 4
    input_dim: int = 3
    frames_per_block: int = 570
    n_blocks: int = 19
    ar_coefficient: float = 0.98
    event_rate: float = 4.0
    event_duration: int = 60
    noise_std: float = 0.1
    process_noise_std: float = 0.2
    input_scale: float = 2.0
    input_coupling: float = 0.02
    burst_smoothing: float = 0.8
    rotation_scale: float = 0.03
    train_fraction: float = 0.6
    seed: int = 0

    def validate(self) -> "SynthConfig":
        if not 0.0 < self.ar_coefficient < 1.0:
            raise ValueError(f"ar_coefficient must lie in (0, 1), got {self.ar_coefficient}")
        for name in ("channels", "background_dim", "input_dim", "frames_per_block", "n_blocks"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.background_dim + self.input_dim > self.channels:
            raise ValueError("background_dim + input_dim must not exceed channels")
        if self.event_rate < 0:
            raise ValueError("event_rate must be non-negative")
        if self.event_rate > 0 and not 1 <= self.event_duration < self.frames_per_block:
            raise ValueError("event_duration must lie in [1, frames_per_block)")
        if self.noise_std < 0 or self.process_noise_std < 0:
            raise ValueError("noise levels must be non-negative")
        if not 0.0 <= self.burst_smoothing < 1.0:
            raise ValueError("burst_smoothing must lie in [0, 1)")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        return self


@dataclass
class SyntheticBlock:
    observations: np.ndarray       # T x C
    background_latent: np.ndarray  # T x d_r
    input_latent: np.ndarray       # T x d_u
    labels: np.ndarray             # T, uint8
    emission_r: np.ndarray         # C x d_r
    emission_u: np.ndarray         # C x d_u
    transition: np.ndarray         # d_r x d_r
    input_map: np.ndarray          # d_r x d_u
    noise_std: float

    ARRAYS = ("observations", "background_latent", "input_latent", "labels",
              "emission_r", "emission_u", "transition", "input_map")

    def __eq__(self, other):
        if not isinstance(other, SyntheticBlock):
            return NotImplemented
        return self.noise_std == other.noise_std and all(
            np.array_equal(getattr(self, a), getattr(other, a)) for a in self.ARRAYS)


def system_matrices(config: SynthConfig):
    """(H1, H2, F1, F2) shared by every block of a dataset."""
    rng = np.random.default_rng([config.seed, 0])
    c, dr, du = config.channels, config.background_dim, config.input_dim
    q, _ = np.linalg.qr(rng.standard_normal((c, dr + du)))
    h1, h2 = q[:, :dr], q[:, dr:]
    skew = rng.standard_normal((dr, dr)) * config.rotation_scale
    rotation = expm(skew - skew.T)
    f1 = config.ar_coefficient * rotation
    f2 = config.input_coupling * rng.standard_normal((dr, du))
    return h1, h2, f1, f2


def event_labels(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    n = config.frames_per_block
    labels = np.zeros(n, dtype=np.uint8)
    if config.event_rate <= 0:
        return labels
    dur = config.event_duration
    mean_gap = n / config.event_rate
    t = rng.exponential(mean_gap)
    while t < n:
        start = int(t)
        labels[start: start + dur] = 1
        t = start + dur + rng.exponential(mean_gap)
    if not labels.any():
        start = int(rng.integers(0, n - dur + 1))
        labels[start: start + dur] = 1
    if labels.all():
        labels[-1] = 0
    return labels


def _bursts(labels: np.ndarray, config: SynthConfig, rng) -> np.ndarray:
    n, du = labels.shape[0], config.input_dim
    b = config.burst_smoothing
    innovation = np.sqrt(1.0 - b * b)
    u = np.zeros((n, du))
    z = rng.standard_normal(du)
    for t in range(n):
        if labels[t]:
            if t == 0 or not labels[t - 1]:
                z = rng.standard_normal(du)
            else:
                z = b * z + innovation * rng.standard_normal(du)
            u[t] = config.input_scale * z
    return u


def generate_block(config: SynthConfig, block_index: int) -> SyntheticBlock:
    config.validate()
    h1, h2, f1, f2 = system_matrices(config)
    rng = np.random.default_rng([config.seed, 1, block_index])
    n, dr = config.frames_per_block, config.background_dim

    labels = event_labels(config, rng)
    u = _bursts(labels, config, rng)

    sv = config.process_noise_std
    r = np.zeros((n, dr))
    r[0] = rng.standard_normal(dr) * sv / np.sqrt(1.0 - config.ar_coefficient ** 2)
    v = rng.standard_normal((n, dr)) * sv
    for t in range(1, n):
        r[t] = f1 @ r[t - 1] + f2 @ u[t - 1] + v[t]

    e = rng.standard_normal((n, config.channels)) * config.noise_std
    o = r @ h1.T + u @ h2.T + e

    f32 = np.float32
    return SyntheticBlock(o.astype(f32), r.astype(f32), u.astype(f32), labels,
                          h1.astype(f32), h2.astype(f32), f1.astype(f32), f2.astype(f32),
                          float(config.noise_std))


def generate_dataset(config: SynthConfig) -> list[SyntheticBlock]:
    return [generate_block(config, i) for i in range(config.n_blocks)]


def train_test_split(n_blocks: int, train_fraction: float = 0.6) -> tuple[list[int], list[int]]:
    """First ``round(train_fraction * n)`` blocks train, the rest test; both non-empty when n >= 2."""
    n_train = int(round(train_fraction * n_blocks))
    if n_blocks >= 2:
        n_train = min(max(n_train, 1), n_blocks - 1)
    return list(range(n_train)), list(range(n_train, n_blocks))


# on-disk format -----------------------------------------------------------

def _block_shapes(cfg: dict) -> list[tuple[str, tuple]]:
    n, c = cfg["frames_per_block"], cfg["channels"]
    dr, du = cfg["background_dim"], cfg["input_dim"]
    return [
        ("observations", (n, c)), ("background_latent", (n, dr)), ("input_latent", (n, du)),
        ("labels", (n,)), ("emission_r", (c, dr)), ("emission_u", (c, du)),
        ("transition", (dr, dr)), ("input_map", (dr, du)),
    ]


def _block_nbytes(cfg: dict) -> int:
    return 4 * sum(int(np.prod(s)) for _, s in _block_shapes(cfg))


def write_dataset(blocks: list[SyntheticBlock], directory, config: SynthConfig, extra: dict | None = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg = asdict(config)
    size = _block_nbytes(cfg)
    chunks, index = [], []
    for i, block in enumerate(blocks):
        parts = []
        for name, shape in _block_shapes(cfg):
            arr = np.asarray(getattr(block, name))
            if arr.shape != shape:
                raise DatasetError(f"block {i}: {name} has shape {arr.shape}, config implies {shape}")
            parts.append(arr.astype("<f4").tobytes())
        chunk = b"".join(parts)
        index.append({"block": i, "offset": i * size, "nbytes": len(chunk)})
        chunks.append(chunk)
    meta = {"format_version": FORMAT_VERSION, "config": cfg, "n_blocks_written": len(blocks),
            "blocks": index}
    if extra:
        meta.update(extra)
    (directory / "blocks.bin").write_bytes(b"".join(chunks))
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return directory


def read_meta(directory) -> dict:
    path = Path(directory) / "meta.json"
    try:
        meta = json.loads(path.read_text())
    except FileNotFoundError:
        raise DatasetError(f"{path}: missing") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: malformed header ({exc})") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise DatasetError(f"{path}: format_version {meta.get('format_version')!r}, expected {FORMAT_VERSION}")
    for key in ("config", "blocks"):
        if key not in meta:
            raise DatasetError(f"{path}: malformed header, missing {key!r}")
    return meta


def read_dataset(directory) -> tuple[list[SyntheticBlock], SynthConfig]:
    directory = Path(directory)
    meta = read_meta(directory)
    known = {f.name for f in fields(SynthConfig)}
    unknown = set(meta["config"]) - known
    if unknown:
        raise DatasetError(f"{directory / 'meta.json'}: unknown config keys {sorted(unknown)}")
    config = SynthConfig(**meta["config"])
    cfg = asdict(config)
    size = _block_nbytes(cfg)
    raw = (directory / "blocks.bin").read_bytes()
    expected = size * len(meta["blocks"])
    if len(raw) != expected:
        raise DatasetError(f"{directory / 'blocks.bin'}: expected {expected} bytes, found {len(raw)}")

    blocks = []
    for entry in meta["blocks"]:
        i = entry["block"]
        if entry["nbytes"] != size:
            raise DatasetError(f"meta.json block {i}: header declares {entry['nbytes']} bytes, "
                               f"channel/frame counts imply {size}")
        if entry["offset"] + size > len(raw):
            raise DatasetError(f"meta.json block {i}: offset {entry['offset']} beyond data end {len(raw)}")
        pos = entry["offset"]
        arrays = {}
        for name, shape in _block_shapes(cfg):
            count = int(np.prod(shape))
            arr = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(shape)
            arrays[name] = arr.astype(np.float32)
            pos += 4 * count
        arrays["labels"] = arrays["labels"].astype(np.uint8)
        blocks.append(SyntheticBlock(**arrays, noise_std=float(config.noise_std)))
    return blocks, config
