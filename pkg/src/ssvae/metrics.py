"""Relative prediction error and the power-threshold event detector."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .distributions import moving_average


def rpe(predicted, observed) -> float:
    """Channel-averaged relative prediction error; 1 means predicting zeros."""
    pred, obs = np.asarray(predicted, float), np.asarray(observed, float)
    if pred.shape != obs.shape:
        raise ValueError(f"rpe: shape mismatch {pred.shape} vs {obs.shape}")
    return float(np.mean(rpe_per_channel(pred, obs)))


def rpe_per_channel(predicted, observed) -> np.ndarray:
    pred, obs = np.asarray(predicted, float), np.asarray(observed, float)
    if pred.ndim == 1:
        pred, obs = pred[:, None], obs[:, None]
    energy = np.sum(obs ** 2, axis=0)
    if np.any(energy <= 0):
        bad = np.flatnonzero(energy <= 0).tolist()
        raise ValueError(f"rpe: observed channels {bad} are all zero")
    return np.sqrt(np.sum((pred - obs) ** 2, axis=0) / energy)


def feature_power(u) -> np.ndarray:
    u = np.asarray(u, float)
    return np.sum(u ** 2, axis=-1) if u.ndim > 1 else u ** 2


def lowpass(series, window: int) -> np.ndarray:
    return moving_average(series, window)


def normalize_signed(series) -> np.ndarray:
    """Affine map of the series onto [-1, 1]."""
    x = np.asarray(series, float)
    lo, hi = x.min(), x.max()
    if not hi > lo:
        raise ValueError("normalize_signed: constant series, nothing to detect")
    out = 2.0 * (x - lo) / (hi - lo) - 1.0
    out[x == lo] = -1.0
    out[x == hi] = 1.0
    return out


def detection_trace(u, window: int) -> np.ndarray:
    return normalize_signed(lowpass(feature_power(u), window))


# frames this close to the midpoint count as below threshold, so rounding
# under a rescaled input cannot flip them
THRESHOLD_TOL = 1e-9


def detect_events(u, window: int) -> np.ndarray:
    return (detection_trace(u, window) > THRESHOLD_TOL).astype(np.uint8)


def speech_hit_rate(detected, labels) -> float:
    """Fraction of positive-label frames flagged by the detector."""
    detected, labels = np.asarray(detected).astype(bool), np.asarray(labels).astype(bool)
    if detected.shape != labels.shape:
        raise ValueError(f"speech_hit_rate: length mismatch {detected.shape} vs {labels.shape}")
    if not labels.any():
        raise ValueError("speech_hit_rate: labels contain no positive frames")
    return float(np.mean(detected[labels]))


def tolerant_hit_rate(detected, labels, tolerance: int) -> float:
    """Hit rate where a detection within ``tolerance`` frames of a positive frame counts."""
    detected = np.asarray(detected).astype(bool)
    if tolerance > 0:
        kernel = np.ones(2 * tolerance + 1)
        detected = np.convolve(detected.astype(float), kernel, mode="same") > 0
    return speech_hit_rate(detected, labels)


def frame_accuracy(detected, labels) -> float:
    return float(np.mean(np.asarray(detected).astype(bool) == np.asarray(labels).astype(bool)))


def pearson(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    a, b = a - a.mean(), b - b.mean()
    denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(np.sum(a * b) / denom) if denom > 0 else 0.0


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def mean_std(values, digits: int = 2) -> str:
    v = np.asarray(values, float)
    return f"{v.mean():.{digits}f} ± {v.std():.{digits}f}"


@dataclass
class MetricsReport:
    model_name: str
    config_hash: str
    blocks: list = field(default_factory=list)
    rpe_per_block: list = field(default_factory=list)
    rpe_per_channel: list = field(default_factory=list)
    speech_hit_rate_per_block: list = field(default_factory=list)
    tolerant_hit_rate_per_block: list = field(default_factory=list)
    frame_accuracy_per_block: list = field(default_factory=list)

    def __post_init__(self):
        if any(v < 0 for v in self.rpe_per_block):
            raise ValueError("rpe values must be non-negative")
        if any(not 0 <= v <= 1 for v in self.speech_hit_rate_per_block):
            raise ValueError("hit rates must lie in [0, 1]")

    def summary(self) -> dict:
        return {
            "rpe_mean": float(np.mean(self.rpe_per_block)),
            "rpe_std": float(np.std(self.rpe_per_block)),
            "shr_mean": float(np.mean(self.speech_hit_rate_per_block)),
            "shr_std": float(np.std(self.speech_hit_rate_per_block)),
            "rpe": mean_std(self.rpe_per_block),
            "shr": mean_std(self.speech_hit_rate_per_block),
        }

    def to_dict(self) -> dict:
        out = asdict(self)
        out["summary"] = self.summary()
        return out
