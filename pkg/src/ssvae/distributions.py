"""Diagonal Gaussians and the smoothed Gaussian mixture used to build the input prior.

Density and divergence functions accept either numpy arrays or
:class:`~ssvae.tensor.Tensor` parameters; with tensors the result stays on the
autodiff graph.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import tensor as T
from .tensor import Tensor

LOG_2PI = float(np.log(2.0 * np.pi))
VARIANCE_FLOOR = 1e-6


def _values(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


@dataclass
class DiagGaussian:
    mean: object
    stddev: object

    def __post_init__(self):
        m, s = _values(self.mean), _values(self.stddev)
        if m.shape != s.shape:
            raise ValueError(f"DiagGaussian: mean shape {m.shape} != stddev shape {s.shape}")
        if not np.all(s > 0):
            raise ValueError("DiagGaussian: stddev must be strictly positive")

    @property
    def dim(self) -> int:
        return _values(self.mean).shape[-1]

    def detach(self) -> "DiagGaussian":
        return DiagGaussian(np.array(_values(self.mean)), np.array(_values(self.stddev)))

    def __getitem__(self, index) -> "DiagGaussian":
        return DiagGaussian(self.mean[index], self.stddev[index])


def _uses_graph(*xs) -> bool:
    return any(isinstance(x, Tensor) for x in xs)


def _check_dims(op, a, b):
    if _values(a).shape[-1] != _values(b).shape[-1]:
        raise ValueError(f"{op}: dimension mismatch {_values(a).shape} vs {_values(b).shape}")


def gauss_logpdf_diag(x, dist: DiagGaussian):
    """Log density of ``x`` summed over the last axis."""
    _check_dims("gauss_logpdf_diag", x, dist.mean)
    if not _uses_graph(x, dist.mean, dist.stddev):
        x, mu, sd = np.asarray(x, float), np.asarray(dist.mean, float), np.asarray(dist.stddev, float)
        out = np.sum(-0.5 * LOG_2PI - np.log(sd) - (x - mu) ** 2 / (2.0 * sd ** 2), axis=-1)
        return float(out) if out.ndim == 0 else out
    z = T.div(T.sub(x, dist.mean), dist.stddev)
    per = T.sub(T.sub(-0.5 * LOG_2PI, T.log(dist.stddev)), T.mul(0.5, T.square(z)))
    return T.sum_(per, axis=-1)


def kl_diag_gauss(q: DiagGaussian, p: DiagGaussian):
    """KL(q || p) for diagonal Gaussians, summed over the last axis."""
    _check_dims("kl_diag_gauss", q.mean, p.mean)
    if not _uses_graph(q.mean, q.stddev, p.mean, p.stddev):
        mq, sq = np.asarray(q.mean, float), np.asarray(q.stddev, float)
        mp, sp = np.asarray(p.mean, float), np.asarray(p.stddev, float)
        out = np.sum(np.log(sp / sq) + (sq ** 2 + (mq - mp) ** 2) / (2.0 * sp ** 2) - 0.5, axis=-1)
        return float(out) if out.ndim == 0 else out
    var_p = T.square(p.stddev)
    ratio = T.div(T.add(T.square(q.stddev), T.square(T.sub(q.mean, p.mean))), T.mul(2.0, var_p))
    per = T.sub(T.add(T.sub(T.log(p.stddev), T.log(q.stddev)), ratio), 0.5)
    return T.sum_(per, axis=-1)


# mixture ------------------------------------------------------------------

@dataclass
class GMMParams:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        k = self.weights.shape[0]
        if self.means.shape[0] != k or self.variances.shape != self.means.shape:
            raise ValueError("GMMParams: inconsistent component shapes")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("GMMParams: weights must lie on the simplex")
        if np.any(self.variances <= 0):
            raise ValueError("GMMParams: variances must be positive")

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]


def _component_loglik(frames: np.ndarray, params: GMMParams) -> np.ndarray:
    # T x K log N(frame_t; mean_k, var_k)
    var = params.variances
    quad = (
        (frames ** 2) @ (1.0 / var).T
        - 2.0 * frames @ (params.means / var).T
        + np.sum(params.means ** 2 / var, axis=1)
    )
    return -0.5 * (frames.shape[1] * LOG_2PI + np.sum(np.log(var), axis=1) + quad)


def _log_joint(frames, params):
    with np.errstate(divide="ignore"):
        return np.log(params.weights) + _component_loglik(frames, params)


def gmm_responsibilities(frames, params: GMMParams) -> np.ndarray:
    """T x K posterior component probabilities, normalised in log space."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != params.means.shape[1]:
        raise ValueError(f"gmm_responsibilities: frames {frames.shape} vs means {params.means.shape}")
    lj = _log_joint(frames, params)
    return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))


def gmm_log_likelihood(frames, params: GMMParams) -> float:
    return float(np.sum(logsumexp(_log_joint(np.asarray(frames, float), params), axis=1)))


def _kmeanspp_seeds(frames: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = frames.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((frames - frames[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(remaining))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((frames - frames[idx]) ** 2, axis=1))
    return frames[chosen].copy()


def gmm_em_fit(frames, k: int, max_iters: int = 100, seed: int = 0, tol: float = 1e-8):
    """Fit a diagonal-covariance mixture by EM.

    Returns ``(params, log_likelihoods)`` where entry ``i`` of the list is the
    data log-likelihood after ``i`` M-steps. A component whose total
    responsibility vanishes is re-seeded at the worst-explained frame.
    """
    frames = np.asarray(frames, dtype=np.float64)
    n, c = frames.shape
    if k < 2:
        raise ValueError("gmm_em_fit: need at least 2 components")
    if n < k:
        raise ValueError(f"gmm_em_fit: {n} frames is fewer than {k} components")
    rng = np.random.default_rng(seed)

    spread = np.maximum(frames.var(axis=0), VARIANCE_FLOOR)
    params = GMMParams(np.full(k, 1.0 / k), _kmeanspp_seeds(frames, k, rng), np.tile(spread, (k, 1)))

    history = []
    for _ in range(max_iters + 1):
        lj = _log_joint(frames, params)
        norm = logsumexp(lj, axis=1, keepdims=True)
        history.append(float(norm.sum()))
        if len(history) > max_iters:
            break
        if len(history) > 1 and history[-1] - history[-2] <= tol * abs(history[-2]):
            break
        resp = np.exp(lj - norm)
        nk = resp.sum(axis=0)
        means = params.means.copy()
        variances = params.variances.copy()
        for j in range(k):
            if nk[j] < 1e-10:
                worst = int(np.argmin(norm[:, 0]))
                means[j] = frames[worst]
                variances[j] = spread
                nk[j] = 1.0
                continue
            means[j] = resp[:, j] @ frames / nk[j]
            variances[j] = np.maximum(resp[:, j] @ (frames - means[j]) ** 2 / nk[j], VARIANCE_FLOOR)
        weights = np.maximum(nk, 0.0)
        weights = weights / weights.sum()
        params = GMMParams(weights, means, variances)
    return params, history


def weight_entropy(params: GMMParams) -> float:
    """Entropy of the mixing weights in nats; values near 0 signal a collapsed mixture."""
    w = params.weights[params.weights > 0]
    return float(-np.sum(w * np.log(w)))


# smoothing ----------------------------------------------------------------

def moving_average(x, window: int) -> np.ndarray:
    """Centred moving average along axis 0.

    Near the ends the window shrinks symmetrically, so linear trends pass
    through unchanged.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"moving average window must be a positive odd integer, got {window}")
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if window > n:
        raise ValueError(f"window {window} exceeds series length {n}")
    if window == 1:
        return x.copy()
    half = window // 2
    t = np.arange(n)
    h = np.minimum(half, np.minimum(t, n - 1 - t))
    csum = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x, axis=0)])
    total = csum[t + h + 1] - csum[t - h]
    width = (2 * h + 1).reshape((n,) + (1,) * (x.ndim - 1))
    return total / width


def smooth_responsibilities(resp, window: int) -> np.ndarray:
    out = moving_average(resp, window)
    if window == 1:
        return out
    return out / out.sum(axis=1, keepdims=True)


def background_component(smoothed) -> int:
    return int(np.argmax(np.asarray(smoothed).mean(axis=0)))


def smm_extract_instantaneous(frames, params: GMMParams, smoothed) -> np.ndarray:
    """Responsibility-gated deviation of each frame from the background mean."""
    frames = np.asarray(frames, dtype=np.float64)
    smoothed = np.asarray(smoothed, dtype=np.float64)
    b = background_component(smoothed)
    gate = 1.0 - smoothed[:, b]
    return gate[:, None] * (frames - params.means[b])
