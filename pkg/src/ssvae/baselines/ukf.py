"""Unscented Kalman filter baseline with a least-squares linear system fitted in PCA space."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class FilterError(np.linalg.LinAlgError):
    """Covariance lost positive-definiteness even after jitter."""


@dataclass
class UKFModel:
    state_dim: int
    obs_dim: int
    transition: Callable[[np.ndarray], np.ndarray]  # rows of states -> rows of states
    emission: Callable[[np.ndarray], np.ndarray]    # rows of states -> rows of observations
    process_noise: np.ndarray                        # diagonal
    obs_noise: np.ndarray                            # diagonal
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0

    def weights(self):
        return sigma_weights(self.state_dim, self.alpha, self.beta, self.kappa)


def sigma_weights(n: int, alpha: float, beta: float, kappa: float):
    """Mean weights, covariance weights and the spread parameter lambda."""
    lam = alpha ** 2 * (n + kappa) - n
    wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + (1.0 - alpha ** 2 + beta)
    return wm, wc, lam


def _cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(cov + 1e-9 * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError:
        raise FilterError("covariance is not positive definite after 1e-9 jitter") from None


def sigma_points(mean: np.ndarray, cov: np.ndarray, lam: float) -> np.ndarray:
    n = mean.shape[0]
    root = _cholesky((n + lam) * cov)
    return np.vstack([mean, mean + root.T, mean - root.T])


def _unscented(points, fn, wm, wc):
    mapped = fn(points)
    mean = wm @ mapped
    dev = mapped - mean
    return mapped, mean, (wc[:, None] * dev).T @ dev


def ukf_step(mean, cov, observation, model: UKFModel):
    """Predict from the previous posterior, then update on ``observation``.

    Returns ``(posterior mean, posterior covariance, predicted observation)``.
    """
    wm, wc, lam = model.weights()
    pts = sigma_points(mean, cov, lam)
    _, m_pred, p_pred = _unscented(pts, model.transition, wm, wc)
    p_pred = p_pred + np.diag(model.process_noise)

    pts = sigma_points(m_pred, p_pred, lam)
    y_pts, y_pred, s = _unscented(pts, model.emission, wm, wc)
    s = s + np.diag(model.obs_noise)
    cross = (wc[:, None] * (pts - m_pred)).T @ (y_pts - y_pred)
    gain = np.linalg.solve(s, cross.T).T
    new_mean = m_pred + gain @ (np.asarray(observation, float) - y_pred)
    new_cov = p_pred - gain @ s @ gain.T
    return new_mean, 0.5 * (new_cov + new_cov.T), y_pred


def ukf_track(observations, model: UKFModel, mean0=None, cov0=None):
    """One-step-ahead predicted observations and filtered state means."""
    obs = np.asarray(observations, float)
    n = model.state_dim
    mean = np.zeros(n) if mean0 is None else np.asarray(mean0, float)
    cov = np.eye(n) if cov0 is None else np.asarray(cov0, float)
    preds = np.empty((obs.shape[0], model.obs_dim))
    states = np.empty((obs.shape[0], n))
    for t, o_t in enumerate(obs):
        mean, cov, preds[t] = ukf_step(mean, cov, o_t, model)
        states[t] = mean
    return preds, states


@dataclass
class LinearSystem:
    """x_t = A x_{t-1} + w,  o_t = H x_t + offset + e, with diagonal noise."""

    transition_matrix: np.ndarray
    emission_matrix: np.ndarray
    offset: np.ndarray
    process_noise: np.ndarray
    obs_noise: np.ndarray
    initial_cov: np.ndarray
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0

    kind = "ukf"
    ARRAYS = ("transition_matrix", "emission_matrix", "offset", "process_noise", "obs_noise", "initial_cov")

    @property
    def state_dim(self) -> int:
        return self.transition_matrix.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.emission_matrix.shape[0]

    def ukf_model(self) -> UKFModel:
        a, h, b = self.transition_matrix, self.emission_matrix, self.offset
        return UKFModel(self.state_dim, self.obs_dim, lambda x: x @ a.T, lambda x: x @ h.T + b,
                        self.process_noise, self.obs_noise, self.alpha, self.beta, self.kappa)

    def track(self, observations):
        return ukf_track(observations, self.ukf_model(), np.zeros(self.state_dim), self.initial_cov)

    def reconstruct(self, observations):
        return self.track(observations)[0]

    def hidden_states(self, observations):
        return self.track(observations)[1]

    def astype(self, dtype) -> "LinearSystem":
        arrays = {k: np.asarray(getattr(self, k)).astype(dtype) for k in self.ARRAYS}
        return LinearSystem(**arrays, alpha=self.alpha, beta=self.beta, kappa=self.kappa)


def fit_linear_system(windows: Sequence[np.ndarray], state_dim: int, alpha=0.1, beta=2.0, kappa=0.0,
                      noise_floor: float = 1e-6) -> LinearSystem:
    """PCA state, least-squares transition, residual variances as diagonal noise."""
    windows = [np.asarray(w, dtype=np.float64) for w in windows]
    frames = np.vstack(windows)
    offset = frames.mean(axis=0)
    _, _, vt = np.linalg.svd(frames - offset, full_matrices=False)
    h = vt[:state_dim].T
    states = [(w - offset) @ h for w in windows]
    prev = np.vstack([s[:-1] for s in states])
    nxt = np.vstack([s[1:] for s in states])
    coef, *_ = np.linalg.lstsq(prev, nxt, rcond=None)
    a = coef.T
    q = np.maximum((nxt - prev @ a.T).var(axis=0), noise_floor)
    all_states = np.vstack(states)
    r = np.maximum((frames - offset - all_states @ h.T).var(axis=0), noise_floor)
    p0 = np.cov(all_states.T).reshape(state_dim, state_dim)
    return LinearSystem(a, h, offset, q, r, p0, alpha, beta, kappa)
