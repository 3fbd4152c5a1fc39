"""Two-branch state-space VAE.

The encoder trunk feeds a ``u`` head (instantaneous inputs) and an ``r`` head
(observation-side proposal for the background state). The r posterior at each
step is the precision-weighted product of that proposal and the transition
prior ``p(r_t | r_{t-1}, u_{t-1})``. The prior on ``u`` comes from a smoothed
Gaussian mixture fitted to a blend of observations and reconstructions.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .distributions import (
    DiagGaussian,
    gmm_em_fit,
    gmm_responsibilities,
    kl_diag_gauss,
    smm_extract_instantaneous,
    smooth_responsibilities,
)
from .nn import MLP, GaussianHead, positive_std
from .optim import AdamState, adam_step
from .tensor import Tensor

log = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


class DivergenceError(RuntimeError):
    """Training produced a non-finite or exploding loss."""

    def __init__(self, message: str, epoch: int | None = None, parts: dict | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.parts = parts or {}


@dataclass
class SSVAEConfig:
    latent_dim_r: int = 8
    latent_dim_u: int = 4
    encoder_hidden: tuple = (128, 128)
    transition_hidden: tuple = (64, 64)
    decoder_hidden: tuple = (64, 64)
    alpha1: float = 1.0
    alpha2: float = 0.1
    alpha3: float = 0.1
    gamma: float = 0.7
    smm_components: int = 3
    smm_window: int = 31
    smm_max_iters: int = 50
    kl_target_std_floor: float = 0.3
    learning_rate: float = 1e-3
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        self.encoder_hidden = tuple(self.encoder_hidden)
        self.transition_hidden = tuple(self.transition_hidden)
        self.decoder_hidden = tuple(self.decoder_hidden)

    def validate(self) -> "SSVAEConfig":
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.alpha1 <= 0 or self.alpha2 < 0 or self.alpha3 < 0:
            raise ValueError("alpha1 must be positive and alpha2, alpha3 non-negative")
        if self.smm_components < 2:
            raise ValueError("smm_components must be at least 2")
        if self.latent_dim_r < 1 or self.latent_dim_u < 1:
            raise ValueError("latent dims must be positive")
        return self


@dataclass
class LatentSequence:
    q_u: DiagGaussian
    q_r: DiagGaussian
    u_samples: np.ndarray
    r_samples: np.ndarray
    reconstruction: np.ndarray


class SSVAE:
    kind = "ssvae"

    def __init__(self, obs_dim: int, config: SSVAEConfig | None = None, init: str = "glorot",
                 dtype=np.float32):
        self.config = (config or SSVAEConfig()).validate()
        self.obs_dim = int(obs_dim)
        self.dtype = np.dtype(dtype)
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, 7]) if init == "glorot" else None
        dr, du = cfg.latent_dim_r, cfg.latent_dim_u
        trunk_sizes = (obs_dim,) + cfg.encoder_hidden
        self.encoder_trunk = MLP(trunk_sizes, rng, dtype, name="encoder_trunk")
        self.encoder_u_head = GaussianHead(trunk_sizes[-1], du, rng, dtype, name="encoder_u_head")
        self.encoder_r_head = GaussianHead(trunk_sizes[-1], dr, rng, dtype, name="encoder_r_head")
        self.transition_net = MLP((dr + du,) + cfg.transition_hidden + (2 * dr,), rng, dtype,
                                  name="transition_net")
        self.decoder_net = MLP((dr + du,) + cfg.decoder_hidden + (obs_dim,), rng, dtype,
                               name="decoder_net")

    def parameters(self) -> list[Tensor]:
        return (self.encoder_trunk.parameters() + self.encoder_u_head.parameters()
                + self.encoder_r_head.parameters() + self.transition_net.parameters()
                + self.decoder_net.parameters())

    def hyperparameters(self) -> dict:
        return {"obs_dim": self.obs_dim, **asdict(self.config)}

    def _as_input(self, x) -> Tensor:
        if isinstance(x, Tensor):
            return x if x.data.ndim == 2 else T.reshape(x, (1, -1))
        arr = np.asarray(x, dtype=self.dtype)
        return Tensor(arr if arr.ndim == 2 else arr.reshape(1, -1))

    # building blocks ----------------------------------------------------
    def _trunk(self, o: Tensor) -> Tensor:
        if o.data.shape[-1] != self.obs_dim:
            raise T.ShapeError(f"encode: expected {self.obs_dim} channels, got {o.data.shape[-1]}")
        if self.encoder_trunk.layers:
            return self.encoder_trunk(o, final_activation=True)
        return o

    def encode(self, o) -> tuple[DiagGaussian, DiagGaussian]:
        """(q_u, q_r_obs) for each row of ``o``."""
        h = self._trunk(self._as_input(o))
        mu_u, sd_u = self.encoder_u_head(h)
        mu_r, sd_r = self.encoder_r_head(h)
        return DiagGaussian(mu_u, sd_u), DiagGaussian(mu_r, sd_r)

    def encode_u(self, o) -> DiagGaussian:
        h = self._trunk(self._as_input(o))
        mu_u, sd_u = self.encoder_u_head(h)
        return DiagGaussian(mu_u, sd_u)

    def transition(self, r_prev=None, u_prev=None) -> DiagGaussian:
        """Prior over the next background state; ``None`` inputs give the N(0, I) initial prior."""
        dr = self.config.latent_dim_r
        if r_prev is None:
            return DiagGaussian(np.zeros((1, dr), self.dtype), np.ones((1, dr), self.dtype))
        x = T.concat([self._as_input(r_prev), self._as_input(u_prev)], axis=1)
        out = self.transition_net(x)
        return DiagGaussian(out[:, :dr], positive_std(out[:, dr:]))

    def decode(self, r, u) -> Tensor:
        return self.decoder_net(T.concat([self._as_input(r), self._as_input(u)], axis=1))

    # sequential unroll ---------------------------------------------------
    def _unroll(self, o: Tensor, eps_u=None, eps_r=None):
        """Run the posterior recursion; with ``eps`` None the means are propagated."""
        dr = self.config.latent_dim_r
        n = o.data.shape[0]
        h = self._trunk(o)
        mu_u, sd_u = self.encoder_u_head(h)
        mu_re, sd_re = self.encoder_r_head(h)
        u = mu_u if eps_u is None else T.add(mu_u, T.mul(sd_u, eps_u))

        prec_e = T.div(1.0, T.square(sd_re))
        weighted_e = T.mul(mu_re, prec_e)
        first = self.transition_net.layers[0]
        w_r = first.weight[:dr]
        u_proj = T.add(T.matmul(u, first.weight[dr:]), first.bias)
        rest = self.transition_net.layers[1:]

        means, stds, samples, priors = [], [], [], []
        r_prev = None
        for t in range(n):
            pe, we = prec_e[t:t + 1], weighted_e[t:t + 1]
            if r_prev is None:
                prec = T.add(pe, 1.0)
                num = we
                priors.append((None, None))
            else:
                x = T.add(T.matmul(r_prev, w_r), u_proj[t - 1:t])
                for layer in rest:
                    x = layer(T.tanh(x))
                mu_tr, sd_tr = x[:, :dr], positive_std(x[:, dr:])
                lam = T.div(1.0, T.square(sd_tr))
                prec = T.add(pe, lam)
                num = T.add(we, T.mul(mu_tr, lam))
                priors.append((mu_tr, sd_tr))
            mean = T.div(num, prec)
            std = T.power(prec, -0.5)
            r_t = mean if eps_r is None else T.add(mean, T.mul(std, eps_r[t:t + 1]))
            means.append(mean)
            stds.append(std)
            samples.append(r_t)
            r_prev = r_t

        q_r = DiagGaussian(T.concat(means, axis=0), T.concat(stds, axis=0))
        r = T.concat(samples, axis=0)
        o_hat = self.decoder_net(T.concat([r, u], axis=1))
        return DiagGaussian(mu_u, sd_u), q_r, u, r, o_hat, priors

    def infer_sequence(self, o) -> LatentSequence:
        with T.no_grad():
            q_u, q_r, u, r, o_hat, _ = self._unroll(self._as_input(o))
        return LatentSequence(q_u.detach(), q_r.detach(), np.array(u.data), np.array(r.data),
                              np.array(o_hat.data))

    def reconstruct(self, o) -> np.ndarray:
        return self.infer_sequence(o).reconstruction

    def draw_noise(self, n_frames: int, rng: np.random.Generator):
        cfg = self.config
        eps_u = rng.standard_normal((n_frames, cfg.latent_dim_u)).astype(self.dtype)
        eps_r = rng.standard_normal((n_frames, cfg.latent_dim_r)).astype(self.dtype)
        return eps_u, eps_r

    def sample_sequence(self, o, rng: np.random.Generator):
        """One reparameterised pass without a graph."""
        o = self._as_input(o)
        with T.no_grad():
            return self._unroll(o, *self.draw_noise(o.data.shape[0], rng))


def blend(o, o_hat, gamma: float) -> np.ndarray:
    """Convex combination ``gamma * o + (1 - gamma) * o_hat``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"blend: gamma must lie in [0, 1], got {gamma}")
    o, o_hat = np.asarray(o), np.asarray(o_hat)
    if o.shape != o_hat.shape:
        raise ValueError(f"blend: shape mismatch {o.shape} vs {o_hat.shape}")
    return gamma * o + (1.0 - gamma) * o_hat


def smm_instantaneous(o_prime, n_components: int, window: int, max_iters: int = 50,
                      seed: int = 0) -> np.ndarray:
    """Estimate the event-driven part of ``o_prime`` with a smoothed mixture."""
    frames = np.asarray(o_prime, dtype=np.float64)
    params, _ = gmm_em_fit(frames, n_components, max_iters=max_iters, seed=seed)
    resp = gmm_responsibilities(frames, params)
    smoothed = smooth_responsibilities(resp, min(window, _largest_odd(frames.shape[0])))
    return smm_extract_instantaneous(frames, params, smoothed)


def _largest_odd(n: int) -> int:
    return n if n % 2 else n - 1


def prior_from_smm(o_prime, model: SSVAE, seed: int = 0) -> DiagGaussian:
    """Per-frame prior p(u') from encoding the mixture's instantaneous component.

    The result is plain arrays, so nothing flows back into the mixture or
    encoder through the prior.
    """
    cfg = model.config
    o_u = smm_instantaneous(o_prime, cfg.smm_components, cfg.smm_window, cfg.smm_max_iters, seed)
    with T.no_grad():
        q = model.encode_u(o_u.astype(model.dtype))
    return q.detach()


def refresh_prior(o, model: SSVAE, seed: int = 0) -> DiagGaussian:
    o_prime = blend(o, model.reconstruct(o), model.config.gamma)
    return prior_from_smm(o_prime, model, seed)


def loss(o, model: SSVAE, rng: np.random.Generator | None = None, prior: DiagGaussian | None = None,
         noise=None, r_target: DiagGaussian | None = None):
    """Composite training loss for one window.

    Returns ``(total, parts)`` where ``total`` is a scalar tensor and ``parts``
    maps ``recon``, ``kl_r`` and ``kl_u`` to floats. ``noise`` may carry a
    fixed ``(eps_u, eps_r)`` pair instead of drawing from ``rng``.

    The previous-frame targets of the r term are constants. ``r_target``
    pins them to given values (frames ``0..T-2``), which finite-difference
    checks need so that perturbations do not move the target.
    """
    cfg = model.config
    obs = model._as_input(o)
    n = obs.data.shape[0]
    if n < 2:
        raise ValueError("loss: window needs at least 2 frames")
    if noise is None:
        noise = model.draw_noise(n, rng if rng is not None else np.random.default_rng(cfg.seed))
    if prior is None:
        prior = refresh_prior(obs.data, model, cfg.seed)

    q_u, q_r, _, _, o_hat, _ = model._unroll(obs, *noise)
    recon = T.mul(T.sum_(T.square(T.sub(o_hat, obs))), 1.0 / n)
    floor = cfg.kl_target_std_floor
    if r_target is None:
        r_target = DiagGaussian(q_r.mean.data[:-1], q_r.stddev.data[:-1])
    target_r = DiagGaussian(np.asarray(r_target.mean), np.maximum(np.asarray(r_target.stddev), floor))
    target_u = DiagGaussian(np.asarray(prior.mean, model.dtype),
                            np.maximum(np.asarray(prior.stddev, model.dtype), floor))
    kl_r = T.mean(kl_diag_gauss(DiagGaussian(q_r.mean[1:], q_r.stddev[1:]), target_r))
    kl_u = T.mean(kl_diag_gauss(q_u, target_u))
    total = T.add(T.add(T.mul(recon, cfg.alpha1), T.mul(kl_r, cfg.alpha2)), T.mul(kl_u, cfg.alpha3))
    parts = {"recon": float(recon.data), "kl_r": float(kl_r.data), "kl_u": float(kl_u.data)}
    if not np.isfinite(total.data):
        raise DivergenceError(f"non-finite loss (parts {parts})", parts=parts)
    return total, parts


def elbo_samples(o, model: SSVAE, n_samples: int, seed: int = 0,
                 prior: DiagGaussian | None = None) -> np.ndarray:
    """Per-sample Monte Carlo terms of the evidence lower bound (unit-variance likelihood)."""
    obs = model._as_input(o)
    n, c = obs.data.shape
    if prior is None:
        prior = refresh_prior(obs.data, model, model.config.seed)
    dr = model.config.latent_dim_r
    rng = np.random.default_rng(seed)
    x = obs.data.astype(np.float64)
    out = np.empty(n_samples)
    for s in range(n_samples):
        q_u, q_r, _, _, o_hat, priors = model.sample_sequence(obs, rng)
        resid = x - o_hat.data
        loglik = -0.5 * (n * c * LOG_2PI + np.sum(resid ** 2))
        kl_r = 0.0
        for t, (mu_tr, sd_tr) in enumerate(priors):
            q_t = DiagGaussian(q_r.mean.data[t], q_r.stddev.data[t])
            if mu_tr is None:
                p_t = DiagGaussian(np.zeros(dr), np.ones(dr))
            else:
                p_t = DiagGaussian(mu_tr.data[0], sd_tr.data[0])
            kl_r += kl_diag_gauss(q_t, p_t)
        kl_u = float(np.sum(kl_diag_gauss(q_u.detach(), prior)))
        out[s] = loglik - kl_r - kl_u
    return out


def elbo(o, model: SSVAE, n_samples: int = 16, seed: int = 0, prior: DiagGaussian | None = None) -> float:
    return float(np.mean(elbo_samples(o, model, n_samples, seed, prior)))


@dataclass
class FitHistory:
    loss: list = field(default_factory=list)
    recon: list = field(default_factory=list)
    kl_r: list = field(default_factory=list)
    kl_u: list = field(default_factory=list)

    def rows(self):
        for i, vals in enumerate(zip(self.loss, self.recon, self.kl_r, self.kl_u)):
            yield (i, *vals)


def check_finite(params: Sequence[Tensor], epoch: int) -> None:
    for p in params:
        if not np.all(np.isfinite(p.data)):
            raise DivergenceError(f"non-finite weights in {p.name} at epoch {epoch}", epoch=epoch)


def fit(windows: Sequence[np.ndarray], model: SSVAE, epochs: int | None = None,
        learning_rate: float | None = None, seed: int | None = None,
        divergence_threshold: float = 1e6) -> FitHistory:
    """Minimise the composite loss with Adam, one window per update."""
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    seed = cfg.seed if seed is None else seed
    if not windows:
        raise ValueError("fit: need at least one training window")
    params = model.parameters()
    state = AdamState.for_params(params, learning_rate=learning_rate or cfg.learning_rate)
    rng = np.random.default_rng([seed, 11])
    history = FitHistory()
    windows = [np.asarray(w, dtype=model.dtype) for w in windows]
    for epoch in range(epochs):
        priors = [refresh_prior(w, model, seed + i) for i, w in enumerate(windows)]
        totals = np.zeros(4)
        for i in rng.permutation(len(windows)):
            try:
                total, parts = loss(windows[i], model, rng, priors[i])
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch}: {exc}", epoch=epoch, parts=exc.parts) from None
            value = float(total.data)
            if value > divergence_threshold:
                raise DivergenceError(f"epoch {epoch}: loss {value:.3g} exceeds threshold",
                                      epoch=epoch, parts=parts)
            T.backward(total)
            adam_step(params, state)
            totals += (value, parts["recon"], parts["kl_r"], parts["kl_u"])
        check_finite(params, epoch)
        totals /= len(windows)
        history.loss.append(float(totals[0]))
        history.recon.append(float(totals[1]))
        history.kl_r.append(float(totals[2]))
        history.kl_u.append(float(totals[3]))
        log.info("ssvae epoch %d loss %.4f recon %.4f kl_r %.4f kl_u %.4f", epoch, *totals)
    return history
