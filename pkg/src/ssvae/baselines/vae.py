"""Frame-independent and recurrent VAE baselines, both with an N(0, I) latent prior."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .. import tensor as T
from ..distributions import DiagGaussian, kl_diag_gauss
from ..model import DivergenceError, FitHistory, check_finite
from ..nn import MLP, GaussianHead, GRUCell
from ..optim import AdamState, adam_step
from ..tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class VAEConfig:
    latent_dim: int = 12
    encoder_hidden: tuple = (128, 128)
    decoder_hidden: tuple = (64, 64)
    rnn_hidden: int = 64
    kl_weight: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        self.encoder_hidden = tuple(self.encoder_hidden)
        self.decoder_hidden = tuple(self.decoder_hidden)


class _BaseVAE:
    kind = "vae"

    def __init__(self, obs_dim: int, config: VAEConfig | None = None, init="glorot", dtype=np.float32):
        self.config = config or VAEConfig()
        self.obs_dim = int(obs_dim)
        self.dtype = np.dtype(dtype)
        self._rng = np.random.default_rng([self.config.seed, 13]) if init == "glorot" else None
        self.decoder_net = MLP((self.config.latent_dim,) + self.config.decoder_hidden + (obs_dim,),
                               self._rng, dtype, name="decoder_net")

    def hyperparameters(self) -> dict:
        return {"obs_dim": self.obs_dim, **asdict(self.config)}

    def _as_input(self, o) -> Tensor:
        arr = np.asarray(o.data if isinstance(o, Tensor) else o, dtype=self.dtype)
        if arr.ndim != 2 or arr.shape[1] != self.obs_dim:
            raise T.ShapeError(f"{self.kind}: expected T x {self.obs_dim} observations, got {arr.shape}")
        return o if isinstance(o, Tensor) else Tensor(arr)

    def posterior(self, o: Tensor) -> DiagGaussian:
        raise NotImplementedError

    def loss(self, o, rng: np.random.Generator | None = None, noise=None):
        obs = self._as_input(o)
        n = obs.data.shape[0]
        q = self.posterior(obs)
        if noise is None:
            rng = rng if rng is not None else np.random.default_rng(self.config.seed)
            noise = rng.standard_normal(q.mean.data.shape).astype(self.dtype)
        z = T.add(q.mean, T.mul(q.stddev, noise))
        o_hat = self.decoder_net(z)
        recon = T.mul(T.sum_(T.square(T.sub(o_hat, obs))), 1.0 / n)
        d = self.config.latent_dim
        kl = T.mean(kl_diag_gauss(q, DiagGaussian(np.zeros(d, self.dtype), np.ones(d, self.dtype))))
        total = T.add(recon, T.mul(kl, self.config.kl_weight))
        parts = {"recon": float(recon.data), "kl": float(kl.data)}
        if not np.isfinite(total.data):
            raise DivergenceError(f"non-finite loss (parts {parts})", parts=parts)
        return total, parts

    def reconstruct(self, o) -> tuple[np.ndarray, DiagGaussian]:
        """Posterior-mean reconstruction and the per-frame latent posterior."""
        with T.no_grad():
            q = self.posterior(self._as_input(o))
            o_hat = self.decoder_net(q.mean)
        return np.array(o_hat.data), q.detach()

    def hidden_states(self, o) -> np.ndarray:
        return np.asarray(self.reconstruct(o)[1].mean)

    def fit(self, windows: Sequence[np.ndarray], epochs: int | None = None,
            divergence_threshold: float = 1e6) -> FitHistory:
        cfg = self.config
        epochs = cfg.epochs if epochs is None else epochs
        if not windows:
            raise ValueError("fit: need at least one training window")
        params = self.parameters()
        state = AdamState.for_params(params, learning_rate=cfg.learning_rate)
        rng = np.random.default_rng([cfg.seed, 11])
        history = FitHistory()
        windows = [np.asarray(w, dtype=self.dtype) for w in windows]
        for epoch in range(epochs):
            totals = np.zeros(3)
            for i in rng.permutation(len(windows)):
                try:
                    total, parts = self.loss(windows[i], rng)
                except DivergenceError as exc:
                    raise DivergenceError(f"epoch {epoch}: {exc}", epoch=epoch, parts=exc.parts) from None
                value = float(total.data)
                if value > divergence_threshold:
                    raise DivergenceError(f"epoch {epoch}: loss {value:.3g} exceeds threshold", epoch=epoch)
                T.backward(total)
                adam_step(params, state)
                totals += (value, parts["recon"], parts["kl"])
            check_finite(params, epoch)
            totals /= len(windows)
            history.loss.append(float(totals[0]))
            history.recon.append(float(totals[1]))
            history.kl_u.append(float(totals[2]))
            history.kl_r.append(0.0)
            log.info("%s epoch %d loss %.4f", self.kind, epoch, totals[0])
        return history


class VanillaVAE(_BaseVAE):
    kind = "vanilla"

    def __init__(self, obs_dim: int, config: VAEConfig | None = None, init="glorot", dtype=np.float32):
        super().__init__(obs_dim, config, init, dtype)
        sizes = (obs_dim,) + self.config.encoder_hidden
        self.encoder_trunk = MLP(sizes, self._rng, dtype, name="encoder_trunk")
        self.latent_head = GaussianHead(sizes[-1], self.config.latent_dim, self._rng, dtype,
                                        name="latent_head")

    def parameters(self) -> list[Tensor]:
        return self.encoder_trunk.parameters() + self.latent_head.parameters() + self.decoder_net.parameters()

    def posterior(self, o: Tensor) -> DiagGaussian:
        h = self.encoder_trunk(o, final_activation=True) if self.encoder_trunk.layers else o
        return DiagGaussian(*self.latent_head(h))


class RecurrentVAE(_BaseVAE):
    """GRU encoder read left to right; fills the LSTM-VAE comparison role."""

    kind = "rnn"

    def __init__(self, obs_dim: int, config: VAEConfig | None = None, init="glorot", dtype=np.float32):
        super().__init__(obs_dim, config, init, dtype)
        hidden = self.config.rnn_hidden
        self.cell = GRUCell(obs_dim, hidden, self._rng, dtype, name="gru")
        self.latent_head = GaussianHead(hidden, self.config.latent_dim, self._rng, dtype,
                                        name="latent_head")

    def parameters(self) -> list[Tensor]:
        return self.cell.parameters() + self.latent_head.parameters() + self.decoder_net.parameters()

    def encode_states(self, o: Tensor) -> Tensor:
        n = o.data.shape[0]
        x_proj = self.cell.input_proj(o)
        h = Tensor(np.zeros((1, self.cell.hidden_dim), self.dtype))
        states = []
        for t in range(n):
            h = self.cell.step(x_proj[t:t + 1], h)
            states.append(h)
        return T.concat(states, axis=0)

    def posterior(self, o: Tensor) -> DiagGaussian:
        return DiagGaussian(*self.latent_head(self.encode_states(o)))
