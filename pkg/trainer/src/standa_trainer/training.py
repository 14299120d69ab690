"""Desk-scale training of the extractor (domain critic) and autoencoder.

The extractor is trained adversarially: a one-hidden-layer critic estimates
the Wasserstein distance between the two domains' representations (with the
usual gradient penalty keeping it 1-Lipschitz), and the extractor descends
that estimate. The autoencoder then fits the trained representations under
l1 reconstruction loss. Both run in float32 — the export step widens to the
exact 64-bit value of every 32-bit weight, so downstream forward parity is
limited only by accumulation order.

The critic is deliberately a single hidden ReLU layer: its input gradient
is then W1^T (w2 * mask), and the gradient penalty's own gradient w.r.t.
the weights has a short closed form under a fixed mask (exact almost
everywhere for ReLU nets), so no autodiff framework is needed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .nets import RELU, Adam, Dense, backward, forward, forward_cached, init_mlp, parameters

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or critic estimate stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    """Architecture and optimization settings for one training run.

    The extractor is input_dim -> *extractor_hidden* (ReLU throughout); its
    last width must equal the autoencoder encoder's first width. The
    decoder mirrors the encoder.
    """

    extractor_hidden: tuple[int, ...] = (500, 100)
    ae_encoder: tuple[int, ...] = (100, 64, 32, 16, 8, 4, 2)
    epochs: int = 30
    batch_size: int = 64
    critic_steps: int = 5
    penalty_weight: float = 10.0
    critic_hidden: int = 64
    ae_activation: str = "relu"
    lr_extractor: float = 1e-3
    lr_critic: float = 1e-3
    lr_ae: float = 1e-3
    seed: int = 0
    export_path: str | None = None

    def __post_init__(self) -> None:
        dims = (*self.extractor_hidden, *self.ae_encoder, self.critic_hidden)
        if any(int(d) <= 0 for d in dims):
            raise ValueError(f"all architecture dims must be positive, got {dims}")
        if self.extractor_hidden[-1] != self.ae_encoder[0]:
            raise ValueError(
                f"extractor output dim {self.extractor_hidden[-1]} != "
                f"autoencoder input dim {self.ae_encoder[0]}"
            )
        if self.epochs < 1 or self.batch_size < 1 or self.critic_steps < 1:
            raise ValueError("epochs, batch_size and critic_steps must be >= 1")
        if self.ae_activation not in ("relu", "linear"):
            raise ValueError(f"ae_activation must be relu|linear, got {self.ae_activation!r}")
        if self.penalty_weight < 0.0:
            raise ValueError("penalty_weight must be non-negative")


@dataclass(frozen=True)
class WdgrlResult:
    """Trained extractor plus the critic's per-epoch distance estimates."""

    extractor: list
    critic_history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class AutoencoderResult:
    """Trained autoencoder plus per-epoch l1 losses (entry 0 = untrained)."""

    layers: list
    loss_history: list[float] = field(default_factory=list)


def _critic_input_grad(critic, x: np.ndarray) -> np.ndarray:
    """d critic / d input, rows of x batched (fixed-mask, exact a.e.)."""
    w1, w2 = critic[0], critic[2]
    mask = (x @ w1.weight + w1.bias) > 0
    return (mask * w2.weight[:, 0]) @ w1.weight.T


def _penalty_grads(critic, hs: np.ndarray, ht: np.ndarray, rng):
    """Gradient-penalty value and its weight gradients at interpolates."""
    w1, w2 = critic[0], critic[2]
    m = min(hs.shape[0], ht.shape[0])
    eps = rng.random((m, 1), dtype=np.float32)
    x = eps * hs[:m] + (1 - eps) * ht[:m]
    mask = (x @ w1.weight + w1.bias) > 0
    u = mask * w2.weight[:, 0]          # (m, h)
    gx = u @ w1.weight.T                # d critic / d x
    norm = np.sqrt((gx * gx).sum(axis=1))
    gap = norm - 1.0
    penalty = float(np.mean(gap * gap))
    # dL/d gx, guarding the non-differentiable norm at 0
    safe = np.where(norm > 1e-12, norm, 1.0)
    gl = (2.0 * gap / (m * safe) * (norm > 1e-12))[:, None] * gx
    dw1 = (gl.T @ u).astype(np.float32)                       # (d_rep, h)
    dw2 = (mask * (gl @ w1.weight)).sum(axis=0)[:, None].astype(np.float32)
    zero1 = np.zeros_like(w1.bias)
    zero2 = np.zeros_like(w2.bias)
    return penalty, [(dw1, zero1), (dw2, zero2)]


def _add_grads(a, b):
    return [(ga[0] + gb[0], ga[1] + gb[1]) for ga, gb in zip(a, b)]


def _estimate(critic, hs: np.ndarray, ht: np.ndarray) -> float:
    return float(forward(critic, hs).mean() - forward(critic, ht).mean())


def train_wdgrl(source: np.ndarray, target: np.ndarray, cfg: TrainConfig) -> WdgrlResult:
    """Adversarially align the two domains; returns the trained extractor.

    Per batch: `cfg.critic_steps` ascent steps on the penalized Wasserstein
    estimate (extractor frozen), then one extractor descent step on the
    estimate itself. The per-epoch estimate on the full data is logged and
    returned; a non-finite value aborts with the epoch index.
    """
    source = np.asarray(source, dtype=np.float32)
    target = np.asarray(target, dtype=np.float32)
    if source.ndim != 2 or target.ndim != 2 or source.shape[1] != target.shape[1]:
        raise ValueError(
            f"source/target must be 2-d with equal feature dim, got "
            f"{source.shape} and {target.shape}"
        )
    d = source.shape[1]
    rng = np.random.default_rng(cfg.seed)
    extractor = init_mlp((d, *cfg.extractor_hidden), rng, relu_output=True)
    d_rep = cfg.extractor_hidden[-1]
    critic = init_mlp((d_rep, cfg.critic_hidden, 1), rng, relu_output=False)
    opt_e = Adam(parameters(extractor), cfg.lr_extractor)
    opt_c = Adam(parameters(critic), cfg.lr_critic)

    n_s, n_t = source.shape[0], target.shape[0]
    steps = max(1, math.ceil(max(n_s, n_t) / cfg.batch_size))
    history: list[float] = []
    for epoch in range(cfg.epochs):
        for _ in range(steps):
            xs = source[rng.integers(0, n_s, size=min(cfg.batch_size, n_s))]
            xt = target[rng.integers(0, n_t, size=min(cfg.batch_size, n_t))]
            hs = forward(extractor, xs)
            ht = forward(extractor, xt)
            for _ in range(cfg.critic_steps):
                # minimize -(estimate) + weight * penalty
                cs, cache_s = forward_cached(critic, hs)
                grads, _ = backward(
                    critic, cache_s, np.full_like(cs, -1.0 / cs.shape[0])
                )
                ct, cache_t = forward_cached(critic, ht)
                gt, _ = backward(critic, cache_t, np.full_like(ct, 1.0 / ct.shape[0]))
                grads = _add_grads(grads, gt)
                if cfg.penalty_weight > 0.0:
                    _, gp = _penalty_grads(critic, hs, ht, rng)
                    gp = [(cfg.penalty_weight * dw, db) for dw, db in gp]
                    grads = _add_grads(grads, gp)
                opt_c.step(grads)
            # extractor descends the estimate through the frozen critic
            hs, cache_es = forward_cached(extractor, xs)
            cs, cache_cs = forward_cached(critic, hs)
            _, grad_hs = backward(critic, cache_cs, np.full_like(cs, 1.0 / cs.shape[0]))
            grads_e, _ = backward(extractor, cache_es, grad_hs)
            ht, cache_et = forward_cached(extractor, xt)
            ct, cache_ct = forward_cached(critic, ht)
            _, grad_ht = backward(critic, cache_ct, np.full_like(ct, -1.0 / ct.shape[0]))
            ge, _ = backward(extractor, cache_et, grad_ht)
            opt_e.step(_add_grads(grads_e, ge))
        est = _estimate(critic, forward(extractor, source), forward(extractor, target))
        if not math.isfinite(est):
            raise TrainingDivergedError(
                f"wdgrl critic estimate became non-finite at epoch {epoch}"
            )
        history.append(est)
        log.info("wdgrl epoch %d: critic estimate %.6f", epoch, est)
    return WdgrlResult(extractor=extractor, critic_history=history)


def train_autoencoder(representations: np.ndarray, cfg: TrainConfig) -> AutoencoderResult:
    """Fit the mirrored autoencoder on extractor outputs under l1 loss."""
    x = np.asarray(representations, dtype=np.float32)
    if x.ndim != 2 or x.shape[1] != cfg.ae_encoder[0]:
        raise ValueError(
            f"representations must be (n, {cfg.ae_encoder[0]}), got {x.shape}"
        )
    rng = np.random.default_rng(cfg.seed + 1)
    dims = (*cfg.ae_encoder, *cfg.ae_encoder[-2::-1])
    layers = init_mlp(dims, rng, relu_output=False)
    if cfg.ae_activation == "linear":
        layers = [l for l in layers if isinstance(l, Dense)]
    opt = Adam(parameters(layers), cfg.lr_ae)

    def full_loss() -> float:
        return float(np.abs(forward(layers, x) - x).mean())

    n = x.shape[0]
    steps = max(1, math.ceil(n / cfg.batch_size))
    history = [full_loss()]
    for epoch in range(cfg.epochs):
        for _ in range(steps):
            xb = x[rng.integers(0, n, size=min(cfg.batch_size, n))]
            recon, caches = forward_cached(layers, xb)
            grad = np.sign(recon - xb).astype(np.float32) / np.float32(recon.size)
            grads, _ = backward(layers, caches, grad)
            opt.step(grads)
        loss = full_loss()
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                f"autoencoder loss became non-finite at epoch {epoch}"
            )
        history.append(loss)
        log.info("autoencoder epoch %d: l1 loss %.6f", epoch, loss)
    return AutoencoderResult(layers=layers, loss_history=history)
