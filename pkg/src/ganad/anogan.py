"""AnoGAN: plain GAN on normal data, anomaly score from iterative latent inversion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from ._train import as_matrix, minibatches
from .networks import Network, build, discriminator_spec, generator_spec, sample_latent
from .objectives import AdvLossKind, as_kind, d_loss_gan, g_loss
from .optim import adam


class SearchDiverged(FloatingPointError):
    pass


@dataclass
class AnoganConfig:
    gamma_steps: int = 500
    search_lr: float = 0.01
    lam: float = 0.1
    d_loss_kind: AdvLossKind = AdvLossKind.FM
    restarts: int = 1
    # adversarial training
    train_g_loss: AdvLossKind = AdvLossKind.BCE
    epochs: int = 20
    batch_size: int = 64
    latent_dim: int = 64
    hidden: int = 128
    depth: int = 1
    lr: float = 2e-4
    beta1: float = 0.5

    def __post_init__(self):
        self.d_loss_kind = as_kind(self.d_loss_kind)
        self.train_g_loss = as_kind(self.train_g_loss)
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.gamma_steps < 1:
            raise ValueError("gamma_steps must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class AnoganModel:
    G: Network
    D: Network

    def nets(self) -> list[Network]:
        return [self.G, self.D]


def init_model(data_dim: int, cfg: AnoganConfig, rng: np.random.Generator) -> AnoganModel:
    G = build(generator_spec(cfg.latent_dim, data_dim, (cfg.hidden,) * cfg.depth), rng)
    d_spec, tap = discriminator_spec(data_dim, (cfg.hidden,) * cfg.depth)
    return AnoganModel(G, build(d_spec, rng, feature_tap=tap))


def train_anogan(data_normal, cfg: AnoganConfig, rng: np.random.Generator) -> AnoganModel:
    x = as_matrix(data_normal)
    model = init_model(x.shape[1], cfg, rng)
    G, D = model.G, model.D
    opt_d = adam(D.parameters(), cfg.lr, cfg.beta1)
    opt_g = adam(G.parameters(), cfg.lr, cfg.beta1)
    every = G.parameters() + D.parameters()
    for _ in range(cfg.epochs):
        for idx in minibatches(len(x), cfg.batch_size, rng):
            xb = x[idx]
            fake = G(sample_latent(len(idx), cfg.latent_dim, rng))
            for p in every:
                p.grad = None
            d_loss_gan(D, xb, fake).backward()
            opt_d.step()
            for p in every:
                p.grad = None
            g_loss(D, G(sample_latent(len(idx), cfg.latent_dim, rng)), xb, cfg.train_g_loss).backward()
            opt_g.step()
    return model


def residual_loss(x, x_hat) -> T.Tensor:
    """L1 distance between a query and its reconstruction."""
    x, x_hat = T.as_tensor(x), T.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise T.DimensionError(f"residual between {x.shape} and {x_hat.shape}")
    return T.norm(x - x_hat, 1)


def discriminator_loss_ano(D: Network, x, x_hat, kind=AdvLossKind.FM, per_sample: bool = False):
    """Feature-matching (L1 on the tap layer) or cross-entropy discriminator loss.

    Summed over rows, or one value per row with ``per_sample``.
    """
    x, x_hat = T.as_tensor(x), T.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise T.DimensionError(f"discriminator loss between {x.shape} and {x_hat.shape}")
    if as_kind(kind) is AdvLossKind.FM:
        with T.no_grad():
            _, f_x = D.forward_with_features(x)
        _, f_hat = D.forward_with_features(x_hat)
        return T.norm(f_x.detach() - f_hat, 1, axis=1 if per_sample else None)
    per = T.bce(D(x_hat), 1.0, reduction="none")
    return T.sum(per, axis=1) if per_sample else T.sum(per)


def _combined(model: AnoganModel, x: np.ndarray, z: T.Tensor, cfg: AnoganConfig) -> T.Tensor:
    """Per-row (1 - lam) * L_R + lam * L_D."""
    x_hat = model.G(z)
    l_r = T.norm(T.Tensor(x) - x_hat, 1, axis=1)
    if cfg.lam == 0.0:
        return l_r
    l_d = discriminator_loss_ano(model.D, x, x_hat, cfg.d_loss_kind, per_sample=True)
    return T.add(T.mul(l_r, 1.0 - cfg.lam), T.mul(l_d, cfg.lam))


def _project(z: np.ndarray, radius: float) -> np.ndarray:
    n = np.linalg.norm(z, axis=1, keepdims=True)
    return np.where(n > radius, z * (radius / np.where(n > 0, n, 1.0)), z)


def latent_search(model: AnoganModel, x, cfg: AnoganConfig, rng: np.random.Generator,
                  z_init: np.ndarray | None = None):
    """Invert the generator for each row of ``x`` by gradient steps on z.

    Rows are searched independently (Adam is per-coordinate, the loss is a sum
    of per-row terms). Returns (z_final [n x latent], trajectory [steps+1 x n]),
    where trajectory[k] is the loss at step k and the last row is the loss at
    the returned z. With several restarts the lowest final loss wins per row.
    """
    x = np.atleast_2d(as_matrix(x) if np.ndim(x) == 2 else np.asarray(x, dtype=np.float64))
    n = len(x)
    latent = model.G.in_dim
    radius = 3.0 * np.sqrt(latent)
    params = [p for net in model.nets() for p in net.parameters()]
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    best_z = best_traj = best_final = None
    try:
        for r in range(cfg.restarts):
            if z_init is not None and r == 0:
                z0 = np.array(np.atleast_2d(z_init), dtype=np.float64)
            else:
                z0 = sample_latent(n, latent, rng).data
            z = T.Tensor(_project(z0, radius), requires_grad=True)
            opt = adam([z], cfg.search_lr)
            traj = np.empty((cfg.gamma_steps + 1, n))
            for step in range(cfg.gamma_steps):
                loss = _combined(model, x, z, cfg)
                traj[step] = loss.data
                if not np.all(np.isfinite(loss.data)):
                    bad = np.flatnonzero(~np.isfinite(loss.data))
                    raise SearchDiverged(f"non-finite latent-search loss at step {step} for rows {bad[:5]}")
                z.grad = None
                T.sum(loss).backward()
                opt.step()
                z.data = _project(z.data, radius)
            with T.no_grad():
                final = _combined(model, x, T.Tensor(z.data), cfg).data
            if not np.all(np.isfinite(final)):
                raise SearchDiverged("non-finite latent-search loss at the final step")
            traj[-1] = final
            if best_z is None:
                best_z, best_traj, best_final = z.data.copy(), traj, final
            else:
                better = final < best_final
                best_z[better] = z.data[better]
                best_traj[:, better] = traj[:, better]
                best_final = np.where(better, final, best_final)
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f
    return best_z, best_traj


def anomaly_score_ano(model: AnoganModel, x, cfg: AnoganConfig, rng: np.random.Generator,
                      z_init: np.ndarray | None = None) -> np.ndarray:
    """Combined loss at the end of the latent search, one per row."""
    _, traj = latent_search(model, x, cfg, rng, z_init)
    return traj[-1]
