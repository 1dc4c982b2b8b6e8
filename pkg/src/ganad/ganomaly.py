"""GANomaly: encoder-decoder-encoder generator scored by latent disagreement."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from ._train import as_matrix, batched, eval_auprc, improves, minibatches, restore, snapshot
from .metrics import scale_scores  # noqa: F401  re-exported
from .networks import Network, build, discriminator_spec, encoder_spec, generator_spec
from .objectives import AdvLossKind, as_kind, d_loss_gan, feature_matching
from .optim import adam


@dataclass(frozen=True)
class GanomalyWeights:
    adv: float = 1.0
    con: float = 50.0
    enc: float = 1.0

    def __post_init__(self):
        if min(self.adv, self.con, self.enc) < 0 or max(self.adv, self.con, self.enc) <= 0:
            raise ValueError("weights must be non-negative with at least one positive")


@dataclass
class GanomalyConfig:
    adv_kind: AdvLossKind = AdvLossKind.FM
    weights: GanomalyWeights = field(default_factory=GanomalyWeights)
    score: str = "squared"  # or "l2"
    epochs: int = 15
    batch_size: int = 64
    latent_dim: int = 64
    hidden: int = 128
    depth: int = 1
    model_selection: bool = True
    lr: float = 2e-4
    beta1: float = 0.5

    def __post_init__(self):
        self.adv_kind = as_kind(self.adv_kind)
        if self.score not in ("squared", "l2"):
            raise ValueError(f"unknown score {self.score!r}")


@dataclass
class GanomalyModel:
    G_E: Network
    G_D: Network
    E: Network
    D: Network

    def __post_init__(self):
        if not (self.G_E.out_dim == self.G_D.in_dim == self.E.out_dim):
            raise T.DimensionError("latent widths of G_E, G_D and E differ")
        if [s for s in self.G_E.layers] != [s for s in self.E.layers]:
            raise T.DimensionError("the two encoders must share one architecture")

    def generator_nets(self) -> list[Network]:
        return [self.G_E, self.G_D, self.E]

    def nets(self) -> list[Network]:
        return [self.G_E, self.G_D, self.E, self.D]

    def copy(self) -> GanomalyModel:
        return GanomalyModel(*(n.copy() for n in self.nets()))

    def reconstruct(self, x) -> T.Tensor:
        return self.G_D(self.G_E(x))


def init_model(data_dim: int, cfg: GanomalyConfig, rng: np.random.Generator) -> GanomalyModel:
    enc = encoder_spec(data_dim, cfg.latent_dim, (cfg.hidden,) * cfg.depth)
    G_E = build(enc, rng)
    G_D = build(generator_spec(cfg.latent_dim, data_dim, (cfg.hidden,) * cfg.depth), rng)
    E = build(enc, rng)
    d_spec, tap = discriminator_spec(data_dim, (cfg.hidden,) * cfg.depth)
    return GanomalyModel(G_E, G_D, E, build(d_spec, rng, feature_tap=tap))


def ganomaly_losses(m: GanomalyModel, x_batch, w: GanomalyWeights = GanomalyWeights(),
                    adv_kind=AdvLossKind.FM):
    """Returns (g_total, l_adv, l_con, l_enc, d_loss)."""
    x = T.as_tensor(x_batch)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    z = m.G_E(x)
    x_hat = m.G_D(z)
    z_hat = m.E(x_hat)
    if x_hat.shape != x.shape:
        raise T.DimensionError(f"reconstruction {x_hat.shape} vs input {x.shape}")
    if as_kind(adv_kind) is AdvLossKind.FM:
        _, f_real = m.D.forward_with_features(x)
        _, f_fake = m.D.forward_with_features(x_hat)
        l_adv = feature_matching(f_real, f_fake)
    else:
        l_adv = T.bce(m.D(x_hat), 1.0)
    l_con = T.mean(T.norm(x - x_hat, 1, axis=1))
    l_enc = T.mean(T.norm(z - z_hat, 2, axis=1))
    g_total = w.adv * l_adv + w.con * l_con + w.enc * l_enc
    d_loss = d_loss_gan(m.D, x, x_hat)
    return g_total, l_adv, l_con, l_enc, d_loss


def anomaly_score_gano(m: GanomalyModel, x, score: str = "squared") -> np.ndarray:
    """Distance between G_E(x) and E(G(x)) per row; squared L2 by default."""
    x = as_matrix(x)

    def one(xb):
        z = m.G_E(xb)
        d = z.data - m.E(m.G_D(z)).data
        sq = (d * d).sum(axis=1)
        return sq if score == "squared" else np.sqrt(sq)

    if x.shape[1] != m.G_E.in_dim:
        raise T.DimensionError(f"model expects {m.G_E.in_dim} features, got {x.shape[1]}")
    return batched(one, x)


def residual_map(m: GanomalyModel, x) -> np.ndarray:
    """|x - G(x)| per feature, for locating what looked anomalous."""
    x = as_matrix(x)
    return batched(lambda xb: np.abs(xb - m.reconstruct(xb).data), x)


def train_ganomaly(data_normal, cfg: GanomalyConfig, rng: np.random.Generator, eval_set=None):
    """Returns (model, selection_log); log rows are (epoch, "latent", eval_auprc)."""
    x = as_matrix(data_normal)
    m = init_model(x.shape[1], cfg, rng)
    gen_params = [p for n in m.generator_nets() for p in n.parameters()]
    opt_g = adam(gen_params, cfg.lr, cfg.beta1)
    opt_d = adam(m.D.parameters(), cfg.lr, cfg.beta1)
    every = gen_params + m.D.parameters()
    selecting = cfg.model_selection and eval_set is not None
    best = None
    log: list[tuple[int, str, float]] = []
    for epoch in range(cfg.epochs):
        for idx in minibatches(len(x), cfg.batch_size, rng):
            g_total, _, _, _, d_loss = ganomaly_losses(m, x[idx], cfg.weights, cfg.adv_kind)
            for p in every:
                p.grad = None
            g_total.backward()
            opt_g.step()
            for p in every:
                p.grad = None
            d_loss.backward()
            opt_d.step()
        if selecting:
            auc = eval_auprc(anomaly_score_gano(m, eval_set.samples, cfg.score), eval_set.labels)
            log.append((epoch, "latent", auc))
            if improves(auc, None if best is None else best[0]):
                best = (auc, snapshot(m.nets()))
    if best is not None:
        restore(m.nets(), best[1])
    return m, log
