"""EGBAD: BiGAN trained on normal data, scored with one encoder pass."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from ._train import as_matrix, batched, eval_auprc, improves, minibatches, restore, snapshot
from .networks import (Network, build, discriminator_spec, encoder_spec, generator_spec,
                       sample_latent)
from .objectives import AdvLossKind, as_kind, bigan_terms, pair
from .optim import adam


@dataclass
class EgbadConfig:
    train_g_loss: AdvLossKind = AdvLossKind.BCE
    use_residual: bool = False
    test_score: AdvLossKind = AdvLossKind.FM
    epochs: int = 20
    batch_size: int = 64
    latent_dim: int = 64
    hidden: int = 128
    depth: int = 1
    encoder_first_layer_activation: bool = False
    model_selection: bool = True
    lam: float = 0.1
    lr: float = 2e-4
    beta1: float = 0.5

    def __post_init__(self):
        self.train_g_loss = as_kind(self.train_g_loss)
        self.test_score = as_kind(self.test_score)
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.epochs < 1 or self.batch_size < 1 or self.latent_dim < 1:
            raise ValueError("epochs, batch_size and latent_dim must be positive")


@dataclass
class EgbadModel:
    G: Network
    E: Network
    D: Network  # consumes [x | z]

    def nets(self) -> list[Network]:
        return [self.G, self.E, self.D]

    def copy(self) -> EgbadModel:
        return EgbadModel(self.G.copy(), self.E.copy(), self.D.copy())


def init_model(data_dim: int, cfg: EgbadConfig, rng: np.random.Generator) -> EgbadModel:
    G = build(generator_spec(cfg.latent_dim, data_dim, (cfg.hidden,) * cfg.depth), rng)
    E = build(encoder_spec(data_dim, cfg.latent_dim, (cfg.hidden,) * cfg.depth,
                           cfg.encoder_first_layer_activation), rng)
    d_spec, tap = discriminator_spec(data_dim + cfg.latent_dim, (cfg.hidden,) * cfg.depth)
    D = build(d_spec, rng, feature_tap=tap)
    return EgbadModel(G, E, D)


def anomaly_score_egbad(model: EgbadModel, x, kind=AdvLossKind.FM, lam: float = 0.1) -> np.ndarray:
    """(1 - lam) * ||x - G(E(x))||_1 + lam * L_D, one value per row.

    L_D is either the L1 distance between discriminator features of the real
    pair (x, E(x)) and the reconstructed pair (G(E(x)), E(x)), or the
    cross-entropy of D calling the real pair real.
    """
    kind = as_kind(kind)
    x = as_matrix(x)

    def score(xb: np.ndarray) -> np.ndarray:
        z = model.E(xb)
        x_hat = model.G(z)
        residual = np.abs(xb - x_hat.data).sum(axis=1)
        if kind is AdvLossKind.FM:
            _, f_real = model.D.forward_with_features(pair(xb, z))
            _, f_fake = model.D.forward_with_features(pair(x_hat, z))
            disc = np.abs(f_real.data - f_fake.data).sum(axis=1)
        else:
            disc = T.bce(model.D(pair(xb, z)), 1.0, reduction="none").data.reshape(-1)
        return (1.0 - lam) * residual + lam * disc

    return batched(score, x)


def train_egbad_multi(data_normal, cfg: EgbadConfig, rng: np.random.Generator,
                      eval_set=None, select_for: Sequence[AdvLossKind] | None = None):
    """Train once; return ({score kind: model}, selection log rows).

    With model selection on, a separate best-epoch checkpoint is kept for each
    requested score kind, judged by AUPRC on the labeled ``eval_set``.
    Log rows are (epoch, kind, eval_auprc).
    """
    x = as_matrix(data_normal)
    kinds = [as_kind(k) for k in (select_for or [cfg.test_score])]
    model = init_model(x.shape[1], cfg, rng)
    G, E, D = model.G, model.E, model.D
    opt_d = adam(D.parameters(), cfg.lr, cfg.beta1)
    opt_g = adam(G.parameters(), cfg.lr, cfg.beta1)
    opt_e = adam(E.parameters(), cfg.lr, cfg.beta1)
    every = G.parameters() + E.parameters() + D.parameters()

    selecting = cfg.model_selection and eval_set is not None
    best: dict[AdvLossKind, tuple[float, list]] = {}
    log: list[tuple[int, str, float]] = []
    for epoch in range(cfg.epochs):
        for idx in minibatches(len(x), cfg.batch_size, rng):
            xb = T.Tensor(x[idx])
            z = sample_latent(len(idx), cfg.latent_dim, rng)
            d_loss, g_term, e_term = bigan_terms(D, E, G, xb, z, cfg.train_g_loss)
            if cfg.use_residual:
                e_term = e_term + T.mean(T.norm(xb - G(E(xb)), 1, axis=1))

            for p in every:
                p.grad = None
            d_loss.backward()
            opt_d.step()

            for p in every:
                p.grad = None
            g_term.backward()
            opt_g.step()

            for p in every:
                p.grad = None
            e_term.backward()
            opt_e.step()
        if selecting:
            for kind in kinds:
                auc = eval_auprc(anomaly_score_egbad(model, eval_set.samples, kind, cfg.lam),
                                 eval_set.labels)
                log.append((epoch, kind.value, auc))
                if improves(auc, best[kind][0] if kind in best else None):
                    best[kind] = (auc, snapshot(model.nets()))
    out = {}
    for kind in kinds:
        m = model.copy()
        if selecting and kind in best:
            restore(m.nets(), best[kind][1])
        out[kind] = m
    return out, log


def train_egbad(data_normal, cfg: EgbadConfig, rng: np.random.Generator, eval_set=None):
    """Returns (model, selection_log) for ``cfg.test_score``."""
    models, log = train_egbad_multi(data_normal, cfg, rng, eval_set, [cfg.test_score])
    return models[cfg.test_score], log
