"""Adversarial losses shared by the three detectors."""
from __future__ import annotations

from enum import Enum

import numpy as np

from . import tensor as T
from .networks import Network
from .tensor import DimensionError, Tensor


class AdvLossKind(str, Enum):
    BCE = "bce"
    FM = "fm"


def as_kind(kind) -> AdvLossKind:
    return kind if isinstance(kind, AdvLossKind) else AdvLossKind(str(kind))


def d_loss_gan(D: Network, x_real, x_fake) -> Tensor:
    """Discriminator loss: bce(D(real), 1) + bce(D(fake), 0).

    The fake batch is detached here, so this never reaches the generator.
    """
    x_real, x_fake = T.as_tensor(x_real), T.as_tensor(x_fake).detach()
    if x_real.shape[0] == 0 or x_fake.shape[0] == 0:
        raise ValueError("empty batch")
    if x_real.shape[1:] != x_fake.shape[1:]:
        raise DimensionError(f"real {x_real.shape} vs fake {x_fake.shape}")
    return T.bce(D(x_real), 1.0) + T.bce(D(x_fake), 0.0)


def feature_matching(f_real: Tensor, f_fake: Tensor) -> Tensor:
    """L2 distance between batch-mean feature vectors."""
    return T.norm(T.mean(f_real, axis=0) - T.mean(f_fake, axis=0), 2)


def g_loss(D: Network, x_fake, x_real_batch=None, kind=AdvLossKind.BCE) -> Tensor:
    """Generator loss; bce is the non-saturating form."""
    kind = as_kind(kind)
    if kind is AdvLossKind.BCE:
        return T.bce(D(x_fake), 1.0)
    if x_real_batch is None or T.as_tensor(x_real_batch).shape[0] == 0:
        raise ValueError("feature matching needs a non-empty real batch")
    _, f_fake = D.forward_with_features(x_fake)
    with T.no_grad():
        _, f_real = D.forward_with_features(x_real_batch)
    return feature_matching(f_real, f_fake)


def _check_one_hot(y: np.ndarray) -> None:
    ok = y.ndim == 2 and np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)
    if not ok:
        raise ValueError("conditioning rows must be one-hot")


def conditional_input(x, y) -> Tensor:
    x, y = T.as_tensor(x), T.as_tensor(y)
    _check_one_hot(y.data)
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"{x.shape[0]} samples vs {y.shape[0]} conditions")
    return T.concat([x, y], axis=1)


def conditional_wrap(net: Network, x, y) -> Tensor:
    """Run ``net`` on the condition-augmented input [x | y]."""
    return net(conditional_input(x, y))


class Conditioned:
    """Adapter that makes a conditioned net look like a plain one to the losses."""

    def __init__(self, net: Network, y):
        self.net, self.y = net, T.as_tensor(y)

    def __call__(self, x) -> Tensor:
        return conditional_wrap(self.net, x, self.y)

    def forward_with_features(self, x):
        return self.net.forward_with_features(conditional_input(x, self.y))


def pair(x, z) -> Tensor:
    x, z = T.as_tensor(x), T.as_tensor(z)
    if x.shape[0] != z.shape[0]:
        raise DimensionError(f"pair of {x.shape[0]} samples with {z.shape[0]} codes")
    return T.concat([x, z], axis=1)


def bigan_terms(D_joint: Network, E: Network, G: Network, x_real, z_prior,
                g_kind=AdvLossKind.BCE):
    """Returns (d_loss, g_term, e_term).

    d_loss trains D on detached pairs. The generator/encoder objective is
    split so each network can take its own optimizer step: g_term is the
    fake-pair term (bce or feature matching), e_term the real-pair term with
    inverted labels.
    """
    x_real, z_prior = T.as_tensor(x_real), T.as_tensor(z_prior)
    if E.out_dim != z_prior.shape[1] or G.in_dim != z_prior.shape[1]:
        raise DimensionError(
            f"latent mismatch: E emits {E.out_dim}, G takes {G.in_dim}, z has {z_prior.shape[1]}")
    z_hat = E(x_real)
    x_gen = G(z_prior)
    real_pair = pair(x_real, z_hat)
    fake_pair = pair(x_gen, z_prior)

    d_loss = (T.bce(D_joint(real_pair.detach()), 1.0)
              + T.bce(D_joint(fake_pair.detach()), 0.0))
    if as_kind(g_kind) is AdvLossKind.BCE:
        g_term = T.bce(D_joint(fake_pair), 1.0)
    else:
        _, f_fake = D_joint.forward_with_features(fake_pair)
        _, f_real = D_joint.forward_with_features(real_pair)
        g_term = feature_matching(f_real, f_fake)
    e_term = T.bce(D_joint(real_pair), 0.0)
    return d_loss, g_term, e_term


def bigan_losses(D_joint: Network, E: Network, G: Network, x_real, z_prior,
                 g_kind=AdvLossKind.BCE) -> tuple[Tensor, Tensor]:
    """(d_loss, ge_loss) with ge_loss the non-saturating complement of d_loss."""
    d_loss, g_term, e_term = bigan_terms(D_joint, E, G, x_real, z_prior, g_kind)
    return d_loss, g_term + e_term
