import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ganad import networks as nets
from ganad import tensor as T
from ganad.objectives import (AdvLossKind, Conditioned, bigan_losses, bigan_terms,
                              conditional_input, conditional_wrap, d_loss_gan, feature_matching,
                              g_loss, pair)
from ganad.optim import adam
from _fd import param_grad_error

LN2 = math.log(2.0)


def half_D(in_dim, hidden=4, seed=0):
    """Discriminator whose output is exactly 0.5: the last layer is all zeros."""
    spec, tap = nets.discriminator_spec(in_dim, (hidden,))
    D = nets.build(spec, seed, feature_tap=tap)
    w, b = D.params[-1]
    w.data = np.zeros_like(w.data)
    b.data = np.zeros_like(b.data)
    return D


def tiny_D(in_dim, seed, hidden=4):
    spec, tap = nets.discriminator_spec(in_dim, (hidden,))
    return nets.build(spec, seed, feature_tap=tap)


def test_d_loss_at_half_is_two_ln2():
    D = half_D(3)
    rng = np.random.default_rng(0)
    val = d_loss_gan(D, rng.standard_normal((5, 3)), rng.standard_normal((7, 3))).item()
    assert val == pytest.approx(2 * LN2, abs=1e-9)


def test_d_loss_perfect_discriminator_is_near_zero():
    # a one-feature D that saturates: huge positive weight on the sign of x
    D = nets.build([nets.dense(1, 1), nets.act("sigmoid")], 0)
    D.load_state([np.array([[1e4]]), np.zeros(1)])
    val = d_loss_gan(D, np.ones((4, 1)), -np.ones((4, 1))).item()
    assert val < 1e-6


def test_d_loss_matches_scalar_loop():
    rng = np.random.default_rng(1)
    D = tiny_D(3, 2)
    xr, xf = rng.standard_normal((5, 3)), rng.standard_normal((4, 3))
    pr, pf = D(xr).data.ravel(), D(xf).data.ravel()
    expect = -sum(math.log(p) for p in pr) / 5 - sum(math.log(1 - p) for p in pf) / 4
    assert d_loss_gan(D, xr, xf).item() == pytest.approx(expect, abs=1e-12)


def test_d_loss_shape_mismatch():
    with pytest.raises(T.DimensionError):
        d_loss_gan(tiny_D(3, 0), np.zeros((2, 3)), np.zeros((2, 4)))


def test_d_loss_never_negative():
    rng = np.random.default_rng(2)
    for s in range(50):
        D = tiny_D(2, s)
        assert d_loss_gan(D, rng.standard_normal((3, 2)), rng.standard_normal((3, 2))).item() >= 0


def test_g_loss_examples():
    D = half_D(3)
    x = np.random.default_rng(3).standard_normal((4, 3))
    assert g_loss(D, x, kind="bce").item() == pytest.approx(LN2, abs=1e-12)
    assert g_loss(tiny_D(3, 1), x, x, kind="fm").item() == 0.0


def test_fm_needs_real_batch():
    with pytest.raises(ValueError):
        g_loss(tiny_D(3, 0), np.zeros((2, 3)), None, kind=AdvLossKind.FM)
    with pytest.raises(ValueError):
        g_loss(tiny_D(3, 0), np.zeros((2, 3)), np.zeros((0, 3)), kind=AdvLossKind.FM)


def test_fm_hand_computed_two_samples():
    D = tiny_D(3, 5)
    rng = np.random.default_rng(4)
    xr, xf = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
    w1, b1 = D.params[0][0].data, D.params[0][1].data

    def feats(x):
        h = x @ w1 + b1
        return np.where(h > 0, h, 0.2 * h)

    expect = np.sqrt(np.sum((feats(xr).mean(0) - feats(xf).mean(0)) ** 2))
    assert g_loss(D, xf, xr, kind="fm").item() == pytest.approx(expect, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_fm_symmetric_in_batches(seed):
    rng = np.random.default_rng(seed)
    D = tiny_D(3, seed)
    a, b = rng.standard_normal((4, 3)), rng.standard_normal((6, 3))
    assert g_loss(D, a, b, "fm").item() == pytest.approx(g_loss(D, b, a, "fm").item(), abs=1e-14)


def test_d_step_leaves_generator_unchanged_and_vice_versa():
    rng = np.random.default_rng(5)
    G = nets.build(nets.generator_spec(2, 3, (4,)), 1)
    D = tiny_D(3, 2)
    x = rng.standard_normal((6, 3))
    z = nets.sample_latent(6, 2, rng)
    g_before = [p.data.tobytes() for p in G.parameters()]
    d_loss_gan(D, x, G(z)).backward()
    assert all(p.grad is None for p in G.parameters())
    adam(D.parameters(), 0.1).step()
    assert [p.data.tobytes() for p in G.parameters()] == g_before

    for p in G.parameters() + D.parameters():
        p.grad = None
    d_before = [p.data.tobytes() for p in D.parameters()]
    g_loss(D, G(z), x, "bce").backward()
    adam(G.parameters(), 0.1).step()
    assert [p.data.tobytes() for p in D.parameters()] == d_before
    assert [p.data.tobytes() for p in G.parameters()] != g_before


# -------------------------------------------------------------- conditioning

def test_conditional_width_and_errors():
    x, y = np.zeros((4, 10)), np.eye(3)[[0, 1, 2, 0]]
    assert conditional_input(x, y).shape == (4, 13)
    with pytest.raises(ValueError):
        conditional_input(x, np.full((4, 3), 0.5))
    with pytest.raises(T.DimensionError):
        conditional_input(x, np.eye(3))


def test_conditional_batch_equivariance():
    rng = np.random.default_rng(6)
    net = tiny_D(13, 3)
    x, y = rng.standard_normal((4, 10)), np.eye(3)[[0, 2, 1, 1]]
    perm = np.array([2, 0, 3, 1])
    out = conditional_wrap(net, x, y).data
    np.testing.assert_array_equal(conditional_wrap(net, x[perm], y[perm]).data, out[perm])


def test_conditioned_d_loss_at_half():
    y = np.eye(2)[[0, 1, 1]]
    D = Conditioned(half_D(5), y)
    rng = np.random.default_rng(7)
    val = d_loss_gan(D, rng.standard_normal((3, 3)), rng.standard_normal((3, 3))).item()
    assert val == pytest.approx(2 * LN2, abs=1e-9)


# -------------------------------------------------------------------- BiGAN

def test_bigan_examples():
    E = nets.build(nets.encoder_spec(3, 2, (4,)), 0)
    G = nets.build(nets.generator_spec(2, 3, (4,)), 1)
    rng = np.random.default_rng(8)
    d_loss, _ = bigan_losses(half_D(5), E, G, rng.standard_normal((4, 3)),
                             rng.standard_normal((4, 2)))
    assert d_loss.item() == pytest.approx(2 * LN2, abs=1e-9)
    assert pair(np.zeros((2, 784)), np.zeros((2, 64))).shape == (2, 848)


def test_bigan_latent_mismatch():
    E = nets.build(nets.encoder_spec(3, 2, (4,)), 0)
    G = nets.build(nets.generator_spec(2, 3, (4,)), 1)
    with pytest.raises(T.DimensionError):
        bigan_losses(tiny_D(5, 0), E, G, np.zeros((2, 3)), np.zeros((2, 3)))


def test_bigan_terms_split_by_network():
    rng = np.random.default_rng(9)
    E = nets.build(nets.encoder_spec(3, 2, (4,)), 0)
    G = nets.build(nets.generator_spec(2, 3, (4,)), 1)
    D = tiny_D(5, 2)
    x, z = rng.standard_normal((4, 3)), rng.standard_normal((4, 2))
    d_loss, g_term, e_term = bigan_terms(D, E, G, x, z)
    e_term.backward()
    assert all(p.grad is None for p in G.parameters())
    assert all(p.grad is not None for p in E.parameters())
    for p in E.parameters() + D.parameters():
        p.grad = None
    d_loss.backward()
    assert all(p.grad is None for p in E.parameters() + G.parameters())


# ------------------------------------------------------- finite differences

N_INSTANCES = 100


def test_d_loss_gan_gradient_fd():
    worst = 0.0
    for s in range(N_INSTANCES):
        rng = np.random.default_rng(s)
        D = tiny_D(3, s, hidden=3)
        xr, xf = rng.standard_normal((3, 3)), rng.standard_normal((2, 3))
        worst = max(worst, param_grad_error(lambda: d_loss_gan(D, xr, xf), D.parameters()))
    assert worst < 1e-4


@pytest.mark.parametrize("kind", ["bce", "fm"])
def test_bigan_ge_loss_gradient_fd(kind):
    worst = 0.0
    for s in range(N_INSTANCES):
        rng = np.random.default_rng(1000 + s)
        E = nets.build(nets.encoder_spec(3, 2, (3,), first_layer_activation=True), rng)
        G = nets.build(nets.generator_spec(2, 3, (3,)), rng)
        D = tiny_D(5, rng, hidden=3)
        x, z = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
        loss = lambda: bigan_losses(D, E, G, x, z, kind)[1]  # noqa: E731
        worst = max(worst, param_grad_error(loss, E.parameters() + G.parameters()))
    assert worst < 1e-4


def test_feature_matching_zero_distance_has_zero_grad():
    f = T.Tensor(np.ones((2, 3)), requires_grad=True)
    feature_matching(f, T.Tensor(np.ones((2, 3)))).backward()
    np.testing.assert_array_equal(f.grad, 0)
