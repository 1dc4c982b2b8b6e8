import numpy as np
import pytest

from ganad import ganomaly
from ganad import networks as nets
from ganad import tensor as T
from ganad.datasets import SplitSpec, make_protocol, two_moons
from ganad.ganomaly import (GanomalyConfig, GanomalyModel, GanomalyWeights, anomaly_score_gano,
                            ganomaly_losses, residual_map, train_ganomaly)
from ganad.optim import adam
from _fd import param_grad_error


def linear(d_in, d_out, w, b=None):
    net = nets.build([nets.dense(d_in, d_out)], 0)
    net.load_state([np.asarray(w, float), np.zeros(d_out) if b is None else np.asarray(b, float)])
    return net


def D_for(d, seed=0):
    spec, tap = nets.discriminator_spec(d, (4,))
    return nets.build(spec, seed, feature_tap=tap)


def identity_model(d=3):
    G_E = linear(d, d, np.eye(d))
    return GanomalyModel(G_E, linear(d, d, np.eye(d)), G_E.copy(), D_for(d))


def tiny_cfg(**kw):
    base = dict(latent_dim=2, hidden=8, epochs=1, batch_size=8)
    base.update(kw)
    return GanomalyConfig(**base)


@pytest.mark.parametrize("kind", ["fm", "bce"])
def test_identity_generator_has_zero_reconstruction_terms(kind):
    x = np.random.default_rng(0).standard_normal((5, 3))
    g_total, l_adv, l_con, l_enc, _ = ganomaly_losses(identity_model(), x, GanomalyWeights(), kind)
    assert l_con.item() == 0.0 and l_enc.item() == 0.0
    if kind == "fm":
        assert l_adv.item() == 0.0
        assert g_total.item() == pytest.approx(0.0, abs=1e-9)


def test_weights_select_the_l1_term():
    m = GanomalyModel(linear(2, 2, np.eye(2)), linear(2, 2, np.zeros((2, 2)), [0.0, 3.0]),
                      linear(2, 2, np.eye(2)), D_for(2))
    g_total, *_ = ganomaly_losses(m, np.array([[1.0, 1.0]]), GanomalyWeights(0, 1, 0))
    assert g_total.item() == 3.0


def test_g_total_equals_hand_summed_terms():
    rng = np.random.default_rng(1)
    m = ganomaly.init_model(4, tiny_cfg(), rng)
    x = rng.uniform(-1, 1, (6, 4))
    w = GanomalyWeights(0.7, 20.0, 2.5)
    g_total, *_ = ganomaly_losses(m, x, w, "fm")

    z = m.G_E(x).data
    xh = m.G_D(z).data
    zh = m.E(xh).data
    f = lambda v: m.D.forward_with_features(v)[1].data  # noqa: E731
    adv = np.sqrt(np.sum((f(x).mean(0) - f(xh).mean(0)) ** 2))
    con = np.abs(x - xh).sum(1).mean()
    enc = np.sqrt(((z - zh) ** 2).sum(1)).mean()
    assert g_total.item() == pytest.approx(0.7 * adv + 20 * con + 2.5 * enc, abs=1e-12)


def test_losses_reject_empty_and_mismatched():
    m = ganomaly.init_model(4, tiny_cfg(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        ganomaly_losses(m, np.zeros((0, 4)))
    with pytest.raises(T.DimensionError):
        ganomaly_losses(m, np.zeros((2, 5)))


def test_model_invariants_are_checked():
    with pytest.raises(T.DimensionError):
        GanomalyModel(linear(3, 2, np.ones((3, 2))), linear(3, 3, np.eye(3)),
                      linear(3, 2, np.ones((3, 2))), D_for(3))
    other = nets.build(nets.encoder_spec(3, 3, (4,)), 0)
    with pytest.raises(T.DimensionError):
        GanomalyModel(linear(3, 3, np.eye(3)), linear(3, 3, np.eye(3)), other, D_for(3))


def test_encoders_share_shape_not_parameters():
    m = ganomaly.init_model(5, tiny_cfg(), np.random.default_rng(2))
    assert m.G_E.layers == m.E.layers
    assert not np.array_equal(m.G_E.parameters()[0].data, m.E.parameters()[0].data)


def test_weights_validation():
    with pytest.raises(ValueError):
        GanomalyWeights(-1, 1, 1)
    with pytest.raises(ValueError):
        GanomalyWeights(0, 0, 0)
    with pytest.raises(ValueError):
        GanomalyConfig(score="cosine")


def test_score_zero_for_perfect_generator_and_copied_encoder():
    x = np.random.default_rng(3).standard_normal((4, 3))
    np.testing.assert_array_equal(anomaly_score_gano(identity_model(), x), 0.0)
    np.testing.assert_array_equal(anomaly_score_gano(identity_model(), x, "l2"), 0.0)


def test_score_variants_are_monotone_related_and_batch_independent():
    rng = np.random.default_rng(4)
    m = ganomaly.init_model(3, tiny_cfg(), rng)
    x = rng.standard_normal((7, 3))
    sq, l2 = anomaly_score_gano(m, x), anomaly_score_gano(m, x, "l2")
    np.testing.assert_allclose(np.sqrt(sq), l2, rtol=1e-15)
    alone = np.concatenate([anomaly_score_gano(m, x[i:i + 1]) for i in range(7)])
    np.testing.assert_allclose(sq, alone, rtol=1e-13)
    with pytest.raises(T.DimensionError):
        anomaly_score_gano(m, np.zeros((2, 4)))


def test_steps_touch_only_their_own_networks():
    rng = np.random.default_rng(5)
    m = ganomaly.init_model(3, tiny_cfg(), rng)
    x = rng.standard_normal((6, 3))
    gen = [p for n in m.generator_nets() for p in n.parameters()]
    g_total, *_, d_loss = ganomaly_losses(m, x)
    d_before = [p.data.tobytes() for p in m.D.parameters()]
    g_total.backward()
    adam(gen, 0.1).step()
    assert [p.data.tobytes() for p in m.D.parameters()] == d_before

    for p in gen + m.D.parameters():
        p.grad = None
    g_before = [p.data.tobytes() for p in gen]
    d_loss.backward()
    assert all(p.grad is None for p in gen)
    adam(m.D.parameters(), 0.1).step()
    assert [p.data.tobytes() for p in gen] == g_before


def test_residual_map():
    m = identity_model()
    x = np.random.default_rng(6).standard_normal((3, 3))
    np.testing.assert_array_equal(residual_map(m, x), 0.0)
    m = ganomaly.init_model(3, tiny_cfg(), np.random.default_rng(0))
    r = residual_map(m, x)
    assert r.shape == x.shape and np.all(r >= 0)


@pytest.mark.parametrize("kind", ["fm", "bce"])
def test_g_total_gradient_fd(kind):
    worst = 0.0
    for s in range(100):
        rng = np.random.default_rng(2000 + s)
        m = ganomaly.init_model(3, tiny_cfg(latent_dim=2, hidden=3), rng)
        x = rng.uniform(-1, 1, (3, 3))
        params = [p for n in m.generator_nets() for p in n.parameters()]
        loss = lambda: ganomaly_losses(m, x, GanomalyWeights(1, 5, 1), kind)[0]  # noqa: E731
        worst = max(worst, param_grad_error(loss, params))
    assert worst < 1e-4


def test_training_lowers_reconstruction_and_separates_moons():
    proto = make_protocol(two_moons(1000, seed=2), 1, SplitSpec(seed=2))
    cfg = tiny_cfg(epochs=20, hidden=32, batch_size=32, lr=1e-3)
    init = ganomaly.init_model(2, cfg, np.random.default_rng(7))
    m, log = train_ganomaly(proto.train, cfg, np.random.default_rng(7), proto.eval)
    assert len(log) == cfg.epochs and all(k == "latent" for _, k, _ in log)

    def l_con(model, x):
        return np.abs(x - model.reconstruct(x).data).sum(1)

    x, y = proto.test.samples, proto.test.labels
    held = x[y == 0]
    assert l_con(m, held).mean() < l_con(init, held).mean()
    assert l_con(m, x[y == 0]).mean() < l_con(m, x[y == 1]).mean()
    s = anomaly_score_gano(m, x)
    assert s[y == 1].mean() > s[y == 0].mean()


def test_scale_scores_is_exported():
    np.testing.assert_array_equal(ganomaly.scale_scores([2, 4, 6]), [0, 0.5, 1])
