import math

import numpy as np
import pytest

from ganad import egbad
from ganad import networks as nets
from ganad.datasets import LabeledDataset, SplitSpec, make_protocol, two_moons
from ganad.egbad import EgbadConfig, EgbadModel, anomaly_score_egbad, train_egbad, train_egbad_multi
from ganad.metrics import average_precision
from ganad.objectives import AdvLossKind


def identity_model(d=3, latent=3, half=False):
    E = nets.build([nets.dense(d, latent, bias=False)], 0)
    E.load_state([np.eye(d, latent)])
    G = nets.build([nets.dense(latent, d, bias=False)], 0)
    G.load_state([np.eye(latent, d)])
    spec, tap = nets.discriminator_spec(d + latent, (4,))
    D = nets.build(spec, 1, feature_tap=tap)
    if half:
        D.params[-1][0].data = np.zeros_like(D.params[-1][0].data)
    return EgbadModel(G, E, D)


def tiny_cfg(**kw):
    base = dict(latent_dim=2, hidden=8, epochs=1, batch_size=8)
    base.update(kw)
    return EgbadConfig(**base)


def test_perfect_reconstruction_scores_zero_with_fm():
    x = np.random.default_rng(0).standard_normal((5, 3))
    np.testing.assert_array_equal(anomaly_score_egbad(identity_model(), x, "fm"), 0.0)


def test_bce_kind_with_half_discriminator():
    x = np.random.default_rng(1).standard_normal((4, 3))
    lam = 0.1
    s = anomaly_score_egbad(identity_model(half=True), x, "bce", lam)
    np.testing.assert_allclose(s, lam * math.log(2), rtol=1e-12)


def test_score_matches_formula():
    rng = np.random.default_rng(2)
    m = egbad.init_model(3, tiny_cfg(), rng)
    x = rng.standard_normal((4, 3))
    z = m.E(x).data
    xh = m.G(z).data
    _, fr = m.D.forward_with_features(np.c_[x, z])
    _, ff = m.D.forward_with_features(np.c_[xh, z])
    expect = 0.7 * np.abs(x - xh).sum(1) + 0.3 * np.abs(fr.data - ff.data).sum(1)
    np.testing.assert_allclose(anomaly_score_egbad(m, x, "fm", 0.3), expect, rtol=1e-12)


def test_score_rejects_wrong_width():
    m = egbad.init_model(3, tiny_cfg(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        anomaly_score_egbad(m, np.zeros((2, 4)))


def test_one_epoch_moves_every_parameter():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, (8, 3))
    cfg = tiny_cfg()
    init = egbad.init_model(3, cfg, np.random.default_rng(7))
    m, _ = train_egbad(x, cfg, np.random.default_rng(7))
    for a, b in zip(init.nets(), m.nets()):
        for p, q in zip(a.parameters(), b.parameters()):
            assert np.all(p.data != q.data), "a parameter entry never moved"


@pytest.mark.parametrize("residual", [False, True])
def test_reconstruction_improves_on_gaussian_data(residual):
    rng = np.random.default_rng(4)
    x = np.tanh(rng.standard_normal((400, 2)) * 0.5)
    held = np.tanh(rng.standard_normal((100, 2)) * 0.5)
    cfg = tiny_cfg(epochs=100, hidden=32, batch_size=32, lr=1e-3, use_residual=residual)
    init = egbad.init_model(2, cfg, np.random.default_rng(5))
    m, _ = train_egbad(x, cfg, np.random.default_rng(5))

    def recon(model):
        return np.abs(held - model.G(model.E(held)).data).sum(1).mean()

    assert recon(m) < recon(init)


def test_scoring_is_read_only_and_deterministic():
    rng = np.random.default_rng(6)
    m = egbad.init_model(3, tiny_cfg(), rng)
    before = [p.data.tobytes() for n in m.nets() for p in n.parameters()]
    x = rng.standard_normal((10, 3))
    a = anomaly_score_egbad(m, x, "fm")
    b = anomaly_score_egbad(m, x, "bce")
    assert [p.data.tobytes() for n in m.nets() for p in n.parameters()] == before
    assert all(p.grad is None for n in m.nets() for p in n.parameters())
    assert a.tobytes() == anomaly_score_egbad(m, x, "fm").tobytes()
    assert not np.array_equal(a, b)


def test_score_is_batch_independent():
    rng = np.random.default_rng(8)
    m = egbad.init_model(3, tiny_cfg(), rng)
    x = rng.standard_normal((6, 3))
    whole = anomaly_score_egbad(m, x)
    alone = np.concatenate([anomaly_score_egbad(m, x[i:i + 1]) for i in range(6)])
    np.testing.assert_allclose(whole, alone, rtol=1e-13)


def _moons_protocol():
    return make_protocol(two_moons(600, seed=1), 1, SplitSpec(seed=1))


def test_selection_off_returns_last_epoch():
    proto = _moons_protocol()
    cfg = tiny_cfg(epochs=3, model_selection=False)
    off, log = train_egbad(proto.train, cfg, np.random.default_rng(9), proto.eval)
    plain, _ = train_egbad(proto.train, cfg, np.random.default_rng(9))
    assert log == []
    for a, b in zip(off.nets(), plain.nets()):
        assert all(p.data.tobytes() == q.data.tobytes()
                   for p, q in zip(a.parameters(), b.parameters()))


def test_selection_keeps_best_epoch_per_kind():
    proto = _moons_protocol()
    cfg = tiny_cfg(epochs=4, hidden=16)
    models, log = train_egbad_multi(proto.train, cfg, np.random.default_rng(10), proto.eval,
                                    ["bce", "fm"])
    assert set(models) == {AdvLossKind.BCE, AdvLossKind.FM}
    assert len(log) == 8
    for kind, m in models.items():
        best = max(a for _, k, a in log if k == kind.value)
        got = average_precision(anomaly_score_egbad(m, proto.eval.samples, kind, cfg.lam),
                                proto.eval.labels)
        assert got == best


def test_training_rejects_empty_data():
    with pytest.raises(ValueError):
        train_egbad(np.zeros((0, 3)), tiny_cfg(), np.random.default_rng(0))


def test_training_data_may_be_a_dataset():
    x = np.random.default_rng(0).uniform(-1, 1, (16, 3))
    ds = LabeledDataset(x, np.zeros(16, np.int64), "toy", 1, np.arange(16))
    m, _ = train_egbad(ds, tiny_cfg(), np.random.default_rng(0))
    assert m.E.in_dim == 3


def test_config_validation():
    with pytest.raises(ValueError):
        EgbadConfig(lam=-0.1)
    with pytest.raises(ValueError):
        EgbadConfig(test_score="mse")
    assert EgbadConfig(train_g_loss="fm").train_g_loss is AdvLossKind.FM
