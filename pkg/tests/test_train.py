import numpy as np
import pytest

from flowroute.errors import ConfigError
from flowroute.graph import ConnectomePair
from flowroute.nn.model import FlowRouteNet, ModelConfig, prepare
from flowroute.nn.train import AdamW, SGD, TrainConfig, evaluate, stratified_split, train, train_epoch
from flowroute.rng import stream

from conftest import random_connected_sc, random_fc

SMALL = dict(d=16, res_hidden=16, gate_hidden=16, dropout=0.0)


def distinct_subjects(n_subjects, n=10, seed=7):
    rng = np.random.default_rng(seed)
    return [
        ConnectomePair(random_connected_sc(rng, n), random_fc(rng, n), label=k % 2, id=f"s{k}")
        for k in range(n_subjects)
    ]


def prepared(n_subjects, **model):
    cfg = ModelConfig(d_x=10, **{**SMALL, **model})
    return cfg, [prepare(p, cfg) for p in distinct_subjects(n_subjects)]


def test_zero_lr_leaves_parameters_bit_identical():
    cfg, subs = prepared(4)
    net = FlowRouteNet(cfg, rng=np.random.default_rng(0))
    before = {k: v.copy() for k, v in net.arrays().items()}
    opt = AdamW(net.params, lr=0.0, weight_decay=0.01)
    train_epoch(net, opt, subs, np.arange(4), 2, None)
    for k, v in net.arrays().items():
        assert v.tobytes() == before[k].tobytes()
    sgd = SGD(net.params, lr=0.0, weight_decay=0.01)
    train_epoch(net, sgd, subs, np.arange(4), 4, None)
    for k, v in net.arrays().items():
        assert v.tobytes() == before[k].tobytes()


def test_overfits_eight_subjects():
    cfg, subs = prepared(8)
    net = FlowRouteNet(cfg, rng=np.random.default_rng(0))
    opt = AdamW(net.params, lr=1e-2, weight_decay=0.0)
    for _ in range(200):
        train_epoch(net, opt, subs, np.arange(8), 8, None)
    assert evaluate(net, subs)["acc"] == 1.0


def test_adamw_first_step_is_sign_times_lr():
    from flowroute.nn.autodiff import Tensor

    p = {"w": Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)}
    p["w"].grad = np.array([0.5, -4.0, 1e-3])
    AdamW(p, lr=0.1, weight_decay=0.0).step()
    np.testing.assert_allclose(p["w"].data, [0.9, -1.9, 2.9], rtol=1e-6)
    p["w"].grad = np.zeros(3)
    before = p["w"].data.copy()
    AdamW(p, lr=0.1, weight_decay=0.5).step()
    np.testing.assert_allclose(p["w"].data, before * (1 - 0.05))


def test_stratified_split_proportions_and_determinism():
    labels = np.array([0] * 100 + [1] * 100)
    tr, va, te = stratified_split(labels, (6, 1, 3), stream(0, "split"))
    assert (len(tr), len(va), len(te)) == (120, 20, 60)
    for part in (tr, va, te):
        assert np.sum(labels[part] == 1) * 2 == len(part)
    assert len(np.unique(np.concatenate([tr, va, te]))) == 200
    again = stratified_split(labels, (6, 1, 3), stream(0, "split"))
    assert all(np.array_equal(a, b) for a, b in zip((tr, va, te), again))


def test_train_errors():
    _, subs = prepared(6)
    with pytest.raises(ConfigError, match="empty"):
        train(subs, TrainConfig(epochs=1, split=(1, 0, 1), model=SMALL), seed=0)
    one_class = [s for s in subs if s.label == 0]
    with pytest.raises(ConfigError):
        train(one_class, TrainConfig(epochs=1, model=SMALL), seed=0)
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="lbfgs")


def test_train_is_deterministic_and_tracks_best_epoch():
    _, subs = prepared(20)
    cfg = TrainConfig(epochs=3, lr=1e-3, batch_size=4, model={**SMALL, "dropout": 0.2})
    a = train(subs, cfg, seed=5)
    b = train(subs, cfg, seed=5)
    assert a.history == b.history
    assert a.test_metrics == b.test_metrics
    for k, v in a.net.arrays().items():
        assert v.tobytes() == b.net.arrays()[k].tobytes()
    assert 1 <= a.best_epoch <= 3
    ids = set(a.splits["train"]) | set(a.splits["val"]) | set(a.splits["test"])
    assert len(ids) == 20


def test_train_config_round_trip():
    cfg = TrainConfig(epochs=7, model={"d": 32})
    again = TrainConfig.from_dict(cfg.to_dict())
    assert again == cfg and again.model.d == 32
