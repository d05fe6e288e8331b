import numpy as np
import pytest

from tfbs_moe import trainer
from tfbs_moe.expert import ExpertHyperparams, ModelStateError, init_expert, strip_head
from tfbs_moe.seqdata import SyntheticSpec, generate_synthetic_dataset, split_dataset
from tfbs_moe.trainer import (
    NesterovSGD,
    NonFiniteGradientError,
    SearchSpace,
    TrainConfig,
    hyperparameter_search,
    nesterov_sgd_step,
    train_expert,
    train_moe,
)

SMALL = ExpertHyperparams(num_filters=4, motif_width=5, embed_dim=6, hidden_dim=6, learning_rate=0.05, momentum=0.9)


@pytest.fixture(scope="module")
def toy():
    spec = SyntheticSpec("GATAA", 30, 60, 60, mutation_rate=0.0)
    return split_dataset(generate_synthetic_dataset(spec, seed=0), [80, 40], seed=0)


def _quadratic_opt(theta0, lr, mu):
    params = {"t": np.array([theta0])}
    opt = NesterovSGD(params, lr, mu)
    grad = lambda: (0.5 * float(params["t"][0] ** 2), {"t": params["t"].copy()})  # noqa: E731
    return params, opt, grad


def test_nesterov_hand_iteration():
    params, opt, grad = _quadratic_opt(1.0, 0.1, 0.9)
    opt.step(grad)
    assert abs(opt.velocity["t"][0] - 0.1) < 1e-15 and abs(params["t"][0] - 0.9) < 1e-15
    opt.step(grad)
    assert abs(opt.velocity["t"][0] - 0.171) < 1e-15 and abs(params["t"][0] - 0.729) < 1e-15


def test_functional_step_matches_class():
    p, v = {"t": np.array([1.0])}, {"t": np.zeros(1)}
    for _ in range(2):
        p, v = nesterov_sgd_step(p, v, lambda q: {"t": q["t"].copy()}, 0.1, 0.9)
    assert abs(p["t"][0] - 0.729) < 1e-15 and abs(v["t"][0] - 0.171) < 1e-15


def test_zero_momentum_is_plain_sgd():
    params, opt, grad = _quadratic_opt(2.0, 0.25, 0.0)
    opt.step(grad)
    assert params["t"][0] == 2.0 - 0.25 * 2.0


def test_zero_gradient_leaves_params():
    params = {"w": np.arange(4.0)}
    opt = NesterovSGD(params, 0.1, 0.9)
    opt.step(lambda: (0.0, {"w": np.zeros(4)}))
    np.testing.assert_array_equal(params["w"], np.arange(4.0))


def test_frozen_keys_untouched():
    params = {"a": np.ones(3), "b": np.ones(3)}
    opt = NesterovSGD(params, 0.1, 0.9, frozen=["b"])
    for _ in range(3):
        opt.step(lambda: (0.0, {"a": np.ones(3), "b": np.ones(3)}))
    assert np.all(params["b"] == 1) and not opt.velocity["b"].any()
    assert np.all(params["a"] < 1)


def test_non_finite_gradient_aborts():
    params = {"w": np.ones(2)}
    opt = NesterovSGD(params, 0.1, 0.9)
    with pytest.raises(NonFiniteGradientError):
        opt.step(lambda: (0.0, {"w": np.array([np.nan, 0.0])}))
    np.testing.assert_array_equal(params["w"], [1.0, 1.0])


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    assert TrainConfig.for_moe().patience == 10 and TrainConfig().patience == 5


def test_stops_at_one_plus_patience(toy, monkeypatch):
    monkeypatch.setattr(trainer, "auc_score", lambda s, y: 0.5)
    train, val = toy
    _, hist = train_expert(train, val, SMALL, TrainConfig(patience=3))
    assert hist.epochs == 4 and hist.best_epoch == 1 and hist.stop_reason == "patience"


def test_best_weights_restored(toy, monkeypatch):
    aucs = iter([0.6, 0.9, 0.7, 0.8, 0.5, 0.5])
    snapshots = []
    monkeypatch.setattr(trainer, "auc_score", lambda s, y: next(aucs))
    train, val = toy
    model = init_expert(SMALL, 0)
    orig = trainer._fit

    def spy(params, *a, **kw):
        # record weights as each epoch's validation is queried
        inner_val = a[2]

        def val_fn():
            snapshots.append(params["conv.kernels"].copy())
            return inner_val()
        return orig(params, a[0], a[1], val_fn, *a[3:], **kw)

    monkeypatch.setattr(trainer, "_fit", spy)
    model, hist = train_expert(train, val, SMALL, TrainConfig(patience=3), model=model)
    assert hist.best_epoch == 2
    np.testing.assert_array_equal(model.conv.kernels, snapshots[1])


def test_history_deterministic(toy):
    train, val = toy
    cfg = TrainConfig(max_epochs=4, seed=3)
    m1, h1 = train_expert(train, val, SMALL, cfg)
    m2, h2 = train_expert(train, val, SMALL, cfg)
    assert h1.to_csv() == h2.to_csv()
    assert m1.conv.kernels.tobytes() == m2.conv.kernels.tobytes()


def test_history_csv_format(toy):
    train, val = toy
    _, h = train_expert(train, val, SMALL, TrainConfig(max_epochs=3))
    lines = h.to_csv().splitlines()
    assert lines[0] == "epoch,train_loss,val_auc,is_best"
    assert len(lines) == h.epochs + 1
    assert sum(int(r.split(",")[3]) for r in lines[1:]) == 1


def test_toy_loss_decreases():
    spec = SyntheticSpec("GATAA", 20, 8, 8)
    data = generate_synthetic_dataset(spec, seed=5)
    hp = ExpertHyperparams(num_filters=4, motif_width=5, embed_dim=8, hidden_dim=8, learning_rate=0.01)
    _, hist = train_expert(data, data, hp, TrainConfig(max_epochs=10, patience=10, batch_size=4))
    assert hist.epochs == 10
    assert hist.train_loss[-1] < hist.train_loss[0]


def test_learns_planted_motif():
    spec = SyntheticSpec("GATAA", 30, 200, 200)
    train, val = split_dataset(generate_synthetic_dataset(spec, seed=0), [300, 100], seed=0)
    hp = ExpertHyperparams(num_filters=8, motif_width=6, embed_dim=8, hidden_dim=8)
    _, hist = train_expert(train, val, hp, TrainConfig(max_epochs=60, patience=10))
    assert hist.best_val_auc > 0.9


def test_train_rejects_frozen_model(toy):
    with pytest.raises(ModelStateError):
        train_expert(*toy, SMALL, model=strip_head(init_expert(SMALL, 0)))


def test_train_moe_preconditions(toy):
    train, val = toy
    with pytest.raises(ValueError):
        train_moe([strip_head(init_expert(SMALL, 0))], train, val)
    with pytest.raises(ModelStateError):
        train_moe([init_expert(SMALL, 0), init_expert(SMALL, 1)], train, val)


def test_train_moe_leaves_experts_unchanged(toy):
    train, val = toy
    experts = [strip_head(init_expert(SMALL, i)) for i in range(2)]
    before = [{k: v.tobytes() for k, v in e.parameters().items()} for e in experts]
    model, hist = train_moe(experts, train, val, TrainConfig.for_moe(max_epochs=5))
    assert hist.epochs >= 1
    for e, b in zip(model.experts, before):
        assert {k: v.tobytes() for k, v in e.parameters().items()} == b


def test_search_budget_one(toy):
    space = SearchSpace({"num_filters": [4], "motif_width": [5]}, budget=1)
    best, board = hyperparameter_search(space, *toy, TrainConfig(max_epochs=2), base=SMALL)
    assert len(board) == 1 and best.num_filters == 4 and best.motif_width == 5


def test_search_picks_argmax_and_is_deterministic(toy):
    space = SearchSpace({"num_filters": [2, 4], "motif_width": [3, 5, 7]}, budget=4)
    cfg = TrainConfig(max_epochs=3)
    best, board = hyperparameter_search(space, *toy, cfg, base=SMALL)
    top = max(board, key=lambda e: (e["val_auc"], -e["trial"]))
    assert best == ExpertHyperparams(**top["hyperparams"])
    _, again = hyperparameter_search(space, *toy, cfg, base=SMALL)
    assert again == board


def test_search_all_trials_abort(toy):
    space = SearchSpace({"motif_width": [99]}, budget=2)
    with pytest.raises(RuntimeError):
        hyperparameter_search(space, *toy, TrainConfig(max_epochs=1), base=SMALL)
