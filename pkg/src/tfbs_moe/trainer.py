"""Training: Nesterov SGD on binary cross-entropy with early stopping on validation AUC."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import nn_core as nn
from .expert import ExpertHyperparams, ExpertModel, ModelStateError, init_expert
from .moe import MoEModel, init_moe
from .seqdata import LabeledDataset
from .stats import auc_score

log = logging.getLogger(__name__)

IMPROVEMENT_EPS = 1e-6


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.98
    max_epochs: int = 500
    patience: int = 5
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.patience < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("patience, max_epochs and batch_size must be >= 1")

    @classmethod
    def for_moe(cls, **kw) -> "TrainConfig":
        kw.setdefault("patience", 10)
        return cls(**kw)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_auc: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_auc: float = float("-inf")
    stop_reason: str = ""

    @property
    def epochs(self) -> int:
        return len(self.val_auc)

    def to_csv(self) -> str:
        rows = ["epoch,train_loss,val_auc,is_best"]
        for i, (loss, auc) in enumerate(zip(self.train_loss, self.val_auc), start=1):
            rows.append(f"{i},{loss!r},{auc!r},{int(i == self.best_epoch)}")
        return "\n".join(rows) + "\n"


class NesterovSGD:
    """v <- mu v + lr grad(theta - mu v);  theta <- theta - v.

    ``params`` maps names to arrays updated in place. Names in ``frozen``
    are never touched and keep a zero velocity.
    """

    def __init__(self, params: dict, learning_rate: float, momentum: float, frozen=()):
        self.params = params
        self.lr = learning_rate
        self.mu = momentum
        self.frozen = frozenset(frozen)
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def trainable(self):
        return [k for k in self.params if k not in self.frozen]

    def step(self, grad_fn):
        """``grad_fn()`` is called with parameters at the look-ahead point and
        returns ``(loss, grads)``. Returns that loss."""
        names = self.trainable()
        saved = {k: self.params[k].copy() for k in names}
        for k in names:
            self.params[k] -= self.mu * self.velocity[k]
        try:
            loss, grads = grad_fn()
        finally:
            for k in names:
                self.params[k][...] = saved[k]
        for k in names:
            g = grads[k]
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(f"non-finite gradient for {k}")
        for k in names:
            self.velocity[k] = self.mu * self.velocity[k] + self.lr * grads[k]
            self.params[k] -= self.velocity[k]
        return loss


def nesterov_sgd_step(params: dict, velocity: dict, grad_fn, learning_rate: float, momentum: float, frozen=()):
    """Functional form: returns new (params, velocity) dicts; ``grad_fn(params) -> grads``."""
    look = {k: (v if k in frozen else v - momentum * velocity[k]) for k, v in params.items()}
    grads = grad_fn(look)
    new_v, new_p = {}, {}
    for k, v in params.items():
        if k in frozen:
            new_v[k], new_p[k] = velocity[k], v
            continue
        if not np.all(np.isfinite(grads[k])):
            raise NonFiniteGradientError(f"non-finite gradient for {k}")
        new_v[k] = momentum * velocity[k] + learning_rate * grads[k]
        new_p[k] = v - new_v[k]
    return new_p, new_v


def _fit(params: dict, n_train: int, batch_loss_grad, val_auc_fn, config: TrainConfig, lr: float, mu: float,
         label: str):
    opt = NesterovSGD(params, lr, mu)
    rng = np.random.default_rng([config.seed, 1])
    hist = TrainHistory()
    best = {k: v.copy() for k, v in params.items()}
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = perm[start:start + config.batch_size]
            try:
                loss = opt.step(lambda: batch_loss_grad(idx))
            except NonFiniteGradientError as exc:
                raise NonFiniteGradientError(f"{label}: epoch {epoch} aborted: {exc}") from None
            total += loss * len(idx)
        hist.train_loss.append(total / n_train)
        auc = val_auc_fn()
        hist.val_auc.append(auc)
        if auc > hist.best_val_auc + IMPROVEMENT_EPS:
            hist.best_val_auc, hist.best_epoch, stale = auc, epoch, 0
            best = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
        log.debug("%s epoch %d loss %.5f val_auc %.5f", label, epoch, hist.train_loss[-1], auc)
        if stale >= config.patience:
            hist.stop_reason = "patience"
            break
    else:
        hist.stop_reason = "max_epochs"
    for k, v in best.items():
        params[k][...] = v
    return hist


def train_expert(train: LabeledDataset, val: LabeledDataset, hp: ExpertHyperparams | None = None,
                 config: TrainConfig | None = None, name: str = "expert", model: ExpertModel | None = None):
    """Train one expert from a fresh seeded init (or ``model``).

    Learning rate and momentum come from ``hp``; epochs, patience, batch
    size and seed from ``config``. Returns the best-validation-AUC weights.
    """
    hp = hp or ExpertHyperparams()
    config = config or TrainConfig()
    if len(train) == 0 or len(val) == 0:
        raise ValueError("train and validation sets must be nonempty")
    if not val.has_both_classes():
        raise ValueError("validation set needs both classes")
    model = model if model is not None else init_expert(hp, config.seed, name)
    if model.frozen or model.stripped:
        raise ModelStateError("cannot train a frozen or stripped expert")
    x, y = train.onehot, train.labels

    def batch_loss_grad(idx):
        out, cache = model.forward(x[idx])
        loss = nn.bce_loss(out.prob, y[idx])
        grads, _ = model.backward(cache, d_logit=nn.bce_logit_grad(out.logit, y[idx]))
        return loss, grads

    def val_auc():
        return auc_score(model.predict_proba(val.onehot), val.labels)

    hist = _fit(model.parameters(), len(train), batch_loss_grad, val_auc, config, hp.learning_rate, hp.momentum,
                name)
    return model, hist


def train_moe(experts, train: LabeledDataset, val: LabeledDataset, config: TrainConfig | None = None,
              name: str = "moe"):
    """Train gate + classifier over frozen, stripped experts (features computed once)."""
    config = config or TrainConfig.for_moe()
    experts = list(experts)
    if len(experts) < 2:
        raise ValueError("a mixture needs at least two experts")
    for ex in experts:
        if not ex.stripped or not ex.frozen:
            raise ModelStateError(f"expert {ex.name!r} is not stripped and frozen")
    if not val.has_both_classes():
        raise ValueError("validation set needs both classes")
    model = init_moe(experts, config.seed, name)
    tr_e, tr_h = model.features(train.onehot)
    va_e, va_h = model.features(val.onehot)
    y = train.labels

    def batch_loss_grad(idx):
        out, cache = model.head_forward([e[idx] for e in tr_e], [h[idx] for h in tr_h])
        loss = nn.bce_loss(out.prob, y[idx])
        grads, _, _ = model.head_backward(nn.bce_logit_grad(out.logit, y[idx]), cache)
        return loss, grads

    def val_auc():
        return auc_score(model.head_forward(va_e, va_h)[0].prob[:, 0], val.labels)

    hist = _fit(model.parameters(), len(train), batch_loss_grad, val_auc, config, config.learning_rate,
                config.momentum, name)
    return model, hist


@dataclass(frozen=True)
class SearchSpace:
    domains: dict = field(default_factory=lambda: {
        "num_filters": [8, 16, 32],
        "motif_width": [8, 12, 16, 24],
    })
    budget: int = 20

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("search budget must be >= 1")
        if not self.domains or any(len(v) == 0 for v in self.domains.values()):
            raise ValueError("every search domain needs at least one candidate")


def hyperparameter_search(space: SearchSpace, train: LabeledDataset, val: LabeledDataset,
                          config: TrainConfig | None = None, base: ExpertHyperparams | None = None,
                          name: str = "expert"):
    """Seeded random search maximizing validation AUC.

    Trial i samples every domain independently and trains with seed
    ``config.seed + i``. Returns (best hyperparams, leaderboard); ties go to
    the earliest trial.
    """
    config = config or TrainConfig()
    base = base or ExpertHyperparams()
    rng = np.random.default_rng([config.seed, 2])
    board = []
    for trial in range(space.budget):
        choice = {k: space.domains[k][int(rng.integers(len(space.domains[k])))] for k in sorted(space.domains)}
        hp = replace(base, **choice)
        entry = {"trial": trial, "hyperparams": asdict(hp)}
        try:
            _, hist = train_expert(train, val, hp, replace(config, seed=config.seed + trial), name)
            entry["val_auc"] = hist.best_val_auc
        except (NonFiniteGradientError, ValueError) as exc:
            entry["val_auc"] = None
            entry["error"] = str(exc)
        board.append(entry)
    done = [e for e in board if e["val_auc"] is not None]
    if not done:
        raise RuntimeError("every search trial aborted")
    winner = max(done, key=lambda e: (e["val_auc"], -e["trial"]))
    return ExpertHyperparams(**winner["hyperparams"]), board
