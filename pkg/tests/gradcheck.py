"""Random small models and finite-difference helpers shared by the gradient tests."""

import numpy as np

from tfbs_moe import nn_core as nn
from tfbs_moe.expert import ExpertHyperparams, ExpertModel, strip_head
from tfbs_moe.moe import MoEModel

EPS = 1e-4
TOL = 1e-5
# central differences are only valid this far from a relu / max-pool kink
KINK_MARGIN = 2e-3


def _w(rng, shape, fan_in, fan_out):
    return nn.glorot_uniform(rng, shape, fan_in, fan_out)


def _b(rng, n):
    return rng.uniform(-0.1, 0.1, n)


def random_expert(rng, max_dim=8, max_len=20, name="x"):
    F, M, E, H = (int(rng.integers(1, max_dim + 1)) for _ in range(4))
    L = int(rng.integers(M, max_len + 1))
    hp = ExpertHyperparams(F, M, E, H)
    model = ExpertModel(
        nn.ConvLayer(_w(rng, (F, M, 4), 4 * M, F * M), _b(rng, F)),
        nn.DenseLayer(_w(rng, (F, E), F, E), _b(rng, E)),
        nn.DenseLayer(_w(rng, (E, H), E, H), _b(rng, H)),
        nn.DenseLayer(_w(rng, (H, 1), H, 1), _b(rng, 1)),
        name, hp,
    )
    return model, L


def random_input(rng, B, L):
    """Rows drawn from a Dirichlet: off the one-hot lattice, so no exact pooling ties."""
    return rng.dirichlet(np.ones(4), size=(B, L))


def kink_distance(model: ExpertModel, x) -> float:
    z, _ = nn.conv1d_forward(model.conv, x)
    a = np.maximum(z, 0)
    dist = np.abs(z).min()
    srt = np.sort(a, axis=-1)
    if srt.shape[-1] > 1:
        top, second = srt[..., -1], srt[..., -2]
        gaps = (top - second)[top > 0]
        if gaps.size:
            dist = min(dist, gaps.min())
    p = a.max(axis=-1)
    e = p @ model.embed.weights + model.embed.bias
    hz = e @ model.hidden.weights + model.hidden.bias
    return float(min(dist, np.abs(hz).min()))


def sample_expert_case(rng, B=2):
    while True:
        model, L = random_expert(rng)
        x = random_input(rng, B, L)
        if kink_distance(model, x) > KINK_MARGIN:
            return model, x


def sample_moe_case(rng, n_experts=3, B=2):
    while True:
        E, H = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        L = int(rng.integers(8, 21))
        experts = []
        for i in range(n_experts):
            F, M = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            m = ExpertModel(
                nn.ConvLayer(_w(rng, (F, M, 4), 4 * M, F * M), _b(rng, F)),
                nn.DenseLayer(_w(rng, (F, E), F, E), _b(rng, E)),
                nn.DenseLayer(_w(rng, (E, H), E, H), _b(rng, H)),
                nn.DenseLayer(_w(rng, (H, 1), H, 1), np.zeros(1)),
                f"e{i}", ExpertHyperparams(F, M, E, H),
            )
            experts.append(strip_head(m))
        moe = MoEModel(
            experts,
            nn.DenseLayer(_w(rng, (E * n_experts, n_experts), E * n_experts, n_experts), _b(rng, n_experts)),
            nn.DenseLayer(_w(rng, (H, 1), H, 1), _b(rng, 1)),
        )
        x = random_input(rng, B, L)
        if min(kink_distance(ex, x) for ex in experts) > KINK_MARGIN:
            return moe, x


def expert_errors(model: ExpertModel, x, rng) -> dict:
    """Max relative error per parameter (and 'input') for f = sum_b r_b o_b."""
    r = rng.normal(size=(x.shape[0], 1))

    def f():
        return float((model.forward(x)[0].logit * r).sum())

    _, cache = model.forward(x)
    grads, dx = model.backward(cache, d_logit=r, input_grad=True)
    errs = {"input": nn.finite_difference_check(f, x, dx, EPS)}
    for k, p in model.parameters().items():
        errs[k] = nn.finite_difference_check(f, p, grads[k], EPS)
    return errs


def moe_errors(model: MoEModel, x, rng) -> dict:
    r = rng.normal(size=(x.shape[0], 1))

    def f():
        return float((model.forward(x)[0].logit * r).sum())

    _, cache = model.forward(x)
    grads, dx, _ = model.backward(cache, r, input_grad=True)
    errs = {"input": nn.finite_difference_check(f, x, dx, EPS)}
    for k, p in model.parameters().items():
        errs[k] = nn.finite_difference_check(f, p, grads[k], EPS)
    return errs
