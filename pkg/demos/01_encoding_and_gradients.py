"""
One-hot sequences, convolution, and checking gradients by hand
===============================================================

A tour of the building blocks: how DNA becomes a 4-channel matrix, what a
circular shift does to it, and how the analytic backward pass of an expert
compares with central finite differences.
"""

import numpy as np

from tfbs_moe import ExpertHyperparams, circular_shift, encode_sequence, init_expert
from tfbs_moe import nn_core as nn

# channels are ordered A, C, G, T; N spreads its mass evenly
x = encode_sequence("GATAAN")
print(x.matrix)

# a shift by +1 moves every row one step right and wraps the last row around
print(circular_shift(encode_sequence("ACGT"), 1).to_text())   # TACG
print(circular_shift(encode_sequence("ACGT"), -1).to_text())  # CGTA

# a width-5 filter that spells GATAA fires hardest where the motif sits
kernel = encode_sequence("GATAA").matrix[None]
conv = nn.ConvLayer(kernel, np.zeros(1))
fmap, _ = nn.conv1d_forward(conv, encode_sequence("CCCGATAACCC").matrix)
print(fmap[0, 0])  # peak of 5.0 at offset 3

# %%
# A small random expert and its input gradient.
model = init_expert(ExpertHyperparams(num_filters=4, motif_width=5, embed_dim=6, hidden_dim=6), seed=0)
rng = np.random.default_rng(1)
xb = rng.dirichlet(np.ones(4), size=(1, 20))  # off-lattice rows keep max-pool ties away

out, cache = model.forward(xb)
_, dx = model.backward(cache, d_logit=np.ones((1, 1)), input_grad=True)


def logit():
    return float(model.forward(xb)[0].logit.sum())


err = nn.finite_difference_check(logit, xb, dx, eps=1e-4)
print(f"max relative error d logit / d x: {err:.2e}")

# the same check for every parameter tensor
grads, _ = model.backward(cache, d_logit=np.ones((1, 1)))
for name, p in model.parameters().items():
    print(f"  {name:<16} {nn.finite_difference_check(logit, p, grads[name]):.2e}")
