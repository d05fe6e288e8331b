"""
Gating frozen experts, then testing the difference
==================================================

The experts lose their prediction heads and are frozen. A softmax gate reads
their embeddings and mixes their hidden vectors; only the gate and a final
classifier are trained, on the union of the three corpora. A paired bootstrap
over one test set then feeds a one-way ANOVA.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
from _corpus import MOTIFS, corpora, experts  # noqa: E402

from tfbs_moe import TrainConfig, bootstrap_auc, one_way_anova, strip_head, train_moe  # noqa: E402
from tfbs_moe.stats import auc_score  # noqa: E402

splits = corpora()
print("training experts")
models = experts(splits)
frozen = [strip_head(m) for m in models]

union_train = splits[0][0].concat(splits[1][0]).concat(splits[2][0])
union_val = splits[0][1].concat(splits[1][1]).concat(splits[2][1])
moe, hist = train_moe(frozen, union_train, union_val, TrainConfig.for_moe(seed=0))
print(f"mixture: {hist.epochs} epochs, best val AUC {hist.best_val_auc:.4f}")

for motif, (_, _, test) in zip(MOTIFS, splits):
    out = moe.forward(test.onehot)[0]
    pos = out.weights[test.labels == 1].mean(axis=0)
    print(f"  {motif}: AUC {auc_score(out.prob[:, 0], test.labels):.4f}   mean gate on positives "
          + " ".join(f"{a:.2f}" for a in pos))

# %%
# Paired bootstrap: each of 30 resamples of the first test set is scored by all
# four models, so the groups differ only by model.
test = splits[0][2]
results = bootstrap_auc([*models, moe], test, trials=30, seed=0, names=[*MOTIFS, "moe"])
anova = one_way_anova([r.aucs for r in results])
for r, g in zip(results, anova.groups):
    print(f"  {r.model:<14} mean {g.mean:.4f}  95% CI [{g.ci_low:.4f}, {g.ci_high:.4f}]")
print(f"F({anova.df_between}, {anova.df_within}) = {anova.f_stat:.1f}, p = {anova.p_value:.2e}")

# the hand-checkable fixture
print("fixture F:", one_way_anova([[1, 2, 3], [2, 3, 4]]).f_stat)
np.testing.assert_equal(len(results[0].aucs), 30)
