"""
Training one expert per motif
=============================

Each expert is a small CNN trained on its own planted-motif corpus with
Nesterov SGD and early stopping on validation AUC. Cross-scoring every expert
on every test set shows the specialisation: near-perfect on its own motif,
close to chance on the others.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
from _corpus import MOTIFS, corpora, experts  # noqa: E402

from tfbs_moe import encode_sequence  # noqa: E402
from tfbs_moe.stats import auc_score  # noqa: E402

splits = corpora()
print("positives contain their motif (10% per-base substitution):")
train = splits[0][0]
print("  ", next(t for t, y in zip(train.texts, train.labels) if y)[:60], "...")

print("training experts")
models = experts(splits)

table = np.array([[auc_score(m.predict_proba(s[2].onehot), s[2].labels) for s in splits] for m in models])
print("\ntest AUC (rows: expert, columns: test corpus)")
print(" " * 14 + "".join(f"{m[:8]:>10}" for m in MOTIFS))
for motif, row in zip(MOTIFS, table):
    print(f"{motif:<14}" + "".join(f"{a:>10.4f}" for a in row))

# %%
# Planting the motif is what the expert keys on: destroying it in a positive
# sequence collapses the prediction.
expert, test = models[0], splits[0][2]
core = MOTIFS[0][2:7]  # GATAA
seq = next(t for t, y in zip(test.texts, test.labels) if y and core in t)
hit = seq.find(core)
broken = seq[:hit] + "CCCCC" + seq[hit + 5:]
p = expert.predict_proba(np.stack([encode_sequence(seq).matrix, encode_sequence(broken).matrix]))
print(f"\nwith core {p[0]:.3f}, core replaced {p[1]:.3f}")
