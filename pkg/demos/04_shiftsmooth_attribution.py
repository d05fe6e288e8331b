"""
Vanilla gradients versus ShiftSmooth
====================================

A vanilla gradient map depends on exactly where the motif lands relative to
the pooling window. ShiftSmooth averages the gradients of circularly shifted
copies of the input (each shifted back into place), which steadies the map
when the window moves by a base or two.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
from _corpus import corpora, experts  # noqa: E402

from tfbs_moe import circular_shift, saliency, shift_smooth, vanilla_gradient  # noqa: E402
from tfbs_moe.attribution import export_attribution, shift_robustness  # noqa: E402

splits = corpora()
print("training experts")
expert = experts(splits)[0]
test = splits[0][2]
positives = test.onehot[test.labels == 1]
text = next(t for t, y in zip(test.texts, test.labels) if y)
x = positives[0]

van = vanilla_gradient(expert, x)
smooth = shift_smooth(expert, x, 2)
sal = saliency(expert, x)
print(f"class score (logit) {van.class_score:.3f}")

# the five strongest positions under each method
for amap in (van, smooth, sal):
    top = np.argsort(-np.abs(amap.nucleotide_scores))[:5]
    print(f"  {amap.method:<12} top positions {sorted(top.tolist())}")

# %%
# Shift the input by one base and realign: how much does each map move?
moved = circular_shift(vanilla_gradient(expert, circular_shift(x, 1)).nucleotide_scores, -1)
print(f"one-sequence vanilla drift {np.abs(moved - van.nucleotide_scores).mean():.5f}")
van_r = shift_robustness(expert, positives[:50], "vanilla")
smooth_r = shift_robustness(expert, positives[:50], "shiftsmooth", 2)
print(f"mean drift over 50 positives: vanilla {van_r:.5f}, shiftsmooth {smooth_r:.5f}")

# N = 0 is the vanilla map, bit for bit
assert shift_smooth(expert, x, 0).channel_scores.tobytes() == van.channel_scores.tobytes()

out = Path("demo_output")
out.mkdir(exist_ok=True)
for amap in (van, smooth):
    print("wrote", export_attribution(amap, text, out / f"{amap.method}_N{amap.shift_radius}.svg", "svg"))
