"""
The whole pipeline through the command line
===========================================

Runs every subcommand of ``tfbs-moe`` in a scratch directory, then replays
one run from its manifest to show the artifacts come back byte for byte.
The same steps work from a shell, e.g. ``tfbs-moe gen-data --motif GATAA --seed 7``.
"""

import hashlib
import tempfile
from pathlib import Path

from tfbs_moe.cli import main

work = Path(tempfile.mkdtemp(prefix="tfbs_moe_demo_"))
print("working in", work)


def run(*argv):
    argv = [str(a) for a in argv]
    print("\n$ tfbs-moe", " ".join(argv))
    code = main(argv)
    assert code == 0, code


motifs = {"a": "CAGATAAGCGTC", "b": "TGACTCATGCGA"}
for prefix, motif in motifs.items():
    run("gen-data", "--motif", motif, "--n", 1200, "--len", 60, "--out-dir", work / "data", "--prefix", prefix,
        "--seed", 1 if prefix == "a" else 2)
for i, prefix in enumerate(motifs):
    run("train-expert", "--train", work / f"data/{prefix}_train.tsv", "--val", work / f"data/{prefix}_val.tsv",
        "--out", work / f"models/{prefix}.json", "--seed", i)

# the gate sees both corpora; here the union is written out first
union = work / "data/union_train.tsv"
union_val = work / "data/union_val.tsv"
for split, dest in (("train", union), ("val", union_val)):
    rows = [ln for p in motifs for ln in (work / f"data/{p}_{split}.tsv").read_text().splitlines()
            if not ln.startswith("#")]
    dest.write_text("\n".join(rows) + "\n")

run("train-moe", "--experts", work / "models/a.json", work / "models/b.json", "--train", union, "--val", union_val,
    "--out", work / "models/moe.json", "--seed", 0)
run("evaluate", "--models", work / "models/a.json", work / "models/b.json", work / "models/moe.json",
    "--test", work / "data/a_test.tsv", "--trials", 30, "--out", work / "report.json", "--seed", 0)
run("compare", "--report", work / "report.json", "--out", work / "anova.json")
run("explain", "--model", work / "models/a.json", "--sequence", "ACGT" * 5 + "CAGATAAGCGTC" + "TTGCA" * 4,
    "--method", "shiftsmooth", "--N", 2, "--out-dir", work / "maps")


# %%
# Replay: the manifest stores the resolved configuration, so feeding it back
# reproduces the trained model exactly.
def digest(p):
    return hashlib.sha256(Path(p).read_bytes()).hexdigest()[:16]


before = digest(work / "models/a.json")
run("train-expert", "--config", work / "models/a_manifest.json")
print(f"\nmodel hash before {before}, after replay {digest(work / 'models/a.json')}")
