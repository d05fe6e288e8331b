"""Shared setup for the demos: three planted-motif corpora and their trained experts."""

from tfbs_moe import ExpertHyperparams, SyntheticSpec, TrainConfig, generate_synthetic_dataset, split_dataset, train_expert

MOTIFS = ("CAGATAAGCGTC", "TGACTCATGCGA", "CCGGAAGTGTAC")


def corpora(length=100, sizes=(2000, 400, 400), mutation_rate=0.1):
    """One (train, val, test) triple per motif; seeds fixed so every demo sees the same data."""
    out = []
    for i, motif in enumerate(MOTIFS):
        half = sum(sizes) // 2
        data = generate_synthetic_dataset(SyntheticSpec(motif, length, half, half, mutation_rate), 100 + i)
        out.append(split_dataset(data, list(sizes), 200 + i))
    return out


def experts(splits):
    models = []
    for i, motif in enumerate(MOTIFS):
        m, hist = train_expert(splits[i][0], splits[i][1], ExpertHyperparams(), TrainConfig(seed=10 + i), motif)
        print(f"  {motif}: {hist.epochs} epochs, best val AUC {hist.best_val_auc:.4f}")
        models.append(m)
    return models
