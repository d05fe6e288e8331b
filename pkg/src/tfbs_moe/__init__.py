"""Mixture-of-experts binding-site classifier with ShiftSmooth attribution, in numpy."""

__version__ = "0.1.0"

from .seqdata import (
    LabeledDataset,
    OneHotSequence,
    SyntheticSpec,
    bootstrap_resample,
    circular_shift,
    encode_sequence,
    generate_synthetic_dataset,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .expert import ExpertHyperparams, ExpertModel, init_expert, load_expert, save_expert, strip_head
from .moe import MoEModel, init_moe, load_moe, save_moe
from .trainer import SearchSpace, TrainConfig, hyperparameter_search, train_expert, train_moe
from .stats import bootstrap_auc, one_way_anova, roc_auc
from .attribution import saliency, shift_smooth, vanilla_gradient

__all__ = [
    "LabeledDataset", "OneHotSequence", "SyntheticSpec", "bootstrap_resample", "circular_shift",
    "encode_sequence", "generate_synthetic_dataset", "load_dataset", "save_dataset", "split_dataset",
    "ExpertHyperparams", "ExpertModel", "init_expert", "load_expert", "save_expert", "strip_head",
    "MoEModel", "init_moe", "load_moe", "save_moe",
    "SearchSpace", "TrainConfig", "hyperparameter_search", "train_expert", "train_moe",
    "bootstrap_auc", "one_way_anova", "roc_auc",
    "saliency", "shift_smooth", "vanilla_gradient",
]
