"""N:1 mixture of frozen experts.

Every expert sees the whole batch. The gate reads the concatenated expert
embeddings, softmax weights mix the expert hidden vectors, and a dense
classifier maps the mixture to one logit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn_core as nn
from .expert import SCHEMA_VERSION, ModelStateError, load_expert, strip_head


@dataclass
class MoEOutputs:
    concat: np.ndarray  # (B, E*Ne)
    scores: np.ndarray  # g, (B, Ne)
    weights: np.ndarray  # alpha, (B, Ne)
    mixture: np.ndarray  # m, (B, H)
    logit: np.ndarray  # (B, 1)
    prob: np.ndarray  # (B, 1)


def concat_embeddings(embeddings) -> np.ndarray:
    embeddings = [np.asarray(e, dtype=np.float64) for e in embeddings]
    if not embeddings:
        raise ValueError("need at least one embedding")
    shapes = {e.shape for e in embeddings}
    if len(shapes) != 1 or embeddings[0].ndim != 2:
        raise ValueError(f"embedding shapes disagree: {sorted(shapes)}")
    return np.concatenate(embeddings, axis=1)


def gate(concat, gate_layer: nn.DenseLayer) -> np.ndarray:
    return nn.softmax(nn.dense_forward(gate_layer, concat)[0], axis=1)


def mix(alpha, hiddens) -> np.ndarray:
    """m[b] = sum_i alpha[b, i] * h_i[b]."""
    alpha = np.asarray(alpha, dtype=np.float64)
    hiddens = [np.asarray(h, dtype=np.float64) for h in hiddens]
    if alpha.ndim != 2 or alpha.shape[1] != len(hiddens):
        raise ValueError(f"alpha shape {alpha.shape} does not match {len(hiddens)} experts")
    if any(h.shape != hiddens[0].shape or h.shape[0] != alpha.shape[0] for h in hiddens):
        raise ValueError("hidden shapes disagree with each other or with the batch")
    m = alpha[:, :1] * hiddens[0]
    for i in range(1, len(hiddens)):
        m = m + alpha[:, i:i + 1] * hiddens[i]
    return m


@dataclass
class MoEModel:
    experts: list
    gate: nn.DenseLayer
    classifier: nn.DenseLayer
    name: str = "moe"

    def __post_init__(self):
        if not self.experts:
            raise ValueError("need at least one expert")
        for ex in self.experts:
            if not ex.stripped or not ex.frozen:
                raise ModelStateError(f"expert {ex.name!r} must be stripped and frozen")
        E, H = self.experts[0].embed_dim, self.experts[0].hidden_dim
        if any(ex.embed_dim != E or ex.hidden_dim != H for ex in self.experts):
            raise ValueError("all experts must share embedding and hidden sizes")
        if self.gate.in_dim != E * len(self.experts) or self.gate.out_dim != len(self.experts):
            raise ValueError("gate must map E*Ne -> Ne")
        if self.classifier.in_dim != H or self.classifier.out_dim != 1:
            raise ValueError("classifier must map H -> 1")

    @property
    def num_experts(self) -> int:
        return len(self.experts)

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable parameters only (gate and classifier)."""
        return {
            "gate.weights": self.gate.weights, "gate.bias": self.gate.bias,
            "classifier.weights": self.classifier.weights, "classifier.bias": self.classifier.bias,
        }

    def head_forward(self, embeddings, hiddens):
        """Gate/mix/classify given precomputed expert features."""
        concat = concat_embeddings(embeddings)
        g, c_gate = nn.dense_forward(self.gate, concat)
        alpha = nn.softmax(g, axis=1)
        m = mix(alpha, hiddens)
        logit, c_cls = nn.dense_forward(self.classifier, m)
        out = MoEOutputs(concat, g, alpha, m, logit, nn.sigmoid(logit))
        return out, (c_gate, c_cls, alpha, list(hiddens))

    def head_backward(self, d_logit, cache):
        """Returns (trainable grads, d_embeddings list, d_hiddens list)."""
        c_gate, c_cls, alpha, hiddens = cache
        d_logit = np.asarray(d_logit, dtype=np.float64).reshape(-1, 1)
        dm, g_cls = nn.dense_backward(self.classifier, d_logit, c_cls)
        d_alpha = np.stack([(dm * h).sum(axis=1) for h in hiddens], axis=1)
        d_hiddens = [alpha[:, i:i + 1] * dm for i in range(len(hiddens))]
        dg = nn.softmax_backward(d_alpha, alpha)
        dconcat, g_gate = nn.dense_backward(self.gate, dg, c_gate)
        E = self.experts[0].embed_dim
        d_embeddings = [dconcat[:, i * E:(i + 1) * E] for i in range(len(hiddens))]
        grads = {f"gate.{k}": v for k, v in g_gate.items()}
        grads.update({f"classifier.{k}": v for k, v in g_cls.items()})
        return grads, d_embeddings, d_hiddens

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        ex_out, ex_cache = [], []
        for ex in self.experts:
            o, c = ex.forward(x, need_logit=False)
            ex_out.append(o)
            ex_cache.append(c)
        out, head_cache = self.head_forward([o.embedding for o in ex_out], [o.hidden for o in ex_out])
        return out, (ex_cache, head_cache)

    def backward(self, cache, d_logit, input_grad: bool = True):
        """Gradients of the logit for the trainable parameters and the shared input.

        The input gradient is the sum of each expert's chain contribution.
        Also returns the per-expert contributions for inspection.
        """
        ex_cache, head_cache = cache
        grads, d_emb, d_hid = self.head_backward(d_logit, head_cache)
        dx, parts = None, []
        if input_grad:
            for ex, c, de, dh in zip(self.experts, ex_cache, d_emb, d_hid):
                _, dxi = ex.backward(c, d_embedding=de, d_hidden=dh, input_grad=True)
                parts.append(dxi)
                dx = dxi if dx is None else dx + dxi
        return grads, dx, parts

    def features(self, x, batch_size: int = 512):
        """Per-expert (embedding, hidden) lists for a whole array."""
        feats = [ex.features(x, batch_size) for ex in self.experts]
        return [f[0] for f in feats], [f[1] for f in feats]

    def predict_proba(self, x, batch_size: int = 512) -> np.ndarray:
        es, hs = self.features(x, batch_size)
        return self.head_forward(es, hs)[0].prob[:, 0]

    def to_dict(self, expert_refs) -> dict:
        """``expert_refs``: one {"path", "sha256"} mapping per expert."""
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "moe",
            "name": self.name,
            "experts": list(expert_refs),
            "gate": _layer_doc(self.gate),
            "classifier": _layer_doc(self.classifier),
        }


def _layer_doc(layer) -> dict:
    return {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in vars(layer).items()}


def init_moe(experts, seed: int, name: str = "moe") -> MoEModel:
    rng = np.random.default_rng(seed)
    E, H, n = experts[0].embed_dim, experts[0].hidden_dim, len(experts)
    return MoEModel(list(experts), nn.DenseLayer.init(E * n, n, rng), nn.DenseLayer.init(H, 1, rng), name)


def moe_forward(model: MoEModel, batch) -> MoEOutputs:
    return model.forward(batch)[0]


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_moe(model: MoEModel, path, expert_paths) -> None:
    """Write the MoE document; expert files are referenced by path relative to ``path`` plus hash."""
    base = Path(path).resolve().parent
    refs = []
    for p in expert_paths:
        p = Path(p).resolve()
        try:
            rel = p.relative_to(base).as_posix()
        except ValueError:
            rel = p.as_posix()
        refs.append({"path": rel, "sha256": file_sha256(p)})
    Path(path).write_text(json.dumps(model.to_dict(refs), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_moe(path) -> MoEModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("kind") != "moe" or doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: not a supported MoE document")
    base = Path(path).resolve().parent
    experts = []
    for ref in doc["experts"]:
        p = base / ref["path"]
        if file_sha256(p) != ref["sha256"]:
            raise ValueError(f"expert file {p} does not match its recorded hash")
        ex = load_expert(p)
        experts.append(ex if ex.stripped else strip_head(ex))

    def arr(spec):
        return np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])

    g, c = doc["gate"], doc["classifier"]
    return MoEModel(
        experts,
        nn.DenseLayer(arr(g["weights"]), arr(g["bias"])),
        nn.DenseLayer(arr(c["weights"]), arr(c["bias"])),
        doc["name"],
    )
