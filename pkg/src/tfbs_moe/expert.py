"""A single DeepBIND-style expert.

conv -> relu -> global max pool -> embedding dense (e) -> hidden dense + relu (h)
-> head dense (logit o) -> sigmoid.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn_core as nn

SCHEMA_VERSION = 1
DEFAULT_EMBED_DIM = 32
DEFAULT_HIDDEN_DIM = 32


class ModelStateError(RuntimeError):
    """Operation not allowed in the model's current (stripped/frozen) state."""


@dataclass(frozen=True)
class ExpertHyperparams:
    num_filters: int = 16
    motif_width: int = 12
    embed_dim: int = DEFAULT_EMBED_DIM
    hidden_dim: int = DEFAULT_HIDDEN_DIM
    learning_rate: float = 0.01
    momentum: float = 0.98

    def __post_init__(self):
        for name in ("num_filters", "motif_width", "embed_dim", "hidden_dim"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    def non_default_dims(self) -> list[str]:
        flags = []
        if self.embed_dim != DEFAULT_EMBED_DIM:
            flags.append(f"embed_dim={self.embed_dim} (default {DEFAULT_EMBED_DIM})")
        if self.hidden_dim != DEFAULT_HIDDEN_DIM:
            flags.append(f"hidden_dim={self.hidden_dim} (default {DEFAULT_HIDDEN_DIM})")
        return flags


@dataclass
class ExpertOutputs:
    embedding: np.ndarray  # (B, E)
    hidden: np.ndarray  # (B, H)
    logit: np.ndarray | None  # (B, 1)
    prob: np.ndarray | None  # (B, 1)


@dataclass
class ExpertModel:
    conv: nn.ConvLayer
    embed: nn.DenseLayer
    hidden: nn.DenseLayer
    head: nn.DenseLayer | None
    name: str = "expert"
    hyperparams: ExpertHyperparams = field(default_factory=ExpertHyperparams)
    frozen: bool = False

    def __post_init__(self):
        if self.embed.in_dim != self.conv.num_filters:
            raise ValueError("embedding input must match number of filters")
        if self.hidden.in_dim != self.embed.out_dim:
            raise ValueError("hidden input must match embedding size")
        if self.head is not None and (self.head.in_dim != self.hidden.out_dim or self.head.out_dim != 1):
            raise ValueError("head must map hidden -> 1")
        if self.frozen:
            self._lock()

    @property
    def embed_dim(self) -> int:
        return self.embed.out_dim

    @property
    def hidden_dim(self) -> int:
        return self.hidden.out_dim

    @property
    def stripped(self) -> bool:
        return self.head is None

    def _layers(self):
        layers = {"conv": self.conv, "embed": self.embed, "hidden": self.hidden}
        if self.head is not None:
            layers["head"] = self.head
        return layers

    def parameters(self) -> dict[str, np.ndarray]:
        """Name -> array views; in-place edits update the model."""
        params = {}
        for lname, layer in self._layers().items():
            for pname, value in vars(layer).items():
                params[f"{lname}.{pname}"] = value
        return params

    def _lock(self):
        for arr in self.parameters().values():
            arr.setflags(write=False)

    def forward(self, x, need_logit: bool = True):
        """Run the batch (B, L, 4); returns (ExpertOutputs, cache)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if need_logit and self.head is None:
            raise ModelStateError(f"expert {self.name!r} has no head; logit unavailable")
        z, c_conv = nn.conv1d_forward(self.conv, x)
        a, m_conv = nn.relu_forward(z)
        p, c_pool = nn.global_max_pool_forward(a)
        e, c_embed = nn.dense_forward(self.embed, p)
        hz, c_hidden = nn.dense_forward(self.hidden, e)
        h, m_hidden = nn.relu_forward(hz)
        logit = prob = c_head = None
        if need_logit:
            logit, c_head = nn.dense_forward(self.head, h)
            prob = nn.sigmoid(logit)
        cache = (c_conv, m_conv, c_pool, c_embed, c_hidden, m_hidden, c_head)
        return ExpertOutputs(e, h, logit, prob), cache

    def backward(self, cache, d_logit=None, d_embedding=None, d_hidden=None, input_grad: bool = False):
        """Backpropagate upstream gradients at any of the logit / h / e taps.

        Returns ``(grads, dx)`` with grads keyed like :meth:`parameters`
        (head entries only when ``d_logit`` is given) and ``dx`` the
        gradient w.r.t. the (B, L, 4) input, or None.
        """
        c_conv, m_conv, c_pool, c_embed, c_hidden, m_hidden, c_head = cache
        grads = {}
        dh = 0.0 if d_hidden is None else np.asarray(d_hidden, dtype=np.float64)
        if d_logit is not None:
            if c_head is None:
                raise ModelStateError("forward ran without the head")
            dh_head, g = nn.dense_backward(self.head, np.asarray(d_logit, dtype=np.float64).reshape(-1, 1), c_head)
            grads.update({f"head.{k}": v for k, v in g.items()})
            dh = dh + dh_head
        dhz = nn.relu_backward(dh, m_hidden) if np.ndim(dh) else np.zeros(m_hidden.shape)
        de, g = nn.dense_backward(self.hidden, dhz, c_hidden)
        grads.update({f"hidden.{k}": v for k, v in g.items()})
        if d_embedding is not None:
            de = de + d_embedding
        dp, g = nn.dense_backward(self.embed, de, c_embed)
        grads.update({f"embed.{k}": v for k, v in g.items()})
        da = nn.global_max_pool_backward(dp, c_pool)
        dz = nn.relu_backward(da, m_conv)
        dx, g = nn.conv1d_backward(self.conv, dz, c_conv, input_grad=input_grad)
        grads.update({f"conv.{k}": v for k, v in g.items()})
        return grads, dx

    def predict_proba(self, x, batch_size: int = 512) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = [self.forward(x[i:i + batch_size])[0].prob[:, 0] for i in range(0, len(x), batch_size)]
        return np.concatenate(out)

    def features(self, x, batch_size: int = 512):
        """(embedding, hidden) for a whole array of sequences."""
        x = np.asarray(x, dtype=np.float64)
        es, hs = [], []
        for i in range(0, len(x), batch_size):
            o, _ = self.forward(x[i:i + batch_size], need_logit=False)
            es.append(o.embedding)
            hs.append(o.hidden)
        return np.concatenate(es), np.concatenate(hs)

    def copy(self) -> "ExpertModel":
        def d(layer):
            return type(layer)(*(np.array(v) for v in vars(layer).values()))

        return ExpertModel(
            d(self.conv), d(self.embed), d(self.hidden),
            None if self.head is None else d(self.head),
            self.name, self.hyperparams, self.frozen,
        )

    def to_dict(self) -> dict:
        layers = {}
        for lname, layer in self._layers().items():
            layers[lname] = {
                pname: {"shape": list(v.shape), "data": v.reshape(-1).tolist()}
                for pname, v in vars(layer).items()
            }
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "expert",
            "name": self.name,
            "hyperparams": asdict(self.hyperparams),
            "frozen": self.frozen,
            "stripped": self.stripped,
            "layers": layers,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExpertModel":
        if doc.get("kind") != "expert":
            raise ValueError("not an expert model document")
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {doc.get('schema_version')}")

        def arr(spec):
            return np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])

        L = doc["layers"]
        head = None
        if "head" in L:
            head = nn.DenseLayer(arr(L["head"]["weights"]), arr(L["head"]["bias"]))
        return cls(
            nn.ConvLayer(arr(L["conv"]["kernels"]), arr(L["conv"]["bias"])),
            nn.DenseLayer(arr(L["embed"]["weights"]), arr(L["embed"]["bias"])),
            nn.DenseLayer(arr(L["hidden"]["weights"]), arr(L["hidden"]["bias"])),
            head,
            doc["name"],
            ExpertHyperparams(**doc["hyperparams"]),
            doc["frozen"],
        )


def init_expert(hp: ExpertHyperparams, seed: int, name: str = "expert") -> ExpertModel:
    """Glorot-uniform weights and zero biases from ``seed``."""
    rng = np.random.default_rng(seed)
    conv = nn.ConvLayer.init(hp.num_filters, hp.motif_width, rng)
    embed = nn.DenseLayer.init(hp.num_filters, hp.embed_dim, rng)
    hidden = nn.DenseLayer.init(hp.embed_dim, hp.hidden_dim, rng)
    head = nn.DenseLayer.init(hp.hidden_dim, 1, rng)
    return ExpertModel(conv, embed, hidden, head, name, hp)


def strip_head(model: ExpertModel) -> ExpertModel:
    """Feature-extractor copy: head dropped, everything else frozen."""
    if model.stripped:
        raise ModelStateError(f"expert {model.name!r} is already stripped")
    m = model.copy()
    m.head = None
    m.frozen = True
    m._lock()
    return m


def expert_forward(model: ExpertModel, batch) -> ExpertOutputs:
    return model.forward(batch, need_logit=not model.stripped)[0]


def save_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def save_expert(model: ExpertModel, path) -> None:
    save_json(model.to_dict(), path)


def load_expert(path) -> ExpertModel:
    return ExpertModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
