"""Input-gradient attribution maps: vanilla gradient, saliency and ShiftSmooth."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .expert import ExpertModel
from .moe import MoEModel
from .seqdata import OneHotSequence, circular_shift

METHODS = ("vanilla", "saliency", "shiftsmooth")
DEFAULT_SHIFT_RADIUS = 2


@dataclass(frozen=True)
class AttributionMap:
    channel_scores: np.ndarray  # (L, 4)
    nucleotide_scores: np.ndarray  # (L,)
    method: str
    shift_radius: int
    model_id: str
    class_score: float


def _as_matrix(seq) -> np.ndarray:
    if isinstance(seq, OneHotSequence):
        return seq.matrix
    m = np.asarray(seq, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != 4:
        raise ValueError(f"expected an (L, 4) sequence, got {m.shape}")
    return m


def _logit_and_grad(model, x: np.ndarray):
    xb = x[None]
    if isinstance(model, MoEModel):
        out, cache = model.forward(xb)
        _, dx, _ = model.backward(cache, np.ones((1, 1)), input_grad=True)
    elif isinstance(model, ExpertModel):
        out, cache = model.forward(xb)
        _, dx = model.backward(cache, d_logit=np.ones((1, 1)), input_grad=True)
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    return float(out.logit[0, 0]), dx[0]


def class_score(model, seq) -> float:
    """The pre-sigmoid logit for the binding class."""
    return float(model.forward(_as_matrix(seq)[None])[0].logit[0, 0])


def input_gradient(model, seq) -> np.ndarray:
    """d logit / d input, (L, 4). For a mixture this flows through every expert."""
    return _logit_and_grad(model, _as_matrix(seq))[1]


def collapse_to_nucleotide(channel_scores, seq) -> np.ndarray:
    """Per-position score: the active channel's value (row dot product, so N rows average)."""
    return (np.asarray(channel_scores, dtype=np.float64) * _as_matrix(seq)).sum(axis=1)


def _make(model, seq, scores, method, radius, s_c):
    return AttributionMap(scores, collapse_to_nucleotide(scores, seq), method, radius,
                          getattr(model, "name", type(model).__name__), s_c)


def vanilla_gradient(model, seq) -> AttributionMap:
    x = _as_matrix(seq)
    s_c, g = _logit_and_grad(model, x)
    return _make(model, x, g, "vanilla", 0, s_c)


def saliency(model, seq) -> AttributionMap:
    x = _as_matrix(seq)
    s_c, g = _logit_and_grad(model, x)
    return _make(model, x, np.abs(g), "saliency", 0, s_c)


def shifted_gradients(model, seq, radius: int) -> list:
    """Gradients of each circular shift n = -radius..radius, each rotated back by -n."""
    x = _as_matrix(seq)
    out = []
    for n in range(-radius, radius + 1):
        g = input_gradient(model, circular_shift(x, n))
        out.append(circular_shift(g, -n))
    return out


def shift_smooth(model, seq, radius: int = DEFAULT_SHIFT_RADIUS) -> AttributionMap:
    """Mean of the re-aligned input gradients over shifts -radius..radius."""
    if radius < 0:
        raise ValueError("shift radius must be >= 0")
    x = _as_matrix(seq)
    grads = shifted_gradients(model, x, radius)
    acc = grads[0]
    for g in grads[1:]:
        acc = acc + g
    return _make(model, x, acc / (2 * radius + 1), "shiftsmooth", radius, class_score(model, x))


def attribute(model, seq, method: str = "shiftsmooth", radius: int = DEFAULT_SHIFT_RADIUS) -> AttributionMap:
    if method == "vanilla":
        return vanilla_gradient(model, seq)
    if method == "saliency":
        return saliency(model, seq)
    if method == "shiftsmooth":
        return shift_smooth(model, seq, radius)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def shift_robustness(model, seqs, method: str = "vanilla", radius: int = DEFAULT_SHIFT_RADIUS, shifts=(-1, 1)) -> float:
    """Mean |track(x) - realigned track(shift(x, s))| over sequences, shifts and positions."""
    diffs = []
    for seq in seqs:
        x = _as_matrix(seq)
        base = attribute(model, x, method, radius).nucleotide_scores
        for s in shifts:
            moved = attribute(model, circular_shift(x, s), method, radius).nucleotide_scores
            diffs.append(np.abs(base - circular_shift(moved, -s)).mean())
    return float(np.mean(diffs))


def attribution_filename(amap: AttributionMap, fmt: str) -> str:
    return f"{amap.model_id}_{amap.method}_N{amap.shift_radius}.{fmt}"


def attribution_tsv(amap: AttributionMap, seq_text: str) -> str:
    if len(seq_text) != len(amap.nucleotide_scores):
        raise ValueError("sequence text and attribution length differ")
    rows = ["position\tnucleotide\tscore\tmethod\tN"]
    for i, (ch, s) in enumerate(zip(seq_text, amap.nucleotide_scores.tolist())):
        rows.append(f"{i}\t{ch}\t{s!r}\t{amap.method}\t{amap.shift_radius}")
    return "\n".join(rows) + "\n"


def attribution_svg(amap: AttributionMap, seq_text: str, bar_width: int = 12, height: int = 200) -> str:
    """Bar chart of the nucleotide track; negative bars hang below the axis."""
    scores = amap.nucleotide_scores
    L = len(scores)
    peak = float(np.max(np.abs(scores))) or 1.0
    pad, label_h = 10, 16
    half = (height - 2 * pad - label_h) / 2
    axis_y = pad + half
    width = 2 * pad + L * bar_width
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{escape(amap.model_id)} {amap.method} N={amap.shift_radius}</title>",
        f'<line x1="{pad}" y1="{axis_y:.3f}" x2="{width - pad}" y2="{axis_y:.3f}" stroke="black"/>',
    ]
    for i, s in enumerate(scores.tolist()):
        h = abs(s) / peak * half
        y = axis_y - h if s >= 0 else axis_y
        colour = "#2b6cb0" if s >= 0 else "#c53030"
        x = pad + i * bar_width
        parts.append(f'<rect class="bar" x="{x}" y="{y:.3f}" width="{bar_width - 1}" height="{h:.3f}" fill="{colour}"/>')
        parts.append(f'<text x="{x + bar_width / 2:.1f}" y="{height - pad / 2:.1f}" font-size="10" '
                     f'text-anchor="middle">{escape(seq_text[i])}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_attribution(amap: AttributionMap, seq_text: str, path, fmt: str = "tsv") -> Path:
    if fmt == "tsv":
        text = attribution_tsv(amap, seq_text)
    elif fmt == "svg":
        text = attribution_svg(amap, seq_text)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path
