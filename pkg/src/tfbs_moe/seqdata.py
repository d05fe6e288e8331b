"""DNA sequence encoding, circular shifts, dataset files and synthetic corpora."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ALPHABET = "ACGT"
_CHANNEL = {c: i for i, c in enumerate(ALPHABET)}
_COMPLEMENT = str.maketrans("ACGT", "TGCA")


class SequenceError(ValueError):
    """Raised for illegal sequence text or malformed dataset files."""


@dataclass(frozen=True)
class OneHotSequence:
    """An L x 4 encoded sequence, channel order A, C, G, T."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] != 4 or m.shape[0] < 1:
            raise ValueError(f"expected an (L, 4) matrix, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def length(self) -> int:
        return self.matrix.shape[0]

    def __len__(self):
        return self.length

    def __eq__(self, other):
        if not isinstance(other, OneHotSequence):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def to_text(self) -> str:
        """Argmax decoding; uniform rows decode to N."""
        out = []
        for row in self.matrix:
            out.append("N" if np.all(row == row[0]) else ALPHABET[int(np.argmax(row))])
        return "".join(out)


def encode_sequence(text: str) -> OneHotSequence:
    """One-hot encode ``text``; N becomes the uniform row (0.25 each)."""
    if not text:
        raise SequenceError("empty sequence")
    m = np.zeros((len(text), 4))
    for i, ch in enumerate(text.upper()):
        if ch == "N":
            m[i] = 0.25
        elif ch in _CHANNEL:
            m[i, _CHANNEL[ch]] = 1.0
        else:
            raise SequenceError(f"illegal character {text[i]!r} at position {i}")
    return OneHotSequence(m)


def circular_shift(seq, n: int):
    """Rotate along the position axis: row j of the output is row (j - n) mod L.

    Positive ``n`` moves content toward higher indices, the tail wrapping
    round to the front. Works on OneHotSequence or on any array whose first
    axis is position (gradients, attribution maps).
    """
    if isinstance(seq, OneHotSequence):
        return OneHotSequence(np.roll(seq.matrix, int(n), axis=0))
    return np.roll(np.asarray(seq), int(n), axis=0)


def reverse_complement(text: str) -> str:
    return text.upper().translate(_COMPLEMENT)[::-1]


@dataclass(frozen=True)
class LabeledDataset:
    texts: tuple
    labels: np.ndarray
    onehot: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if len(labels) != len(self.texts) or len(labels) != len(self.onehot):
            raise ValueError("sequence and label counts differ")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        labels.setflags(write=False)
        x = np.asarray(self.onehot, dtype=np.float64)
        x.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "onehot", x)
        object.__setattr__(self, "texts", tuple(self.texts))

    @classmethod
    def from_texts(cls, texts, labels) -> "LabeledDataset":
        texts = [t.upper() for t in texts]
        if len({len(t) for t in texts}) > 1:
            raise SequenceError("mixed sequence lengths in one dataset")
        x = np.stack([encode_sequence(t).matrix for t in texts]) if texts else np.zeros((0, 0, 4))
        return cls(tuple(texts), np.asarray(labels), x)

    def __len__(self):
        return len(self.labels)

    @property
    def seq_len(self) -> int:
        return self.onehot.shape[1]

    @property
    def sequences(self) -> list:
        return [OneHotSequence(m) for m in self.onehot]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(tuple(self.texts[i] for i in idx), self.labels[idx], self.onehot[idx])

    def concat(self, other: "LabeledDataset") -> "LabeledDataset":
        if len(self) and len(other) and self.seq_len != other.seq_len:
            raise SequenceError("mixed sequence lengths in one dataset")
        return LabeledDataset(
            self.texts + other.texts,
            np.concatenate([self.labels, other.labels]),
            np.concatenate([self.onehot, other.onehot]),
        )

    def has_both_classes(self) -> bool:
        return 0 < int(self.labels.sum()) < len(self.labels)


def load_dataset(path) -> LabeledDataset:
    """Read ``SEQUENCE<TAB>LABEL`` lines; ``#`` lines and blank lines are skipped."""
    texts, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1].strip() not in ("0", "1"):
                raise SequenceError(f"{path}:{lineno}: expected SEQUENCE<TAB>LABEL with label 0 or 1")
            seq = parts[0].strip()
            try:
                encode_sequence(seq)
            except SequenceError as exc:
                raise SequenceError(f"{path}:{lineno}: {exc}") from None
            if texts and len(seq) != len(texts[0]):
                raise SequenceError(f"{path}:{lineno}: length {len(seq)} differs from {len(texts[0])}")
            texts.append(seq)
            labels.append(int(parts[1]))
    if not texts:
        raise SequenceError(f"{path}: no examples")
    return LabeledDataset.from_texts(texts, labels)


def save_dataset(data: LabeledDataset, path, header: str | None = None) -> None:
    lines = [f"# {header}"] if header else []
    lines += [f"{t}\t{y}" for t, y in zip(data.texts, data.labels)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SyntheticSpec:
    motif: str
    length: int
    n_positive: int
    n_negative: int
    mutation_rate: float = 0.0
    include_reverse: bool = False

    def __post_init__(self):
        motif = self.motif.upper()
        bad = [(i, c) for i, c in enumerate(motif) if c not in _CHANNEL]
        if bad:
            i, c = bad[0]
            raise SequenceError(f"illegal motif character {c!r} at position {i}")
        if not 0 < len(motif) < self.length:
            raise ValueError("motif length must be in (0, length)")
        if not 0.0 <= self.mutation_rate <= 0.5:
            raise ValueError("mutation_rate must lie in [0, 0.5]")
        if self.n_positive < 1 or self.n_negative < 1:
            raise ValueError("class counts must be positive")
        object.__setattr__(self, "motif", motif)

    @property
    def patterns(self) -> tuple:
        if self.include_reverse:
            rc = reverse_complement(self.motif)
            return (self.motif,) if rc == self.motif else (self.motif, rc)
        return (self.motif,)


def _random_text(rng, length: int) -> str:
    return "".join(ALPHABET[i] for i in rng.integers(0, 4, length))


def generate_synthetic_dataset(spec: SyntheticSpec, seed: int) -> LabeledDataset:
    """Motif-planted positives followed by motif-free negatives.

    A mutated motif position is substituted by one of the three other bases,
    so ``mutation_rate`` is the per-position probability of a real change.
    """
    rng = np.random.default_rng(seed)
    patterns = spec.patterns
    k = len(spec.motif)
    texts = []
    for _ in range(spec.n_positive):
        background = list(_random_text(rng, spec.length))
        site = list(patterns[int(rng.integers(len(patterns)))] if len(patterns) > 1 else patterns[0])
        mutate = rng.random(k) < spec.mutation_rate
        offsets = rng.integers(1, 4, k)
        for i in np.flatnonzero(mutate):
            site[i] = ALPHABET[(_CHANNEL[site[i]] + int(offsets[i])) % 4]
        start = int(rng.integers(0, spec.length - k + 1))
        background[start:start + k] = site
        texts.append("".join(background))
    for _ in range(spec.n_negative):
        while True:
            t = _random_text(rng, spec.length)
            if not any(p in t for p in patterns):
                break
        texts.append(t)
    labels = [1] * spec.n_positive + [0] * spec.n_negative
    return LabeledDataset.from_texts(texts, labels)


def split_dataset(data: LabeledDataset, sizes, seed: int) -> list:
    """Seeded shuffle, then consecutive slices of the given sizes."""
    if sum(sizes) > len(data):
        raise ValueError("split sizes exceed dataset size")
    order = np.random.default_rng(seed).permutation(len(data))
    out, start = [], 0
    for s in sizes:
        out.append(data.subset(order[start:start + s]))
        start += s
    return out


def bootstrap_indices(labels, seed: int, require_both_classes: bool = True, max_retries: int = 100) -> np.ndarray:
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise ValueError("cannot resample an empty dataset")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries + 1):
        idx = rng.integers(0, n, n)
        if not require_both_classes or 0 < labels[idx].sum() < n:
            return idx
    raise ValueError(f"no resample with both classes after {max_retries} retries")


def bootstrap_resample(data: LabeledDataset, seed: int, require_both_classes: bool = True) -> LabeledDataset:
    """Draw ``len(data)`` examples uniformly with replacement.

    Draws lacking one of the classes are redrawn from the same generator
    (bounded), unless ``require_both_classes`` is False.
    """
    return data.subset(bootstrap_indices(data.labels, seed, require_both_classes))
