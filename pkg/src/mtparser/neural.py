"""Word/character/treebank embeddings, BiLSTM encoder and MLP scorer.

A token's input vector is its word embedding, the final states of a
forward and a backward character LSTM, and, for treebank-embedding models,
the row of the treebank table for the sentence's treebank.  Two stacked
BiLSTMs turn these into contextual vectors; the features of a parser
configuration are the vectors of the top stack items and the buffer front.
"""
from __future__ import annotations

import dataclasses
import json
import os
import struct
import tempfile
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .transition import Configuration, n_outputs

UNK = "<unk>"
MAGIC = b"HPM1"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


class RegistryMismatch(UserWarning):
    pass


@dataclass
class Hyperparameters:
    dim_word: int = 100
    dim_char: int = 24
    hidden_char: int = 50
    hidden_word: int = 125
    layers: int = 2
    mlp_hidden: int = 100
    dim_tb: int = 12
    use_tb: bool = False
    n_stack: int = 3
    n_buffer: int = 1
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    margin: float = 1.0
    word_dropout: float = 0.25
    explore_prob: float = 0.1
    explore_from: int = 2
    init_scale: float = 0.1

    @property
    def dim_input(self) -> int:
        return self.dim_word + 2 * self.hidden_char + (self.dim_tb if self.use_tb else 0)

    @property
    def dim_feature(self) -> int:
        return (self.n_stack + self.n_buffer) * 2 * self.hidden_word

    def replace(self, **changes) -> "Hyperparameters":
        return dataclasses.replace(self, **changes)


@dataclass
class Vocabularies:
    words: list[str]
    word_freq: list[int]
    chars: list[str]
    labels: list[str]
    _word_index: dict = field(default=None, repr=False, compare=False)
    _char_index: dict = field(default=None, repr=False, compare=False)
    _label_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.words[0] != UNK or self.chars[0] != UNK:
            raise ValueError("id 0 must be the unknown entry")
        self._word_index = {w: i for i, w in enumerate(self.words)}
        self._char_index = {c: i for i, c in enumerate(self.chars)}
        self._label_index = {l: i for i, l in enumerate(self.labels)}

    @classmethod
    def build(cls, sentences: Iterable) -> "Vocabularies":
        words: Counter = Counter()
        chars: set[str] = set()
        labels: set[str] = set()
        for s in sentences:
            for tok in s.tokens:
                words[tok.form] += 1
                chars.update(tok.form)
                if tok.deprel is not None:
                    labels.add(tok.deprel)
        wlist = sorted(words)
        if "root" not in labels:
            labels.add("root")
        return cls(
            [UNK] + wlist,
            [0] + [words[w] for w in wlist],
            [UNK] + sorted(chars),
            sorted(labels),
        )

    def word_id(self, w: str) -> int:
        return self._word_index.get(w, 0)

    def char_ids(self, w: str) -> list[int]:
        return [self._char_index.get(c, 0) for c in w]

    def label_id(self, label: str) -> int:
        try:
            return self._label_index[label]
        except KeyError:
            raise KeyError(f"label {label!r} not in the model's label vocabulary") from None

    def to_json(self) -> dict:
        return {"words": self.words, "word_freq": self.word_freq, "chars": self.chars, "labels": self.labels}

    @classmethod
    def from_json(cls, d: dict) -> "Vocabularies":
        return cls(d["words"], d["word_freq"], d["chars"], d["labels"])


def _xavier(rng, fan_in, fan_out, shape):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Model:
    """All trainable parameters plus the vocabularies and treebank names."""

    def __init__(self, hyper: Hyperparameters, vocab: Vocabularies, treebanks: Sequence[str] = (), params=None):
        self.hyper = hyper
        self.vocab = vocab
        self.treebanks = list(treebanks)
        self.params: dict[str, Tensor] = params if params is not None else {}
        self.meta: dict = {}

    @classmethod
    def create(cls, hyper: Hyperparameters, vocab: Vocabularies, treebanks: Sequence[str] = (), seed: int | np.random.Generator = 0) -> "Model":
        rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
        h = hyper
        if h.use_tb and not treebanks:
            raise ValueError("a treebank-embedding model needs at least one treebank")
        model = cls(h, vocab, treebanks)
        p = model.params
        s = h.init_scale

        def add(name, value):
            p[name] = ag.parameter(value, name)

        add("word_emb", rng.uniform(-s, s, (len(vocab.words), h.dim_word)))
        add("char_emb", rng.uniform(-s, s, (len(vocab.chars), h.dim_char)))
        if h.use_tb:
            add("tb_emb", rng.uniform(-s, s, (len(treebanks), h.dim_tb)))
        for direction in ("fwd", "bwd"):
            model._add_lstm(rng, f"char_{direction}", h.dim_char, h.hidden_char)
        dim_in = h.dim_input
        for layer in range(h.layers):
            for direction in ("fwd", "bwd"):
                model._add_lstm(rng, f"lstm{layer}_{direction}", dim_in, h.hidden_word)
            dim_in = 2 * h.hidden_word
        add("root_vec", rng.uniform(-s, s, (2 * h.hidden_word,)))
        add("pad_vec", rng.uniform(-s, s, (2 * h.hidden_word,)))
        out = n_outputs(len(vocab.labels))
        add("mlp_w1", _xavier(rng, h.dim_feature, h.mlp_hidden, (h.dim_feature, h.mlp_hidden)))
        add("mlp_b1", np.zeros(h.mlp_hidden))
        add("mlp_w2", _xavier(rng, h.mlp_hidden, out, (h.mlp_hidden, out)))
        add("mlp_b2", np.zeros(out))
        return model

    def _add_lstm(self, rng, prefix, dim_in, hidden):
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        self.params[f"{prefix}_wx"] = ag.parameter(_xavier(rng, dim_in, 4 * hidden, (dim_in, 4 * hidden)), f"{prefix}_wx")
        self.params[f"{prefix}_wh"] = ag.parameter(_xavier(rng, hidden, 4 * hidden, (hidden, 4 * hidden)), f"{prefix}_wh")
        self.params[f"{prefix}_b"] = ag.parameter(b, f"{prefix}_b")

    @property
    def n_labels(self) -> int:
        return len(self.vocab.labels)

    @property
    def uses_tb(self) -> bool:
        return self.hyper.use_tb

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def copy(self) -> "Model":
        params = {k: ag.parameter(v.value.copy(), k) for k, v in self.params.items()}
        m = Model(self.hyper, self.vocab, self.treebanks, params)
        m.meta = dict(self.meta)
        return m

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        for k, v in state.items():
            self.params[k].value[...] = v

    def _lstm(self, prefix, x: Tensor, mask=None) -> Tensor:
        p = self.params
        return ag.lstm(x, p[f"{prefix}_wx"], p[f"{prefix}_wh"], p[f"{prefix}_b"], mask)


def word_ids(model: Model, forms: Sequence[str], rng: np.random.Generator | None = None) -> np.ndarray:
    """Vocabulary ids, with frequency-scaled replacement by UNK when ``rng`` is given."""
    vocab = model.vocab
    ids = np.array([vocab.word_id(w) for w in forms], dtype=np.intp)
    alpha = model.hyper.word_dropout
    if rng is not None and alpha > 0:
        freq = np.array([vocab.word_freq[i] for i in ids], dtype=float)
        drop = rng.random(len(ids)) < alpha / (alpha + freq)
        ids = np.where(drop, 0, ids)
    return ids


def _char_batch(model: Model, forms: Sequence[str]):
    seqs = [model.vocab.char_ids(w) for w in forms]
    if any(not s for s in seqs):
        raise ValueError("cannot embed an empty word form")
    lengths = np.array([len(s) for s in seqs])
    T, B = int(lengths.max()), len(seqs)
    fwd = np.zeros((T, B), dtype=np.intp)
    bwd = np.zeros((T, B), dtype=np.intp)
    for j, s in enumerate(seqs):
        fwd[: len(s), j] = s
        bwd[: len(s), j] = s[::-1]
    mask = np.arange(T)[:, None] < lengths[None, :]
    return fwd, bwd, mask


def embed_sentence(model: Model, forms: Sequence[str], tb_id: int | None = None, rng=None) -> Tensor:
    """Input vectors (n, dim_input) for the words of one sentence."""
    h = model.hyper
    p = model.params
    if h.use_tb:
        if tb_id is None:
            raise ValueError("treebank-embedding model needs a treebank id")
        if not 0 <= tb_id < len(model.treebanks):
            raise ValueError(f"treebank id {tb_id} out of range for {model.treebanks}")
    n = len(forms)
    fwd, bwd, mask = _char_batch(model, forms)
    last = fwd.shape[0] - 1
    hf = ag.take(model._lstm("char_fwd", ag.take(p["char_emb"], fwd), mask), last)
    hb = ag.take(model._lstm("char_bwd", ag.take(p["char_emb"], bwd), mask), last)
    parts = [ag.take(p["word_emb"], word_ids(model, forms, rng)), hf, hb]
    if h.use_tb:
        parts.append(ag.take(p["tb_emb"], np.full(n, tb_id, dtype=np.intp)))
    return ag.concat(parts, axis=1)


def embed_token(model: Model, word: str, tb_id: int | None = None) -> np.ndarray:
    """Input vector of a single word, as used inside sentences."""
    if not word:
        raise ValueError("cannot embed an empty word form")
    with ag.no_grad():
        return embed_sentence(model, [word], tb_id).value[0].copy()


def encode_sentence(model: Model, x: Tensor) -> Tensor:
    """Stacked BiLSTM over input vectors (n, d) -> contextual vectors (n, 2 * hidden_word)."""
    n = x.shape[0]
    rev = np.arange(n - 1, -1, -1)
    out = x
    for layer in range(model.hyper.layers):
        seq = ag.reshape(out, (n, 1, out.shape[1]))
        f = model._lstm(f"lstm{layer}_fwd", seq)
        b = ag.take(model._lstm(f"lstm{layer}_bwd", ag.take(seq, rev)), rev)
        out = ag.reshape(ag.concat([f, b], axis=2), (n, -1))
    return out


def with_special_rows(model: Model, v: Tensor) -> Tensor:
    """Append the ROOT vector (row n) and the padding vector (row n + 1)."""
    p = model.params
    return ag.concat(
        [v, ag.reshape(p["root_vec"], (1, -1)), ag.reshape(p["pad_vec"], (1, -1))], axis=0
    )


def feature_rows(c: Configuration, n_stack: int = 3, n_buffer: int = 1) -> list[int]:
    """Rows of the extended encoding for stack items s0..s{k-1} and buffer b0..;
    word i -> i - 1, ROOT -> n, empty slot -> n + 1."""
    n = c.n
    pad = n + 1
    rows = []
    for k in range(1, n_stack + 1):
        rows.append(c.stack[-k] - 1 if len(c.stack) >= k else pad)
    for k in range(n_buffer):
        rows.append(c.buffer[k] - 1 if len(c.buffer) > k else pad)
    return rows


def extract_features(c: Configuration, encoded: np.ndarray, n_stack: int = 3, n_buffer: int = 1) -> np.ndarray:
    """Concatenated vectors for ``c``; ``encoded`` already includes the ROOT and padding rows."""
    return encoded[feature_rows(c, n_stack, n_buffer)].reshape(-1)


def score(model: Model, phi) -> np.ndarray:
    """Raw scores over SHIFT, SWAP, LEFT_ARC x labels, RIGHT_ARC x labels."""
    p = model.params
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape[-1] != p["mlp_w1"].shape[0]:
        raise ValueError(f"feature length {phi.shape[-1]} != {p['mlp_w1'].shape[0]}")
    hidden = np.tanh(phi @ p["mlp_w1"].value + p["mlp_b1"].value)
    return hidden @ p["mlp_w2"].value + p["mlp_b2"].value


def score_graph(model: Model, features: Tensor) -> Tensor:
    p = model.params
    hidden = ag.tanh(ag.add(ag.matmul(features, p["mlp_w1"]), p["mlp_b1"]))
    return ag.add(ag.matmul(hidden, p["mlp_w2"]), p["mlp_b2"])


def hinge_loss(scores: Tensor, zero_cost: Sequence[int], legal: Sequence[int], margin: float = 1.0) -> Tensor:
    """max(0, margin + best wrong score - best correct score) over one score vector."""
    if not zero_cost:
        raise ValueError("zero-cost set is empty")
    zero_cost = list(zero_cost)
    wrong = [i for i in legal if i not in set(zero_cost)]
    if not wrong:
        return ag.Tensor(0.0)
    v = scores.value
    best_correct = max(zero_cost, key=lambda i: v[i])
    best_wrong = max(wrong, key=lambda i: v[i])
    s2 = ag.reshape(scores, (1, -1))
    diff = ag.add(ag.pick(s2, [0], [best_wrong]), ag.add(ag.mul(ag.pick(s2, [0], [best_correct]), -1.0), margin))
    return ag.total(ag.relu(diff))


def backward(loss: Tensor) -> None:
    ag.backward(loss)


class Adam:
    def __init__(self, model: Model, lr=None, beta1=None, beta2=None, eps=None):
        h = model.hyper
        self.lr = h.lr if lr is None else lr
        self.beta1 = h.beta1 if beta1 is None else beta1
        self.beta2 = h.beta2 if beta2 is None else beta2
        self.eps = h.eps if eps is None else eps
        self.t = 0
        self.m = {k: np.zeros_like(v.value) for k, v in model.params.items()}
        self.v = {k: np.zeros_like(v.value) for k, v in model.params.items()}

    def step(self, model: Model) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, p in model.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            g.fill(0.0)


def step(optimizer: Adam, model: Model) -> None:
    optimizer.step(model)


def _header(model: Model, dtype: str) -> tuple[dict, list[np.ndarray]]:
    tensors = []
    arrays = []
    offset = 0
    np_dtype = np.dtype(dtype).newbyteorder("<")
    for name, p in model.params.items():
        arr = np.ascontiguousarray(p.value, dtype=np_dtype)
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "dtype": np_dtype.str})
        offset += arr.nbytes
        arrays.append(arr)
    header = {
        "format_version": FORMAT_VERSION,
        "hyperparameters": dataclasses.asdict(model.hyper),
        "vocab": model.vocab.to_json(),
        "treebanks": model.treebanks,
        "meta": model.meta,
        "tensors": tensors,
    }
    return header, arrays


def model_bytes(model: Model, dtype: str = "float64") -> bytes:
    header, arrays = _header(model, dtype)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<Q", len(blob)), blob] + [a.tobytes() for a in arrays])


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model: Model, path: str | os.PathLike, dtype: str = "float64") -> None:
    atomic_write(path, model_bytes(model, dtype))


def load_model_bytes(data: bytes, registry: Sequence[str] | None = None) -> Model:
    if data[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic bytes)")
    (size,) = struct.unpack("<Q", data[4:12])
    header = json.loads(data[12 : 12 + size].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {header.get('format_version')!r}")
    hyper = Hyperparameters(**header["hyperparameters"])
    vocab = Vocabularies.from_json(header["vocab"])
    base = 12 + size
    params = {}
    for entry in header["tensors"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = base + entry["offset"]
        arr = np.frombuffer(data, dtype=dt, count=count, offset=start).reshape(entry["shape"])
        params[entry["name"]] = ag.parameter(arr.astype(np.float64), entry["name"])
    model = Model(hyper, vocab, header["treebanks"], params)
    model.meta = header.get("meta", {})
    if registry is not None and list(registry) != model.treebanks:
        warnings.warn(
            f"treebank registry {list(registry)} differs from the model's {model.treebanks}",
            RegistryMismatch,
            stacklevel=2,
        )
    return model


def load_model(path: str | os.PathLike, registry: Sequence[str] | None = None) -> Model:
    with open(path, "rb") as f:
        return load_model_bytes(f.read(), registry)
