"""Transformer encoder and its task heads.

The host encoder is a small pre-norm transformer with learned positional
embeddings. Three heads sit on top of its hidden states:

  - per-token label scores feeding the CRF,
  - sequence classification over the first ([BOS]) position, used with
    injected span markers,
  - a span-stacked classifier: a second small transformer run over a
    learned [BOS] vector plus the host states of the span tokens only.
    It adds no positional signal of its own, which makes it exactly
    equivalent to running the same layers over the full sequence with
    attention restricted to {BOS} union span and reading the BOS output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

ATTN_MASK_BIAS = -1e9  # exp() underflows to exactly 0 after the softmax shift
INIT_STD = 0.02


@dataclass
class EncoderConfig:
    vocab_size: int
    hidden_size: int = 64
    layers: int = 2
    heads: int = 4
    intermediate_size: int = 128
    max_positions: int = 256
    dropout: float = 0.1
    attention_dropout: float = 0.1

    def __post_init__(self):
        if self.hidden_size % self.heads != 0:
            raise ValueError("hidden_size must be divisible by heads")
        for name in ("dropout", "attention_dropout"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")

    def to_dict(self) -> dict:
        return dict(vocab_size=self.vocab_size, hidden_size=self.hidden_size,
                    layers=self.layers, heads=self.heads,
                    intermediate_size=self.intermediate_size,
                    max_positions=self.max_positions, dropout=self.dropout,
                    attention_dropout=self.attention_dropout)


@dataclass
class SpanClsConfig:
    layers: int = 3
    heads: int = 4
    intermediate_size: int = 512
    # hidden size is inherited from the host encoder

    def to_dict(self) -> dict:
        return dict(layers=self.layers, heads=self.heads,
                    intermediate_size=self.intermediate_size)


def _init(rng: np.random.Generator, shape, dtype) -> np.ndarray:
    return rng.normal(0.0, INIT_STD, shape).astype(dtype)


class TransformerStack:
    """Pre-norm residual blocks with GELU MLPs; no embeddings of its own."""

    def __init__(self, prefix: str, hidden: int, layers: int, heads: int,
                 intermediate: int, dropout: float, attention_dropout: float,
                 rng: np.random.Generator, dtype=np.float32):
        self.hidden = hidden
        self.layers = layers
        self.heads = heads
        self.head_dim = hidden // heads
        self.dropout = dropout
        self.attention_dropout = attention_dropout
        self.params: dict[str, Tensor] = {}
        p = self.params
        for i in range(layers):
            base = f"{prefix}.layer{i}"
            for nm in ("wq", "wk", "wv", "wo"):
                p[f"{base}.{nm}"] = Tensor(_init(rng, (hidden, hidden), dtype), requires_grad=True)
                p[f"{base}.{nm}_b"] = Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True)
            p[f"{base}.ln1_g"] = Tensor(np.ones(hidden, dtype=dtype), requires_grad=True)
            p[f"{base}.ln1_b"] = Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True)
            p[f"{base}.w1"] = Tensor(_init(rng, (hidden, intermediate), dtype), requires_grad=True)
            p[f"{base}.w1_b"] = Tensor(np.zeros(intermediate, dtype=dtype), requires_grad=True)
            p[f"{base}.w2"] = Tensor(_init(rng, (intermediate, hidden), dtype), requires_grad=True)
            p[f"{base}.w2_b"] = Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True)
            p[f"{base}.ln2_g"] = Tensor(np.ones(hidden, dtype=dtype), requires_grad=True)
            p[f"{base}.ln2_b"] = Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True)
        p[f"{prefix}.ln_f_g"] = Tensor(np.ones(hidden, dtype=dtype), requires_grad=True)
        p[f"{prefix}.ln_f_b"] = Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True)
        self.prefix = prefix

    def _attention(self, x: Tensor, bias: np.ndarray, base: str,
                   train: bool, rng) -> Tensor:
        p = self.params
        bsz, seq, hid = x.shape
        def proj(name):
            flat = T.reshape(x, (bsz * seq, hid))
            out = T.matmul(flat, p[f"{base}.{name}"]) + p[f"{base}.{name}_b"]
            out = T.reshape(out, (bsz, seq, self.heads, self.head_dim))
            return T.swapaxes(out, 1, 2)  # [B, heads, T, dh]
        q, k, v = proj("wq"), proj("wk"), proj("wv")
        scores = T.matmul(q, T.swapaxes(k, 2, 3)) * (1.0 / np.sqrt(self.head_dim))
        scores = scores + bias  # [B, 1, Tq, Tk] broadcast over heads
        attn = T.softmax(scores, axis=-1)
        attn = T.dropout(attn, self.attention_dropout, rng, train)
        ctx = T.matmul(attn, v)  # [B, heads, T, dh]
        ctx = T.reshape(T.swapaxes(ctx, 1, 2), (bsz * seq, hid))
        out = T.matmul(ctx, p[f"{base}.wo"]) + p[f"{base}.wo_b"]
        return T.reshape(out, (bsz, seq, hid))

    def __call__(self, x: Tensor, attn_allowed: np.ndarray,
                 train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """attn_allowed: bool, broadcastable to [B, 1, Tq, Tk]; True = may attend."""
        bias = np.where(attn_allowed, 0.0, ATTN_MASK_BIAS).astype(x.dtype)
        p = self.params
        h = x
        for i in range(self.layers):
            base = f"{self.prefix}.layer{i}"
            a = self._attention(T.layer_norm(h, p[f"{base}.ln1_g"], p[f"{base}.ln1_b"]),
                                bias, base, train, rng)
            h = h + T.dropout(a, self.dropout, rng, train)
            m = T.layer_norm(h, p[f"{base}.ln2_g"], p[f"{base}.ln2_b"])
            bsz, seq, hid = m.shape
            m = T.reshape(m, (bsz * seq, hid))
            m = T.gelu(T.matmul(m, p[f"{base}.w1"]) + p[f"{base}.w1_b"])
            m = T.matmul(m, p[f"{base}.w2"]) + p[f"{base}.w2_b"]
            m = T.reshape(m, (bsz, seq, hid))
            h = h + T.dropout(m, self.dropout, rng, train)
        return T.layer_norm(h, p[f"{self.prefix}.ln_f_g"], p[f"{self.prefix}.ln_f_b"])


def key_padding_allowed(mask: np.ndarray) -> np.ndarray:
    """[B, T] validity mask -> [B, 1, 1, T] allowed-key mask."""
    mask = np.asarray(mask, dtype=bool)
    return mask[:, None, None, :]


class Encoder:
    """Token + position embeddings through a TransformerStack."""

    def __init__(self, config: EncoderConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng(seed)
        self.dtype = dtype
        self.params: dict[str, Tensor] = {
            "emb.tok": Tensor(_init(rng, (config.vocab_size, config.hidden_size), dtype),
                              requires_grad=True),
            "emb.pos": Tensor(_init(rng, (config.max_positions, config.hidden_size), dtype),
                              requires_grad=True),
        }
        self.stack = TransformerStack(
            "enc", config.hidden_size, config.layers, config.heads,
            config.intermediate_size, config.dropout, config.attention_dropout,
            rng, dtype)
        self.params.update(self.stack.params)

    def encode(self, ids: np.ndarray, mask: np.ndarray,
               train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2:
            raise ValueError("ids must be [batch, seq]")
        bsz, seq = ids.shape
        if seq > self.config.max_positions:
            raise ValueError(f"sequence of {seq} tokens exceeds max positions "
                             f"{self.config.max_positions}")
        if ids.max(initial=0) >= self.config.vocab_size:
            raise ValueError("token id outside the vocabulary")
        x = T.embedding(self.params["emb.tok"], ids)
        x = x + self.params["emb.pos"][:seq]
        x = T.dropout(x, self.config.dropout, rng, train)
        return self.stack(x, key_padding_allowed(mask), train=train, rng=rng)


class EmissionHead:
    """Per-position linear projection onto the tag space."""

    def __init__(self, hidden: int, n_labels: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.params = {
            "emit.w": Tensor(_init(rng, (hidden, n_labels), dtype), requires_grad=True),
            "emit.b": Tensor(np.zeros(n_labels, dtype=dtype), requires_grad=True),
        }

    def __call__(self, hidden: Tensor) -> Tensor:
        bsz, seq, hid = hidden.shape
        flat = T.reshape(hidden, (bsz * seq, hid))
        out = T.matmul(flat, self.params["emit.w"]) + self.params["emit.b"]
        return T.reshape(out, (bsz, seq, -1))


class MarkerClsHead:
    """Class logits from the [BOS] position, for marker-token inputs."""

    def __init__(self, hidden: int, n_classes: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.params = {
            "cls.w": Tensor(_init(rng, (hidden, n_classes), dtype), requires_grad=True),
            "cls.b": Tensor(np.zeros(n_classes, dtype=dtype), requires_grad=True),
        }

    def __call__(self, hidden: Tensor) -> Tensor:
        return T.matmul(hidden[:, 0, :], self.params["cls.w"]) + self.params["cls.b"]


class SpanClsHead:
    """Small transformer stacked over the span's host states plus a [BOS] row.

    The stacked layers see host representations as-is; the only owned
    embedding is the [BOS] vector, so span order information comes purely
    from the host states.
    """

    def __init__(self, hidden: int, n_classes: int, cfg: SpanClsConfig,
                 rng: np.random.Generator, dropout: float = 0.1,
                 attention_dropout: float = 0.1, dtype=np.float32):
        if hidden % cfg.heads != 0:
            raise ValueError("host hidden size must be divisible by span-cls heads")
        self.cfg = cfg
        self.stack = TransformerStack("span", hidden, cfg.layers, cfg.heads,
                                      cfg.intermediate_size, dropout,
                                      attention_dropout, rng, dtype)
        self.params = dict(self.stack.params)
        self.params["span.bos"] = Tensor(_init(rng, (1, hidden), dtype), requires_grad=True)
        self.params["span.w"] = Tensor(_init(rng, (hidden, n_classes), dtype), requires_grad=True)
        self.params["span.b"] = Tensor(np.zeros(n_classes, dtype=dtype), requires_grad=True)

    def _classify(self, seqs: Tensor, train: bool, rng) -> Tensor:
        allowed = np.ones((1, 1, 1, seqs.shape[1]), dtype=bool)
        out = self.stack(seqs, allowed, train=train, rng=rng)
        return T.matmul(out[:, 0, :], self.params["span.w"]) + self.params["span.b"]

    def logits(self, hidden: Tensor, spans: list[tuple[int, int]],
               train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Class logits per batch element; spans index into the host sequence.

        Elements are grouped by span length so each group runs as one batch;
        results are reassembled in input order.
        """
        bsz = hidden.shape[0]
        if len(spans) != bsz:
            raise ValueError("one span range per batch element required")
        groups: dict[int, list[int]] = {}
        for i, (s, e) in enumerate(spans):
            if not (0 <= s < e <= hidden.shape[1]):
                raise ValueError(f"empty or out-of-range span ({s}, {e})")
            groups.setdefault(e - s, []).append(i)

        pieces: list[tuple[list[int], Tensor]] = []
        for length, idxs in sorted(groups.items()):
            rows = []
            for i in idxs:
                s, e = spans[i]
                body = hidden[i, s:e, :]  # [len, H]
                rows.append(T.concat([self.params["span.bos"], body], axis=0))
            seqs = T.concat([T.reshape(r, (1, length + 1, -1)) for r in rows], axis=0)
            pieces.append((idxs, self._classify(seqs, train, rng)))

        order = np.argsort(np.concatenate([np.asarray(ix) for ix, _ in pieces]))
        stacked = T.concat([logit for _, logit in pieces], axis=0)
        return stacked[order]

    def logits_masked_full(self, hidden_single: Tensor, span: tuple[int, int],
                           train: bool = False,
                           rng: np.random.Generator | None = None) -> Tensor:
        """Equivalent formulation: run over the full sequence, restrict every
        query's attention to {BOS} union span, read the BOS output."""
        s, e = span
        seq_len = hidden_single.shape[0]
        if not (0 <= s < e <= seq_len):
            raise ValueError(f"empty or out-of-range span ({s}, {e})")
        seqs = T.concat([self.params["span.bos"], hidden_single], axis=0)
        seqs = T.reshape(seqs, (1, seq_len + 1, -1))
        allowed_keys = np.zeros(seq_len + 1, dtype=bool)
        allowed_keys[0] = True
        allowed_keys[1 + s:1 + e] = True
        allowed = np.broadcast_to(allowed_keys, (1, 1, seq_len + 1, seq_len + 1))
        out = self.stack(seqs, allowed, train=train, rng=rng)
        return T.matmul(out[:, 0, :], self.params["span.w"]) + self.params["span.b"]
