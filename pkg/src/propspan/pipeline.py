"""Training and experiment orchestration.

Covers the two task recipes (sequence tagging with SGD on the CRF loss,
span classification with AdamW on BCE), naive self-training for both,
probability-averaging ensembles with full subset enumeration, and k-fold
splits over train+dev unions. A JSON line per run is appended to
``runs.jsonl`` for downstream ablation tooling.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path

import numpy as np

from . import tensor as T
from .datasets import SpanDataset
from .encoder import EncoderConfig, SpanClsConfig
from .losses import class_weights, reweighted_bce, uniform_weights
from .metrics import FlcScore, flc_f1, micro_f1
from .models import SiTagger, TcClassifier
from .optim import Optimizer, adamw, sgd
from .tokens import (BOS, EOS, Span, Token, TokenizedText, Vocab, extend_context,
                     inject_markers, spans_to_tags, tags_to_spans)

DESK_STEPS_SI = 2000
DESK_STEPS_TC = 1000


@dataclass(frozen=True)
class HyperParams:
    task: str
    dropout: float = 0.1
    attention_dropout: float = 0.1
    max_seq_len: int = 256
    batch_size: int = 8
    lr: float = 5e-4
    steps: int = DESK_STEPS_SI
    momentum: float = 0.9
    weight_decay: float = 0.01
    optimizer: str = "sgd"
    loss: str = "nll"
    eval_every: int = 200
    patience: int = 5

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.steps < 0:
            raise ValueError("lr and batch_size must be positive, steps >= 0")

    @classmethod
    def desk(cls, task: str) -> "HyperParams":
        if task == "si":
            return cls(task="si", batch_size=8, lr=0.05, steps=DESK_STEPS_SI,
                       momentum=0.9, weight_decay=0.0, optimizer="sgd",
                       loss="nll", eval_every=200)
        if task == "tc":
            return cls(task="tc", batch_size=16, lr=1e-3, steps=DESK_STEPS_TC,
                       momentum=0.0, weight_decay=0.01, optimizer="adamw",
                       loss="bce", eval_every=100)
        raise ValueError(f"unknown task {task!r}")

    @classmethod
    def paper(cls, task: str) -> "HyperParams":
        if task == "si":
            return cls(task="si", batch_size=8, lr=5e-4, steps=60_000,
                       momentum=0.9, weight_decay=0.0, optimizer="sgd",
                       loss="nll", eval_every=2000)
        if task == "tc":
            return cls(task="tc", batch_size=16, lr=2e-5, steps=20_000,
                       momentum=0.0, weight_decay=0.01, optimizer="adamw",
                       loss="bce", eval_every=2000)
        raise ValueError(f"unknown task {task!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class SelfTrainOverwrite:
    dropout: float = 0.0
    attention_dropout: float = 0.0
    batch_size: int = 16

    def apply(self, hp: HyperParams) -> HyperParams:
        return replace(hp, dropout=self.dropout,
                       attention_dropout=self.attention_dropout,
                       batch_size=self.batch_size)


@dataclass(frozen=True)
class TcOptions:
    reweight: bool = False
    span_cls: bool = False
    self_train: bool = False

    @classmethod
    def table_rows(cls) -> list["TcOptions"]:
        """The eight flag combinations, ordered (1)..(8)."""
        rows = []
        for reweight in (False, True):
            for span_cls in (False, True):
                for self_train in (False, True):
                    rows.append(cls(reweight, span_cls, self_train))
        return rows


def desk_encoder_config(vocab_size: int, hp: HyperParams,
                        hidden: int = 64, layers: int = 2, heads: int = 4,
                        intermediate: int = 128) -> EncoderConfig:
    return EncoderConfig(vocab_size=vocab_size, hidden_size=hidden, layers=layers,
                         heads=heads, intermediate_size=intermediate,
                         max_positions=hp.max_seq_len, dropout=hp.dropout,
                         attention_dropout=hp.attention_dropout)


def derive_seed(seed: int, k: int) -> int:
    """Deterministic child stream id."""
    return (seed * 1_000_003 + k) % (2 ** 31 - 1)


# -- sequence-tagging data ---------------------------------------------------------

@dataclass
class SiWindow:
    article_id: str
    tokens: tuple[Token, ...]
    tags: list[int]

    def tokenized(self, text: str) -> TokenizedText:
        return TokenizedText(text=text, tokens=self.tokens)


def _line_groups(tt: TokenizedText) -> list[list[Token]]:
    """Consecutive tokens with no newline between them."""
    groups: list[list[Token]] = []
    prev_end = None
    for tok in tt.tokens:
        if prev_end is None or "\n" in tt.text[prev_end:tok.start]:
            groups.append([])
        groups[-1].append(tok)
        prev_end = tok.end
    return groups


def build_si_windows(data: SpanDataset, max_len: int) -> list[SiWindow]:
    """Pack whole lines into windows of at most ``max_len`` tokens."""
    windows: list[SiWindow] = []
    for aid in sorted(data.tokenized):
        tt = data.tokenized[aid]
        if not tt.tokens:
            continue
        tags = spans_to_tags(tt, data.spans_for(aid))
        bounds: list[tuple[int, int]] = []
        cursor = 0
        for group in _line_groups(tt):
            glen = len(group)
            while glen > max_len:  # oversize line: hard split
                bounds.append((cursor, cursor + max_len))
                cursor += max_len
                glen -= max_len
            if bounds and (bounds[-1][1] - bounds[-1][0]) + glen <= max_len \
                    and bounds[-1][1] == cursor:
                bounds[-1] = (bounds[-1][0], cursor + glen)
            else:
                bounds.append((cursor, cursor + glen))
            cursor += glen
        for s, e in bounds:
            windows.append(SiWindow(aid, tt.tokens[s:e], tags[s:e]))
    return windows


def _pad_si_batch(windows: list[SiWindow], vocab: Vocab):
    lengths = np.array([len(w.tokens) for w in windows], dtype=np.int64)
    width = int(lengths.max())
    ids = np.full((len(windows), width), vocab.pad_id, dtype=np.int64)
    tags = np.zeros((len(windows), width), dtype=np.int64)
    for i, w in enumerate(windows):
        enc = vocab.encode([t.surface for t in w.tokens])
        ids[i, :len(enc)] = enc
        tags[i, :len(enc)] = w.tags
    mask = np.arange(width)[None, :] < lengths[:, None]
    return ids, mask, tags, lengths


def mix_with_silver(gold: list, silver: list, ratio: tuple[int, int] | None):
    """Gold oversampled (cycled deterministically) toward gold:silver = ratio.

    All silver items are kept; with ratio None the lists are concatenated.
    """
    if not silver:
        return list(gold)
    if ratio is None:
        return list(gold) + list(silver)
    g, s = ratio
    want_gold = max(len(gold), (len(silver) * g) // s)
    reps, rem = divmod(want_gold, len(gold))
    mixed = list(gold) * reps + list(gold)[:rem]
    return mixed + list(silver)


@dataclass
class EvalPoint:
    step: int
    score: float
    precision: float = 0.0
    recall: float = 0.0

    def to_dict(self) -> dict:
        return {"step": self.step, "score": self.score,
                "precision": self.precision, "recall": self.recall}


@dataclass
class TrainResult:
    model: object
    trace: list[EvalPoint]
    best_score: float
    best_step: int
    meta: dict = field(default_factory=dict)


def predict_spans(model: SiTagger, tokenized: dict[str, TokenizedText],
                  max_len: int, batch_size: int = 16) -> list[Span]:
    """Viterbi/argmax spans for every article, in absolute character offsets."""
    data = SpanDataset(articles={aid: tt.text for aid, tt in tokenized.items()},
                       spans=[], tokenized=dict(tokenized))
    windows = build_si_windows(data, max_len)
    spans: list[Span] = []
    for i in range(0, len(windows), batch_size):
        chunk = windows[i:i + batch_size]
        ids, mask, _, lengths = _pad_si_batch(chunk, model.vocab)
        for win, path in zip(chunk, model.decode(ids, mask, lengths)):
            tt = TokenizedText(text=data.articles[win.article_id], tokens=win.tokens)
            spans.extend(tags_to_spans(tt, path, win.article_id))
    return spans


def _eval_si(model: SiTagger, dev: SpanDataset, max_len: int) -> FlcScore:
    pred = predict_spans(model, dev.tokenized, max_len)
    return flc_f1(pred, dev.spans)


def _snapshot(model) -> dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in model.params().items()}


def _restore(model, snap: dict[str, np.ndarray]) -> None:
    for k, v in model.params().items():
        v.data = snap[k].copy()


def _make_optimizer(params, hp: HyperParams) -> Optimizer:
    if hp.optimizer == "sgd":
        return sgd(params, lr=hp.lr, momentum=hp.momentum)
    if hp.optimizer == "adamw":
        return adamw(params, lr=hp.lr, weight_decay=hp.weight_decay)
    raise ValueError(f"unknown optimizer {hp.optimizer!r}")


def train_si(train: SpanDataset, dev: SpanDataset, hp: HyperParams, seed: int,
             use_crf: bool = True, silver: SpanDataset | None = None,
             ratio: tuple[int, int] | None = (1, 4),
             encoder_cfg: EncoderConfig | None = None) -> TrainResult:
    """Tagger training with periodic dev evaluation and early stopping."""
    if not train.articles:
        raise ValueError("empty training dataset")
    gold_windows = build_si_windows(train, hp.max_seq_len)
    silver_windows = build_si_windows(silver, hp.max_seq_len) if silver else []
    windows = mix_with_silver(gold_windows, silver_windows, ratio)

    texts = [[t.surface for t in tt.tokens] for tt in train.tokenized.values()]
    if silver:
        texts += [[t.surface for t in tt.tokens] for tt in silver.tokenized.values()]
    vocab = Vocab.build(texts)

    cfg = encoder_cfg or desk_encoder_config(len(vocab), hp)
    if cfg.vocab_size != len(vocab):
        cfg = replace(cfg, vocab_size=len(vocab))
    cfg = replace(cfg, dropout=hp.dropout, attention_dropout=hp.attention_dropout)
    model = SiTagger(cfg, vocab, use_crf=use_crf, seed=seed)
    opt = _make_optimizer(model.params(), hp)
    data_rng = np.random.default_rng(derive_seed(seed, 101))
    drop_rng = np.random.default_rng(derive_seed(seed, 102))

    meta = {"task": "si", "use_crf": use_crf, "seed": seed,
            "dropout": hp.dropout, "attention_dropout": hp.attention_dropout,
            "batch_size": hp.batch_size, "gold_windows": len(gold_windows),
            "silver_windows": len(silver_windows), "train_windows": len(windows)}

    trace: list[EvalPoint] = []
    best = _snapshot(model)
    best_score, best_step = -1.0, 0
    stale = 0

    def evaluate(step: int) -> None:
        nonlocal best, best_score, best_step, stale
        score = _eval_si(model, dev, hp.max_seq_len)
        trace.append(EvalPoint(step, score.f1, score.precision, score.recall))
        if score.f1 > best_score:
            best, best_score, best_step, stale = _snapshot(model), score.f1, step, 0
        else:
            stale += 1

    if hp.steps == 0:
        evaluate(0)
        return TrainResult(model, trace, best_score, best_step, meta)

    order = data_rng.permutation(len(windows))
    cursor = 0
    for step in range(1, hp.steps + 1):
        if cursor + hp.batch_size > len(order):
            order = data_rng.permutation(len(windows))
            cursor = 0
        batch = [windows[j] for j in order[cursor:cursor + hp.batch_size]]
        cursor += hp.batch_size
        ids, mask, tags, lengths = _pad_si_batch(batch, vocab)
        loss = model.loss(ids, mask, tags, lengths, train=True, rng=drop_rng,
                          loss_kind="margin" if hp.loss == "margin" else "nll")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % hp.eval_every == 0 or step == hp.steps:
            evaluate(step)
            if stale >= hp.patience:
                break

    _restore(model, best)
    return TrainResult(model, trace, best_score, best_step, meta)


def annotate_si(model: SiTagger, pool: SpanDataset,
                max_len: int = 256) -> SpanDataset:
    """Silver dataset: decoded spans over the pool; span-free texts are kept."""
    spans = predict_spans(model, pool.tokenized, max_len)
    return SpanDataset(articles=dict(pool.articles), spans=spans,
                       labels=pool.labels, tokenized=dict(pool.tokenized))


def partition_pool(pool: SpanDataset, parts: int) -> list[SpanDataset]:
    """Contiguous split of the pool by sorted article id; every part non-empty."""
    ids = sorted(pool.articles)
    chunks = np.array_split(np.asarray(ids, dtype=object), parts)
    out = []
    for chunk in chunks:
        if len(chunk) == 0:
            raise ValueError(f"pool of {len(ids)} articles cannot feed {parts} iterations")
        out.append(SpanDataset(
            articles={aid: pool.articles[aid] for aid in chunk},
            spans=[], labels=pool.labels,
            tokenized={aid: pool.tokenized[aid] for aid in chunk}))
    return out


def self_train_si(gold: SpanDataset, dev: SpanDataset, pool: SpanDataset,
                  iterations: int, hp: HyperParams,
                  overwrite: SelfTrainOverwrite | None = None, seed: int = 0,
                  ratio: tuple[int, int] | None = (1, 4), use_crf: bool = True,
                  overwrite_from_iteration: int = 2,
                  encoder_cfg: EncoderConfig | None = None) -> list[TrainResult]:
    """Base model plus ``iterations`` rounds of annotate-and-retrain.

    Each round trains a fresh model on gold plus the silver set produced by
    the previous round's best model over a fresh pool partition. Silver
    sets take every pool text, with no confidence filtering. Hyperparameter
    overwrites kick in at ``overwrite_from_iteration`` (the first round
    keeps the base hyperparameters, matching the original recipe).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    overwrite = overwrite or SelfTrainOverwrite()
    chunks = partition_pool(pool, iterations)
    results = [train_si(gold, dev, hp, seed, use_crf=use_crf,
                        encoder_cfg=encoder_cfg)]
    for i in range(1, iterations + 1):
        silver = annotate_si(results[-1].model, chunks[i - 1], hp.max_seq_len)
        hp_i = overwrite.apply(hp) if i >= overwrite_from_iteration else hp
        res = train_si(gold, dev, hp_i, derive_seed(seed, i), use_crf=use_crf,
                       silver=silver, ratio=ratio, encoder_cfg=encoder_cfg)
        res.meta["self_train_iteration"] = i
        res.meta["silver_spans"] = len(silver.spans)
        results.append(res)
    return results


# -- span-classification data --------------------------------------------------------

MARKER_OVERHEAD = 4  # [BOS] [BOP] [EOP] [EOS]


@dataclass
class TcItem:
    article_id: str
    window_tokens: list[str]
    span_start: int  # token index into window_tokens
    span_end: int
    label: int | None
    char_span: Span
    window_char_start: int = 0
    window_char_end: int = 0


def build_tc_items(data: SpanDataset, max_seq_len: int = 256,
                   spans: list[Span] | None = None) -> list[TcItem]:
    """One item per labeled span, with maximal equal context on both sides."""
    budget = max_seq_len - MARKER_OVERHEAD
    items = []
    for sp in (data.spans if spans is None else spans):
        tt = data.tokenized[sp.article_id]
        win = extend_context(tt, sp, budget)
        toks = tt.tokens[win.start:win.end]
        items.append(TcItem(
            article_id=sp.article_id,
            window_tokens=[t.surface for t in toks],
            span_start=win.span_start - win.start,
            span_end=win.span_end - win.start,
            label=sp.technique,
            char_span=sp,
            window_char_start=toks[0].start,
            window_char_end=toks[-1].end))
    return items


def _pad_tc_batch(items: list[TcItem], vocab: Vocab, head_kind: str):
    seqs: list[list[str]] = []
    spans: list[tuple[int, int]] = []
    for it in items:
        if head_kind == "marker":
            seqs.append(inject_markers(it.window_tokens, it.span_start, it.span_end))
            spans.append((it.span_start + 2, it.span_end + 2))  # after [BOS]+[BOP]
        else:
            seqs.append([BOS] + it.window_tokens + [EOS])
            spans.append((it.span_start + 1, it.span_end + 1))
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    width = int(lengths.max())
    ids = np.full((len(items), width), vocab.pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = vocab.encode(s)
    mask = np.arange(width)[None, :] < lengths[:, None]
    return ids, mask, spans


def _multi_hot(items: list[TcItem], n_classes: int) -> np.ndarray:
    y = np.zeros((len(items), n_classes), dtype=np.float64)
    for i, it in enumerate(items):
        if it.label is None:
            raise ValueError("unlabeled item in a training batch")
        if not 0 <= it.label < n_classes:
            raise ValueError(f"unknown technique label id {it.label}")
        y[i, it.label] = 1.0
    return y


def predict_tc_probs(model: TcClassifier, items: list[TcItem],
                     batch_size: int = 32) -> np.ndarray:
    """Per-class sigmoid probabilities, [n_items, n_classes]."""
    out = []
    for i in range(0, len(items), batch_size):
        chunk = items[i:i + batch_size]
        ids, mask, spans = _pad_tc_batch(chunk, model.vocab, model.head_kind)
        out.append(model.probs(ids, mask, spans if model.head_kind == "span_cls" else None))
    return np.concatenate(out, axis=0)


def _eval_tc(model: TcClassifier, items: list[TcItem]) -> float:
    probs = predict_tc_probs(model, items)
    pred = probs.argmax(axis=1)
    gold = np.array([it.label for it in items], dtype=np.int64)
    return micro_f1(pred, gold)


def train_tc(train_items: list[TcItem], dev_items: list[TcItem], labels: list[str],
             opts: TcOptions, hp: HyperParams, seed: int,
             silver_items: list[TcItem] | None = None,
             ratio: tuple[int, int] | None = (1, 4),
             encoder_cfg: EncoderConfig | None = None,
             span_cfg: SpanClsConfig | None = None,
             overwrite: SelfTrainOverwrite | None = None,
             apply_overwrite: bool = True) -> TrainResult:
    """Span classifier training; head, loss weighting and silver mix follow ``opts``.

    Self-trained runs take the overwrite profile (dropout 0, batch 16) for
    the whole run by default; pass ``apply_overwrite=False`` to keep the
    base hyperparameters instead.
    """
    if not train_items:
        raise ValueError("empty training dataset")
    if opts.self_train and silver_items is None:
        raise ValueError("self_train option requires a silver item set "
                         "(see build_tc_silver)")
    if opts.self_train and apply_overwrite:
        hp = (overwrite or SelfTrainOverwrite()).apply(hp)
    silver = list(silver_items) if (opts.self_train and silver_items) else []
    mixed = mix_with_silver(list(train_items), silver, ratio)

    vocab = Vocab.build([it.window_tokens for it in mixed])
    cfg = encoder_cfg or desk_encoder_config(len(vocab), hp)
    if cfg.vocab_size != len(vocab):
        cfg = replace(cfg, vocab_size=len(vocab))
    cfg = replace(cfg, dropout=hp.dropout, attention_dropout=hp.attention_dropout)
    head_kind = "span_cls" if opts.span_cls else "marker"
    model = TcClassifier(cfg, vocab, labels, head_kind=head_kind,
                         span_cfg=span_cfg or SpanClsConfig(), seed=seed)

    n_classes = len(labels)
    if opts.reweight:
        freq = np.bincount([it.label for it in mixed], minlength=n_classes)
        if (freq == 0).any():
            missing = [labels[i] for i in np.where(freq == 0)[0]]
            raise ValueError(f"classes absent from the train split: {missing}")
        weights = class_weights(freq)
    else:
        weights = uniform_weights(n_classes)

    opt = _make_optimizer(model.params(), hp)
    data_rng = np.random.default_rng(derive_seed(seed, 201))
    drop_rng = np.random.default_rng(derive_seed(seed, 202))

    meta = {"task": "tc", "options": {"reweight": opts.reweight,
                                      "span_cls": opts.span_cls,
                                      "self_train": opts.self_train},
            "seed": seed, "dropout": hp.dropout,
            "attention_dropout": hp.attention_dropout,
            "batch_size": hp.batch_size, "gold_items": len(train_items),
            "silver_items": len(silver), "train_items": len(mixed)}

    trace: list[EvalPoint] = []
    best = _snapshot(model)
    best_score, best_step = -1.0, 0
    stale = 0

    def evaluate(step: int) -> None:
        nonlocal best, best_score, best_step, stale
        score = _eval_tc(model, dev_items)
        trace.append(EvalPoint(step, score))
        if score > best_score:
            best, best_score, best_step, stale = _snapshot(model), score, step, 0
        else:
            stale += 1

    if hp.steps == 0:
        evaluate(0)
        return TrainResult(model, trace, best_score, best_step, meta)

    order = data_rng.permutation(len(mixed))
    cursor = 0
    for step in range(1, hp.steps + 1):
        if cursor + hp.batch_size > len(order):
            order = data_rng.permutation(len(mixed))
            cursor = 0
        chunk = [mixed[j] for j in order[cursor:cursor + hp.batch_size]]
        cursor += hp.batch_size
        ids, mask, spans = _pad_tc_batch(chunk, vocab, head_kind)
        logits = model.logits(ids, mask,
                              spans if head_kind == "span_cls" else None,
                              train=True, rng=drop_rng)
        y = _multi_hot(chunk, n_classes)
        loss = reweighted_bce(T.sigmoid(logits), y, weights)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % hp.eval_every == 0 or step == hp.steps:
            evaluate(step)
            if stale >= hp.patience:
                break

    _restore(model, best)
    return TrainResult(model, trace, best_score, best_step, meta)


def build_tc_silver(si_model: SiTagger, tc_model: TcClassifier, pool: SpanDataset,
                    max_seq_len: int = 256) -> list[TcItem]:
    """Silver classification items: spans found by the tagger, labels from
    the gold-trained classifier's argmax."""
    spans = predict_spans(si_model, pool.tokenized, max_seq_len)
    if not spans:
        return []
    items = build_tc_items(pool, max_seq_len, spans=spans)
    probs = predict_tc_probs(tc_model, items)
    pred = probs.argmax(axis=1)
    for it, lab in zip(items, pred):
        it.label = int(lab)
        it.char_span = Span(it.char_span.article_id, it.char_span.start,
                            it.char_span.end, int(lab))
    return items


# -- ensembling and folds --------------------------------------------------------------

def ensemble_probs(models: list[TcClassifier], items: list[TcItem]) -> np.ndarray:
    """Arithmetic mean of per-model class probabilities."""
    if not models:
        raise ValueError("need at least one model")
    inventories = {tuple(m.labels) for m in models}
    if len(inventories) != 1:
        raise ValueError("models carry different label inventories")
    acc = np.zeros((len(items), len(models[0].labels)), dtype=np.float64)
    for m in models:
        acc += predict_tc_probs(m, items)
    return acc / len(models)


def ensemble_predict(models: list[TcClassifier], items: list[TcItem]) -> np.ndarray:
    """Argmax of averaged probabilities; ties resolve to the lowest label id."""
    return ensemble_probs(models, items).argmax(axis=1)


@dataclass(frozen=True)
class EnsembleResult:
    members: tuple[int, ...]
    score: float


def enumerate_ensembles(models: list[TcClassifier],
                        dev_items: list[TcItem]) -> list[EnsembleResult]:
    """Score every subset of two or more models on the dev items."""
    n = len(models)
    if n < 2:
        raise ValueError("need at least two models to enumerate ensembles")
    inventories = {tuple(m.labels) for m in models}
    if len(inventories) != 1:
        raise ValueError("models carry different label inventories")
    gold = np.array([it.label for it in dev_items], dtype=np.int64)
    per_model = [predict_tc_probs(m, dev_items) for m in models]
    results = []
    for size in range(2, n + 1):
        for subset in combinations(range(n), size):
            avg = sum(per_model[i] for i in subset) / len(subset)
            results.append(EnsembleResult(subset, micro_f1(avg.argmax(axis=1), gold)))
    return results


def kfold_split(train_items: list, dev_items: list, k: int = 6,
                seed: int = 0) -> list[list]:
    """Shuffle the train+dev union and cut into k near-even folds."""
    if k < 2:
        raise ValueError("k must be >= 2")
    pool = list(train_items) + list(dev_items)
    if k > len(pool):
        raise ValueError(f"cannot split {len(pool)} items into {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    sizes = [len(pool) // k + (1 if i < len(pool) % k else 0) for i in range(k)]
    folds, cursor = [], 0
    for size in sizes:
        folds.append([pool[j] for j in order[cursor:cursor + size]])
        cursor += size
    return folds


def cross_validate(train_items: list[TcItem], dev_items: list[TcItem],
                   labels: list[str], opts: TcOptions, hp: HyperParams,
                   k: int = 6, seed: int = 0,
                   silver_items: list[TcItem] | None = None,
                   encoder_cfg: EncoderConfig | None = None) -> list[float]:
    """Per-fold dev scores: each fold once as the held-out set."""
    folds = kfold_split(train_items, dev_items, k=k, seed=seed)
    scores = []
    for i in range(k):
        held = folds[i]
        rest = [it for j, fold in enumerate(folds) if j != i for it in fold]
        res = train_tc(rest, held, labels, opts, hp, derive_seed(seed, i),
                       silver_items=silver_items, encoder_cfg=encoder_cfg)
        scores.append(res.best_score)
    return scores


# -- run manifest -------------------------------------------------------------------

def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def append_manifest(out_dir: str | Path, record: dict) -> Path:
    path = Path(out_dir) / "runs.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True, separators=(",", ":"),
                            default=str) + "\n")
    return path


def run_record(command: str, config: dict, seed: int, result: TrainResult | None,
               checkpoint: str | None = None) -> dict:
    record = {"command": command, "config_hash": config_hash(config),
              "config": config, "seed": seed, "checkpoint": checkpoint}
    if result is not None:
        record["best_score"] = result.best_score
        record["best_step"] = result.best_step
        record["eval_trace"] = [p.to_dict() for p in result.trace]
        record["meta"] = result.meta
    return record
