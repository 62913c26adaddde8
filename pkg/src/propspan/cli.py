"""Command-line surface.

Subcommands map one-to-one onto the library operations: gen-synth,
train-si, train-tc, self-train, annotate, ensemble, score, cv, analyze.
Exit codes: 0 success, 1 validation/usage error, 2 runtime error. All
randomness flows from --seed, and a JSON config file (flat dotted keys,
overridden by explicit flags) can pre-set hyperparameters. Every command
echoes its effective configuration into the out-dir's runs.jsonl.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis as ana
from . import pipeline as pl
from .datasets import (SpanDataset, load_dataset, read_articles, read_techniques,
                       write_articles, write_spans_tsv, write_techniques)
from .encoder import EncoderConfig
from .metrics import confusion_matrix, flc_f1, flc_f1_per_article, micro_f1, span_outcomes
from .models import SiTagger, TcClassifier
from .synth import SynthConfig, gen_synth
from .tokens import Span


class CliError(Exception):
    """Validation problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise CliError(message)


PROFILES_HELP = (
    "profiles: desk scale (default) trains small models with SI sgd lr=0.05 "
    "batch=8 steps=2000 and TC adamw lr=1e-3 batch=16 steps=1000; "
    "--paper-scale swaps in the full-scale values verbatim "
    "(batch 8/16, lr 5e-4/2e-5, steps 60k/20k, dropout .1)."
)


def build_parser() -> _Parser:
    p = _Parser(prog="propspan", description=__doc__, epilog=PROFILES_HELP)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_required=False):
        sp.add_argument("--config", help="JSON config file with flat dotted keys")
        sp.add_argument("--seed", type=int, required=seed_required)
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("gen-synth", help="generate a synthetic gold corpus and pool")
    common(sp, seed_required=True)

    sp = sub.add_parser("train-si", help="train a span identification tagger")
    common(sp, seed_required=True)
    sp.add_argument("--articles", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--dev-articles", required=True)
    sp.add_argument("--dev-labels", required=True)
    sp.add_argument("--no-crf", action="store_true", help="plain argmax decoding instead of the CRF")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--paper-scale", action="store_true")

    sp = sub.add_parser("train-tc", help="train a technique classifier")
    common(sp, seed_required=True)
    sp.add_argument("--articles", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--dev-articles", required=True)
    sp.add_argument("--dev-labels", required=True)
    sp.add_argument("--techniques", required=True)
    sp.add_argument("--reweight", action="store_true")
    sp.add_argument("--span-cls", action="store_true")
    sp.add_argument("--self-train", action="store_true")
    sp.add_argument("--pool", help="unlabeled article dir (needed with --self-train)")
    sp.add_argument("--si-model", help="tagger checkpoint (needed with --self-train)")
    sp.add_argument("--gold-silver-ratio", default="1:4")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--paper-scale", action="store_true")

    sp = sub.add_parser("self-train", help="iterated naive self-training")
    common(sp, seed_required=True)
    sp.add_argument("--task", choices=["si"], default="si")
    sp.add_argument("--articles", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--dev-articles", required=True)
    sp.add_argument("--dev-labels", required=True)
    sp.add_argument("--pool", required=True)
    sp.add_argument("--iterations", type=int, default=3)
    sp.add_argument("--gold-silver-ratio", default="1:4")
    sp.add_argument("--no-crf", action="store_true")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--paper-scale", action="store_true")

    sp = sub.add_parser("annotate", help="auto-annotate a pool with a trained model")
    common(sp)
    sp.add_argument("--task", choices=["si", "tc"], default="si")
    sp.add_argument("--model", required=True)
    sp.add_argument("--pool", required=True, help="article dir to annotate")
    sp.add_argument("--labels", help="span TSV to classify (tc task)")

    sp = sub.add_parser("ensemble", help="average class probabilities across models")
    common(sp)
    sp.add_argument("--models", required=True, help="comma-separated checkpoint list")
    sp.add_argument("--articles", required=True)
    sp.add_argument("--labels", required=True, help="labeled span TSV to evaluate on")
    sp.add_argument("--techniques", required=True)
    sp.add_argument("--enumerate", action="store_true", dest="enumerate_all",
                    help="score every subset of size >= 2")

    sp = sub.add_parser("score", help="score predictions against gold")
    common(sp)
    sp.add_argument("--task", choices=["si", "tc"], required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gold", required=True)
    sp.add_argument("--techniques", help="needed for tc scoring and per-technique reports")

    sp = sub.add_parser("cv", help="k-fold cross-validation on train+dev")
    common(sp, seed_required=True)
    sp.add_argument("--articles", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--dev-articles", required=True)
    sp.add_argument("--dev-labels", required=True)
    sp.add_argument("--techniques", required=True)
    sp.add_argument("--k", type=int, default=6)
    sp.add_argument("--reweight", action="store_true")
    sp.add_argument("--span-cls", action="store_true")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--paper-scale", action="store_true")

    sp = sub.add_parser("analyze", help="rank score-worsening shallow features")
    common(sp)
    sp.add_argument("--task", choices=["si", "tc"], required=True)
    sp.add_argument("--articles", required=True)
    sp.add_argument("--gold", required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--techniques")
    sp.add_argument("--features", help="feature spec file: name<TAB>location<TAB>pattern")
    return p


# -- config plumbing ------------------------------------------------------------------

def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(cfg, dict):
        raise CliError("config file must hold a JSON object")
    return cfg


def _scoped(cfg: dict, prefix: str) -> dict:
    out = {}
    for key, value in cfg.items():
        if key.startswith(prefix + "."):
            out[key[len(prefix) + 1:]] = value
    return out


def _resolve_hp(args, task: str, cfg: dict) -> pl.HyperParams:
    hp = pl.HyperParams.paper(task) if getattr(args, "paper_scale", False) \
        else pl.HyperParams.desk(task)
    overrides = _scoped(cfg, "hp")
    bad = set(overrides) - set(hp.to_dict())
    if bad:
        raise CliError(f"unknown hp.* config keys: {sorted(bad)}")
    if overrides:
        hp = replace(hp, **overrides)
    if getattr(args, "steps", None) is not None:
        hp = replace(hp, steps=args.steps)
    return hp


def _resolve_encoder(cfg: dict, hp: pl.HyperParams) -> EncoderConfig | None:
    overrides = _scoped(cfg, "encoder")
    if not overrides:
        return None
    base = pl.desk_encoder_config(1, hp)
    bad = set(overrides) - set(base.to_dict())
    if bad:
        raise CliError(f"unknown encoder.* config keys: {sorted(bad)}")
    return replace(base, **overrides)


def _parse_ratio(text: str) -> tuple[int, int] | None:
    if text.lower() in ("none", "off"):
        return None
    try:
        g, s = text.split(":")
        return (int(g), int(s))
    except ValueError:
        raise CliError(f"--gold-silver-ratio must look like 1:4, got {text!r}") from None


def _effective(args, hp: pl.HyperParams | None = None, **extra) -> dict:
    config = {"command": args.command, "seed": getattr(args, "seed", None)}
    if hp is not None:
        config["hp"] = hp.to_dict()
    config.update(extra)
    return config


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name.replace("-", "_"), None) in (None, ""):
            raise CliError(f"--{name} is required for this invocation")


# -- command handlers -----------------------------------------------------------------

def cmd_gen_synth(args) -> int:
    cfg = _load_config(args.config)
    overrides = _scoped(cfg, "synth")
    synth_cfg = SynthConfig(seed=args.seed)
    known = set(synth_cfg.__dataclass_fields__)
    bad = set(overrides) - known
    if bad:
        raise CliError(f"unknown synth.* config keys: {sorted(bad)}")
    for key in ("sentences_per_article", "sentence_length"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    synth_cfg = replace(synth_cfg, seed=args.seed, **overrides)

    corpus = gen_synth(synth_cfg)
    out = _out_dir(args)
    write_techniques(out / "techniques.txt", corpus.labels)
    for name, split in (("train", corpus.train), ("dev", corpus.dev)):
        write_articles(out / name / "articles", split.articles)
        write_spans_tsv(out / name / "labels-si.tsv", split.spans)
        write_spans_tsv(out / name / "labels-tc.tsv", split.spans, corpus.labels)
    write_articles(out / "pool" / "articles", corpus.pool.articles)

    config = _effective(args, synth={k: getattr(synth_cfg, k) for k in known})
    pl.append_manifest(out, pl.run_record("gen-synth", config, args.seed, None))
    print(f"wrote {len(corpus.train.articles)} train / {len(corpus.dev.articles)} dev "
          f"articles and a pool of {len(corpus.pool.articles)} to {out}")
    return 0


def cmd_train_si(args) -> int:
    cfg = _load_config(args.config)
    hp = _resolve_hp(args, "si", cfg)
    enc = _resolve_encoder(cfg, hp)
    train = load_dataset(args.articles, args.labels, "si")
    dev = load_dataset(args.dev_articles, args.dev_labels, "si")
    res = pl.train_si(train, dev, hp, args.seed, use_crf=not args.no_crf,
                      encoder_cfg=enc)
    out = _out_dir(args)
    ckpt = out / "model-si.spfg"
    res.model.save(ckpt, meta={"best_score": res.best_score, "best_step": res.best_step,
                               "seed": args.seed})
    config = _effective(args, hp, use_crf=not args.no_crf)
    pl.append_manifest(out, pl.run_record("train-si", config, args.seed, res, str(ckpt)))
    print(f"best dev FLC-F1 {res.best_score:.4f} at step {res.best_step}; saved {ckpt}")
    return 0


def _tc_inputs(args):
    train = load_dataset(args.articles, args.labels, "tc", args.techniques)
    dev = load_dataset(args.dev_articles, args.dev_labels, "tc", args.techniques)
    labels = read_techniques(args.techniques)
    return train, dev, labels


def cmd_train_tc(args) -> int:
    cfg = _load_config(args.config)
    hp = _resolve_hp(args, "tc", cfg)
    enc = _resolve_encoder(cfg, hp)
    train, dev, labels = _tc_inputs(args)
    train_items = pl.build_tc_items(train, hp.max_seq_len)
    dev_items = pl.build_tc_items(dev, hp.max_seq_len)
    opts = pl.TcOptions(reweight=args.reweight, span_cls=args.span_cls,
                        self_train=args.self_train)
    ratio = _parse_ratio(args.gold_silver_ratio)

    silver_items = None
    if opts.self_train:
        _require(args, "pool", "si-model")
        si_model = SiTagger.load(args.si_model)
        pool = SpanDataset(articles=read_articles(args.pool), spans=[])
        annotator = pl.train_tc(train_items, dev_items, labels,
                                replace(opts, self_train=False), hp,
                                pl.derive_seed(args.seed, 77), encoder_cfg=enc)
        silver_items = pl.build_tc_silver(si_model, annotator.model, pool, hp.max_seq_len)

    res = pl.train_tc(train_items, dev_items, labels, opts, hp, args.seed,
                      silver_items=silver_items, ratio=ratio, encoder_cfg=enc)
    out = _out_dir(args)
    ckpt = out / "model-tc.spfg"
    res.model.save(ckpt, meta={"best_score": res.best_score, "best_step": res.best_step,
                               "seed": args.seed})
    config = _effective(args, hp, options={"reweight": opts.reweight,
                                           "span_cls": opts.span_cls,
                                           "self_train": opts.self_train},
                        ratio=args.gold_silver_ratio)
    pl.append_manifest(out, pl.run_record("train-tc", config, args.seed, res, str(ckpt)))
    print(f"best dev micro-F1 {res.best_score:.4f} at step {res.best_step}; saved {ckpt}")
    return 0


def cmd_self_train(args) -> int:
    cfg = _load_config(args.config)
    hp = _resolve_hp(args, "si", cfg)
    enc = _resolve_encoder(cfg, hp)
    train = load_dataset(args.articles, args.labels, "si")
    dev = load_dataset(args.dev_articles, args.dev_labels, "si")
    pool = SpanDataset(articles=read_articles(args.pool), spans=[])
    ratio = _parse_ratio(args.gold_silver_ratio)
    results = pl.self_train_si(train, dev, pool, args.iterations, hp,
                               seed=args.seed, ratio=ratio, use_crf=not args.no_crf,
                               encoder_cfg=enc)
    out = _out_dir(args)
    config = _effective(args, hp, iterations=args.iterations,
                        ratio=args.gold_silver_ratio, use_crf=not args.no_crf)
    for i, res in enumerate(results):
        name = "model-si-base.spfg" if i == 0 else f"model-si-iter{i}.spfg"
        ckpt = out / name
        res.model.save(ckpt, meta={"best_score": res.best_score, "iteration": i,
                                   "seed": args.seed})
        tag = "base" if i == 0 else f"iteration {i}"
        pl.append_manifest(out, pl.run_record(f"self-train[{i}]", config, args.seed,
                                              res, str(ckpt)))
        print(f"{tag}: best dev FLC-F1 {res.best_score:.4f} -> {ckpt}")
    return 0


def cmd_annotate(args) -> int:
    out = _out_dir(args)
    if args.task == "si":
        model = SiTagger.load(args.model)
        pool = SpanDataset(articles=read_articles(args.pool), spans=[])
        silver = pl.annotate_si(model, pool, model.config.max_positions)
        path = out / "silver-si.tsv"
        write_spans_tsv(path, silver.spans)
        print(f"annotated {len(silver.spans)} spans over {len(pool.articles)} "
              f"articles -> {path}")
    else:
        _require(args, "labels")
        model = TcClassifier.load(args.model)
        data = load_dataset(args.pool, args.labels, "si")
        items = pl.build_tc_items(data, model.config.max_positions, spans=data.spans)
        probs = pl.predict_tc_probs(model, items)
        pred = probs.argmax(axis=1)
        labeled = [Span(it.char_span.article_id, it.char_span.start, it.char_span.end,
                        int(lab)) for it, lab in zip(items, pred)]
        path = out / "silver-tc.tsv"
        write_spans_tsv(path, labeled, model.labels)
        print(f"classified {len(labeled)} spans -> {path}")
    config = _effective(args, model=args.model, task=args.task)
    pl.append_manifest(out, pl.run_record("annotate", config, -1, None))
    return 0


def cmd_ensemble(args) -> int:
    paths = [p for p in args.models.split(",") if p]
    if not paths:
        raise CliError("--models needs at least one checkpoint")
    models = [TcClassifier.load(p) for p in paths]
    data = load_dataset(args.articles, args.labels, "tc", args.techniques)
    labels = read_techniques(args.techniques)
    items = pl.build_tc_items(data, models[0].config.max_positions)
    gold = np.array([it.label for it in items])
    out = _out_dir(args)

    pred = pl.ensemble_predict(models, items)
    score = micro_f1(pred, gold)
    spans = [Span(it.char_span.article_id, it.char_span.start, it.char_span.end, int(p))
             for it, p in zip(items, pred)]
    write_spans_tsv(out / "ensemble-predictions.tsv", spans, labels)
    print(f"ensemble of {len(models)} models: micro-F1 {score:.4f}")

    if args.enumerate_all:
        results = pl.enumerate_ensembles(models, items)
        lines = ["members\tmicro_f1"]
        for r in sorted(results, key=lambda r: (-r.score, r.members)):
            lines.append(",".join(str(i) for i in r.members) + f"\t{r.score:.6f}")
        (out / "ensembles.tsv").write_text("".join(l + "\n" for l in lines),
                                           encoding="utf-8")
        print(f"enumerated {len(results)} subsets -> {out / 'ensembles.tsv'}")

    config = _effective(args, models=paths, enumerate=args.enumerate_all)
    pl.append_manifest(out, pl.run_record("ensemble", config, -1, None))
    return 0


def _read_span_tsv(path: str, task: str, techniques: list[str] | None):
    rows = []
    tech_ids = {name: i for i, name in enumerate(techniques)} if techniques else None
    for lineno, row in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not row.strip():
            continue
        parts = row.split("\t")
        try:
            if task == "si":
                if len(parts) != 3:
                    raise ValueError("expected 3 fields")
                rows.append(Span(parts[0], int(parts[1]), int(parts[2])))
            else:
                if len(parts) != 4:
                    raise ValueError("expected 4 fields")
                if tech_ids is None:
                    raise CliError("--techniques is required for tc scoring")
                rows.append(Span(parts[0], int(parts[2]), int(parts[3]),
                                 tech_ids[parts[1]]))
        except (ValueError, KeyError) as exc:
            raise CliError(f"{path}:{lineno}: {exc}") from None
    return rows


def cmd_score(args) -> int:
    out = _out_dir(args)
    techniques = read_techniques(args.techniques) if args.techniques else None
    pred = _read_span_tsv(args.pred, args.task, techniques)
    gold = _read_span_tsv(args.gold, args.task, techniques)
    if args.task == "si":
        score = flc_f1(pred, gold)
        report = {"task": "si", "precision": score.precision, "recall": score.recall,
                  "f1": score.f1, "n_pred": len(pred), "n_gold": len(gold)}
        print(f"FLC-F1 {score.f1:.4f} (P {score.precision:.4f} / R {score.recall:.4f})")
    else:
        key = lambda s: (s.article_id, s.start, s.end)
        pred_by_key = {key(s): s.technique for s in pred}
        missing = [key(g) for g in gold if key(g) not in pred_by_key]
        if missing:
            raise CliError(f"{len(missing)} gold spans have no prediction "
                           f"(first: {missing[0]}); tc scoring needs span-aligned files")
        gold_ids = np.array([g.technique for g in gold])
        pred_ids = np.array([pred_by_key[key(g)] for g in gold])
        f1 = micro_f1(pred_ids, gold_ids)
        cm = confusion_matrix(pred_ids, gold_ids, len(techniques))
        outcomes = span_outcomes(pred, gold, techniques)
        report = {"task": "tc", "micro_f1": f1,
                  "confusion_matrix": cm.tolist(),
                  "outcomes": {name: {"count": c, "fully": fu, "subsequence": su,
                                      "missed": mi}
                               for name, c, fu, su, mi in outcomes.rows()}}
        lines = ["technique\tinstances\tfully_identified\tidentified_subsequence"
                 "\tnot_identified"]
        lines += [f"{name}\t{c}\t{fu:.1f}\t{su:.1f}\t{mi:.1f}"
                  for name, c, fu, su, mi in outcomes.rows()]
        (out / "outcomes.tsv").write_text("".join(l + "\n" for l in lines),
                                          encoding="utf-8")
        print(f"micro-F1 {f1:.4f} over {len(gold)} spans")
    (out / "score.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n",
                                    encoding="utf-8")
    config = _effective(args, task=args.task, pred=args.pred, gold=args.gold)
    pl.append_manifest(out, pl.run_record("score", config, -1, None))
    return 0


def cmd_cv(args) -> int:
    cfg = _load_config(args.config)
    hp = _resolve_hp(args, "tc", cfg)
    enc = _resolve_encoder(cfg, hp)
    train, dev, labels = _tc_inputs(args)
    train_items = pl.build_tc_items(train, hp.max_seq_len)
    dev_items = pl.build_tc_items(dev, hp.max_seq_len)
    opts = pl.TcOptions(reweight=args.reweight, span_cls=args.span_cls)
    scores = pl.cross_validate(train_items, dev_items, labels, opts, hp,
                               k=args.k, seed=args.seed, encoder_cfg=enc)
    out = _out_dir(args)
    mean, std = float(np.mean(scores)), float(np.std(scores))
    report = {"k": args.k, "scores": scores, "mean": mean, "std": std,
              "options": {"reweight": opts.reweight, "span_cls": opts.span_cls}}
    (out / "cv.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n",
                                 encoding="utf-8")
    config = _effective(args, hp, k=args.k, reweight=args.reweight,
                        span_cls=args.span_cls)
    pl.append_manifest(out, pl.run_record("cv", config, args.seed, None))
    print(f"{args.k}-fold micro-F1 {mean:.4f} +/- {std:.4f}")
    return 0


def cmd_analyze(args) -> int:
    out = _out_dir(args)
    articles = read_articles(args.articles)
    specs = ana.parse_feature_file(args.features) if args.features \
        else ana.default_features(args.task)

    if args.task == "si":
        pred = _read_span_tsv(args.pred, "si", None)
        gold = _read_span_tsv(args.gold, "si", None)
        per_article = flc_f1_per_article(pred, gold)
        items, scores = [], []
        for aid in sorted(per_article):
            items.append(ana.AnalysisItem(
                text=articles[aid],
                expected_spans=[(s.start, s.end) for s in gold if s.article_id == aid],
                output_spans=[(s.start, s.end) for s in pred if s.article_id == aid]))
            scores.append(per_article[aid].f1)
    else:
        techniques = read_techniques(args.techniques) if args.techniques else None
        if techniques is None:
            raise CliError("--techniques is required for tc analysis")
        pred = _read_span_tsv(args.pred, "tc", techniques)
        gold = _read_span_tsv(args.gold, "tc", techniques)
        pred_by_key = {(s.article_id, s.start, s.end): s.technique for s in pred}
        items, scores = [], []
        for g in sorted(gold, key=lambda s: (s.article_id, s.start, s.end)):
            if (g.article_id, g.start, g.end) not in pred_by_key:
                raise CliError(f"gold span {(g.article_id, g.start, g.end)} "
                               "has no prediction")
            items.append(ana.AnalysisItem(text=articles[g.article_id],
                                          span=(g.start, g.end)))
            scores.append(1.0 if pred_by_key[(g.article_id, g.start, g.end)]
                          == g.technique else 0.0)

    report = ana.worsening_features(items, scores, specs)
    path = out / f"worsening-{args.task}.tsv"
    ana.write_report(path, report)
    for row in report.rows:
        print(f"{row.name}\tcount={row.count}\tp={row.p_value:.4g}")
    for name in report.skipped:
        print(f"note: {name} skipped (present in none or all items)", file=sys.stderr)
    print(f"report -> {path}")
    config = _effective(args, task=args.task, features=args.features)
    pl.append_manifest(out, pl.run_record("analyze", config, -1, None))
    return 0


_HANDLERS = {
    "gen-synth": cmd_gen_synth,
    "train-si": cmd_train_si,
    "train-tc": cmd_train_tc,
    "self-train": cmd_self_train,
    "annotate": cmd_annotate,
    "ensemble": cmd_ensemble,
    "score": cmd_score,
    "cv": cmd_cv,
    "analyze": cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
