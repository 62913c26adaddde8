"""Dataset ingestion: shared-task style article dirs and span TSVs.

Layout on disk:
  - one UTF-8 file per article, named ``article<id>.txt``
  - span labels ``article_id<TAB>start<TAB>end`` (span identification)
  - labeled spans ``article_id<TAB>technique<TAB>start<TAB>end`` (classification)
  - technique inventory: one label per line, line index = label id
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .tokens import Span, TokenizedText, tokenize

_ARTICLE_RE = re.compile(r"^article(.+)\.txt$")


@dataclass
class SpanDataset:
    """Articles plus their gold spans; tokenization is computed once."""

    articles: dict[str, str]
    spans: list[Span]
    labels: list[str] | None = None
    tokenized: dict[str, TokenizedText] = field(default_factory=dict)

    def __post_init__(self):
        if not self.tokenized:
            self.tokenized = {aid: tokenize(text) for aid, text in self.articles.items()}

    def spans_for(self, article_id: str) -> list[Span]:
        return [s for s in self.spans if s.article_id == article_id]

    def label_name(self, label_id: int) -> str:
        if self.labels is None:
            raise ValueError("dataset carries no technique inventory")
        return self.labels[label_id]


def read_articles(articles_dir: str | Path) -> dict[str, str]:
    articles: dict[str, str] = {}
    root = Path(articles_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"article directory not found: {root}")
    for path in sorted(root.iterdir()):
        m = _ARTICLE_RE.match(path.name)
        if m:
            articles[m.group(1)] = path.read_text(encoding="utf-8")
    if not articles:
        raise ValueError(f"no article<id>.txt files under {root}")
    return articles


def read_techniques(path: str | Path) -> list[str]:
    labels = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()
              if line.strip()]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate technique names in {path}")
    return labels


def _parse_row(row: str, lineno: int, task: str, techniques: dict[str, int] | None):
    parts = row.rstrip("\n").split("\t")
    try:
        if task == "si":
            if len(parts) != 3:
                raise ValueError("expected 3 tab-separated fields")
            aid, start, end = parts[0], int(parts[1]), int(parts[2])
            technique = None
        else:
            if len(parts) != 4:
                raise ValueError("expected 4 tab-separated fields")
            aid, name, start, end = parts[0], parts[1], int(parts[2]), int(parts[3])
            if techniques is None:
                technique = name  # resolved by the caller once the inventory is known
            else:
                if name not in techniques:
                    raise ValueError(f"unknown technique {name!r}")
                technique = techniques[name]
        if end <= start or start < 0:
            raise ValueError(f"bad offsets ({start}, {end})")
    except ValueError as exc:
        raise ValueError(f"line {lineno}: {exc}") from None
    return aid, start, end, technique


def load_dataset(articles_dir: str | Path, labels_file: str | Path, task: str,
                 techniques_file: str | Path | None = None) -> SpanDataset:
    """Read articles and a span TSV; spans are validated against article lengths."""
    if task not in ("si", "tc"):
        raise ValueError(f"task must be 'si' or 'tc', got {task!r}")
    articles = read_articles(articles_dir)

    labels: list[str] | None = None
    tech_ids: dict[str, int] | None = None
    if task == "tc":
        if techniques_file is not None:
            labels = read_techniques(techniques_file)
            tech_ids = {name: i for i, name in enumerate(labels)}

    raw_rows = []
    for lineno, row in enumerate(Path(labels_file).read_text(encoding="utf-8").splitlines(), 1):
        if not row.strip():
            continue
        raw_rows.append(_parse_row(row, lineno, task, tech_ids))

    if task == "tc" and labels is None:
        labels = sorted({tech for _, _, _, tech in raw_rows})
        name_to_id = {name: i for i, name in enumerate(labels)}
        raw_rows = [(aid, s, e, name_to_id[t]) for aid, s, e, t in raw_rows]

    spans = []
    for aid, start, end, technique in raw_rows:
        if aid not in articles:
            raise ValueError(f"span references unknown article {aid!r}")
        if end > len(articles[aid]):
            raise ValueError(f"span ({start}, {end}) outside article {aid!r} "
                             f"of length {len(articles[aid])}")
        spans.append(Span(aid, start, end, technique))
    return SpanDataset(articles=articles, spans=spans, labels=labels)


def write_articles(out_dir: str | Path, articles: dict[str, str]) -> None:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    for aid, text in sorted(articles.items()):
        (root / f"article{aid}.txt").write_text(text, encoding="utf-8")


def write_spans_tsv(path: str | Path, spans: list[Span],
                    labels: list[str] | None = None) -> None:
    """SI rows when spans are unlabeled, TC rows when a technique inventory is given."""
    lines = []
    for sp in sorted(spans, key=lambda s: (s.article_id, s.start, s.end)):
        if labels is not None and sp.technique is not None:
            lines.append(f"{sp.article_id}\t{labels[sp.technique]}\t{sp.start}\t{sp.end}")
        else:
            lines.append(f"{sp.article_id}\t{sp.start}\t{sp.end}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_techniques(path: str | Path, labels: list[str]) -> None:
    Path(path).write_text("".join(name + "\n" for name in labels), encoding="utf-8")
