"""Corpus refinement for Devanagari language-model pre-training.

Raw web-crawl text goes through four line-level rules: content cleanup
(bracketed spans, hyperlinks, whitespace and punctuation normalization),
a unique-word-ratio filter, removal of lines that carry no letters, and
removal of runs of consecutive short lines (typically navigation menus).
Documents whose surviving text is not predominantly Devanagari are
dropped, unless the script gate is disabled (bilingual data).

On disk a corpus is UTF-8 plain text with LF line endings; documents are
separated by exactly one blank line.
"""

from __future__ import annotations

import random
import re
import unicodedata
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import DataError

UNIQUE_RATIO_MIN = 0.30

_BRACKET_RES = (
    re.compile(r"\([^()]*\)"),
    re.compile(r"\[[^\[\]]*\]"),
    re.compile(r"\{[^{}]*\}"),
)
_URL_RE = re.compile(r"https?://\S*|(?:(?<=\s)|^)www\.\S*")
_SPACE_RUN_RE = re.compile(r"[ \t]+")
_SPACE_BEFORE_PUNCT_RE = re.compile(r"[ \t]+([।.,!?])")
_PUNCT_NEEDS_SPACE_RE = re.compile(r"([।.,!?])(?=\S)")


@dataclass
class Document:
    """One corpus unit: an ordered list of text lines plus a provenance label."""

    lines: list[str]
    source_id: str = ""


@dataclass
class ScriptProfile:
    """Fractions of non-whitespace codepoints per script class; sums to 1 on non-empty text."""

    devanagari_frac: float = 0.0
    latin_frac: float = 0.0
    digit_frac: float = 0.0
    other_frac: float = 0.0


@dataclass
class CorpusStats:
    bytes: int = 0
    words: int = 0
    lines: int = 0
    documents: int = 0

    def __add__(self, other: "CorpusStats") -> "CorpusStats":
        return CorpusStats(
            self.bytes + other.bytes,
            self.words + other.words,
            self.lines + other.lines,
            self.documents + other.documents,
        )


def _clean_pass(text: str) -> str:
    for bracket_re in _BRACKET_RES:
        while True:
            stripped = bracket_re.sub("", text)
            if stripped == text:
                break
            text = stripped
    text = _URL_RE.sub("", text)
    text = _SPACE_RUN_RE.sub(" ", text)
    text = _SPACE_BEFORE_PUNCT_RE.sub(r"\1", text)
    text = _PUNCT_NEEDS_SPACE_RE.sub(r"\1 ", text)
    return text.strip()


def clean_text(raw: str) -> str:
    """Normalize one piece of text: drop matched-bracket spans and URLs, collapse
    space/tab runs, and normalize spacing around danda/.,!? punctuation.

    Runs to a fixed point, so the function is idempotent even when one rule
    exposes new work for another (e.g. bracket removal revealing a URL).
    """
    for _ in range(32):
        cleaned = _clean_pass(raw)
        if cleaned == raw:
            return cleaned
        raw = cleaned
    return raw


def unique_word_ratio(line: str) -> float:
    """Distinct whitespace-delimited words over total words; 1.0 for empty lines."""
    words = line.split()
    if not words:
        return 1.0
    return len(set(words)) / len(words)


def is_content_free(line: str) -> bool:
    """True when every non-whitespace codepoint is a digit, punctuation, or symbol."""
    for ch in line:
        if ch.isspace():
            continue
        cat = unicodedata.category(ch)
        if cat == "Nd" or cat[0] in ("P", "S"):
            continue
        return False
    return True


def drop_short_line_runs(
    lines: Sequence[str], min_words: int = 4, min_run: int = 2
) -> list[str]:
    """Remove maximal runs of >= min_run consecutive lines that each have fewer
    than min_words words. Isolated short lines survive."""
    if min_run < 1:
        raise ValueError(f"min_run must be >= 1, got {min_run}")
    kept: list[str] = []
    run: list[str] = []
    for line in lines:
        if len(line.split()) < min_words:
            run.append(line)
        else:
            if len(run) < min_run:
                kept.extend(run)
            run = []
            kept.append(line)
    if len(run) < min_run:
        kept.extend(run)
    return kept


def script_profile(text: str) -> ScriptProfile:
    """Classify non-whitespace codepoints into devanagari / latin / digit / other.

    Devanagari digits count as digits, not as Devanagari letters. Empty input
    yields the all-zero profile.
    """
    dev = lat = dig = other = 0
    for ch in text:
        if ch.isspace():
            continue
        cp = ord(ch)
        if 0x30 <= cp <= 0x39 or 0x0966 <= cp <= 0x096F:
            dig += 1
        elif 0x0900 <= cp <= 0x097F:
            dev += 1
        elif (0x41 <= cp <= 0x5A) or (0x61 <= cp <= 0x7A) or (0xC0 <= cp <= 0x24F and ch.isalpha()):
            lat += 1
        else:
            other += 1
    total = dev + lat + dig + other
    if total == 0:
        return ScriptProfile()
    return ScriptProfile(dev / total, lat / total, dig / total, other / total)


def clean_document(doc: Document, min_devanagari: float = 0.5) -> Document | None:
    """Apply the full rule chain to one document.

    Per-line cleanup, then drop empty and content-free lines, then lines with
    a unique-word ratio below 0.30, then short-line runs. Returns None when
    nothing survives or (with min_devanagari > 0) when the surviving text is
    not sufficiently Devanagari.
    """
    lines = [clean_text(line) for line in doc.lines]
    lines = [ln for ln in lines if ln and not is_content_free(ln)]
    lines = [ln for ln in lines if unique_word_ratio(ln) >= UNIQUE_RATIO_MIN]
    lines = drop_short_line_runs(lines)
    if not lines:
        return None
    if min_devanagari > 0:
        profile = script_profile("\n".join(lines))
        if profile.devanagari_frac < min_devanagari:
            return None
    return Document(lines, doc.source_id)


def merge_parallel_pairs(
    pairs: Sequence[tuple[str, str]], seed: int
) -> list[Document]:
    """Turn (hindi, english) sentence pairs into two-line documents whose line
    order is a fair seeded coin flip; identical seeds give identical output."""
    rng = random.Random(seed)
    docs = []
    for i, (hindi, english) in enumerate(pairs):
        lines = [hindi, english] if rng.random() < 0.5 else [english, hindi]
        docs.append(Document(lines, source_id=f"pair-{i}"))
    return docs


def read_documents(path: str | Path, source_id: str = "") -> Iterator[Document]:
    """Yield blank-line-separated documents from a UTF-8 text file."""
    text = _read_utf8(path)
    source_id = source_id or str(path)
    lines: list[str] = []
    for raw_line in text.split("\n"):
        if raw_line.strip() == "":
            if lines:
                yield Document(lines, source_id)
                lines = []
        else:
            lines.append(raw_line)
    if lines:
        yield Document(lines, source_id)


def write_documents(docs: Iterable[Document], path: str | Path) -> int:
    """Write documents separated by exactly one blank line; returns count written."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            if n:
                fh.write("\n")
            for line in doc.lines:
                fh.write(line + "\n")
            n += 1
    return n


def clean_documents(
    docs: Sequence[Document], min_devanagari: float = 0.5, threads: int = 1
) -> list[Document]:
    """Clean a batch of documents, preserving input order.

    Document cleaning is independent per document, so with threads > 1 the
    work fans out over processes; results are merged back in input order and
    are byte-identical to a single-threaded run.
    """
    if threads <= 1 or len(docs) < 2 * threads:
        cleaned = [clean_document(d, min_devanagari) for d in docs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            cleaned = list(
                pool.map(clean_document, docs, [min_devanagari] * len(docs), chunksize=64)
            )
    return [d for d in cleaned if d is not None]


def _read_utf8(path: str | Path) -> str:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: invalid UTF-8 at byte offset {exc.start}") from exc


def _stats_one(path: str | Path) -> CorpusStats:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: invalid UTF-8 at byte offset {exc.start}") from exc
    stats = CorpusStats(bytes=len(raw), words=len(text.split()))
    in_doc = False
    for line in text.split("\n"):
        if line.strip() == "":
            in_doc = False
        else:
            stats.lines += 1
            if not in_doc:
                stats.documents += 1
                in_doc = True
    return stats


def corpus_stats(paths: Sequence[str | Path]) -> CorpusStats:
    """Exact byte/word/line/document counts summed over files.

    Counts are per file and additive, so the result is independent of how the
    file list is partitioned across workers.
    """
    total = CorpusStats()
    for path in paths:
        total = total + _stats_one(path)
    return total
