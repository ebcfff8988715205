"""Byte-level BPE tokenizer: training, encoding, decoding, fertility.

The vocabulary starts from the 256 raw bytes, so any UTF-8 text encodes
and decodes losslessly. Training repeatedly merges the most frequent
adjacent id pair (ties broken by smallest (left, right)) until the target
vocabulary size is reached or no pair occurs at least twice. Eight named
special tokens are appended after the last merge id.

Pre-tokenization splits on whitespace; each chunk keeps its single
preceding space as a leading byte (the first chunk of a line has none),
and every other whitespace codepoint is a chunk of its own. Merges never
cross chunk boundaries.
"""

from __future__ import annotations

import heapq
import re
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Document
from .errors import DataError

FORMAT_HEADER = "HLLM-TOK v1"
NUM_SPECIALS = 8
DEFAULT_SPECIALS = ("eot", "bos", "cls", "sep", "pad", "mask", "unk", "reserved")

_CHUNK_RE = re.compile(r" ?\S+|\s")


class TokenizerModel:
    """Immutable byte-level BPE model: 256 byte tokens, ordered merges, specials."""

    def __init__(
        self,
        merges: Sequence[tuple[int, int, int]],
        specials: Sequence[tuple[int, str]],
        target_vocab: int,
    ):
        self.merges = [tuple(m) for m in merges]
        self.specials = [(int(i), str(n)) for i, n in specials]
        self.target_vocab = int(target_vocab)
        self._validate()
        self._ranks = {(l, r): rank for rank, (l, r, _) in enumerate(self.merges)}
        self._pair_to_id = {(l, r): new for l, r, new in self.merges}
        self._token_bytes = [bytes([i]) for i in range(256)]
        for left, right, _ in self.merges:
            self._token_bytes.append(self._token_bytes[left] + self._token_bytes[right])
        self._special_names = {i: n for i, n in self.specials}
        self._special_ids = {n: i for i, n in self.specials}
        self._encode_cache: dict[bytes, tuple[int, ...]] = {}

    def _validate(self) -> None:
        next_id = 256
        for left, right, new_id in self.merges:
            if new_id != next_id:
                raise DataError(f"merge ids must be contiguous from 256; got {new_id}, expected {next_id}")
            if not (0 <= left < new_id and 0 <= right < new_id):
                raise DataError(f"merge ({left},{right})->{new_id} references an undefined id")
            next_id += 1
        if len(self.specials) != NUM_SPECIALS:
            raise DataError(f"expected {NUM_SPECIALS} special tokens, got {len(self.specials)}")
        names = set()
        for sid, name in self.specials:
            if sid != next_id:
                raise DataError(f"special id {sid} out of sequence; expected {next_id}")
            if not name or any(ch.isspace() for ch in name):
                raise DataError(f"bad special token name {name!r}")
            if name in names:
                raise DataError(f"duplicate special token name {name!r}")
            names.add(name)
            next_id += 1

    @classmethod
    def byte_level(cls, specials: Sequence[str] = DEFAULT_SPECIALS) -> "TokenizerModel":
        """Zero-merge model: plain bytes plus the special tokens."""
        return cls([], [(256 + i, n) for i, n in enumerate(specials)], 256)

    @property
    def vocab_size(self) -> int:
        return 256 + len(self.merges) + len(self.specials)

    def special_id(self, name: str) -> int:
        if name not in self._special_ids:
            raise DataError(f"tokenizer has no special token named {name!r}")
        return self._special_ids[name]

    def is_special(self, token_id: int) -> bool:
        return token_id in self._special_names

    def _encode_chunk(self, chunk: bytes) -> tuple[int, ...]:
        cached = self._encode_cache.get(chunk)
        if cached is not None:
            return cached
        word = list(chunk)
        while len(word) > 1:
            best_rank = None
            best_pair = None
            for pair in zip(word, word[1:]):
                rank = self._ranks.get(pair)
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_pair = pair
            if best_pair is None:
                break
            word = _apply_merge(word, best_pair, self._pair_to_id[best_pair])
        ids = tuple(word)
        self._encode_cache[chunk] = ids
        return ids

    def encode(self, text: str) -> list[int]:
        """Encode UTF-8 text to token ids. Special ids never appear in the output."""
        ids: list[int] = []
        for chunk in _CHUNK_RE.findall(text):
            ids.extend(self._encode_chunk(chunk.encode("utf-8")))
        return ids

    def decode(self, ids: Sequence[int], allow_specials: bool = False, errors: str = "strict") -> str:
        """Invert encode. Special ids raise unless allow_specials renders their
        names; errors="replace" substitutes U+FFFD for invalid byte sequences
        (sampling from a raw model can split UTF-8 sequences mid-character)."""
        pieces: list[bytes] = []
        for i, token_id in enumerate(ids):
            token_id = int(token_id)
            if token_id in self._special_names:
                if not allow_specials:
                    raise DataError(
                        f"special token id {token_id} ({self._special_names[token_id]}) at position {i}"
                    )
                pieces.append(self._special_names[token_id].encode("utf-8"))
            elif 0 <= token_id < 256 + len(self.merges):
                pieces.append(self._token_bytes[token_id])
            else:
                raise DataError(f"token id {token_id} out of range (vocab {self.vocab_size})")
        raw = b"".join(pieces)
        try:
            return raw.decode("utf-8", errors=errors)
        except UnicodeDecodeError as exc:
            raise DataError(f"decoded bytes are not valid UTF-8 at offset {exc.start}") from exc

    def fertility(self, text: str) -> float:
        """Average number of tokens per whitespace-delimited word."""
        words = len(text.split())
        if words == 0:
            raise DataError("fertility needs at least one word")
        return len(self.encode(text)) / words

    def serialize(self) -> str:
        lines = [FORMAT_HEADER, f"target_vocab {self.target_vocab}"]
        for left, right, new_id in self.merges:
            lines.append(f"M {left} {right} {new_id}")
        for sid, name in self.specials:
            lines.append(f"S {sid} {name}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path: str | Path) -> "TokenizerModel":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read tokenizer {path}: {exc}") from exc
        except UnicodeDecodeError as exc:
            raise DataError(f"{path}: tokenizer file is not UTF-8 ({exc})") from exc
        return cls.loads(text, origin=str(path))

    @classmethod
    def loads(cls, text: str, origin: str = "<string>") -> "TokenizerModel":
        lines = text.splitlines()
        if not lines or lines[0] != FORMAT_HEADER:
            raise DataError(f"{origin}:1: expected header {FORMAT_HEADER!r}")
        if len(lines) < 2 or not lines[1].startswith("target_vocab "):
            raise DataError(f"{origin}:2: expected 'target_vocab <n>'")
        try:
            target_vocab = int(lines[1].split(" ", 1)[1])
        except ValueError as exc:
            raise DataError(f"{origin}:2: bad target_vocab value") from exc
        merges: list[tuple[int, int, int]] = []
        specials: list[tuple[int, str]] = []
        for lineno, line in enumerate(lines[2:], start=3):
            fields = line.split(" ")
            if fields[0] == "M" and len(fields) == 4:
                if specials:
                    raise DataError(f"{origin}:{lineno}: merge after special token lines")
                try:
                    merges.append((int(fields[1]), int(fields[2]), int(fields[3])))
                except ValueError as exc:
                    raise DataError(f"{origin}:{lineno}: bad merge line {line!r}") from exc
            elif fields[0] == "S" and len(fields) == 3:
                try:
                    specials.append((int(fields[1]), fields[2]))
                except ValueError as exc:
                    raise DataError(f"{origin}:{lineno}: bad special line {line!r}") from exc
            else:
                raise DataError(f"{origin}:{lineno}: malformed line {line!r}")
        if len(specials) != NUM_SPECIALS:
            raise DataError(
                f"{origin}: truncated model: {len(specials)} special tokens, expected {NUM_SPECIALS}"
            )
        try:
            return cls(merges, specials, target_vocab)
        except DataError as exc:
            raise DataError(f"{origin}: {exc}") from exc


def _apply_merge(word: Sequence[int], pair: tuple[int, int], new_id: int) -> list[int]:
    out: list[int] = []
    i = 0
    n = len(word)
    while i < n:
        if i + 1 < n and word[i] == pair[0] and word[i + 1] == pair[1]:
            out.append(new_id)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return out


def _iter_lines(corpus: Iterable) -> Iterable[str]:
    for item in corpus:
        if isinstance(item, Document):
            yield from item.lines
        else:
            yield item


def train_bpe(
    corpus: Iterable,
    target_vocab: int,
    specials: Sequence[str] = DEFAULT_SPECIALS,
) -> TokenizerModel:
    """Train a byte-level BPE model on documents or raw text lines.

    target_vocab counts the 256 base bytes, so the number of merges learned is
    at most target_vocab - 256; the specials are appended on top of that.
    Deterministic: pair counting is exact and ties take the smallest (left,
    right) pair, so identical inputs give identical merge lists.
    """
    if target_vocab < 257:
        raise DataError(f"target_vocab must be >= 257, got {target_vocab}")
    if len(specials) != NUM_SPECIALS:
        raise DataError(f"expected {NUM_SPECIALS} special token names, got {len(specials)}")

    chunk_counts: Counter[bytes] = Counter()
    for line in _iter_lines(corpus):
        for chunk in _CHUNK_RE.findall(line):
            chunk_counts[chunk.encode("utf-8")] += 1
    if not chunk_counts:
        raise DataError("empty corpus")

    words: list[list[int]] = []
    counts: list[int] = []
    for chunk, count in chunk_counts.items():
        words.append(list(chunk))
        counts.append(count)

    pair_counts: dict[tuple[int, int], int] = defaultdict(int)
    pair_words: dict[tuple[int, int], set[int]] = defaultdict(set)
    for wi, word in enumerate(words):
        c = counts[wi]
        for pair in zip(word, word[1:]):
            pair_counts[pair] += c
            pair_words[pair].add(wi)

    # Lazy max-heap; entries are (-count, pair) so ties pop as smallest pair.
    heap = [(-count, pair) for pair, count in pair_counts.items()]
    heapq.heapify(heap)

    merges: list[tuple[int, int, int]] = []
    max_merges = target_vocab - 256
    while len(merges) < max_merges and heap:
        best = None
        while heap:
            neg_count, pair = heapq.heappop(heap)
            current = pair_counts.get(pair, 0)
            if current < 2:
                continue
            if current != -neg_count:
                heapq.heappush(heap, (-current, pair))
                continue
            best = pair
            break
        if best is None:
            break
        new_id = 256 + len(merges)
        merges.append((best[0], best[1], new_id))

        touched: set[tuple[int, int]] = set()
        for wi in sorted(pair_words.pop(best, ())):
            word = words[wi]
            c = counts[wi]
            new_word = _apply_merge(word, best, new_id)
            for pair in zip(word, word[1:]):
                pair_counts[pair] -= c
                touched.add(pair)
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                pair_words[pair].discard(wi)
            for pair in zip(new_word, new_word[1:]):
                pair_counts[pair] += c
                touched.add(pair)
                pair_words[pair].add(wi)
            words[wi] = new_word
        for pair in touched:
            count = pair_counts.get(pair, 0)
            if count >= 2:
                heapq.heappush(heap, (-count, pair))

    special_base = 256 + len(merges)
    return TokenizerModel(
        merges, [(special_base + i, n) for i, n in enumerate(specials)], target_vocab
    )
