#!/usr/bin/env python3
"""Train a small byte-level BPE tokenizer and compare its fertility (tokens
per word) against the raw byte baseline, the whole point of a
Devanagari-specific vocabulary.

Run from the repository root:
    python demos/02_tokenizer.py
"""

from pathlib import Path

import numpy as np

from hindilm import TokenizerModel, train_bpe

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

CONSONANTS = [chr(c) for c in range(0x0915, 0x093A)]
VOWEL_SIGNS = [chr(c) for c in range(0x093E, 0x094D)]


def synthetic_text(rng, target_bytes):
    """Zipf-weighted sentences over invented Devanagari-looking words."""
    vocab = []
    for _ in range(2000):
        parts = []
        for _ in range(int(rng.integers(1, 5))):
            parts.append(rng.choice(CONSONANTS))
            if rng.random() < 0.8:
                parts.append(rng.choice(VOWEL_SIGNS))
        vocab.append("".join(parts))
    ranks = 1.0 / (1 + np.arange(len(vocab)))
    probs = ranks / ranks.sum()
    lines, size = [], 0
    while size < target_bytes:
        idx = rng.choice(len(vocab), size=int(rng.integers(5, 14)), p=probs)
        line = " ".join(vocab[i] for i in idx) + "।"
        lines.append(line)
        size += len(line.encode("utf-8")) + 1
    return lines


rng = np.random.default_rng(7)
lines = synthetic_text(rng, target_bytes=200_000)
train_lines, held_lines = lines[: len(lines) // 2], lines[len(lines) // 2 :]

print(f"training corpus: {len(chr(10).join(train_lines).encode()) / 1e3:.0f} KB synthetic Devanagari")
model = train_bpe(train_lines, target_vocab=2048)
print(f"vocabulary: {model.vocab_size} ({len(model.merges)} merges + 256 bytes + 8 specials)")

sample = held_lines[0]
ids = model.encode(sample)
print(f"\nsample line ({len(sample.split())} words): {sample[:60]}...")
print(f"encodes to {len(ids)} tokens; roundtrip ok: {model.decode(ids) == sample}")

held_text = "\n".join(held_lines)
byte_baseline = TokenizerModel.byte_level()
print("\nheld-out fertility (tokens per word):")
print(f"  byte baseline : {byte_baseline.fertility(held_text):6.2f}")
print(f"  trained BPE   : {model.fertility(held_text):6.2f}")

tok_path = OUT / "demo_tokenizer.txt"
model.save(tok_path)
reloaded = TokenizerModel.load(tok_path)
print(f"\nsaved to {tok_path}; reload identical: {reloaded.serialize() == model.serialize()}")
