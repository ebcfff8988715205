#!/usr/bin/env python3
"""Walk through the four corpus-cleaning rules on a deliberately messy sample.

Run from the repository root:
    python demos/01_corpus_cleaning.py
"""

from pathlib import Path

from hindilm import (
    Document,
    clean_document,
    clean_text,
    corpus_stats,
    script_profile,
    unique_word_ratio,
    write_documents,
)

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

print("=== Rule 1: content cleanup ===")
for raw in [
    "नमस्ते (टिप्पणी हटेगी) दुनिया",
    "पूरा लेख https://example.com/lekh यहाँ पढ़ें",
    "बहुत   सारे    फालतू  रिक्त स्थान ,  और दंड ।",
]:
    print(f"  {raw!r}\n    -> {clean_text(raw)!r}")

print("\n=== Rule 2: unique-word ratio (< 0.30 is dropped) ===")
for line in ["क ख ग घ", "वाह वाह वाह वाह वाह", "बहुत बहुत बहुत बहुत अच्छा"]:
    ratio = unique_word_ratio(line)
    verdict = "dropped" if ratio < 0.30 else "kept"
    print(f"  {line!r}: ratio {ratio:.2f} -> {verdict}")

print("\n=== Rules 3+4 on a whole document ===")
messy = Document(
    [
        "मुखपृष्ठ",                      # consecutive short lines: navigation junk
        "समाचार",
        "संपर्क",
        "१२३ ॥ ***",                    # only digits/punctuation
        "यह एकमात्र असली वाक्य यहाँ बचेगा।",
    ],
    source_id="demo",
)
cleaned = clean_document(messy)
print(f"  {len(messy.lines)} lines in -> {len(cleaned.lines)} line(s) out: {cleaned.lines}")

print("\n=== Script gate ===")
english = Document(["this paragraph is simply not hindi at all in any way"])
print(f"  English doc with min_devanagari=0.5 -> {clean_document(english)}")
profile = script_profile("मैंने कल facebook पर लेख पढ़ा।")
print(f"  mixed line profile: devanagari={profile.devanagari_frac:.2f} latin={profile.latin_frac:.2f}")

out_path = OUT / "cleaned_demo.txt"
write_documents([cleaned], out_path)
stats = corpus_stats([out_path])
print(f"\nwrote {out_path}")
print(f"stats: {stats.bytes} bytes, {stats.words} words, {stats.lines} lines, {stats.documents} document(s)")
