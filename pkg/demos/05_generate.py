#!/usr/bin/env python3
"""Autoregressive sampling strategies side by side on a memorized pattern:
greedy, temperature, and top-k, all reproducible per seed.

Run from the repository root:
    python demos/05_generate.py
"""

from hindilm import Document, PRESETS, TokenizerModel, TrainConfig, pretrain

tokenizer = TokenizerModel.byte_level()
config = PRESETS["tiny"].with_vocab(tokenizer.vocab_size)

docs = [Document(["abcd efgh " * 30])]
model, _ = pretrain(
    config, tokenizer, docs,
    TrainConfig(learning_rate=1e-2, batch_size=8, total_steps=250, window=16, seed=0,
                checkpoint_every=125),
)

prompt = "abcd e"
print(f"prompt: {prompt!r}\n")
print(f"greedy          : {model.generate(tokenizer, prompt, max_new=12)!r}")
for temp in (0.5, 1.5):
    out = model.generate(tokenizer, prompt, max_new=12, strategy="temperature",
                         temperature=temp, seed=4)
    print(f"temperature {temp:3} : {out!r}")
for k in (2, 20):
    out = model.generate(tokenizer, prompt, max_new=12, strategy="top_k", top_k=k, seed=4)
    print(f"top-k {k:9} : {out!r}")

again = model.generate(tokenizer, prompt, max_new=12, strategy="top_k", top_k=20, seed=4)
print(f"\nsame seed, same output: {again == out}")
