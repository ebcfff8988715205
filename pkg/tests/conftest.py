import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hindilm.bpe import TokenizerModel
from hindilm.model import PRESETS


@pytest.fixture(scope="session")
def byte_tokenizer():
    return TokenizerModel.byte_level()


@pytest.fixture(scope="session")
def tiny_config(byte_tokenizer):
    # tiny preset widened so the 8 special ids are embeddable
    return PRESETS["tiny"].with_vocab(byte_tokenizer.vocab_size)


def random_utf8_strings(seed, count):
    """Mixed-script fuzz strings: Devanagari, ASCII, emoji, whitespace, brackets."""
    rng = np.random.default_rng(seed)
    pools = [
        [chr(c) for c in range(0x0900, 0x0980)],          # Devanagari incl. digits/danda
        [chr(c) for c in range(0x20, 0x7F)],               # printable ASCII
        list("  \t\n "),                              # whitespace variants
        ["\U0001F600", "\U0001F680", "₹", "ॐ"],  # emoji / symbols
        list("()[]{}।.,!?"),
    ]
    weights = np.array([0.45, 0.3, 0.1, 0.05, 0.1])
    out = []
    for _ in range(count):
        n = int(rng.integers(0, 40))
        chars = []
        for _ in range(n):
            pool = pools[int(rng.choice(len(pools), p=weights))]
            chars.append(pool[int(rng.integers(0, len(pool)))])
        out.append("".join(chars))
    return out
