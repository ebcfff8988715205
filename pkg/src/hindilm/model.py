"""Decoder-only, pre-norm transformer LM (GPT-2 family).

Learned absolute position embeddings, causal self-attention, 4x GELU MLP,
and a weight-tied output head by default. Presets cover the two published
model shapes plus a tiny configuration for tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .bpe import TokenizerModel

INIT_STD = 0.02
ATTN_MASK_VALUE = -1e9


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int
    layers: int
    heads: int
    n_ctx: int
    tie_output: bool = True

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.n_ctx < 1 or self.vocab_size < 1:
            raise ValueError("n_ctx and vocab_size must be >= 1")

    def with_vocab(self, vocab_size: int) -> "ModelConfig":
        return replace(self, vocab_size=vocab_size)


PRESETS = {
    "small": ModelConfig(vocab_size=50008, embed_dim=768, layers=12, heads=12, n_ctx=1024),
    "medium": ModelConfig(vocab_size=50008, embed_dim=1024, layers=24, heads=16, n_ctx=1024),
    "tiny": ModelConfig(vocab_size=256, embed_dim=8, layers=1, heads=2, n_ctx=16),
}


def count_params(config: ModelConfig) -> int:
    """Closed-form trainable-parameter count.

    V*d + n_ctx*d + L*(12d^2 + 13d) + 2d; an untied output head adds V*d.
    At the canonical GPT-2 vocabulary of 50257 this gives 124,439,808 for
    the small shape and 354,823,168 for the medium one.
    """
    v, d, l = config.vocab_size, config.embed_dim, config.layers
    total = v * d + config.n_ctx * d + l * (12 * d * d + 13 * d) + 2 * d
    if not config.tie_output:
        total += v * d
    return total


def init_params(config: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Fresh parameter set: Normal(0, 0.02) weights, residual projections scaled
    by 1/sqrt(2L), zero biases, unit layer-norm gains. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    d, l = config.embed_dim, config.layers
    resid_std = INIT_STD / math.sqrt(2 * l)

    def normal(std, *shape):
        return Tensor(rng.normal(0.0, std, shape).astype(np.float32), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape, dtype=np.float32), requires_grad=True)

    params: dict[str, Tensor] = {
        "wte": normal(INIT_STD, config.vocab_size, d),
        "wpe": normal(INIT_STD, config.n_ctx, d),
    }
    for i in range(l):
        p = f"h{i}."
        params[p + "ln1_g"] = ones(d)
        params[p + "ln1_b"] = zeros(d)
        params[p + "qkv_w"] = normal(INIT_STD, d, 3 * d)
        params[p + "qkv_b"] = zeros(3 * d)
        params[p + "proj_w"] = normal(resid_std, d, d)
        params[p + "proj_b"] = zeros(d)
        params[p + "ln2_g"] = ones(d)
        params[p + "ln2_b"] = zeros(d)
        params[p + "mlp_up_w"] = normal(INIT_STD, d, 4 * d)
        params[p + "mlp_up_b"] = zeros(4 * d)
        params[p + "mlp_down_w"] = normal(resid_std, 4 * d, d)
        params[p + "mlp_down_b"] = zeros(d)
    params["ln_f_g"] = ones(d)
    params["ln_f_b"] = zeros(d)
    if not config.tie_output:
        params["lm_head"] = normal(INIT_STD, d, config.vocab_size)
    return params


def _causal_mask(t: int, dtype) -> Tensor:
    mask = np.triu(np.full((t, t), ATTN_MASK_VALUE, dtype=dtype), k=1)
    return Tensor(mask)


class TransformerLM:
    """Config plus parameter store; forward passes are pure functions of both."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "TransformerLM":
        return cls(config, init_params(config, seed))

    def param_elements(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def _check_ids(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size < 1:
            raise ValueError(f"ids must be a non-empty 1-d sequence, got shape {ids.shape}")
        if ids.size > self.config.n_ctx:
            raise ValueError(f"sequence of {ids.size} tokens exceeds context window {self.config.n_ctx}")
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise ValueError(f"token id out of range for vocab {self.config.vocab_size}")
        return ids

    def _attention(self, x: Tensor, layer: str, t: int, att_trace: list | None = None) -> Tensor:
        cfg = self.config
        d, h = cfg.embed_dim, cfg.heads
        hd = d // h
        p = self.params
        qkv = ag.add(ag.matmul(x, p[layer + "qkv_w"]), p[layer + "qkv_b"])
        heads = []
        for tensor in (ag.slice_last(qkv, 0, d), ag.slice_last(qkv, d, 2 * d), ag.slice_last(qkv, 2 * d, 3 * d)):
            heads.append(ag.transpose(ag.reshape(tensor, (t, h, hd)), 0, 1))  # [h, t, hd]
        q, k, v = heads
        scores = ag.mul(ag.matmul(q, ag.transpose(k, 1, 2)), 1.0 / math.sqrt(hd))
        scores = ag.add(scores, _causal_mask(t, scores.data.dtype))
        att = ag.softmax_rows(scores)
        if att_trace is not None:
            att_trace.append(att.data.copy())
        ctx = ag.reshape(ag.transpose(ag.matmul(att, v), 0, 1), (t, d))
        return ag.add(ag.matmul(ctx, p[layer + "proj_w"]), p[layer + "proj_b"])

    def hidden_states(self, ids, att_trace: list | None = None) -> Tensor:
        """Final-layer-norm output, shape [t, embed_dim]."""
        ids = self._check_ids(ids)
        t = ids.size
        p = self.params
        x = ag.add(
            ag.embedding_lookup(p["wte"], ids),
            ag.embedding_lookup(p["wpe"], np.arange(t)),
        )
        for i in range(self.config.layers):
            layer = f"h{i}."
            normed = ag.layer_norm(x, p[layer + "ln1_g"], p[layer + "ln1_b"])
            x = ag.add(x, self._attention(normed, layer, t, att_trace))
            normed = ag.layer_norm(x, p[layer + "ln2_g"], p[layer + "ln2_b"])
            up = ag.gelu(ag.add(ag.matmul(normed, p[layer + "mlp_up_w"]), p[layer + "mlp_up_b"]))
            x = ag.add(x, ag.add(ag.matmul(up, p[layer + "mlp_down_w"]), p[layer + "mlp_down_b"]))
        return ag.layer_norm(x, p["ln_f_g"], p["ln_f_b"])

    def attention_weights(self, ids) -> list[np.ndarray]:
        """Per-layer attention matrices [heads, t, t]; inspection only."""
        trace: list[np.ndarray] = []
        self.hidden_states(ids, att_trace=trace)
        return trace

    def forward(self, ids) -> Tensor:
        """Next-token logits, shape [t, vocab_size]; position j sees only ids[0..j]."""
        hidden = self.hidden_states(ids)
        if self.config.tie_output:
            return ag.matmul(hidden, ag.transpose(self.params["wte"]))
        return ag.matmul(hidden, self.params["lm_head"])

    def generate(
        self,
        tokenizer: TokenizerModel,
        prompt: str,
        max_new: int,
        strategy: str = "greedy",
        temperature: float = 1.0,
        top_k: int = 1,
        seed: int = 0,
    ) -> str:
        """Autoregressive continuation of prompt.

        strategy is one of greedy (argmax, lowest-id ties), temperature
        (sample from softmax(logits/temperature)), or top_k (sample among the
        k best logits). Stops after max_new tokens or at the end-of-text
        special. Overlong contexts slide, keeping the latest n_ctx - 1 tokens.
        """
        if strategy not in ("greedy", "temperature", "top_k"):
            raise ValueError(f"unknown strategy {strategy!r}")
        ids = list(tokenizer.encode(prompt))
        if not ids:
            try:
                ids = [tokenizer.special_id("bos")]
            except Exception:
                raise ValueError("empty prompt and tokenizer has no bos token") from None
        window = self.config.n_ctx - 1
        if len(ids) > window:
            raise ValueError(f"prompt of {len(ids)} tokens exceeds n_ctx - 1 = {window}")
        try:
            eot = tokenizer.special_id("eot")
        except Exception:
            eot = None
        rng = np.random.default_rng(seed)

        for _ in range(max_new):
            logits = self.forward(np.asarray(ids[-window:], dtype=np.int64)).data[-1]
            next_id = _pick_token(logits, strategy, temperature, top_k, rng)
            if eot is not None and next_id == eot:
                break
            ids.append(next_id)
        plain = [i for i in ids if not tokenizer.is_special(i)]
        return tokenizer.decode(plain, errors="replace")


def _pick_token(logits: np.ndarray, strategy: str, temperature: float, top_k: int, rng) -> int:
    if strategy == "greedy":
        return int(np.argmax(logits))
    logits = logits.astype(np.float64)
    if strategy == "temperature":
        if temperature <= 0:
            raise ValueError("temperature must be > 0")
        scaled = logits / temperature
        probs = _stable_softmax(scaled)
        return int(rng.choice(logits.size, p=probs))
    # top_k: order by descending logit, ascending id, keep the k best
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    order = np.lexsort((np.arange(logits.size), -logits))
    kept = order[: min(top_k, logits.size)]
    probs = _stable_softmax(logits[kept])
    return int(kept[rng.choice(kept.size, p=probs)])


def _stable_softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    p = e / e.sum()
    # guard against float drift so rng.choice accepts the distribution
    return p / p.sum()
