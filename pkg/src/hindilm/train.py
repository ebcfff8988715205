"""Causal-LM pre-training: corpus packing, AdamW loop, evaluation.

Documents are encoded, terminated with the end-of-text special, and the
concatenated stream is sliced into non-overlapping context windows. The
loop is fully seeded, checkpoints are written atomically, and a NaN loss
aborts the run while keeping the last good checkpoint on disk.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .bpe import TokenizerModel
from .checkpoint import OptimState, save_checkpoint
from .corpus import Document
from .errors import DataError, NumericError
from .model import ModelConfig, TransformerLM

HELD_OUT_FRACTION = 0.01
METRICS_HEADER = "step\ttrain_loss\teval_loss\teval_acc\tperplexity"


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    batch_size: int = 16
    total_steps: int = 100
    window: int = 1024
    seed: int = 0
    checkpoint_every: int = 100
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 1.0

    def __post_init__(self):
        for name in ("batch_size", "window", "checkpoint_every", "beta1", "beta2", "eps", "grad_clip"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TrainConfig.{name} must be positive")
        if self.learning_rate < 0 or self.total_steps < 0 or self.weight_decay < 0:
            raise ValueError("TrainConfig learning_rate/total_steps/weight_decay must be >= 0")


@dataclass
class EvalReport:
    eval_loss: float
    eval_accuracy: float
    perplexity: float
    train_loss: float = float("nan")


def tokenizer_digest(tokenizer: TokenizerModel) -> str:
    """SHA-256 of the serialized tokenizer; ties checkpoints to their vocab."""
    return hashlib.sha256(tokenizer.serialize().encode("utf-8")).hexdigest()


def pack_corpus(
    tokenizer: TokenizerModel, documents: Iterable[Document], window: int
) -> list[np.ndarray]:
    """Encode documents, join them with end-of-text separators, and slice the
    stream into non-overlapping windows. The trailing partial window is dropped."""
    if window < 2:
        raise ValueError(f"window must be >= 2, got {window}")
    eot = tokenizer.special_id("eot")
    stream: list[int] = []
    for doc in documents:
        stream.extend(tokenizer.encode("\n".join(doc.lines)))
        stream.append(eot)
    if not stream:
        raise DataError("pack_corpus: empty token stream")
    n = len(stream) // window
    flat = np.asarray(stream[: n * window], dtype=np.int64)
    return [flat[i * window:(i + 1) * window] for i in range(n)]


def clm_loss(logits: Tensor, ids: np.ndarray, ignore_id: int | None = None) -> Tensor:
    """Shift-by-one next-token cross entropy over positions 0..t-2."""
    ids = np.asarray(ids, dtype=np.int64)
    t = ids.size
    if t < 2:
        raise ValueError(f"clm_loss needs >= 2 tokens, got {t}")
    # mark the final position (which has no next token) as ignored
    sentinel = -1 if ignore_id is None else ignore_id
    targets = np.concatenate([ids[1:], [sentinel]])
    return ag.cross_entropy_logits(logits, targets, ignore_id=sentinel)


def no_weight_decay(name: str) -> bool:
    """Layer-norm gains/biases and every bias are excluded from weight decay."""
    return name.endswith("_b") or name.endswith("_g")


def init_optim_state(params: dict[str, Tensor]) -> OptimState:
    return OptimState(
        m={k: np.zeros_like(p.data) for k, p in params.items()},
        v={k: np.zeros_like(p.data) for k, p in params.items()},
        step=0,
    )


def global_grad_norm(params: dict[str, Tensor]) -> float:
    total = 0.0
    for name in sorted(params):
        g = params[name].grad
        if g is not None:
            total += float((g.astype(np.float64) ** 2).sum())
    return math.sqrt(total)


def adamw_step(params: dict[str, Tensor], state: OptimState, cfg: TrainConfig) -> None:
    """One decoupled-weight-decay Adam update, in place.

    Gradients are globally norm-clipped first; a non-finite gradient aborts
    the step before any parameter is touched.
    """
    for name in sorted(params):
        g = params[name].grad
        if g is None:
            raise NumericError(f"adamw_step: parameter {name} has no gradient")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"adamw_step: non-finite gradient for {name}; step aborted")

    norm = global_grad_norm(params)
    scale = cfg.grad_clip / norm if norm > cfg.grad_clip else 1.0
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name in sorted(params):
        p = params[name]
        g = p.grad * scale
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        # decay is decoupled and reads the pre-update weight
        if cfg.weight_decay > 0 and not no_weight_decay(name):
            update = update + cfg.weight_decay * p.data
        p.data -= (cfg.learning_rate * update).astype(p.data.dtype)


def batch_loss(model: TransformerLM, batch: Sequence[np.ndarray]) -> Tensor:
    """Mean CLM loss over a batch of id windows (single taped graph)."""
    total = None
    for ids in batch:
        loss = clm_loss(model.forward(ids), ids)
        total = loss if total is None else ag.add(total, loss)
    return ag.mul(total, 1.0 / len(batch))


def evaluate(model: TransformerLM, examples: Sequence[np.ndarray],
             train_loss: float = float("nan")) -> EvalReport:
    """Mean next-token loss, top-1 accuracy, and perplexity over id windows."""
    if not examples:
        raise ValueError("evaluate needs at least one example")
    losses = []
    correct = 0
    total = 0
    for ids in examples:
        logits = model.forward(ids).data
        losses.append(float(clm_loss(Tensor(logits), ids).data))
        pred = logits[:-1].argmax(axis=1)
        correct += int((pred == ids[1:]).sum())
        total += ids.size - 1
    eval_loss = float(np.mean(losses))
    with np.errstate(over="ignore"):
        perplexity = float(np.exp(eval_loss))  # inf for a diverged model
    return EvalReport(
        eval_loss=eval_loss,
        eval_accuracy=correct / total,
        perplexity=perplexity,
        train_loss=train_loss,
    )


def split_held_out(examples: Sequence[np.ndarray]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Final 1% of packed examples (at least one) becomes the held-out split."""
    n_eval = max(1, int(len(examples) * HELD_OUT_FRACTION))
    if n_eval >= len(examples):
        n_eval = 1 if len(examples) > 1 else 0
    cut = len(examples) - n_eval
    return list(examples[:cut]), list(examples[cut:])


def pretrain(
    config: ModelConfig,
    tokenizer: TokenizerModel,
    documents: Sequence[Document],
    train_cfg: TrainConfig,
    checkpoint_path: str | Path | None = None,
    log: Callable[[str], None] | None = None,
) -> tuple[TransformerLM, list[str]]:
    """Seeded CLM pre-training loop.

    Returns the trained model and the metrics log rows (TSV, one per step;
    eval columns filled every checkpoint_every steps). With a checkpoint
    path, a checkpoint is written at step 0, at every evaluation, and at the
    end; a NaN loss raises NumericError and leaves the last good file intact.
    """
    examples = pack_corpus(tokenizer, documents, train_cfg.window)
    if len(examples) < 1:
        raise DataError("corpus too small: no full context window")
    train_set, eval_set = split_held_out(examples)
    if not train_set:
        raise DataError("corpus too small: nothing left to train on after the held-out split")

    model = TransformerLM.init(config, train_cfg.seed)
    state = init_optim_state(model.params)
    digest = tokenizer_digest(tokenizer)
    rng = np.random.default_rng(train_cfg.seed)

    def write_checkpoint(step: int) -> None:
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, model, step, digest, optim=state)

    write_checkpoint(0)
    rows = [METRICS_HEADER]
    order: list[int] = []
    step = 0
    while step < train_cfg.total_steps:
        if not order:
            order = list(rng.permutation(len(train_set)))
        batch_idx = order[: train_cfg.batch_size]
        order = order[train_cfg.batch_size:]
        batch = [train_set[i] for i in batch_idx]

        model.zero_grad()
        loss = batch_loss(model, batch)
        train_loss = float(loss.data)
        if not math.isfinite(train_loss):
            raise NumericError(f"training loss became non-finite at step {step + 1}")
        ag.backward(loss)
        adamw_step(model.params, state, train_cfg)
        step += 1

        if eval_set and step % train_cfg.checkpoint_every == 0:
            report = evaluate(model, eval_set, train_loss=train_loss)
            rows.append(
                f"{step}\t{train_loss!r}\t{report.eval_loss!r}\t{report.eval_accuracy!r}\t{report.perplexity!r}"
            )
            write_checkpoint(step)
        else:
            rows.append(f"{step}\t{train_loss!r}\t\t\t")
        if log is not None:
            log(rows[-1])

    write_checkpoint(step)
    return model, rows
