"""Supervised fine-tuning and task evaluation.

A pre-trained checkpoint gets a small linear head on the hidden state at
the trailing cls position. Classification and sentence-pair tasks use
cross entropy over head logits; multiple choice scores each of the four
(context, candidate) sequences with a scalar head and softmaxes over the
scores; translation continues causal-LM training on "source sep target"
sequences with the loss masked to the target span. The whole model stays
unfrozen.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .bpe import TokenizerModel
from .checkpoint import Checkpoint, OptimState
from .errors import DataError
from .model import INIT_STD, TransformerLM
from .train import TrainConfig, adamw_step, clm_loss, init_optim_state, tokenizer_digest

TASK_KINDS = ("classification", "pair", "multiple_choice", "translation")
NUM_CHOICES = 4
HEAD_WEIGHT = "head_w"
HEAD_BIAS = "head_b"
IGNORE_ID = -100
SCORE_LABELS = ("Excellent", "Good", "Understandable", "Barely understandable", "Incomprehensible")


@dataclass
class TaskSpec:
    kind: str
    num_classes: int = 2
    learning_rate: float = 5e-6
    epochs: int = 1
    seed: int = 0
    truncation: str = "front"

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind in ("classification", "pair") and self.num_classes < 2:
            raise ValueError("classification tasks need num_classes >= 2")
        if self.truncation != "front":
            raise ValueError("only front truncation is supported")


@dataclass
class ClassificationExample:
    text: str
    label: int
    text_b: str | None = None


@dataclass
class ChoiceExample:
    context: str
    candidates: tuple[str, str, str, str]
    answer: int


@dataclass
class TranslationExample:
    source: str
    target: str
    direction: str


@dataclass
class MetricsReport:
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray  # confusion[true][pred]


@dataclass
class HumanEvalDistribution:
    """Fractions for quality scores 4..0 plus their mean."""

    fractions: list[float]
    mean: float


def _truncate_front(segments: list[list[int]], budget: int) -> list[list[int]]:
    """Drop tokens from the front of the earliest non-empty segment until the
    combined length fits the budget."""
    excess = sum(len(s) for s in segments) - budget
    for seg in segments:
        if excess <= 0:
            break
        cut = min(excess, len(seg))
        del seg[:cut]
        excess -= cut
    return segments


def encode_for_task(tokenizer: TokenizerModel, example, n_ctx: int):
    """Token layout per task kind.

    classification: bos text cls; pair: bos a sep b cls; multiple choice:
    one sequence per candidate, bos context sep candidate cls. Overlong text
    is truncated from the front so the trailing cls always survives.
    """
    bos = tokenizer.special_id("bos")
    cls = tokenizer.special_id("cls")
    sep = tokenizer.special_id("sep")
    if isinstance(example, ClassificationExample):
        if example.text_b is None:
            text = _truncate_front([tokenizer.encode(example.text)], n_ctx - 2)
            return [bos] + text[0] + [cls]
        a, b = _truncate_front(
            [tokenizer.encode(example.text), tokenizer.encode(example.text_b)], n_ctx - 3
        )
        return [bos] + a + [sep] + b + [cls]
    if isinstance(example, ChoiceExample):
        sequences = []
        for cand in example.candidates:
            ctx, c = _truncate_front(
                [tokenizer.encode(example.context), tokenizer.encode(cand)], n_ctx - 3
            )
            sequences.append([bos] + ctx + [sep] + c + [cls])
        return sequences
    raise TypeError(f"cannot encode {type(example).__name__} with encode_for_task")


def encode_translation(tokenizer: TokenizerModel, example: TranslationExample, n_ctx: int):
    """Sequence "source sep target eot" plus the per-position loss mask targets."""
    sep = tokenizer.special_id("sep")
    eot = tokenizer.special_id("eot")
    src, tgt = _truncate_front(
        [tokenizer.encode(example.source), tokenizer.encode(example.target)], n_ctx - 2
    )
    ids = src + [sep] + tgt + [eot]
    # predictions are scored only where the next token lies in the target span
    targets = np.full(len(ids), IGNORE_ID, dtype=np.int64)
    tgt_start = len(src) + 1
    targets[tgt_start - 1:len(ids) - 1] = ids[tgt_start:]
    return np.asarray(ids, dtype=np.int64), targets


def attach_head(model: TransformerLM, num_outputs: int, seed: int) -> TransformerLM:
    """Add a [d, num_outputs] linear head (Normal(0, 0.02) weights, zero bias).
    Base weights are shared, not copied."""
    rng = np.random.default_rng(seed)
    d = model.config.embed_dim
    params = dict(model.params)
    params[HEAD_WEIGHT] = Tensor(
        rng.normal(0.0, INIT_STD, (d, num_outputs)).astype(np.float32), requires_grad=True
    )
    params[HEAD_BIAS] = Tensor(np.zeros(num_outputs, dtype=np.float32), requires_grad=True)
    return TransformerLM(model.config, params)


def _cls_logits(model: TransformerLM, ids: Sequence[int]) -> Tensor:
    """Head logits at the trailing cls position, shape [1, num_outputs]."""
    hidden = model.hidden_states(np.asarray(ids, dtype=np.int64))
    state = ag.embedding_lookup(hidden, [len(ids) - 1])
    return ag.add(ag.matmul(state, model.params[HEAD_WEIGHT]), model.params[HEAD_BIAS])


def choice_scores(model: TransformerLM, tokenizer: TokenizerModel, example: ChoiceExample) -> Tensor:
    """Scalar score per candidate sequence, shape [1, 4]."""
    scores = [ _cls_logits(model, seq) for seq in encode_for_task(tokenizer, example, model.config.n_ctx) ]
    return ag.reshape(ag.concat_rows(scores), (1, NUM_CHOICES))


def task_loss(model: TransformerLM, tokenizer: TokenizerModel, task: TaskSpec, example) -> Tensor:
    """Scalar training loss for one labeled example."""
    if task.kind in ("classification", "pair"):
        ids = encode_for_task(tokenizer, example, model.config.n_ctx)
        return ag.cross_entropy_logits(_cls_logits(model, ids), [example.label])
    if task.kind == "multiple_choice":
        return ag.cross_entropy_logits(choice_scores(model, tokenizer, example), [example.answer])
    ids, targets = encode_translation(tokenizer, example, model.config.n_ctx)
    return ag.cross_entropy_logits(model.forward(ids), targets, ignore_id=IGNORE_ID)


def finetune(
    checkpoint: Checkpoint,
    tokenizer: TokenizerModel,
    task: TaskSpec,
    examples: Sequence,
) -> TransformerLM:
    """Fine-tune the full model (plus a fresh head for scored tasks).

    The checkpoint must have been trained with the same tokenizer (digest
    check). One optimizer step per example, seeded shuffling per epoch.
    """
    if not examples:
        raise DataError("finetune: empty training set")
    if checkpoint.tokenizer_digest and checkpoint.tokenizer_digest != tokenizer_digest(tokenizer):
        raise DataError("finetune: tokenizer does not match the checkpoint's tokenizer digest")
    # train on a copy; the caller's checkpoint stays pristine
    params = {k: Tensor(p.data.copy(), requires_grad=True) for k, p in checkpoint.params.items()}
    model = TransformerLM(checkpoint.config, params)
    if task.kind in ("classification", "pair"):
        model = attach_head(model, task.num_classes, task.seed)
    elif task.kind == "multiple_choice":
        model = attach_head(model, 1, task.seed)
    opt_cfg = TrainConfig(learning_rate=task.learning_rate, batch_size=1, total_steps=0)
    state = init_optim_state(model.params)
    rng = random.Random(task.seed)
    for _ in range(task.epochs):
        order = list(range(len(examples)))
        rng.shuffle(order)
        for idx in order:
            finetune_step(model, tokenizer, task, examples[idx], state, opt_cfg)
    return model


def finetune_step(
    model: TransformerLM,
    tokenizer: TokenizerModel,
    task: TaskSpec,
    example,
    state: OptimState,
    opt_cfg: TrainConfig,
) -> float:
    """One optimizer step on one example; returns the loss value."""
    model.zero_grad()
    loss = task_loss(model, tokenizer, task, example)
    ag.backward(loss)
    adamw_step(model.params, state, opt_cfg)
    return float(loss.data)


def predict_class(model: TransformerLM, tokenizer: TokenizerModel, example) -> int:
    ids = encode_for_task(tokenizer, example, model.config.n_ctx)
    return int(np.argmax(_cls_logits(model, ids).data[0]))


def eval_classification(
    model: TransformerLM,
    tokenizer: TokenizerModel,
    examples: Sequence[ClassificationExample],
    num_classes: int,
) -> MetricsReport:
    """Accuracy, per-class and macro P/R/F1 from the test-set confusion matrix."""
    if not examples:
        raise ValueError("eval_classification needs at least one example")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for ex in examples:
        confusion[ex.label][predict_class(model, tokenizer, ex)] += 1
    return metrics_from_confusion(confusion)


def metrics_from_confusion(confusion: np.ndarray) -> MetricsReport:
    """P/R/F1 per class (0 for classes never predicted / never seen) and macro means."""
    confusion = np.asarray(confusion)
    precision, recall, f1 = [], [], []
    for c in range(confusion.shape[0]):
        tp = float(confusion[c, c])
        pred = float(confusion[:, c].sum())
        true = float(confusion[c, :].sum())
        p = tp / pred if pred > 0 else 0.0
        r = tp / true if true > 0 else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
    return MetricsReport(
        accuracy=float(np.trace(confusion) / confusion.sum()),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(np.mean(precision)),
        macro_recall=float(np.mean(recall)),
        macro_f1=float(np.mean(f1)),
        confusion=confusion,
    )


def eval_multiple_choice(
    model: TransformerLM, tokenizer: TokenizerModel, examples: Sequence[ChoiceExample]
) -> float:
    """Fraction of items whose best-scoring candidate is the answer; ties take
    the lowest candidate index."""
    if not examples:
        raise ValueError("eval_multiple_choice needs at least one example")
    correct = 0
    for ex in examples:
        scores = choice_scores(model, tokenizer, ex).data[0]
        correct += int(np.argmax(scores)) == ex.answer
    return correct / len(examples)


def aggregate_human_eval(ratings=None, distribution=None) -> HumanEvalDistribution:
    """Normalize translation-quality ratings into a score distribution and mean.

    Pass either ratings (integers in 0..4, one per judged item) or
    distribution (five weights for scores 4 down to 0: counts, fractions,
    or percentages).
    """
    if (ratings is None) == (distribution is None):
        raise ValueError("pass exactly one of ratings or distribution")
    if ratings is not None:
        weights = [0.0] * 5
        for r in ratings:
            if float(r) != int(r) or not 0 <= int(r) <= 4:
                raise DataError(f"rating {r!r} outside 0..4")
            weights[4 - int(r)] += 1.0
    else:
        weights = [float(w) for w in distribution]
        if len(weights) != 5:
            raise DataError(f"distribution needs 5 weights (scores 4..0), got {len(weights)}")
        if any(w < 0 for w in weights):
            raise DataError("distribution weights must be non-negative")
    total = sum(weights)
    if total <= 0:
        raise DataError("no ratings to aggregate")
    fractions = [w / total for w in weights]
    mean = sum(score * frac for score, frac in zip((4, 3, 2, 1, 0), fractions))
    return HumanEvalDistribution(fractions=fractions, mean=mean)


def load_task_data(path: str | Path, task: TaskSpec) -> list:
    """Parse the task TSV for the given kind; strict column and label checks."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: invalid UTF-8 ({exc})") from exc
    examples = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line == "":
            continue
        cols = line.split("\t")
        try:
            examples.append(_parse_row(cols, task))
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return examples


def _parse_row(cols: list[str], task: TaskSpec):
    if task.kind == "classification":
        if len(cols) != 2:
            raise ValueError(f"expected 2 columns (text, label), got {len(cols)}")
        label = int(cols[1])
        if not 0 <= label < task.num_classes:
            raise ValueError(f"label {label} outside 0..{task.num_classes - 1}")
        return ClassificationExample(text=cols[0], label=label)
    if task.kind == "pair":
        if len(cols) != 3:
            raise ValueError(f"expected 3 columns (text_a, text_b, label), got {len(cols)}")
        label = int(cols[2])
        if not 0 <= label < task.num_classes:
            raise ValueError(f"label {label} outside 0..{task.num_classes - 1}")
        return ClassificationExample(text=cols[0], label=label, text_b=cols[1])
    if task.kind == "multiple_choice":
        if len(cols) != 6:
            raise ValueError(f"expected 6 columns (context, 4 candidates, answer), got {len(cols)}")
        answer = int(cols[5])
        if not 0 <= answer < NUM_CHOICES:
            raise ValueError(f"answer index {answer} outside 0..{NUM_CHOICES - 1}")
        return ChoiceExample(context=cols[0], candidates=tuple(cols[1:5]), answer=answer)
    if len(cols) != 3:
        raise ValueError(f"expected 3 columns (source, target, direction), got {len(cols)}")
    if cols[2] not in ("hi2en", "en2hi"):
        raise ValueError(f"direction must be hi2en or en2hi, got {cols[2]!r}")
    return TranslationExample(source=cols[0], target=cols[1], direction=cols[2])
