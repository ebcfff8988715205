"""Desk-scale Hindi language-model pipeline on a numpy autograd core."""

__version__ = "0.1.0"

from .autograd import Tensor, backward, grad_check
from .bpe import DEFAULT_SPECIALS, TokenizerModel, train_bpe
from .checkpoint import Checkpoint, OptimState, load_checkpoint, save_checkpoint
from .corpus import (
    CorpusStats,
    Document,
    ScriptProfile,
    clean_document,
    clean_text,
    corpus_stats,
    drop_short_line_runs,
    is_content_free,
    merge_parallel_pairs,
    read_documents,
    script_profile,
    unique_word_ratio,
    write_documents,
)
from .errors import DataError, NumericError
from .finetune import (
    ChoiceExample,
    ClassificationExample,
    HumanEvalDistribution,
    MetricsReport,
    TaskSpec,
    TranslationExample,
    aggregate_human_eval,
    attach_head,
    encode_for_task,
    eval_classification,
    eval_multiple_choice,
    finetune,
    load_task_data,
    metrics_from_confusion,
)
from .model import PRESETS, ModelConfig, TransformerLM, count_params, init_params
from .train import (
    EvalReport,
    TrainConfig,
    adamw_step,
    clm_loss,
    evaluate,
    pack_corpus,
    pretrain,
    tokenizer_digest,
)
