"""Note-to-code pipeline: text prep, AWD-LSTM language modeling, transfer
learning, and pooled classification over clinical-style notes.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports it and adds a couple of pure-Python conveniences.
"""

import json as _json

from ._core import (
    Vocabulary,
    build_vocab,
    build_vocab_files,
    default_config_json,
    evaluate,
    evaluate_predictions,
    finetune_lm,
    fixup,
    load_vocab,
    prepare,
    pretrain_lm,
    save_vocab,
    synth,
    tfidf,
    tfidf_files,
    tokenize,
    train_clf,
)

__all__ = [
    "Vocabulary",
    "build_vocab",
    "build_vocab_files",
    "default_config",
    "default_config_json",
    "evaluate",
    "evaluate_predictions",
    "finetune_lm",
    "fixup",
    "load_vocab",
    "prepare",
    "pretrain_lm",
    "save_vocab",
    "synth",
    "tfidf",
    "tfidf_files",
    "tokenize",
    "train_clf",
]


def default_config():
    """The default pipeline configuration as a dict."""
    return _json.loads(default_config_json())
