"""Minimal dense-array numerical engine: reverse-mode autodiff, a
decoder-only transformer, masked cross-entropy, Adam, and grad checking."""

from .tensor import NumericsError, Tensor, no_grad
from .model import (
    DegenerateMaskError,
    InferenceSession,
    SequenceLengthError,
    TransformerConfig,
    TransformerParams,
    VocabularyError,
    logits_no_grad,
    masked_nll,
    transformer_forward,
)
from .optim import AdamState, OptimizerError, adam_step, clip_global_norm, grad_check, warmup_lr
from .checkpoint import (
    CheckpointError,
    body_bytes,
    load_model,
    load_tensors,
    save_model,
    save_tensors,
    tensor_bytes,
)

__all__ = [
    "AdamState",
    "CheckpointError",
    "DegenerateMaskError",
    "InferenceSession",
    "NumericsError",
    "OptimizerError",
    "SequenceLengthError",
    "Tensor",
    "TransformerConfig",
    "TransformerParams",
    "VocabularyError",
    "adam_step",
    "body_bytes",
    "clip_global_norm",
    "grad_check",
    "load_model",
    "load_tensors",
    "logits_no_grad",
    "masked_nll",
    "no_grad",
    "save_model",
    "save_tensors",
    "tensor_bytes",
    "transformer_forward",
    "warmup_lr",
]
