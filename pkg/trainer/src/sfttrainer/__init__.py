"""Masked-loss supervised fine-tuning with low-rank adapters."""

from .data import BOS, EOS, PAD, VOCAB_SIZE, DatasetError, encode_example, load_dataset
from .model import AdapterConfig, LoraLinear, ModelConfig, TinyCausalLM, apply_adapters
from .train import TrainJob, TrainResult, load_checkpoint, masked_loss, train

__version__ = "0.1.0"
