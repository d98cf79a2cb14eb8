"""Dataset loading for masked dialogue fine-tuning.

Input is JSONL, one dialogue per line:

    {"id": str, "messages": [{"role": str, "content": str, "train": bool}]}

Dialogues render to byte-level token sequences. Only the content bytes of
train=true messages carry loss; role headers, observations, and all other
scaffolding are masked out. Token ids 0..255 are raw bytes, 256 is the
sequence start marker, 257 the end marker, 258 padding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

BOS = 256
EOS = 257
PAD = 258
VOCAB_SIZE = 259


class DatasetError(Exception):
    pass


@dataclass
class EncodedExample:
    id: str
    tokens: list[int]  # BOS + rendered bytes + EOS
    trainable: list[bool]  # aligned with tokens; True only on trainable content bytes

    def __len__(self) -> int:
        return len(self.tokens)


def render_message(role: str, content: str) -> tuple[bytes, int]:
    """Rendered bytes of one message and the offset of its content within
    them, so trainable spans can be located exactly."""
    header = f"<|{role}|>\n".encode("utf-8")
    return header + content.encode("utf-8") + b"\n", len(header)


def encode_example(record: dict) -> EncodedExample:
    example_id = str(record["id"])
    tokens: list[int] = [BOS]
    trainable: list[bool] = [False]
    trainable_count = 0
    for message in record["messages"]:
        rendered, content_offset = render_message(message["role"], message["content"])
        content_len = len(message["content"].encode("utf-8"))
        for i, byte in enumerate(rendered):
            tokens.append(byte)
            is_content = content_offset <= i < content_offset + content_len
            flag = bool(message["train"]) and is_content
            trainable.append(flag)
            trainable_count += flag
    tokens.append(EOS)
    trainable.append(False)
    if trainable_count == 0:
        raise DatasetError(f"example {example_id!r} has no trainable tokens")
    return EncodedExample(example_id, tokens, trainable)


def decode_tokens(tokens: list[int]) -> str:
    return bytes(t for t in tokens if t < 256).decode("utf-8", errors="replace")


def trainable_text(record: dict) -> str:
    """Concatenated train=true contents, the reference for mask fidelity."""
    return "".join(m["content"] for m in record["messages"] if m["train"])


def load_dataset(path: str | Path, sequence_length: int) -> tuple[list[EncodedExample], int]:
    """Encoded examples plus the count of over-long ones dropped. Examples
    that do not fit the sequence length are never silently truncated into
    a trainable span; they are dropped whole."""
    examples: list[EncodedExample] = []
    dropped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            encoded = encode_example(json.loads(line))
            if len(encoded) > sequence_length:
                dropped += 1
                continue
            examples.append(encoded)
    if not examples:
        raise DatasetError(f"no usable examples in {path}")
    return examples, dropped
