import json

import pytest

from sfttrainer.data import (
    BOS,
    EOS,
    DatasetError,
    decode_tokens,
    encode_example,
    load_dataset,
    trainable_text,
)


def _record(example_id="e0", turns=(("user", "hi", False), ("assistant", "Thought: x\nAction: finish(a)", True))):
    return {
        "id": example_id,
        "messages": [{"role": r, "content": c, "train": t} for r, c, t in turns],
    }


def test_encoding_marks_exactly_the_trainable_content():
    record = _record()
    encoded = encode_example(record)
    assert encoded.tokens[0] == BOS and encoded.tokens[-1] == EOS
    trained = [t for t, flag in zip(encoded.tokens, encoded.trainable) if flag]
    assert decode_tokens(trained) == trainable_text(record)


def test_role_headers_are_never_trainable():
    encoded = encode_example(_record())
    rendered = decode_tokens(encoded.tokens)
    assert "<|assistant|>" in rendered
    header_start = rendered.find("<|assistant|>")
    # positions are offset by one for BOS
    header_flags = encoded.trainable[1 + header_start : 1 + header_start + len("<|assistant|>")]
    assert not any(header_flags)


def test_all_masked_example_is_an_error():
    record = _record(turns=(("user", "hi", False), ("assistant", "yo", False)))
    with pytest.raises(DatasetError) as err:
        encode_example(record)
    assert "e0" in str(err.value)


def test_overlong_examples_dropped_with_count(tmp_path):
    path = tmp_path / "data.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_record("short")) + "\n")
        long_record = _record("long", turns=(("user", "x" * 5000, False), ("assistant", "y", True)))
        fh.write(json.dumps(long_record) + "\n")
    examples, dropped = load_dataset(path, sequence_length=256)
    assert dropped == 1
    assert [e.id for e in examples] == ["short"]


def test_empty_dataset_is_an_error(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(DatasetError):
        load_dataset(path, sequence_length=256)


def test_multibyte_content_round_trips():
    record = _record(turns=(("user", "naïve café", False), ("assistant", "Thought: 思考\nAction: finish(答案)", True)))
    encoded = encode_example(record)
    trained = [t for t, flag in zip(encoded.tokens, encoded.trainable) if flag]
    assert decode_tokens(trained) == "Thought: 思考\nAction: finish(答案)"
