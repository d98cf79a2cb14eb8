"""Fixtures: a real emitted dataset produced through the primary
pipeline's command-line surface, which is the interface this trainer
consumes (the SFT JSONL format)."""

import json
import subprocess
import sys
from pathlib import Path

import pytest


def _write_chain_workspace(root: Path, num_questions: int) -> dict:
    kg_path = root / "kg.tsv"
    questions_path = root / "questions.jsonl"
    script_path = root / "script.jsonl"
    with open(kg_path, "w", encoding="utf-8") as kg_fh, open(
        questions_path, "w", encoding="utf-8"
    ) as q_fh, open(script_path, "w", encoding="utf-8") as s_fh:
        for i in range(num_questions):
            kg_fh.write(f"Q{i}\tstep0\tM{i}\nM{i}\tstep1\tA{i}\n")
            question = f"which target does source {i} reach?"
            q_fh.write(
                json.dumps(
                    {
                        "id": f"q{i}",
                        "question": question,
                        "question_entities": [f"Q{i}"],
                        "answer_entities": [f"A{i}"],
                    }
                )
                + "\n"
            )
            outputs = [
                f"Thought: follow step0 from Q{i}\nAction: searchNeighbor(Q{i}, step0)",
                f"Thought: follow step1 from M{i}\nAction: searchNeighbor(M{i}, step1)",
                f"Thought: the chain ends here\nAction: finish(A{i})",
            ]
            s_fh.write(json.dumps({"question": question, "outputs": outputs}) + "\n")
    return {"kg": kg_path, "questions": questions_path, "script": script_path}


@pytest.fixture(scope="session")
def emitted_dataset(tmp_path_factory) -> Path:
    """A 50-example SFT JSONL emitted by one self-learning iteration of
    the upstream agent pipeline, driven through its CLI."""
    root = tmp_path_factory.mktemp("emitted")
    paths = _write_chain_workspace(root, num_questions=50)
    out_dir = root / "out"
    subprocess.run(
        [
            sys.executable, "-m", "kgagent.cli",
            "selflearn",
            "--kg", str(paths["kg"]),
            "--questions", str(paths["questions"]),
            "--policy", "scripted",
            "--script", str(paths["script"]),
            "--iterations", "1",
            "--out-dir", str(out_dir),
        ],
        check=True,
        capture_output=True,
    )
    dataset = out_dir / "iteration_1_sft.jsonl"
    assert dataset.exists()
    assert len(dataset.read_text(encoding="utf-8").splitlines()) == 50
    return dataset
