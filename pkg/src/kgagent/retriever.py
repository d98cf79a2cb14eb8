"""Document retrieval for the wikiSearch tool.

The default backend ranks a local JSONL corpus with BM25; remote
backends only need to satisfy the same ``search`` signature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from .bm25 import Bm25Index


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str


class Retriever(Protocol):
    def search(self, query: str, n: int) -> list[Document]: ...


class CorpusRetriever:
    """BM25 over title+text of an in-memory document list."""

    def __init__(self, documents: Sequence[Document]):
        self.documents = list(documents)
        self._index = (
            Bm25Index([f"{d.title} {d.text}" for d in self.documents])
            if self.documents
            else None
        )

    def search(self, query: str, n: int) -> list[Document]:
        if self._index is None:
            return []
        return [self.documents[doc_id] for doc_id, _ in self._index.retrieve(query, n)]


def load_corpus(path: str | Path) -> list[Document]:
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                record = json.loads(line)
                docs.append(
                    Document(
                        doc_id=str(record["doc_id"]),
                        title=record.get("title", ""),
                        text=record.get("text", ""),
                    )
                )
    return docs


def save_corpus(documents: Sequence[Document], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d in documents:
            fh.write(
                json.dumps(
                    {"doc_id": d.doc_id, "title": d.title, "text": d.text},
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    return count
