"""Okapi BM25 built from scratch over a fixed document list.

Tokenization is lowercase alphanumeric runs, no stemming, no stopwords.
The idf uses the log1p form, ln(1 + (N - df + 0.5) / (df + 0.5)), which
keeps every score finite and non-negative; documents sharing no query
term score exactly zero and are dropped from results.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Sequence

_TOKEN_RE = re.compile(r"[0-9a-z]+")

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Bm25Index:
    """Inverted index with per-term postings and per-document lengths."""

    def __init__(self, corpus: Sequence[str], k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        if not corpus:
            raise ValueError("corpus must be non-empty")
        self.k1 = k1
        self.b = b
        self.doc_count = len(corpus)
        self.doc_lens: list[int] = []
        self.postings: dict[str, list[tuple[int, int]]] = {}
        for doc_id, text in enumerate(corpus):
            tokens = tokenize(text)
            self.doc_lens.append(len(tokens))
            for term, tf in sorted(Counter(tokens).items()):
                self.postings.setdefault(term, []).append((doc_id, tf))
        self.avg_doc_len = sum(self.doc_lens) / self.doc_count

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))

    def scores(self, query: str) -> dict[int, float]:
        """Non-zero BM25 scores per document id for the query."""
        acc: dict[int, float] = {}
        for term in tokenize(query):
            rows = self.postings.get(term)
            if not rows:
                continue
            idf = self.idf(term)
            for doc_id, tf in rows:
                if self.avg_doc_len > 0:
                    norm = 1 - self.b + self.b * self.doc_lens[doc_id] / self.avg_doc_len
                else:
                    norm = 1.0
                acc[doc_id] = acc.get(doc_id, 0.0) + idf * tf * (self.k1 + 1) / (
                    tf + self.k1 * norm
                )
        return acc

    def retrieve(self, query: str, k: int) -> list[tuple[int, float]]:
        """Top-k (doc id, score), descending score, ties by ascending id.

        Zero-score documents are filtered; an empty tokenized query
        returns an empty list.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        scored = [(doc_id, s) for doc_id, s in self.scores(query).items() if s > 0.0]
        scored.sort(key=lambda row: (-row[1], row[0]))
        return scored[:k]


def bm25_build(corpus: Sequence[str], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Index:
    return Bm25Index(corpus, k1=k1, b=b)


def bm25_retrieve(index: Bm25Index, query: str, k: int) -> list[tuple[int, float]]:
    return index.retrieve(query, k)
