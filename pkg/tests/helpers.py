"""Independent oracles and synthetic-data builders for the test suite.

Everything here is deliberately built from plain label triples with its
own adjacency and recursion, sharing no code with the package, so the
main implementations can be checked against it.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict

from kgagent.questions import Question

Sig = tuple[tuple[str, str], ...]  # ((relation label, entity label), ...)


def brute_force_simple_paths(
    triples: list[tuple[str, str, str]], start: str, end: str, max_len: int
) -> set[Sig]:
    """Exhaustive DFS over both edge directions; no pruning, no sharing
    with the package's search code."""
    adj: dict[str, list[tuple[str, str]]] = defaultdict(list)
    for h, r, t in triples:
        adj[h].append((r, t))
        adj[t].append((r + "^-1", h))
    found: set[Sig] = set()
    if start == end:
        return found

    def dfs(node: str, visited: frozenset[str], acc: Sig) -> None:
        if node == end and acc:
            found.add(acc)
            return
        if len(acc) == max_len:
            return
        for rel, nxt in adj[node]:
            if nxt in visited:
                continue
            dfs(nxt, visited | {nxt}, acc + ((rel, nxt),))

    dfs(start, frozenset({start}), ())
    return found


def brute_force_shortest_paths(
    triples: list[tuple[str, str, str]], start: str, end: str, max_len: int
) -> set[Sig]:
    paths = brute_force_simple_paths(triples, start, end, max_len)
    if not paths:
        return set()
    shortest = min(len(p) for p in paths)
    return {p for p in paths if len(p) == shortest}


def shortest_path_triple_pool(
    triples: list[tuple[str, str, str]], questions: list[Question], max_len: int
) -> set[tuple[str, str, str]]:
    """Union of base triples on all shortest paths of every question pair."""
    known = {h for h, _, _ in triples} | {t for _, _, t in triples}
    pool: set[tuple[str, str, str]] = set()
    for q in questions:
        if any(e not in known for e in list(q.question_entities) + list(q.answer_entities)):
            continue
        for q_ent in q.question_entities:
            for a_ent in q.answer_entities:
                for sig in brute_force_shortest_paths(triples, q_ent, a_ent, max_len):
                    prev = q_ent
                    for rel, ent in sig:
                        if rel.endswith("^-1"):
                            pool.add((ent, rel[: -len("^-1")], prev))
                        else:
                            pool.add((prev, rel, ent))
                        prev = ent
    return pool


def join_chain(
    triples: list[tuple[str, str, str]], relations: list[str], start: str
) -> set[str]:
    """Nested-loop relational join over the raw triple list."""
    frontier = {start}
    for rel in relations:
        backwards = rel.endswith("^-1")
        base = rel[: -len("^-1")] if backwards else rel
        nxt = set()
        for h, r, t in triples:
            if r != base:
                continue
            if backwards and t in frontier:
                nxt.add(h)
            elif not backwards and h in frontier:
                nxt.add(t)
        frontier = nxt
    return frontier


def counting_recall(predicted: list[str], gold: list[str]) -> float:
    """Reward oracle: count gold answers that appear among predictions."""
    gold_norm = []
    for g in gold:
        g = g.strip().casefold()
        if g not in gold_norm:
            gold_norm.append(g)
    pred_norm = {p.strip().casefold() for p in predicted}
    hit = 0
    for g in gold_norm:
        if g in pred_norm:
            hit += 1
    return hit / len(gold_norm)


def reference_bm25_scores(
    corpus_tokens: list[list[str]], query_tokens: list[str], k1: float, b: float
) -> list[float]:
    """Straight-from-the-formula scorer over pre-tokenized documents,
    using the same non-negative log1p idf the package documents."""
    n_docs = len(corpus_tokens)
    avgdl = sum(len(d) for d in corpus_tokens) / n_docs
    scores = []
    for doc in corpus_tokens:
        score = 0.0
        for term in query_tokens:
            tf = doc.count(term)
            if tf == 0:
                continue
            df = sum(1 for other in corpus_tokens if term in other)
            idf = math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(doc) / avgdl))
        scores.append(score)
    return scores


# ----------------------------------------------------------------------
# synthetic data
# ----------------------------------------------------------------------


def random_graph_triples(
    rng: random.Random, n_nodes: int, n_triples: int, n_rels: int
) -> list[tuple[str, str, str]]:
    nodes = [f"E{i}" for i in range(n_nodes)]
    rels = [f"r{i}" for i in range(n_rels)]
    triples: set[tuple[str, str, str]] = set()
    for _ in range(n_triples * 10):
        if len(triples) >= n_triples:
            break
        triples.add((rng.choice(nodes), rng.choice(rels), rng.choice(nodes)))
    return sorted(triples)


def chain_question_kg(
    num_questions: int, hops: int = 2, distractors: int = 2
) -> tuple[list[tuple[str, str, str]], list[Question]]:
    """Per question: a unique relation chain Q -> ... -> A plus leaf
    distractor edges that never bridge the chain."""
    rows: list[tuple[str, str, str]] = []
    questions: list[Question] = []
    for i in range(num_questions):
        prev = f"Q{i}"
        for j in range(hops):
            nxt = f"A{i}" if j == hops - 1 else f"M{i}_{j}"
            rows.append((prev, f"step{j}", nxt))
            prev = nxt
        for d in range(distractors):
            rows.append((f"Q{i}", "noise", f"X{i}_{d}"))
        questions.append(
            Question(
                id=f"q{i}",
                question=f"which target does source {i} reach?",
                question_entities=(f"Q{i}",),
                answer_entities=(f"A{i}",),
            )
        )
    return rows, questions


def oracle_step_texts(question: Question, hops: int) -> list[str]:
    """The generation texts a perfect agent would produce on a chain
    question: follow each hop with searchNeighbor, then finish."""
    i = question.id.lstrip("q")
    texts = []
    prev = f"Q{i}"
    for j in range(hops):
        nxt = f"A{i}" if j == hops - 1 else f"M{i}_{j}"
        texts.append(f"Thought: follow step{j} from {prev}\nAction: searchNeighbor({prev}, step{j})")
        prev = nxt
    texts.append(f"Thought: the chain ends here\nAction: finish(A{i})")
    return texts


def graph_from_triples(triples: list[tuple[str, str, str]]):
    from kgagent.kg import KnowledgeGraph

    g = KnowledgeGraph()
    for h, r, t in triples:
        g.add(h, r, t)
    return g


def path_signature(g, path) -> Sig:
    labels = path.entity_labels(g)
    return tuple((g.relation_label(rel), labels[i + 1]) for i, (rel, _) in enumerate(path.steps))
