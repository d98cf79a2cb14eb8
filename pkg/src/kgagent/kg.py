"""In-memory knowledge graph: interned triple store with bidirectional
adjacency, path search, rule grounding, and controlled degradation.

Entities and relations are interned to dense integer ids. Every base
relation gets an implicit inverse twin so paths and rules can traverse
edges in both directions; directed relation ids encode direction in the
low bit (even = forward, odd = backward). The backward marker in labels
is the literal suffix ``^-1``.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
from bisect import bisect_left, insort
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import (
    EmptyGraphError,
    EntityNotFoundError,
    KgParseError,
    TripleNotFoundError,
)
from .questions import Question

logger = logging.getLogger(__name__)

INVERSE_SUFFIX = "^-1"

DEFAULT_MAX_LEN = 4


def inverse_rel(rel_id: int) -> int:
    """Directed id of the opposite traversal direction."""
    return rel_id ^ 1


def is_inverse(rel_id: int) -> bool:
    return rel_id & 1 == 1


def base_rel(rel_id: int) -> int:
    return rel_id & ~1


@dataclass(frozen=True)
class Triple:
    """A stored fact. ``rel`` is always a base (forward) relation id."""

    head: int
    rel: int
    tail: int


@dataclass(frozen=True)
class ClosedPath:
    """A grounded relation chain from a start entity to an answer entity.

    ``steps`` holds (directed relation id, entity id) hops; odd relation
    ids mean the underlying triple was walked tail-to-head.
    """

    start: int
    steps: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def end(self) -> int:
        return self.steps[-1][1] if self.steps else self.start

    def relation_ids(self) -> tuple[int, ...]:
        return tuple(rel for rel, _ in self.steps)

    def relation_labels(self, g: "KnowledgeGraph") -> tuple[str, ...]:
        return tuple(g.relation_label(rel) for rel, _ in self.steps)

    def entity_labels(self, g: "KnowledgeGraph") -> tuple[str, ...]:
        """Entity labels along the path, start first."""
        return (g.entity_label(self.start),) + tuple(
            g.entity_label(ent) for _, ent in self.steps
        )

    def triples(self, g: "KnowledgeGraph") -> list[Triple]:
        """The stored triples this path walks, in hop order."""
        out = []
        prev = self.start
        for rel, ent in self.steps:
            if is_inverse(rel):
                out.append(Triple(ent, base_rel(rel), prev))
            else:
                out.append(Triple(prev, rel, ent))
            prev = ent
        return out


class KnowledgeGraph:
    """Label-interning triple store with mirrored out/in adjacency.

    The graph is meant to be shared read-only during episodes; mutation
    (``add``/``remove``) requires exclusive access.
    """

    def __init__(self) -> None:
        self._ent_labels: list[str] = []
        self._ent_ids: dict[str, int] = {}
        # relation ids come in (base, inverse) pairs: 2k and 2k+1
        self._rel_labels: list[str] = []
        self._rel_ids: dict[str, int] = {}
        self._triples: set[Triple] = set()
        self._out: dict[int, list[tuple[int, int]]] = {}  # head -> [(base rel, tail)]
        self._in: dict[int, list[tuple[int, int]]] = {}  # tail -> [(base rel, head)]

    # ------------------------------------------------------------------
    # interning and lookups
    # ------------------------------------------------------------------

    def intern_entity(self, label: str) -> int:
        label = label.strip()
        if not label:
            raise ValueError("entity label must be non-empty")
        ent_id = self._ent_ids.get(label)
        if ent_id is None:
            ent_id = len(self._ent_labels)
            self._ent_labels.append(label)
            self._ent_ids[label] = ent_id
        return ent_id

    def intern_relation(self, label: str) -> int:
        """Intern a base relation; its inverse twin is created alongside."""
        label = label.strip()
        if not label:
            raise ValueError("relation label must be non-empty")
        rel_id = self._rel_ids.get(label)
        if rel_id is None:
            rel_id = len(self._rel_labels)
            self._rel_labels.append(label)
            self._rel_labels.append(label + INVERSE_SUFFIX)
            self._rel_ids[label] = rel_id
            self._rel_ids[label + INVERSE_SUFFIX] = rel_id + 1
        return rel_id

    def entity_id(self, label: str) -> int | None:
        return self._ent_ids.get(label.strip())

    def require_entity(self, label: str) -> int:
        ent_id = self.entity_id(label)
        if ent_id is None:
            raise EntityNotFoundError(f"entity not in graph: {label!r}")
        return ent_id

    def entity_label(self, ent_id: int) -> str:
        return self._ent_labels[ent_id]

    def relation_id(self, label: str) -> int | None:
        """Directed relation id for a label, honouring the ``^-1`` marker."""
        return self._rel_ids.get(label.strip())

    def relation_label(self, rel_id: int) -> str:
        return self._rel_labels[rel_id]

    def has_entity(self, label: str) -> bool:
        return self.entity_id(label) is not None

    def has_triple(self, head: str, rel: str, tail: str) -> bool:
        h, r, t = self.entity_id(head), self._rel_ids.get(rel.strip()), self.entity_id(tail)
        if h is None or r is None or t is None or is_inverse(r):
            return False
        return Triple(h, r, t) in self._triples

    @property
    def num_entities(self) -> int:
        return len(self._ent_labels)

    @property
    def num_relations(self) -> int:
        """Number of base relations (inverse twins not counted)."""
        return len(self._rel_labels) // 2

    @property
    def num_triples(self) -> int:
        return len(self._triples)

    def entities(self) -> Sequence[str]:
        return tuple(self._ent_labels)

    def relations(self) -> Sequence[str]:
        """Base relation labels."""
        return tuple(self._rel_labels[::2])

    def triples(self) -> Iterator[tuple[str, str, str]]:
        """Label triples in canonical sorted order."""
        rows = sorted(
            (self._ent_labels[t.head], self._rel_labels[t.rel], self._ent_labels[t.tail])
            for t in self._triples
        )
        return iter(rows)

    def fingerprint(self) -> str:
        """Content hash over the sorted label triples; id-assignment invariant."""
        digest = hashlib.sha256()
        for h, r, t in self.triples():
            digest.update(f"{h}\t{r}\t{t}\n".encode("utf-8"))
        return digest.hexdigest()

    def copy(self) -> "KnowledgeGraph":
        g = KnowledgeGraph()
        g._ent_labels = list(self._ent_labels)
        g._ent_ids = dict(self._ent_ids)
        g._rel_labels = list(self._rel_labels)
        g._rel_ids = dict(self._rel_ids)
        g._triples = set(self._triples)
        g._out = {k: list(v) for k, v in self._out.items()}
        g._in = {k: list(v) for k, v in self._in.items()}
        return g

    # ------------------------------------------------------------------
    # mutation
    # ------------------------------------------------------------------

    def add(self, head: str, rel: str, tail: str) -> bool:
        """Insert a triple, interning endpoints as needed.

        Returns False (no-op) when the triple is already stored.
        """
        h = self.intern_entity(head)
        r = self.intern_relation(rel)
        t = self.intern_entity(tail)
        triple = Triple(h, r, t)
        if triple in self._triples:
            return False
        self._triples.add(triple)
        insort(self._out.setdefault(h, []), (r, t))
        insort(self._in.setdefault(t, []), (r, h))
        return True

    def remove(self, head: str, rel: str, tail: str) -> None:
        h, r, t = self.entity_id(head), self._rel_ids.get(rel.strip()), self.entity_id(tail)
        triple = Triple(h, r, t) if None not in (h, r, t) else None
        if triple is None or triple not in self._triples:
            raise TripleNotFoundError(f"triple not in graph: ({head}, {rel}, {tail})")
        self._triples.discard(triple)
        self._out[h].remove((r, t))
        self._in[t].remove((r, h))

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def _adj_range(self, adj: dict[int, list[tuple[int, int]]], ent: int, rel: int) -> list[int]:
        rows = adj.get(ent)
        if not rows:
            return []
        lo = bisect_left(rows, (rel, -1))
        out = []
        for r, other in rows[lo:]:
            if r != rel:
                break
            out.append(other)
        return out

    def neighbor_ids(self, ent_id: int, rel_id: int) -> list[int]:
        """Neighbour entity ids via a directed relation id."""
        if is_inverse(rel_id):
            return self._adj_range(self._in, ent_id, base_rel(rel_id))
        return self._adj_range(self._out, ent_id, rel_id)

    def neighbors(self, ent: str, rel: str) -> list[str]:
        """Neighbour labels of ``ent`` via ``rel`` (``^-1`` walks backwards).

        Unknown entities raise; unknown relations yield an empty list.
        """
        ent_id = self.require_entity(ent)
        rel_id = self.relation_id(rel)
        if rel_id is None:
            return []
        labels = [self._ent_labels[i] for i in self.neighbor_ids(ent_id, rel_id)]
        return sorted(set(labels))

    def successors(self, ent_id: int) -> list[tuple[int, int]]:
        """All (directed rel id, entity id) hops leaving an entity, both
        edge directions, in deterministic sorted order."""
        hops = [(r, t) for r, t in self._out.get(ent_id, [])]
        hops.extend((r | 1, h) for r, h in self._in.get(ent_id, []))
        hops.sort()
        return hops

    def degree(self, ent_id: int) -> int:
        return len(self._out.get(ent_id, [])) + len(self._in.get(ent_id, []))

    # ------------------------------------------------------------------
    # path search
    # ------------------------------------------------------------------

    def _hop_distances(self, source: int, limit: int) -> dict[int, int]:
        """BFS hop counts (both edge directions) from source, capped at limit."""
        dist = {source: 0}
        frontier = deque([source])
        while frontier:
            node = frontier.popleft()
            d = dist[node]
            if d >= limit:
                continue
            for _, nxt in self.successors(node):
                if nxt not in dist:
                    dist[nxt] = d + 1
                    frontier.append(nxt)
        return dist

    def bfs_shortest_paths(self, q_ent: str, a_ent: str, max_len: int = DEFAULT_MAX_LEN) -> list[ClosedPath]:
        """All distinct shortest paths between two entities, both edge
        directions, if the shortest length is within ``max_len``.

        Zero-length paths are excluded: ``q_ent == a_ent`` yields [].
        """
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        src = self.require_entity(q_ent)
        dst = self.require_entity(a_ent)
        if src == dst:
            return []
        dist = self._hop_distances(src, max_len)
        if dst not in dist:
            return []
        target_len = dist[dst]

        paths: list[ClosedPath] = []

        def extend(node: int, steps: list[tuple[int, int]]) -> None:
            depth = len(steps)
            if node == dst and depth == target_len:
                paths.append(ClosedPath(src, tuple(steps)))
                return
            for rel, nxt in self.successors(node):
                if dist.get(nxt) == depth + 1 and dist[nxt] <= target_len:
                    steps.append((rel, nxt))
                    extend(nxt, steps)
                    steps.pop()

        extend(src, [])
        return paths

    def enumerate_closed_paths(
        self,
        q_ent: str,
        a_ent: str,
        max_len: int = DEFAULT_MAX_LEN,
        cap: int = 1000,
    ) -> list[ClosedPath]:
        """Simple paths (no repeated entities) from q_ent to a_ent, shortest
        first, deterministic order, truncated at ``cap``."""
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        if cap < 1:
            raise ValueError("cap must be >= 1")
        src = self.require_entity(q_ent)
        dst = self.require_entity(a_ent)
        if src == dst:
            return []
        # distance-to-target prunes branches that cannot reach dst in budget
        dist_to_dst = self._hop_distances(dst, max_len)
        if src not in dist_to_dst:
            return []

        paths: list[ClosedPath] = []
        visited = {src}

        def walk(node: int, steps: list[tuple[int, int]], target_len: int) -> bool:
            """Returns False once the cap is hit to unwind the recursion."""
            depth = len(steps)
            if node == dst:
                if depth == target_len:
                    paths.append(ClosedPath(src, tuple(steps)))
                    return len(paths) < cap
                return True  # passed through dst early: no simple completion
            remaining = target_len - depth
            for rel, nxt in self.successors(node):
                if nxt in visited:
                    continue
                if dist_to_dst.get(nxt, math.inf) > remaining - 1:
                    continue
                visited.add(nxt)
                steps.append((rel, nxt))
                ok = walk(nxt, steps, target_len)
                steps.pop()
                visited.discard(nxt)
                if not ok:
                    return False
            return True

        for target_len in range(dist_to_dst[src], max_len + 1):
            if not walk(src, [], target_len):
                break
        return paths

    def ground_rule(self, relations: Sequence[str], q_ent: str) -> set[str]:
        """Entities reachable from ``q_ent`` by following a relation-label
        chain (labels may carry the ``^-1`` marker)."""
        if not relations:
            raise ValueError("rule body must have at least one relation")
        frontier = {self.require_entity(q_ent)}
        for rel in relations:
            rel_id = self.relation_id(rel)
            if rel_id is None:
                return set()
            nxt: set[int] = set()
            for ent in frontier:
                nxt.update(self.neighbor_ids(ent, rel_id))
            if not nxt:
                return set()
            frontier = nxt
        return {self._ent_labels[e] for e in frontier}

    # ------------------------------------------------------------------
    # integrity helpers (used by property tests)
    # ------------------------------------------------------------------

    def adjacency_mirrors_triples(self) -> bool:
        out: dict[int, list[tuple[int, int]]] = {}
        inn: dict[int, list[tuple[int, int]]] = {}
        for t in self._triples:
            out.setdefault(t.head, []).append((t.rel, t.tail))
            inn.setdefault(t.tail, []).append((t.rel, t.head))
        for rows in out.values():
            rows.sort()
        for rows in inn.values():
            rows.sort()
        mine_out = {k: v for k, v in self._out.items() if v}
        mine_in = {k: v for k, v in self._in.items() if v}
        return mine_out == out and mine_in == inn

    def is_path_sound(self, path: ClosedPath) -> bool:
        """Every hop of the path is a stored triple in the stated direction."""
        prev = path.start
        for rel, ent in path.steps:
            if is_inverse(rel):
                triple = Triple(ent, base_rel(rel), prev)
            else:
                triple = Triple(prev, rel, ent)
            if triple not in self._triples:
                return False
            prev = ent
        return len(path.steps) >= 1


# ----------------------------------------------------------------------
# file IO
# ----------------------------------------------------------------------


def load_kg(path: str | Path) -> KnowledgeGraph:
    """Load a UTF-8 TSV of ``head<TAB>relation<TAB>tail`` lines.

    Duplicate lines are deduplicated; malformed lines abort with their
    line number; a file with no triples is an error.
    """
    g = KnowledgeGraph()
    n_lines = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            fields = line.split("\t")
            if len(fields) != 3:
                raise KgParseError(
                    f"expected 3 tab-separated fields, got {len(fields)}", line_no
                )
            head, rel, tail = (f.strip() for f in fields)
            if not head or not rel or not tail:
                raise KgParseError("empty field", line_no)
            g.add(head, rel, tail)
            n_lines += 1
    if g.num_triples == 0:
        raise EmptyGraphError(f"no triples in {path}")
    logger.info(
        "loaded %s: %d lines, %d unique triples, %d entities, %d relations",
        path, n_lines, g.num_triples, g.num_entities, g.num_relations,
    )
    return g


def save_kg(g: KnowledgeGraph, path: str | Path) -> int:
    """Write the graph as canonical sorted TSV (LF endings). Returns row count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in g.triples():
            fh.write(f"{h}\t{r}\t{t}\n")
            count += 1
    return count


def save_triples(rows: Iterable[tuple[str, str, str]], path: str | Path) -> int:
    """Write label triples as TSV in the given order."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in rows:
            fh.write(f"{h}\t{r}\t{t}\n")
            count += 1
    return count


def load_triples(path: str | Path) -> list[tuple[str, str, str]]:
    """Read label triples from TSV, same validation as load_kg but no graph."""
    rows: list[tuple[str, str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            fields = raw.rstrip("\n").rstrip("\r").split("\t")
            if len(fields) != 3:
                raise KgParseError(
                    f"expected 3 tab-separated fields, got {len(fields)}", line_no
                )
            head, rel, tail = (f.strip() for f in fields)
            if not head or not rel or not tail:
                raise KgParseError("empty field", line_no)
            rows.append((head, rel, tail))
    return rows


# ----------------------------------------------------------------------
# deliberate degradation
# ----------------------------------------------------------------------


def construct_incomplete_kg(
    g: KnowledgeGraph,
    questions: Sequence[Question],
    removal_ratio: float,
    seed: int,
    max_len: int = DEFAULT_MAX_LEN,
) -> tuple[KnowledgeGraph, list[tuple[str, str, str]]]:
    """Remove a seeded random share of the triples that lie on shortest
    paths from question entities to answer entities.

    The candidate pool is the union, over every (question entity, answer
    entity) pair of every question, of the triples on all shortest paths
    between the pair. ``ceil(removal_ratio * |pool|)`` triples are drawn
    without replacement and removed from a copy of the graph. Questions
    whose entities are missing are skipped with a warning.
    """
    if not 0 < removal_ratio <= 1:
        raise ValueError("removal_ratio must be in (0, 1]")
    pool: set[Triple] = set()
    for question in questions:
        usable = True
        for ent in list(question.question_entities) + list(question.answer_entities):
            if not g.has_entity(ent):
                logger.warning(
                    "question %s: entity %r not in graph, skipping", question.id, ent
                )
                usable = False
        if not usable:
            continue
        for q_ent in question.question_entities:
            for a_ent in question.answer_entities:
                for path in g.bfs_shortest_paths(q_ent, a_ent, max_len=max_len):
                    pool.update(path.triples(g))

    label_pool = sorted(
        (g.entity_label(t.head), g.relation_label(t.rel), g.entity_label(t.tail))
        for t in pool
    )
    n_remove = math.ceil(removal_ratio * len(label_pool))
    rng = random.Random(seed)
    removed = rng.sample(label_pool, n_remove) if n_remove else []

    degraded = g.copy()
    for h, r, t in removed:
        degraded.remove(h, r, t)
    logger.info(
        "degraded graph: %d candidate triples, removed %d (ratio %.3f, seed %d)",
        len(label_pool), len(removed), removal_ratio, seed,
    )
    return degraded, removed


def commit_triples(g: KnowledgeGraph, rows: Iterable[tuple[str, str, str]]) -> int:
    """Add extracted triples to the graph; returns how many were new."""
    added = 0
    for h, r, t in rows:
        if g.add(h, r, t):
            added += 1
    return added
