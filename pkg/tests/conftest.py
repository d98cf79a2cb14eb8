import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kgagent.kg import KnowledgeGraph
from kgagent.templates import TemplateSet


@pytest.fixture(scope="session")
def templates() -> TemplateSet:
    return TemplateSet()


@pytest.fixture()
def sam_graph() -> KnowledgeGraph:
    """The worked employment example: Sam works for a company located in
    a city, and lives in that city."""
    g = KnowledgeGraph()
    g.add("Sam", "workFor", "OpenAI")
    g.add("OpenAI", "locatedIn", "SF")
    g.add("Sam", "liveIn", "SF")
    return g


@pytest.fixture()
def diamond_graph() -> KnowledgeGraph:
    """Two parallel length-2 routes: A-r->B-t->D and A-s->C-t->D."""
    g = KnowledgeGraph()
    g.add("A", "r", "B")
    g.add("B", "t", "D")
    g.add("A", "s", "C")
    g.add("C", "t", "D")
    return g


@pytest.fixture()
def chain_graph() -> KnowledgeGraph:
    g = KnowledgeGraph()
    g.add("A", "r", "B")
    g.add("B", "s", "C")
    return g
