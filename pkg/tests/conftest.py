from __future__ import annotations

import pytest

from unlearning_lab.schemas import FiltrationConfig, ModelConfig
from unlearning_lab.services.bench.benchmark import build_case
from unlearning_lab.services.bench.templates import default_template_bank
from unlearning_lab.services.kg.catalog import ALL_RELATIONS
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.lm.corpus import build_corpus, build_tokenizer
from unlearning_lab.services.lm.tokenizer import Tokenizer
from unlearning_lab.services.lm.transformer import TransformerLM
from unlearning_lab.services.types import BenchmarkCase, Entity, Triple


@pytest.fixture
def bank():
    return default_template_bank()


@pytest.fixture
def film_graph() -> KnowledgeGraph:
    """Film -director-> Person -citizenship-> Country -capital_of-> City, plus one island."""
    entities = [
        Entity("F1", "Tarin Vale", "Film"),
        Entity("P1", "Ana Lovo", "Person"),
        Entity("P2", "Beno Kasi", "Person"),
        Entity("C1", "Dorava", "Country"),
        Entity("T1", "Kesimo", "City"),
        Entity("L1", "Mirutan", "Language"),
    ]
    triples = [
        Triple("F1", "director", "P1"),
        Triple("P1", "citizenship", "C1"),
        Triple("C1", "capital_of", "T1"),
        Triple("T1", "city_country", "C1"),
        Triple("P2", "citizenship", "C1"),
    ]
    return KnowledgeGraph(entities, ALL_RELATIONS, triples)


@pytest.fixture
def chain_graph() -> KnowledgeGraph:
    """One eligible target, F1 -director-> P1, with two 2-hop and two 3-hop chains.

    F1's other facts exercise each filtration stage: origin_country (schema),
    composer (node), cinematographer (path) and genre (accepted).
    """
    entities = [
        Entity("F1", "Tarin Vale", "Film"),
        Entity("P1", "Ana Lovo", "Person"),
        Entity("P2", "Beno Kasi", "Person"),
        Entity("C1", "Dorava", "Country"),
        Entity("C2", "Lunavi", "Country"),
        Entity("T1", "Kesimo", "City"),
        Entity("U1", "Pelin institute", "University"),
        Entity("K1", "Velor noir", "Concept"),
    ]
    triples = [
        Triple("F1", "director", "P1"),
        Triple("P1", "citizenship", "C1"),
        Triple("P1", "educated_at", "U1"),
        Triple("C1", "capital_of", "T1"),
        Triple("U1", "university_country", "C2"),
        Triple("F1", "origin_country", "C1"),
        Triple("F1", "composer", "P1"),
        Triple("F1", "cinematographer", "P2"),
        Triple("P2", "citizenship", "C1"),
        Triple("F1", "genre", "K1"),
    ]
    return KnowledgeGraph(entities, ALL_RELATIONS, triples)


@pytest.fixture
def chain_case(chain_graph: KnowledgeGraph, bank) -> BenchmarkCase:
    case = build_case(
        chain_graph,
        "case-0000",
        Triple("F1", "director", "P1"),
        bank,
        FiltrationConfig(),
        seed=3,
    )
    assert case is not None
    return case


@pytest.fixture
def tiny_tokenizer() -> Tokenizer:
    return Tokenizer.build(
        [
            "Who directed Tarin Vale ?",
            "Ana Lovo Beno Kasi Dorava Kesimo",
            "I do not know",
        ]
    )


@pytest.fixture
def tiny_model(tiny_tokenizer: Tokenizer) -> TransformerLM:
    config = ModelConfig(
        d_model=16, n_layers=1, n_heads=2, d_ff=32, max_seq_len=24, vocab_size=len(tiny_tokenizer)
    )
    return TransformerLM(config)


@pytest.fixture
def chain_tokenizer(chain_graph: KnowledgeGraph, chain_case: BenchmarkCase, bank) -> Tokenizer:
    corpus = build_corpus(chain_graph, bank, [chain_case])
    return build_tokenizer(chain_graph, corpus, [chain_case])


@pytest.fixture
def chain_model(chain_tokenizer: Tokenizer) -> TransformerLM:
    config = ModelConfig(
        d_model=16, n_layers=1, n_heads=2, d_ff=32, max_seq_len=64, vocab_size=len(chain_tokenizer)
    )
    return TransformerLM(config)
