from __future__ import annotations

import pytest

from unlearning_lab.exceptions import ProbeScoringError, TargetSelectionError
from unlearning_lab.schemas import FiltrationConfig, SelectionConfig
from unlearning_lab.services.bench.benchmark import (
    build_cases,
    has_exact_distribution,
    probe_counts,
)
from unlearning_lab.services.bench.probes import answer_leaks, filter_known, verify_probe
from unlearning_lab.services.types import Probe, Triple

TARGET = Triple("F1", "director", "P1")


def _probe(**updates) -> Probe:
    values = {
        "case_id": "case-0000",
        "probe_id": "case-0000-QA-direct-1",
        "probe_type": "direct",
        "template_family": "QA",
        "hop": 1,
        "question": "Who directed Tarin Vale?",
        "answer": "Ana Lovo",
        "target": TARGET,
        "split": "forget_train",
        "chain": (TARGET,),
    }
    values.update(updates)
    return Probe(**values)


def test_case_carries_eight_probes_per_family(chain_case) -> None:
    assert has_exact_distribution(chain_case)
    assert chain_case.deficiencies == ()
    assert probe_counts(chain_case.probes) == {
        "FB:direct": 1,
        "FB:inverse": 1,
        "FB:paraphrase": 2,
        "FB:retain": 1,
        "FB:three_hop": 1,
        "FB:two_hop": 2,
        "QA:direct": 1,
        "QA:inverse": 1,
        "QA:paraphrase": 2,
        "QA:retain": 1,
        "QA:three_hop": 1,
        "QA:two_hop": 2,
    }


def test_probe_answers_follow_the_graph(chain_case) -> None:
    by_id = {probe.probe_id: probe for probe in chain_case.probes}

    direct = by_id["case-0000-QA-direct-1"]
    assert direct.question == "Who directed Tarin Vale?"
    assert direct.answer == "Ana Lovo"
    assert direct.split == "forget_train"
    assert by_id["case-0000-FB-direct-1"].split == "forget_eval"
    assert by_id["case-0000-QA-inverse-1"].answer == "Tarin Vale"
    assert by_id["case-0000-QA-retain-1"].answer == "Velor noir"
    assert by_id["case-0000-QA-retain-1"].split == "retain_eval"
    assert {by_id[f"case-0000-QA-two_hop-{n}"].answer for n in (1, 2)} == {
        "Dorava",
        "Pelin institute",
    }
    assert by_id["case-0000-QA-three_hop-1"].answer in {"Kesimo", "Lunavi"}
    assert all(not answer_leaks(p.question, p.answer) for p in chain_case.probes)


def test_probe_generation_is_seeded(chain_graph, bank) -> None:
    config = SelectionConfig(n_targets=1)
    first = build_cases(chain_graph, bank, config, FiltrationConfig(), seed=5)
    second = build_cases(chain_graph, bank, config, FiltrationConfig(), seed=5)
    assert first == second
    assert first[0].case_id == "case-0000"


def test_build_cases_reports_achievable_targets(chain_graph, bank) -> None:
    with pytest.raises(TargetSelectionError) as excinfo:
        build_cases(chain_graph, bank, SelectionConfig(n_targets=2), FiltrationConfig(), seed=0)
    assert excinfo.value.achievable == 1


def test_answer_leaks_matches_whole_token_runs() -> None:
    assert answer_leaks("Who is Ana Lovo's director?", "Ana Lovo")
    assert not answer_leaks("Who directed Anagram?", "Ana")
    assert not answer_leaks("Who directed it?", "")


def test_verify_probe_reasons(chain_graph) -> None:
    assert verify_probe(_probe(), chain_graph).ok
    assert verify_probe(_probe(answer=" ")).reason == "empty-answer"
    assert verify_probe(_probe(hop=2)).reason == "hop-mismatch"
    assert verify_probe(_probe(question="Did Ana Lovo direct it?")).reason == "answer-leak"

    shared_country = Triple("P1", "citizenship", "C1")
    ambiguous = _probe(
        probe_type="inverse",
        question="Who is a citizen of Dorava?",
        answer="Ana Lovo",
        target=shared_country,
        chain=(shared_country,),
    )
    assert verify_probe(ambiguous, chain_graph).reason == "ambiguity"
    assert verify_probe(ambiguous).ok


def test_filter_known_keeps_answered_probes(chain_case) -> None:
    answers = {probe.question: probe.answer for probe in chain_case.probes}
    missed = next(p for p in chain_case.probes if p.probe_type == "paraphrase")

    result = filter_known(
        chain_case.probes,
        lambda question: "" if question == missed.question else answers[question],
        threshold=0.99,
    )

    assert missed in result.dropped
    assert len(result.kept) == len(chain_case.probes) - 1
    assert result.unusable_cases == ()


def test_failed_direct_qa_probe_drops_the_whole_case(chain_case) -> None:
    result = filter_known(chain_case.probes, lambda question: "no idea", threshold=0.5)

    assert result.kept == ()
    assert result.unusable_cases == ("case-0000",)


def test_failed_direct_blank_drops_the_case_even_when_the_question_is_known(chain_case) -> None:
    answers = {probe.question: probe.answer for probe in chain_case.probes}
    blank = next(
        p for p in chain_case.probes if p.probe_type == "direct" and p.template_family == "FB"
    )

    result = filter_known(
        chain_case.probes,
        lambda question: "no idea" if question == blank.question else answers[question],
        threshold=0.99,
    )

    assert result.kept == ()
    assert result.unusable_cases == ("case-0000",)


def test_scorer_failures_name_the_probe(chain_case) -> None:
    def broken(question: str) -> str:
        raise RuntimeError("model unavailable")

    with pytest.raises(ProbeScoringError) as excinfo:
        filter_known(chain_case.probes, broken)
    assert excinfo.value.probe_id == chain_case.probes[0].probe_id
