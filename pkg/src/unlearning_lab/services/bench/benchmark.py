from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Iterable
from dataclasses import replace

from unlearning_lab.exceptions import ProbeGenerationError, TargetSelectionError
from unlearning_lab.schemas import FiltrationConfig, SelectionConfig
from unlearning_lab.services.bench.chains import find_chains, shuffled_targets
from unlearning_lab.services.bench.filtration import build_retain_set, rejection_counts
from unlearning_lab.services.bench.probes import generate_probes
from unlearning_lab.services.bench.templates import TemplateBank
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.types import PROBE_DISTRIBUTION, BenchmarkCase, Probe, Triple

logger = logging.getLogger(__name__)


def build_case(
    graph: KnowledgeGraph,
    case_id: str,
    target: Triple,
    bank: TemplateBank,
    filtration: FiltrationConfig,
    seed: int,
) -> BenchmarkCase | None:
    chains = find_chains(graph, target)
    retain = build_retain_set(graph, target, filtration, chains)
    case = BenchmarkCase(
        case_id=case_id,
        target=target,
        forget_neighborhood=graph.khop_neighborhood(target.head, filtration.neighborhood_hops),
        chains=chains,
        retain_facts=retain.facts,
        probes=(),
        provenance=retain.provenance,
    )
    if not retain.facts:
        logger.debug("resampling %s: no orthogonal retain fact", target)
        return None
    try:
        probes = generate_probes(graph, case, bank, seed)
    except ProbeGenerationError as exc:
        logger.debug("resampling %s: %s", target, exc)
        return None
    deficiencies = tuple(
        f"{family}: no verifiable three_hop probe"
        for family in ("QA", "FB")
        if not any(p.probe_type == "three_hop" and p.template_family == family for p in probes)
    )
    return replace(case, probes=tuple(probes), deficiencies=deficiencies)


def build_cases(
    graph: KnowledgeGraph,
    bank: TemplateBank,
    selection: SelectionConfig,
    filtration: FiltrationConfig,
    seed: int,
) -> list[BenchmarkCase]:
    """Select targets in seeded order, resampling any whose retain set or probes fail."""
    candidates = shuffled_targets(graph, selection, seed, bank)
    cases: list[BenchmarkCase] = []
    skipped = 0
    for target in candidates:
        if len(cases) == selection.n_targets:
            break
        case_id = f"case-{len(cases):04d}"
        case = build_case(graph, case_id, target, bank, filtration, seed + len(cases))
        if case is None:
            skipped += 1
            continue
        cases.append(case)
    if len(cases) < selection.n_targets:
        raise TargetSelectionError(
            f"requested {selection.n_targets} cases but only {len(cases)} targets yield a "
            f"complete case ({skipped} resampled)",
            achievable=len(cases),
        )
    logger.info("built %d benchmark cases (%d targets resampled)", len(cases), skipped)
    return cases


def probe_counts(probes: Iterable[Probe]) -> dict[str, int]:
    counts = Counter(f"{p.template_family}:{p.probe_type}" for p in probes)
    return dict(sorted(counts.items()))


def has_exact_distribution(case: BenchmarkCase) -> bool:
    for family in ("QA", "FB"):
        for probe_type, expected in PROBE_DISTRIBUTION.items():
            found = sum(
                1
                for p in case.probes
                if p.template_family == family and p.probe_type == probe_type
            )
            if found != expected:
                return False
    return True


def corpus_rejection_counts(cases: Iterable[BenchmarkCase]) -> dict[str, int]:
    return rejection_counts(decision for case in cases for decision in case.provenance)
