from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from pathlib import Path

from pydantic import ValidationError

from unlearning_lab.exceptions import DatasetFormatError, MissingArtifactError
from unlearning_lab.schemas import (
    CaseRecord,
    ChainRecord,
    DatasetManifest,
    DecisionRecord,
    FiltrationConfig,
    ProbeRecord,
    TripleRecord,
)
from unlearning_lab.services.bench.benchmark import corpus_rejection_counts, probe_counts
from unlearning_lab.services.types import BenchmarkCase, Chain, FiltrationDecision, Probe, Triple

logger = logging.getLogger(__name__)


def manifest_path_for(path: Path) -> Path:
    return path.with_suffix(".manifest.json")


def _triple_record(triple: Triple) -> TripleRecord:
    return TripleRecord(head=triple.head, relation=triple.relation, tail=triple.tail)


def _triple(record: TripleRecord) -> Triple:
    return Triple(record.head, record.relation, record.tail)


def probe_to_record(probe: Probe) -> ProbeRecord:
    return ProbeRecord(
        case_id=probe.case_id,
        probe_id=probe.probe_id,
        probe_type=probe.probe_type,
        template_family=probe.template_family,
        hop=probe.hop,  # type: ignore[arg-type]
        question=probe.question,
        answer=probe.answer,
        target=_triple_record(probe.target),
        chain=None if probe.chain is None else [_triple_record(t) for t in probe.chain],
        split=probe.split,
    )


def record_to_probe(record: ProbeRecord) -> Probe:
    return Probe(
        case_id=record.case_id,
        probe_id=record.probe_id,
        probe_type=record.probe_type,
        template_family=record.template_family,
        hop=record.hop,
        question=record.question,
        answer=record.answer,
        target=_triple(record.target),
        split=record.split,
        chain=None if record.chain is None else tuple(_triple(t) for t in record.chain),
    )


def _case_record(case: BenchmarkCase) -> CaseRecord:
    return CaseRecord(
        case_id=case.case_id,
        target=_triple_record(case.target),
        forget_neighborhood=sorted(case.forget_neighborhood),
        chains=[
            ChainRecord(pattern=chain.pattern, triples=[_triple_record(t) for t in chain.triples])
            for chain in case.chains
        ],
        retain_facts=[_triple_record(t) for t in case.retain_facts],
        provenance=[
            DecisionRecord(
                candidate=_triple_record(decision.candidate),
                stage=decision.stage,
                reason=decision.reason,
            )
            for decision in case.provenance
        ],
        deficiencies=list(case.deficiencies),
    )


def _case(record: CaseRecord, probes: Sequence[Probe]) -> BenchmarkCase:
    return BenchmarkCase(
        case_id=record.case_id,
        target=_triple(record.target),
        forget_neighborhood=frozenset(record.forget_neighborhood),
        chains=tuple(
            Chain(pattern=chain.pattern, triples=tuple(_triple(t) for t in chain.triples))
            for chain in record.chains
        ),
        retain_facts=tuple(_triple(t) for t in record.retain_facts),
        probes=tuple(probes),
        provenance=tuple(
            FiltrationDecision(_triple(d.candidate), d.stage, d.reason) for d in record.provenance
        ),
        deficiencies=tuple(record.deficiencies),
    )


def write_probes(probes: Iterable[Probe], path: Path) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for probe in probes:
            handle.write(probe_to_record(probe).model_dump_json())
            handle.write("\n")
            count += 1
    return count


def load_probes(path: Path) -> list[Probe]:
    if not path.exists():
        raise MissingArtifactError(f"dataset file does not exist: {path}")
    probes: list[Probe] = []
    with path.open(encoding="utf-8") as handle:
        for index, line in enumerate(handle):
            if not line.strip():
                continue
            try:
                record = ProbeRecord.model_validate_json(line)
            except ValidationError as exc:
                raise DatasetFormatError(
                    f"malformed probe record: {exc.errors()[0]['msg']}", record_index=index
                ) from exc
            probes.append(record_to_probe(record))
    return probes


def emit_dataset(
    cases: Sequence[BenchmarkCase],
    path: Path,
    *,
    seed: int,
    filtration: FiltrationConfig,
) -> DatasetManifest:
    probes = [probe for case in cases for probe in case.probes]
    write_probes(probes, path)
    manifest = DatasetManifest(
        seed=seed,
        filtration=filtration,
        rejection_counts=corpus_rejection_counts(cases),
        target_count=len(cases),
        direct_qa_count=sum(
            1 for p in probes if p.probe_type == "direct" and p.template_family == "QA"
        ),
        probe_counts=probe_counts(probes),
        cases=[_case_record(case) for case in cases],
    )
    manifest_path_for(path).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %d probes for %d cases to %s", len(probes), len(cases), path)
    return manifest


def load_manifest(path: Path) -> DatasetManifest:
    manifest_path = manifest_path_for(path)
    if not manifest_path.exists():
        raise MissingArtifactError(f"dataset manifest does not exist: {manifest_path}")
    try:
        return DatasetManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise DatasetFormatError(f"malformed dataset manifest: {exc}", record_index=0) from exc


def load_dataset(path: Path) -> list[BenchmarkCase]:
    """Load the probes and regroup them into the manifest's cases.

    Probe counts must match the manifest, so a file cut at a record boundary is rejected.
    """
    probes = load_probes(path)
    manifest = load_manifest(path)
    found = probe_counts(probes)
    if found != manifest.probe_counts:
        expected = sum(manifest.probe_counts.values())
        raise DatasetFormatError(
            f"dataset holds {len(probes)} probes, the manifest records {expected}; "
            "the file is truncated or edited",
            record_index=len(probes),
        )
    by_case: dict[str, list[Probe]] = {record.case_id: [] for record in manifest.cases}
    for index, probe in enumerate(probes):
        if probe.case_id not in by_case:
            raise DatasetFormatError(
                f"probe {probe.probe_id} belongs to unknown case {probe.case_id}",
                record_index=index,
            )
        by_case[probe.case_id].append(probe)
    return [_case(record, by_case[record.case_id]) for record in manifest.cases]
