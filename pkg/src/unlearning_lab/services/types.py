from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

EntityType = Literal[
    "Person",
    "Film",
    "Organization",
    "Country",
    "City",
    "University",
    "Work",
    "Language",
    "Concept",
]
ENTITY_TYPES: tuple[EntityType, ...] = (
    "Person",
    "Film",
    "Organization",
    "Country",
    "City",
    "University",
    "Work",
    "Language",
    "Concept",
)

ProbeType = Literal["direct", "paraphrase", "inverse", "two_hop", "three_hop", "retain"]
TemplateFamily = Literal["QA", "FB"]
Split = Literal["forget_train", "forget_eval", "retain_eval"]
FiltrationStage = Literal["schema", "node", "path", "accepted"]
MethodName = Literal["NEDS", "NPO", "GA", "GD", "ULDPO", "ICU"]

PROBE_TYPES: tuple[ProbeType, ...] = (
    "direct",
    "paraphrase",
    "inverse",
    "two_hop",
    "three_hop",
    "retain",
)
TEMPLATE_FAMILIES: tuple[TemplateFamily, ...] = ("QA", "FB")

# Per template family: 1 direct, 2 paraphrase, 1 inverse, 2 two-hop, 1 three-hop, 1 retain.
PROBE_DISTRIBUTION: dict[ProbeType, int] = {
    "direct": 1,
    "paraphrase": 2,
    "inverse": 1,
    "two_hop": 2,
    "three_hop": 1,
    "retain": 1,
}
PROBE_HOPS: dict[ProbeType, int] = {
    "direct": 1,
    "paraphrase": 1,
    "inverse": 1,
    "retain": 1,
    "two_hop": 2,
    "three_hop": 3,
}


@dataclass(slots=True, frozen=True)
class Entity:
    id: str
    label: str
    entity_type: EntityType


@dataclass(slots=True, frozen=True)
class RelationType:
    id: str
    label: str
    domain_type: EntityType
    range_type: EntityType
    functional: bool
    family: str


@dataclass(slots=True, frozen=True, order=True)
class Triple:
    head: str
    relation: str
    tail: str

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)


@dataclass(slots=True, frozen=True)
class Probe:
    case_id: str
    probe_id: str
    probe_type: ProbeType
    template_family: TemplateFamily
    hop: int
    question: str
    answer: str
    target: Triple
    split: Split
    chain: tuple[Triple, ...] | None = None


@dataclass(slots=True, frozen=True)
class Chain:
    pattern: str
    triples: tuple[Triple, ...]

    @property
    def hops(self) -> int:
        return len(self.triples)


@dataclass(slots=True, frozen=True)
class FiltrationDecision:
    candidate: Triple
    stage: FiltrationStage
    reason: str


@dataclass(slots=True, frozen=True)
class RetainSelection:
    facts: tuple[Triple, ...]
    provenance: tuple[FiltrationDecision, ...]


@dataclass(slots=True, frozen=True)
class BenchmarkCase:
    case_id: str
    target: Triple
    forget_neighborhood: frozenset[str]
    chains: tuple[Chain, ...]
    retain_facts: tuple[Triple, ...]
    probes: tuple[Probe, ...]
    provenance: tuple[FiltrationDecision, ...]
    deficiencies: tuple[str, ...] = ()


@dataclass(slots=True, frozen=True)
class VerificationResult:
    ok: bool
    reason: str


@dataclass(slots=True, frozen=True)
class KnownFilterResult:
    kept: tuple[Probe, ...]
    dropped: tuple[Probe, ...]
    unusable_cases: tuple[str, ...]


@dataclass(slots=True, frozen=True)
class QAPair:
    """A prompt/answer pair in text form, used wherever a probe is not needed."""

    question: str
    answer: str


@dataclass(slots=True, frozen=True)
class NeighborItem:
    triple: Triple
    pair: QAPair
    weight: float
    score: float


@dataclass(slots=True, frozen=True)
class NeighborSet:
    target: Triple
    items: tuple[NeighborItem, ...]
    k: int

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(item.weight for item in self.items)


@dataclass(slots=True, frozen=True)
class ForgetItem:
    probe: Probe
    refusal: str


@dataclass(slots=True)
class EpochLosses:
    epoch: int
    steps: int
    forget: float
    anchor: float
    retain: float
    total: float


@dataclass(slots=True)
class UnlearnRun:
    method: MethodName
    reference_checkpoint: str | None
    epochs: list[EpochLosses] = field(default_factory=list)
    final_checkpoint: str | None = None
    steps: int = 0


@dataclass(slots=True, frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


@dataclass(slots=True, frozen=True)
class MetricsReport:
    method: str
    template_family: str
    ue_by_type: dict[str, float]
    locality: float
    kcs_pre: float
    kcs_post: float
    delta_kcs: float
    refusal_rate: float
    hmean: float


@dataclass(slots=True, frozen=True)
class BoundaryReport:
    p_forget: float
    p_retain: float
    ratio: float
    logprob_gap: float
    roc_auc: float
    mean_kl_forget: float
    mean_kl_neighbor: float
    neighbor_within_epsilon_fraction: float
    epsilon: float
    refusal_preferred_fraction: float


@dataclass(slots=True, frozen=True)
class DriftReport:
    target_drift: float
    neighbor_drift: float
    distant_drift: float
    gradient_cosine: float
    residual_forget_norm: float
    forget_gradient_norm: float
