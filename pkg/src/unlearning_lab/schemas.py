from __future__ import annotations

from pathlib import Path
from typing import Literal

from django.conf import settings
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

EntityTypeName = Literal[
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
PatternId = Literal["A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L", "S", "T", "U", "V"]
MethodLiteral = Literal["NEDS", "NPO", "GA", "GD", "ULDPO", "ICU"]


def _default_learning_rates() -> list[float]:
    return list(settings.LAB_SWEEP_LEARNING_RATES)


def _default_corruption_rates() -> list[float]:
    return list(settings.LAB_CORRUPTION_RATES)


class WorldConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    counts: dict[EntityTypeName, int] = Field(default_factory=dict)
    pattern_quotas: dict[PatternId, int] = Field(default_factory=dict)
    retain_quotas: dict[EntityTypeName, int] = Field(default_factory=dict)
    commonsense_quotas: dict[str, int] = Field(default_factory=dict)
    retain_value_ratio: float = Field(default=1.0, gt=0.0, le=10.0)
    seed: int = 7

    @field_validator("counts", "pattern_quotas", "retain_quotas", "commonsense_quotas")
    @classmethod
    def _non_negative(cls, value: dict[str, int]) -> dict[str, int]:
        for key, count in value.items():
            if count < 0:
                raise ValueError(f"{key} must be >= 0, got {count}")
        return value

    def count(self, entity_type: str) -> int:
        return self.counts.get(entity_type, 0)  # type: ignore[call-overload]


class FiltrationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    min_geodesic: int = Field(default=3, ge=1)
    bfs_depth: int = Field(default=3, ge=1)
    neighborhood_hops: int = Field(default=3, ge=0, le=3)

    @property
    def search_depth(self) -> int:
        # d(t, t') > min_geodesic  <=>  no path of length <= min_geodesic
        return max(self.bfs_depth, self.min_geodesic)


class SelectionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_targets: int = Field(default=20, ge=1)
    min_two_hop: int = Field(default=2, ge=1)
    min_three_hop: int = Field(default=1, ge=0)
    seed: int = 7


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d_model: int = Field(default=128, gt=0)
    n_layers: int = Field(default=4, gt=0)
    n_heads: int = Field(default=4, gt=0)
    d_ff: int = Field(default=512, gt=0)
    max_seq_len: int = Field(default=64, gt=0)
    vocab_size: int | None = Field(default=None, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _heads_divide_width(self) -> ModelConfig:
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        return self


class AdapterConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    rank: int = Field(default=16, ge=1)
    alpha: float = Field(default=32.0, gt=0.0)
    dropout: float = Field(default=0.05, ge=0.0, lt=1.0)
    targets: list[str] = Field(default_factory=lambda: ["wq", "wk", "wv", "wo", "w1", "w2"])


class PretrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=60, ge=1)
    batch_size: int = Field(default=32, ge=1)
    gradient_accumulation: int = Field(default=1, ge=1)
    learning_rate: float = Field(default=2e-3, gt=0.0)
    weight_decay: float = Field(default=0.0, ge=0.0)
    warmup_steps: int = Field(default=100, ge=0)
    grad_clip: float = Field(default=1.0, gt=0.0)
    accuracy_target: float = Field(default=0.99, gt=0.0, le=1.0)
    eval_interval: int = Field(default=5, ge=1)
    rehearse_compositions: bool = True
    include_icu_demonstrations: bool = True
    seed: int = 0


class UnlearnConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    method: MethodLiteral = "NEDS"
    beta: float = Field(default=0.1, gt=0.0)
    lambda_: float = Field(default=1.0, ge=0.0, alias="lambda")
    mu: float = Field(default=1.0, ge=0.0)
    gamma: float = Field(default=0.0, ge=0.0)
    k: int = Field(default=10, ge=1)
    neighbor_hops: int = Field(default=2, ge=1)
    learning_rate: float = Field(default=1e-4, gt=0.0)
    epochs: int = Field(default=3, ge=1)
    gradient_accumulation: int = Field(default=4, ge=1)
    retain_batch_size: int = Field(default=4, ge=1)
    weight_decay: float = Field(default=0.0, ge=0.0)
    grad_clip: float = Field(default=1.0, gt=0.0)
    corruption_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    npo_retain: bool = False
    uniform_weights: bool = False
    refusal: str = Field(default_factory=lambda: settings.LAB_REFUSAL_TEXT, min_length=1)
    seed: int = 0


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    learning_rates: list[float] = Field(default_factory=_default_learning_rates, min_length=1)
    selection_metric: Literal["hmean"] = "hmean"
    corruption_rates: list[float] = Field(default_factory=_default_corruption_rates, min_length=1)

    @field_validator("learning_rates")
    @classmethod
    def _positive_rates(cls, value: list[float]) -> list[float]:
        if any(rate <= 0 for rate in value):
            raise ValueError("learning rates must be positive")
        return value

    @field_validator("corruption_rates")
    @classmethod
    def _fractions(cls, value: list[float]) -> list[float]:
        if any(rate < 0 or rate > 1 for rate in value):
            raise ValueError("corruption rates must lie in [0, 1]")
        return value


class ExperimentSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    methods: list[MethodLiteral] = Field(
        default_factory=lambda: ["NEDS", "NPO", "GA", "GD", "ULDPO", "ICU"], min_length=1
    )
    seeds: list[int] = Field(default_factory=lambda: [settings.LAB_SEED], min_length=1)
    output_dir: Path = Field(default_factory=lambda: Path(settings.LAB_OUTPUT_DIR))
    known_threshold: float = Field(
        default_factory=lambda: settings.LAB_KNOWN_THRESHOLD, gt=0.0, le=1.0
    )
    max_answer_tokens: int = Field(default_factory=lambda: settings.LAB_MAX_ANSWER_TOKENS, ge=0)
    boundary_epsilon: float = Field(default_factory=lambda: settings.LAB_BOUNDARY_EPSILON, gt=0.0)
    icu_instruction: str = Field(default_factory=lambda: settings.LAB_ICU_INSTRUCTION, min_length=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    world: WorldConfig = Field(default_factory=WorldConfig)
    filtration: FiltrationConfig = Field(default_factory=FiltrationConfig)
    selection: SelectionConfig = Field(default_factory=SelectionConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    adapters: AdapterConfig = Field(default_factory=AdapterConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    unlearn: UnlearnConfig = Field(default_factory=UnlearnConfig)
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)


class TripleRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    head: str
    relation: str
    tail: str


class ProbeRecord(BaseModel):
    """One line of the probe dataset; field order is the on-disk order."""

    model_config = ConfigDict(extra="forbid")

    case_id: str = Field(min_length=1)
    probe_id: str = Field(min_length=1)
    probe_type: Literal["direct", "paraphrase", "inverse", "two_hop", "three_hop", "retain"]
    template_family: Literal["QA", "FB"]
    hop: Literal[1, 2, 3]
    question: str = Field(min_length=1)
    answer: str = Field(min_length=1)
    target: TripleRecord
    chain: list[TripleRecord] | None = None
    split: Literal["forget_train", "forget_eval", "retain_eval"]


class ChainRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pattern: str
    triples: list[TripleRecord]


class DecisionRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    candidate: TripleRecord
    stage: Literal["schema", "node", "path", "accepted"]
    reason: str


class CaseRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    case_id: str
    target: TripleRecord
    forget_neighborhood: list[str]
    chains: list[ChainRecord]
    retain_facts: list[TripleRecord]
    provenance: list[DecisionRecord]
    deficiencies: list[str] = Field(default_factory=list)


class DatasetManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int
    filtration: FiltrationConfig
    rejection_counts: dict[str, int]
    target_count: int
    direct_qa_count: int
    probe_counts: dict[str, int]
    cases: list[CaseRecord]
